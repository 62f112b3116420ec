#include "bayatt/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bayatt/error.hpp"

namespace bayatt {

Tensor::Shape Dataset::input_shape() const {
  const auto& s = inputs.shape();
  return Tensor::Shape(s.begin() + 1, s.end());
}

Tensor Dataset::example(std::size_t i) const {
  require_contract(i < size(), "Dataset::example: index out of range");
  const auto per = input_shape();
  const std::size_t len = Tensor::shape_size(per);
  auto d = inputs.data();
  std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(i * len),
                          d.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
  return Tensor::unchecked(per, std::move(out));
}

void Dataset::validate() const {
  require_contract(size() >= 1, "Dataset: must contain at least one example");
  require_contract(!inputs.shape().empty() && inputs.shape()[0] == size(),
                   "Dataset: inputs/labels count mismatch");
  require_contract(classes >= 2, "Dataset: class count must be >= 2");
  for (int y : labels)
    require_contract(y >= 0 && static_cast<std::size_t>(y) < classes,
                     "Dataset: label out of range");
  for (double v : inputs.data())
    require(v >= 0.0 && v <= 1.0, ErrorCode::value_out_of_range,
            "Dataset: input value outside [0,1]");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  const auto per = input_shape();
  const std::size_t len = Tensor::shape_size(per);
  auto d = inputs.data();
  std::vector<double> vals;
  vals.reserve(indices.size() * len);
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (std::size_t i : indices) {
    require_contract(i < size(), "Dataset::subset: index out of range");
    vals.insert(vals.end(), d.begin() + static_cast<std::ptrdiff_t>(i * len),
                d.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
    ys.push_back(labels[i]);
  }
  Tensor::Shape shape = inputs.shape();
  shape[0] = indices.size();
  Dataset out{Tensor::unchecked(shape, std::move(vals)), std::move(ys), classes, split};
  return out;
}

namespace {

constexpr std::uint32_t kMagicImagesU8 = 0x00000803;
constexpr std::uint32_t kMagicImagesF64 = 0x00000E03;
constexpr std::uint32_t kMagicLabels = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                        const std::string& path) {
  require(off + 4 <= b.size(), ErrorCode::truncated_file, "truncated IDX file: " + path);
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

double f64_from_be(const unsigned char* p) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u = (u << 8) | p[i];
  return std::bit_cast<double>(u);
}

void f64_to_be(double v, unsigned char* p) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  for (int i = 7; i >= 0; --i) {
    p[i] = static_cast<unsigned char>(u & 0xFF);
    u >>= 8;
  }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const std::uint32_t magic = read_be32(img, 0, images_path);
  require(magic == kMagicImagesU8 || magic == kMagicImagesF64, ErrorCode::bad_magic,
          "bad IDX image magic in " + images_path);
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t count = n * rows * cols;
  std::vector<double> vals(count);
  if (magic == kMagicImagesU8) {
    require(img.size() >= 16 + count, ErrorCode::truncated_file,
            "truncated IDX image data in " + images_path);
    for (std::size_t i = 0; i < count; ++i) vals[i] = static_cast<double>(img[16 + i]) / 255.0;
  } else {
    require(img.size() >= 16 + 8 * count, ErrorCode::truncated_file,
            "truncated IDX image data in " + images_path);
    for (std::size_t i = 0; i < count; ++i) vals[i] = f64_from_be(&img[16 + 8 * i]);
  }

  const auto lab = read_file(labels_path);
  require(read_be32(lab, 0, labels_path) == kMagicLabels, ErrorCode::bad_magic,
          "bad IDX label magic in " + labels_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  require(n_labels == n, ErrorCode::count_mismatch,
          "IDX image/label count mismatch: " + std::to_string(n) + " vs " +
              std::to_string(n_labels));
  require(lab.size() >= 8 + n_labels, ErrorCode::truncated_file,
          "truncated IDX label data in " + labels_path);
  std::vector<int> ys(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = static_cast<int>(lab[8 + i]);
    max_label = std::max(max_label, ys[i]);
  }
  Dataset ds{Tensor::from_data({n, 1, rows, cols}, std::move(vals)), std::move(ys),
             static_cast<std::size_t>(max_label) + 1, "test"};
  if (ds.classes < 2) ds.classes = 2;
  ds.validate();
  return ds;
}

void save_idx_images(const std::string& path, const Tensor& images, bool as_double) {
  const auto& s = images.shape();
  require_contract(s.size() == 4 || s.size() == 3, "save_idx_images: expected [n,1,h,w] or [n,h,w]");
  const std::size_t n = s[0];
  const std::size_t h = s.size() == 4 ? s[2] : s[1];
  const std::size_t w = s.size() == 4 ? s[3] : s[2];
  if (s.size() == 4)
    require_contract(s[1] == 1, "save_idx_images: only single-channel images are supported");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write file: " + path);
  write_be32(out, as_double ? kMagicImagesF64 : kMagicImagesU8);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(h));
  write_be32(out, static_cast<std::uint32_t>(w));
  auto d = images.data();
  if (as_double) {
    std::vector<unsigned char> buf(8 * d.size());
    for (std::size_t i = 0; i < d.size(); ++i) f64_to_be(d[i], &buf[8 * i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  } else {
    std::vector<unsigned char> buf(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
      buf[i] = static_cast<unsigned char>(std::lround(std::clamp(d[i], 0.0, 1.0) * 255.0));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write file: " + path);
  write_be32(out, kMagicLabels);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    require_contract(y >= 0 && y <= 255, "save_idx_labels: label outside byte range");
    const unsigned char b = static_cast<unsigned char>(y);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

Dataset load_csv(const std::string& path, std::size_t dim, std::size_t classes, bool has_header) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open file: " + path);
  std::vector<double> vals;
  std::vector<int> ys;
  std::string line;
  std::size_t row = 0;
  bool skipped_header = !has_header;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    ++row;
    std::istringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      ++col;
      const std::string where =
          " at row " + std::to_string(row) + ", column " + std::to_string(col);
      if (col <= dim) {
        double v = 0;
        try {
          std::size_t pos = 0;
          v = std::stod(cell, &pos);
          require(pos == cell.size(), ErrorCode::parse, "trailing characters" + where);
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          fail(ErrorCode::parse, "cannot parse value '" + cell + "'" + where);
        }
        require(v >= 0.0 && v <= 1.0, ErrorCode::value_out_of_range,
                "value " + cell + " outside [0,1]" + where);
        vals.push_back(v);
      } else if (col == dim + 1) {
        try {
          ys.push_back(std::stoi(cell));
        } catch (const std::exception&) {
          fail(ErrorCode::parse, "cannot parse label '" + cell + "'" + where);
        }
      } else {
        fail(ErrorCode::parse, "too many columns" + where);
      }
    }
    require(col == dim + 1, ErrorCode::parse,
            "expected " + std::to_string(dim + 1) + " columns, got " + std::to_string(col) +
                " at row " + std::to_string(row));
  }
  require(!ys.empty(), ErrorCode::parse, "no data rows in " + path);
  Dataset ds{Tensor::from_data({ys.size(), dim}, std::move(vals)), std::move(ys), classes, "train"};
  ds.validate();
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write file: " + path);
  const std::size_t dim = Tensor::shape_size(ds.input_shape());
  auto d = ds.inputs.data();
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", d[i * dim + j]);
      out << buf << ',';
    }
    out << ds.labels[i] << '\n';
  }
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "blobs") return SynthKind::blobs;
  if (s == "rings") return SynthKind::rings;
  if (s == "bars-image" || s == "bars_image" || s == "bars") return SynthKind::bars_image;
  fail(ErrorCode::contract_violation, "unknown synthetic dataset kind: " + s);
}

namespace {

int popcount8(unsigned v) { return std::popcount(v); }

/// Binary codewords with pairwise Hamming distance >= 3, chosen greedily.
std::vector<unsigned> hamming_codebook(std::size_t dim, std::size_t count) {
  std::vector<unsigned> kept;
  const unsigned limit = 1u << std::min<std::size_t>(dim, 16);
  for (unsigned w = 0; w < limit && kept.size() < count; ++w) {
    bool ok = true;
    for (unsigned k : kept)
      if (popcount8(w ^ k) < 3) {
        ok = false;
        break;
      }
    if (ok) kept.push_back(w);
  }
  require_contract(kept.size() == count,
                   "blobs: too many classes for the requested dimension");
  return kept;
}

Dataset make_blobs(const SynthConfig& cfg) {
  const auto centroids = blob_centroids(cfg);
  RngStream noise_stream(cfg.seed, "synth/blobs/noise");
  std::vector<double> vals(cfg.n * cfg.dim);
  std::vector<int> ys(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t c = i % cfg.classes;
    ys[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      double v = centroids[c][j];
      if (cfg.noise > 0.0) v += cfg.noise * noise_stream.normal();
      vals[i * cfg.dim + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Dataset{Tensor::from_data({cfg.n, cfg.dim}, std::move(vals)), std::move(ys), cfg.classes,
                 "train"};
}

Dataset make_rings(const SynthConfig& cfg) {
  RngStream stream(cfg.seed, "synth/rings");
  std::vector<double> vals(cfg.n * 2);
  std::vector<int> ys(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t c = i % cfg.classes;
    ys[i] = static_cast<int>(c);
    const double radius = 0.42 * static_cast<double>(c + 1) / static_cast<double>(cfg.classes);
    const double theta = 2.0 * std::numbers::pi * stream.uniform();
    const double r = radius + (cfg.noise > 0.0 ? cfg.noise * stream.normal() : 0.0);
    vals[i * 2 + 0] = std::clamp(0.5 + r * std::cos(theta), 0.0, 1.0);
    vals[i * 2 + 1] = std::clamp(0.5 + r * std::sin(theta), 0.0, 1.0);
  }
  return Dataset{Tensor::from_data({cfg.n, 2}, std::move(vals)), std::move(ys), cfg.classes,
                 "train"};
}

Dataset make_bars(const SynthConfig& cfg) {
  constexpr std::size_t kSide = 16;
  constexpr double kPeriod = 8.0;
  RngStream stream(cfg.seed, "synth/bars");
  std::vector<double> vals(cfg.n * kSide * kSide);
  std::vector<int> ys(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t c = i % cfg.classes;
    ys[i] = static_cast<int>(c);
    // Orientation encodes the class; a random phase shifts the stripes so
    // within-class examples differ by more than noise.
    const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(cfg.classes);
    const double phase = 2.0 * std::numbers::pi * stream.uniform();
    const double cs = std::cos(theta), sn = std::sin(theta);
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 0; x < kSide; ++x) {
        const double proj = static_cast<double>(y) * cs + static_cast<double>(x) * sn;
        double v = 0.5 + 0.42 * std::cos(2.0 * std::numbers::pi * proj / kPeriod + phase);
        if (cfg.noise > 0.0) v += cfg.noise * stream.normal();
        vals[(i * kSide + y) * kSide + x] = std::clamp(v, 0.0, 1.0);
      }
  }
  return Dataset{Tensor::from_data({cfg.n, 1, kSide, kSide}, std::move(vals)), std::move(ys),
                 cfg.classes, "train"};
}

}  // namespace

std::vector<std::vector<double>> blob_centroids(const SynthConfig& cfg) {
  require_contract(cfg.dim >= 3, "blobs: dimension must be >= 3");
  const auto codebook = hamming_codebook(cfg.dim, cfg.classes);
  // Codewords at Hamming distance H land at Euclidean distance spread*sqrt(H);
  // scaling by the minimum pairwise H makes that minimum exactly `separation`.
  int min_h = static_cast<int>(cfg.dim);
  for (std::size_t a = 0; a < codebook.size(); ++a)
    for (std::size_t b = a + 1; b < codebook.size(); ++b)
      min_h = std::min(min_h, popcount8(codebook[a] ^ codebook[b]));
  if (codebook.size() < 2) min_h = 3;
  const double spread = cfg.separation / std::sqrt(static_cast<double>(min_h));
  require_contract(spread <= 0.98, "blobs: separation too large for [0,1] box");
  std::vector<std::vector<double>> centroids(cfg.classes, std::vector<double>(cfg.dim, 0.0));
  for (std::size_t c = 0; c < cfg.classes; ++c)
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      const bool bit = (codebook[c] >> j) & 1u;
      centroids[c][j] = 0.5 + (bit ? spread / 2.0 : -spread / 2.0);
    }
  return centroids;
}

Dataset synth_generate(const SynthConfig& cfg) {
  require_contract(cfg.n >= cfg.classes, "synth_generate: need at least one sample per class");
  require_contract(cfg.noise >= 0.0, "synth_generate: noise must be >= 0");
  require_contract(cfg.classes >= 2, "synth_generate: class count must be >= 2");
  Dataset ds;
  switch (cfg.kind) {
    case SynthKind::blobs: ds = make_blobs(cfg); break;
    case SynthKind::rings: ds = make_rings(cfg); break;
    case SynthKind::bars_image: ds = make_bars(cfg); break;
  }
  ds.validate();
  return ds;
}

SplitResult split_dataset(const Dataset& ds, double test_fraction, RngStream& stream) {
  require_contract(test_fraction >= 0.0 && test_fraction <= 1.0,
                   "split_dataset: fraction must be in [0,1]");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  stream.shuffle(idx);
  const std::size_t n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  SplitResult out{ds.subset(train_idx), ds.subset(test_idx)};
  out.train.split = "train";
  out.test.split = "test";
  return out;
}

}  // namespace bayatt
