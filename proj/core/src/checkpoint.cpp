#include "bayatt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bayatt/error.hpp"

namespace bayatt {

namespace container {

namespace {

constexpr std::array<unsigned char, 4> kMagic = {'B', 'T', 'C', 'K'};

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void append_u16_le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint16_t read_u16_le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  const auto& table = crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void write(const std::string& path, const std::string& descriptor,
           std::span<const double> blob) {
  std::vector<unsigned char> bytes;
  bytes.reserve(18 + descriptor.size() + 8 * blob.size());
  bytes.insert(bytes.end(), kMagic.begin(), kMagic.end());
  append_u16_le(bytes, kVersion);
  append_u32_le(bytes, static_cast<std::uint32_t>(descriptor.size()));
  bytes.insert(bytes.end(), descriptor.begin(), descriptor.end());
  append_u64_le(bytes, blob.size());
  for (double v : blob) append_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
  append_u32_le(bytes, crc32(bytes.data(), bytes.size()));

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

Contents read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  // CRC first: any byte lost off the tail (truncation) or flipped in the
  // middle surfaces as a checksum failure before we trust the structure.
  require(bytes.size() >= 4, ErrorCode::checksum_mismatch, "file too short for checksum: " + path);
  const std::uint32_t stored = read_u32_le(bytes.data() + bytes.size() - 4);
  require(crc32(bytes.data(), bytes.size() - 4) == stored, ErrorCode::checksum_mismatch,
          "checksum failure in " + path);

  require(bytes.size() >= 18, ErrorCode::truncated_file, "truncated container: " + path);
  require(std::memcmp(bytes.data(), kMagic.data(), 4) == 0, ErrorCode::bad_magic,
          "bad magic in " + path);
  const std::uint16_t version = read_u16_le(bytes.data() + 4);
  require(version == kVersion, ErrorCode::version_mismatch,
          "unsupported container version " + std::to_string(version) + " in " + path);
  const std::uint32_t desc_len = read_u32_le(bytes.data() + 6);
  std::size_t off = 10;
  require(off + desc_len + 8 + 4 <= bytes.size(), ErrorCode::truncated_file,
          "truncated descriptor in " + path);
  Contents c;
  c.descriptor.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                      bytes.begin() + static_cast<std::ptrdiff_t>(off + desc_len));
  off += desc_len;
  const std::uint64_t count = read_u64_le(bytes.data() + off);
  off += 8;
  require(off + 8 * count + 4 == bytes.size(), ErrorCode::truncated_file,
          "blob length mismatch in " + path);
  c.blob.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    c.blob[i] = std::bit_cast<double>(read_u64_le(bytes.data() + off + 8 * i));
  return c;
}

}  // namespace container

namespace {

using nlohmann::json;

json arch_to_json(const ArchSpec& arch) {
  return json{{"kind", to_string(arch.kind)},
              {"hidden", arch.hidden},
              {"activation", to_string(arch.activation)},
              {"input_shape", arch.input_shape},
              {"classes", arch.classes}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec arch;
  const std::string kind = j.at("kind").get<std::string>();
  arch.kind = kind == "mlp" ? ArchKind::mlp : ArchKind::convnet;
  arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  arch.activation = activation_from_string(j.at("activation").get<std::string>());
  arch.input_shape = j.at("input_shape").get<Tensor::Shape>();
  arch.classes = j.at("classes").get<std::size_t>();
  arch.validate();
  return arch;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json desc{{"kind", "model"},
            {"arch", arch_to_json(model.arch())},
            {"normalization",
             {{"mean", model.normalization().mean}, {"std", model.normalization().std}}}};
  container::write(path, desc.dump(), model.params().flat());
}

Model load_checkpoint(const std::string& path) {
  const auto contents = container::read(path);
  json desc;
  try {
    desc = json::parse(contents.descriptor);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "bad checkpoint descriptor in " + path + ": " + e.what());
  }
  require(desc.value("kind", "") == "model", ErrorCode::parse,
          "container is not a model checkpoint: " + path);
  const ArchSpec arch = arch_from_json(desc.at("arch"));
  Normalization norm;
  norm.mean = desc.at("normalization").at("mean").get<std::vector<double>>();
  norm.std = desc.at("normalization").at("std").get<std::vector<double>>();
  require(contents.blob.size() == arch.param_count(), ErrorCode::count_mismatch,
          "parameter blob size does not match architecture in " + path);
  return Model(arch, ParamVector(param_layout(arch), contents.blob), norm);
}

}  // namespace bayatt
