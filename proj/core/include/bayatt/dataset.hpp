#pragma once

#include <string>
#include <vector>

#include "bayatt/rng.hpp"
#include "bayatt/tensor.hpp"

namespace bayatt {

/// Labeled inputs with values in [0,1]. Immutable after construction;
/// invariants (range, label bounds, non-empty) are checked on creation.
struct Dataset {
  Tensor inputs;            // [n, d] or [n, c, h, w]
  std::vector<int> labels;  // [n]
  std::size_t classes = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  Tensor::Shape input_shape() const;  // per-example shape
  Tensor example(std::size_t i) const;
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// IDX files (big-endian dims). Images: unsigned-byte magic 0x00000803
/// scaled by 1/255, or double magic 0x00000E03 taken verbatim (used for
/// adversarial batches, which are not byte-quantized). Labels: 0x00000801.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx_images(const std::string& path, const Tensor& images, bool as_double = true);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

/// CSV rows of `dim` floats plus one integer label. Values outside [0,1]
/// are an error (with the offending row), not clamped.
Dataset load_csv(const std::string& path, std::size_t dim, std::size_t classes,
                 bool has_header = false);
void save_csv(const std::string& path, const Dataset& ds);

enum class SynthKind { blobs, rings, bars_image };
SynthKind synth_kind_from_string(const std::string& s);

struct SynthConfig {
  SynthKind kind = SynthKind::blobs;
  std::size_t n = 1000;
  std::size_t classes = 4;
  double noise = 0.05;
  std::uint64_t seed = 1;
  std::size_t dim = 8;          // blobs only (rings are 2-d, bars 16x16)
  double separation = 1.0;      // blobs: exact min distance between centroids
};

/// Seeded synthetic tasks. Labels are assigned round-robin so classes are
/// balanced within one sample.
Dataset synth_generate(const SynthConfig& cfg);

/// Blob centroids for the nearest-centroid oracle used in tests.
std::vector<std::vector<double>> blob_centroids(const SynthConfig& cfg);

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Seeded partition; proportions within one sample of the requested fraction.
SplitResult split_dataset(const Dataset& ds, double test_fraction, RngStream& stream);

}  // namespace bayatt
