#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bayatt/model.hpp"

namespace bayatt {

/// One victim's outcome for one attack configuration and seed. Untargeted
/// success: the victim predicts anything but the true label.
struct ResultRow {
  std::string variant;
  std::string victim;
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  std::optional<std::string> error;  // per-victim failure, e.g. shape mismatch
};

struct TransferReport {
  std::vector<ResultRow> rows;
  /// Unweighted mean over victims that evaluated cleanly.
  double average = 0.0;
};

TransferReport evaluate_transfer(const Tensor& adversarial, std::span<const int> labels,
                                 const std::vector<std::pair<std::string, Model>>& victims);

struct VariantSummary {
  std::string variant;
  std::size_t runs = 0;       // seed x victim entries aggregated
  double mean_success = 0.0;  // mean over seeds of the per-seed victim average
  double stderr_success = 0.0;
};

/// Per-variant mean/standard-error over seeds of the victim-average rate.
std::vector<VariantSummary> summarize(const std::vector<ResultRow>& rows);

/// Per-seed victim-average success of one variant, keyed by seed order.
std::vector<double> per_seed_averages(const std::vector<ResultRow>& rows,
                                      const std::string& variant);

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);
void write_summary_csv(const std::string& path, const std::vector<VariantSummary>& summaries);
void write_results_json(const std::string& path, const std::vector<ResultRow>& rows,
                        const std::string& fingerprint);

std::string format_double(double v);  // %.17g, the one float format in CSVs

}  // namespace bayatt
