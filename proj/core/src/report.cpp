#include "bayatt/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bayatt/error.hpp"

namespace bayatt {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

TransferReport evaluate_transfer(const Tensor& adversarial, std::span<const int> labels,
                                 const std::vector<std::pair<std::string, Model>>& victims) {
  require_contract(!adversarial.shape().empty(), "evaluate_transfer: batched input required");
  const std::size_t n = adversarial.shape()[0];
  require_contract(labels.size() == n, "evaluate_transfer: label count mismatch");
  for (double v : adversarial.data())
    require(v >= 0.0 - 1e-12 && v <= 1.0 + 1e-12, ErrorCode::value_out_of_range,
            "evaluate_transfer: adversarial input outside pixel range");

  TransferReport report;
  double sum = 0.0;
  std::size_t ok_victims = 0;
  for (const auto& [name, model] : victims) {
    ResultRow row;
    row.variant = "";
    row.victim = name;
    row.pool_size = n;
    try {
      const auto pred = model.predict(adversarial);
      for (std::size_t i = 0; i < n; ++i)
        if (pred[i] != labels[i]) ++row.successes;
      row.success_rate = n ? static_cast<double>(row.successes) / static_cast<double>(n) : 0.0;
      sum += row.success_rate;
      ++ok_victims;
    } catch (const Error& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  report.average = ok_victims ? sum / static_cast<double>(ok_victims) : 0.0;
  return report;
}

std::vector<VariantSummary> summarize(const std::vector<ResultRow>& rows) {
  // variant -> seed -> (sum of rates, victim count)
  std::map<std::string, std::map<std::uint64_t, std::pair<double, std::size_t>>> acc;
  for (const auto& r : rows) {
    if (r.error) continue;
    auto& cell = acc[r.variant][r.seed];
    cell.first += r.success_rate;
    cell.second += 1;
  }
  std::vector<VariantSummary> out;
  for (const auto& [variant, seeds] : acc) {
    std::vector<double> averages;
    for (const auto& [seed, cell] : seeds)
      if (cell.second) averages.push_back(cell.first / static_cast<double>(cell.second));
    VariantSummary s;
    s.variant = variant;
    s.runs = averages.size();
    double mean = 0.0;
    for (double a : averages) mean += a;
    mean /= averages.empty() ? 1.0 : static_cast<double>(averages.size());
    s.mean_success = mean;
    if (averages.size() >= 2) {
      double var = 0.0;
      for (double a : averages) var += (a - mean) * (a - mean);
      var /= static_cast<double>(averages.size() - 1);
      s.stderr_success = std::sqrt(var / static_cast<double>(averages.size()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> per_seed_averages(const std::vector<ResultRow>& rows,
                                      const std::string& variant) {
  std::map<std::uint64_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    if (r.variant != variant || r.error) continue;
    acc[r.seed].first += r.success_rate;
    acc[r.seed].second += 1;
  }
  std::vector<double> out;
  for (const auto& [seed, cell] : acc)
    if (cell.second) out.push_back(cell.first / static_cast<double>(cell.second));
  return out;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "variant,victim,seed,pool_size,successes,success_rate\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.victim << ',' << r.seed << ',' << r.pool_size << ',';
    if (r.error) {
      out << "NA,NA\n";
    } else {
      out << r.successes << ',' << format_double(r.success_rate) << '\n';
    }
  }
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    require(cells.size() == 6, ErrorCode::parse,
            path + ":" + std::to_string(lineno) + ": expected 6 columns");
    ResultRow r;
    r.variant = cells[0];
    r.victim = cells[1];
    r.seed = std::stoull(cells[2]);
    r.pool_size = std::stoull(cells[3]);
    if (cells[4] == "NA") {
      r.error = "NA";
    } else {
      r.successes = std::stoull(cells[4]);
      r.success_rate = std::stod(cells[5]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_csv(const std::string& path, const std::vector<VariantSummary>& summaries) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "variant,seeds,mean_success,stderr\n";
  for (const auto& s : summaries)
    out << s.variant << ',' << s.runs << ',' << format_double(s.mean_success) << ','
        << format_double(s.stderr_success) << '\n';
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

void write_results_json(const std::string& path, const std::vector<ResultRow>& rows,
                        const std::string& fingerprint) {
  nlohmann::json j;
  j["config_fingerprint"] = fingerprint;
  j["results"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"variant", r.variant}, {"victim", r.victim},       {"seed", r.seed},
                       {"pool_size", r.pool_size}, {"successes", r.successes},
                       {"success_rate", r.success_rate}};
    if (r.error) row["error"] = *r.error;
    j["results"].push_back(std::move(row));
  }
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::io, "write failed: " + path);
}

}  // namespace bayatt
