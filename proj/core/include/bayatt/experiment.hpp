#pragma once

#include <string>
#include <vector>

#include "bayatt/attack.hpp"
#include "bayatt/checkpoint.hpp"
#include "bayatt/config.hpp"
#include "bayatt/dataset.hpp"
#include "bayatt/finetune.hpp"
#include "bayatt/report.hpp"

namespace bayatt {

/// Fully validated experiment description; every knob mirrors a config key
/// (see Config) and CLI flags override file values key-for-key.
struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "bars-image";  // blobs|rings|bars-image|idx|csv
  SynthConfig synth;
  std::string idx_images, idx_labels;
  std::string csv_path;
  bool csv_has_header = false;
  double test_fraction = 0.25;

  // zoo
  ArchSpec substitute;
  std::vector<ArchSpec> victims;
  bool allow_same_arch = false;
  TrainConfig train{0.05, 0.9, 5e-4, 64, 25, 0};

  // grid columns
  bool column_plainmean = true;  // non-fine-tuned column
  bool column_finetuned = true;
  FinetuneConfig finetune;

  // posteriors
  double sigma = 0.02;
  double sigma_e = 0.05;
  double sigma_e_finetuned = 0.01;
  double alpha_param = 1.0;
  double alpha_input = 25.0;
  double beta = 0.0;
  std::size_t swag_columns = 10;
  std::string param_family = "isotropic";  // isotropic|swag (swag needs the fine-tune collector)
  std::string input_family = "isotropic";  // isotropic|swag-trajectory
  bool allow_joint_swag = false;
  bool param_lowrank = false;  // keep deviation columns when sampling swag parameters

  // attack
  AttackVariant variant = AttackVariant::ifgsm;
  AttackBudget budget;
  double momentum_mu = 1.0;
  std::size_t m_samples = 5;
  std::size_t s_samples = 5;
  std::size_t threads = 0;

  std::size_t pool_size = 200;
  std::vector<std::uint64_t> seeds{11, 12, 13, 14, 15};
  std::string output_dir = "out";
  std::string fingerprint_hex;

  static ExperimentConfig from_config(const Config& config);
  void validate() const;
};

/// Known config keys with their defaults; drives CLI flag registration.
const std::vector<std::pair<std::string, std::string>>& config_key_table();

/// Dataset per the config: synthetic kinds, IDX pair, or CSV.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

/// Trained models for one seed.
struct Zoo {
  Model substitute;
  std::vector<std::pair<std::string, Model>> victims;
};

Zoo train_zoo(const ExperimentConfig& cfg, const Dataset& train_set, std::uint64_t seed);

/// Seeded random subset of test examples that the substitute and every
/// victim classify correctly. Warns (stderr) when fewer than `size` qualify;
/// an empty qualifying set is an error.
std::vector<std::size_t> build_pool(const Model& substitute,
                                    const std::vector<std::pair<std::string, Model>>& victims,
                                    const Dataset& test_set, std::size_t size, RngStream& stream);

/// One cell of the {plain, param, input, joint} x {mean, fine-tuned} grid.
struct VariantPlan {
  std::string name;
  bool finetuned = false;
  std::size_t m = 1, s = 1;
  double sigma = 0.0, sigma_e = 0.0;
};

std::vector<VariantPlan> grid_variants(const ExperimentConfig& cfg);

struct AttackStat {
  std::string variant;
  std::uint64_t seed = 0;
  double mean_final_loss = 0.0;
  double mean_final_linf = 0.0;
};

struct GridOutcome {
  std::vector<ResultRow> results;
  std::vector<AttackStat> stats;
};

/// Full pipeline: dataset, per-seed zoo training, optional fine-tuning,
/// pool construction, the variant grid, evaluation, and artifacts under
/// cfg.output_dir (checkpoints, posteriors, adversarial IDX batches, CSV
/// traces, results.csv/json, summary.csv, attack_stats.csv, MANIFEST).
GridOutcome run_experiment(const ExperimentConfig& cfg);

/// Joint-variant sweep over (M, S) values on the non-fine-tuned posterior.
struct MsCell {
  std::size_t m = 1, s = 1;
  std::uint64_t seed = 0;
  double avg_success = 0.0;
  double mean_final_loss = 0.0;
};

std::vector<MsCell> run_ms_sweep(const ExperimentConfig& cfg,
                                 const std::vector<std::size_t>& ms_values);

/// Environment variable consulted for the output root when the config omits
/// output.dir.
constexpr const char* kOutputRootEnvVar = "BAYATT_OUTPUT_ROOT";

}  // namespace bayatt
