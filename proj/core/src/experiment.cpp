#include "bayatt/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bayatt/error.hpp"

namespace bayatt {

namespace fs = std::filesystem;

const std::vector<std::pair<std::string, std::string>>& config_key_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"dataset.kind", "bars-image"},
      {"dataset.n", "2600"},
      {"dataset.classes", "4"},
      {"dataset.noise", "0.10"},
      {"dataset.dim", "8"},
      {"dataset.separation", "1.0"},
      {"dataset.seed", "1"},
      {"dataset.test_fraction", "0.25"},
      {"dataset.images", ""},
      {"dataset.labels", ""},
      {"dataset.csv", ""},
      {"dataset.csv_has_header", "false"},
      {"substitute.arch", "mlp:48-24@relu"},
      {"victims", "mlp:64@relu;mlp:32@gelu;mlp:96-48@relu;conv:6-12@relu"},
      {"zoo.allow_same_arch", "false"},
      {"train.lr", "0.05"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "0.0005"},
      {"train.batch", "64"},
      {"train.epochs", "25"},
      {"grid.finetune", "both"},  // off|on|both
      {"finetune.lambda_w", "0.5"},
      {"finetune.lambda_e", "1.0"},
      {"finetune.gamma", "0.1"},
      {"finetune.gamma_scaled", "false"},
      {"finetune.lr", "0.05"},
      {"finetune.momentum", "0.9"},
      {"finetune.weight_decay", "0.0005"},
      {"finetune.batch", "128"},
      {"finetune.epochs", "10"},
      {"finetune.swag_every_steps", "0"},
      {"posterior.sigma", "0.02"},
      {"posterior.sigma_e", "0.05"},
      {"posterior.sigma_e_finetuned", "0.01"},
      {"posterior.alpha_param", "1.0"},
      {"posterior.alpha_input", "25.0"},
      {"posterior.beta", "0.0"},
      {"posterior.k", "10"},
      {"posterior.param_family", "isotropic"},
      {"posterior.input_family", "isotropic"},
      {"posterior.allow_joint_swag", "false"},
      {"posterior.param_lowrank", "false"},
      {"attack.variant", "ifgsm"},
      {"attack.epsilon", "0.03137254901960784"},  // 8/255
      {"attack.step", "0.00392156862745098"},     // 1/255
      {"attack.iterations", "50"},
      {"attack.momentum_mu", "1.0"},
      {"attack.m", "5"},
      {"attack.s", "5"},
      {"attack.threads", "0"},
      {"pool.size", "200"},
      {"seeds", "11,12,13,14,15"},
      {"output.dir", ""},
  };
  return table;
}

ExperimentConfig ExperimentConfig::from_config(const Config& config) {
  for (const auto& [key, value] : config.entries()) {
    bool known = false;
    for (const auto& [k, d] : config_key_table())
      if (k == key) {
        known = true;
        break;
      }
    require(known, ErrorCode::config, "unknown config key: " + key);
  }

  ExperimentConfig cfg;
  cfg.dataset_kind = config.get_string("dataset.kind", "bars-image");
  cfg.synth.n = static_cast<std::size_t>(config.get_int("dataset.n", 2600));
  cfg.synth.classes = static_cast<std::size_t>(config.get_int("dataset.classes", 4));
  cfg.synth.noise = config.get_double("dataset.noise", 0.10);
  cfg.synth.dim = static_cast<std::size_t>(config.get_int("dataset.dim", 8));
  cfg.synth.separation = config.get_double("dataset.separation", 1.0);
  cfg.synth.seed = static_cast<std::uint64_t>(config.get_int("dataset.seed", 1));
  cfg.test_fraction = config.get_double("dataset.test_fraction", 0.25);
  cfg.idx_images = config.get_string("dataset.images", "");
  cfg.idx_labels = config.get_string("dataset.labels", "");
  cfg.csv_path = config.get_string("dataset.csv", "");
  cfg.csv_has_header = config.get_bool("dataset.csv_has_header", false);

  cfg.substitute = ArchSpec::parse(config.get_string("substitute.arch", "mlp:48-24@relu"));
  for (const auto& v : Config::from_string("victims=" + config.get_string(
                                               "victims",
                                               "mlp:64@relu;mlp:32@gelu;mlp:96-48@relu;conv:6-12@relu"))
                           .get_list("victims"))
    cfg.victims.push_back(ArchSpec::parse(v));
  cfg.allow_same_arch = config.get_bool("zoo.allow_same_arch", false);

  cfg.train.lr = config.get_double("train.lr", 0.05);
  cfg.train.momentum = config.get_double("train.momentum", 0.9);
  cfg.train.weight_decay = config.get_double("train.weight_decay", 0.0005);
  cfg.train.batch_size = static_cast<std::size_t>(config.get_int("train.batch", 64));
  cfg.train.epochs = static_cast<std::size_t>(config.get_int("train.epochs", 25));

  const std::string grid_ft = config.get_string("grid.finetune", "both");
  if (grid_ft == "off") {
    cfg.column_finetuned = false;
  } else if (grid_ft == "on") {
    cfg.column_plainmean = false;
  } else if (grid_ft == "both") {
    // keep both columns
  } else {
    fail(ErrorCode::config, "grid.finetune must be off|on|both, got " + grid_ft);
  }

  cfg.finetune.lambda_w = config.get_double("finetune.lambda_w", 0.5);
  cfg.finetune.lambda_e = config.get_double("finetune.lambda_e", 1.0);
  cfg.finetune.gamma = config.get_double("finetune.gamma", 0.1);
  cfg.finetune.gamma_scaled = config.get_bool("finetune.gamma_scaled", false);
  cfg.finetune.optimizer.lr = config.get_double("finetune.lr", 0.05);
  cfg.finetune.optimizer.momentum = config.get_double("finetune.momentum", 0.9);
  cfg.finetune.optimizer.weight_decay = config.get_double("finetune.weight_decay", 0.0005);
  cfg.finetune.optimizer.batch_size = static_cast<std::size_t>(config.get_int("finetune.batch", 128));
  cfg.finetune.optimizer.epochs = static_cast<std::size_t>(config.get_int("finetune.epochs", 10));
  cfg.finetune.swag_every_steps =
      static_cast<std::size_t>(config.get_int("finetune.swag_every_steps", 0));

  cfg.sigma = config.get_double("posterior.sigma", 0.02);
  cfg.sigma_e = config.get_double("posterior.sigma_e", 0.05);
  cfg.sigma_e_finetuned = config.get_double("posterior.sigma_e_finetuned", 0.01);
  cfg.alpha_param = config.get_double("posterior.alpha_param", 1.0);
  cfg.alpha_input = config.get_double("posterior.alpha_input", 25.0);
  cfg.beta = config.get_double("posterior.beta", 0.0);
  cfg.swag_columns = static_cast<std::size_t>(config.get_int("posterior.k", 10));
  cfg.param_family = config.get_string("posterior.param_family", "isotropic");
  cfg.input_family = config.get_string("posterior.input_family", "isotropic");
  cfg.allow_joint_swag = config.get_bool("posterior.allow_joint_swag", false);
  cfg.param_lowrank = config.get_bool("posterior.param_lowrank", false);

  cfg.variant = attack_variant_from_string(config.get_string("attack.variant", "ifgsm"));
  cfg.budget.epsilon = config.get_double("attack.epsilon", 8.0 / 255.0);
  cfg.budget.step = config.get_double("attack.step", 1.0 / 255.0);
  cfg.budget.iterations = static_cast<std::size_t>(config.get_int("attack.iterations", 50));
  cfg.momentum_mu = config.get_double("attack.momentum_mu", 1.0);
  cfg.m_samples = static_cast<std::size_t>(config.get_int("attack.m", 5));
  cfg.s_samples = static_cast<std::size_t>(config.get_int("attack.s", 5));
  cfg.threads = static_cast<std::size_t>(config.get_int("attack.threads", 0));

  cfg.pool_size = static_cast<std::size_t>(config.get_int("pool.size", 200));

  cfg.seeds.clear();
  for (const auto& s : config.get_list("seeds")) {
    try {
      cfg.seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      fail(ErrorCode::config, "bad seed value: " + s);
    }
  }
  if (cfg.seeds.empty()) cfg.seeds = {11, 12, 13, 14, 15};

  cfg.output_dir = config.get_string("output.dir", "");
  if (cfg.output_dir.empty()) {
    const char* env = std::getenv(kOutputRootEnvVar);
    cfg.output_dir = env && *env ? env : "out";
  }
  cfg.fingerprint_hex = config.fingerprint_hex();
  cfg.validate();
  return cfg;
}

namespace {

Tensor::Shape dataset_input_shape_for(const std::string& kind, const SynthConfig& synth) {
  if (kind == "blobs") return {synth.dim};
  if (kind == "rings") return {2};
  if (kind == "bars-image") return {1, 16, 16};
  return {};  // idx/csv shapes come from the files
}

/// Fill in input shape / class count for arch strings given without the
/// bracket suffix.
ArchSpec complete_arch(ArchSpec arch, const Tensor::Shape& input_shape, std::size_t classes) {
  if (arch.input_shape.empty()) {
    if (arch.kind == ArchKind::convnet) {
      require(input_shape.size() == 3, ErrorCode::config,
              "conv architecture needs an image dataset");
      arch.input_shape = input_shape;
    } else {
      arch.input_shape = {Tensor::shape_size(input_shape)};
    }
  }
  if (arch.classes < 2) arch.classes = classes;
  arch.validate();
  return arch;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!victims.empty(), ErrorCode::config, "at least one victim is required");
  require(train.lr > 0.0, ErrorCode::config, "train.lr must be positive");
  require(finetune.optimizer.lr > 0.0, ErrorCode::config, "finetune.lr must be positive");
  require(column_plainmean || column_finetuned, ErrorCode::config, "empty grid");
  require(sigma >= 0.0 && sigma_e >= 0.0 && sigma_e_finetuned >= 0.0, ErrorCode::config,
          "posterior widths must be >= 0");
  require(m_samples >= 1 && s_samples >= 1, ErrorCode::config, "attack.m/attack.s must be >= 1");
  require(pool_size >= 1, ErrorCode::config, "pool.size must be >= 1");
  require(param_family == "isotropic" || param_family == "swag", ErrorCode::config,
          "posterior.param_family must be isotropic|swag");
  require(input_family == "isotropic" || input_family == "swag-trajectory", ErrorCode::config,
          "posterior.input_family must be isotropic|swag-trajectory");
  if (param_family == "swag")
    require(column_finetuned, ErrorCode::config,
            "posterior.param_family=swag needs the fine-tuning column (grid.finetune=on|both)");
  // Fine-tuned runs keep the input posterior isotropic unless explicitly
  // overridden: the two distributions are not independent otherwise.
  if (column_finetuned && param_family == "swag" && input_family == "swag-trajectory")
    require(allow_joint_swag, ErrorCode::config,
            "swag parameters + swag-trajectory inputs under fine-tuning requires "
            "posterior.allow_joint_swag=true");
  if (dataset_kind == "idx")
    require(!idx_images.empty() && !idx_labels.empty(), ErrorCode::config,
            "dataset.kind=idx needs dataset.images and dataset.labels");
  if (dataset_kind == "csv")
    require(!csv_path.empty(), ErrorCode::config, "dataset.kind=csv needs dataset.csv");
  budget.validate();
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_kind == "idx") return load_idx(cfg.idx_images, cfg.idx_labels);
  if (cfg.dataset_kind == "csv")
    return load_csv(cfg.csv_path, cfg.synth.dim, cfg.synth.classes, cfg.csv_has_header);
  SynthConfig synth = cfg.synth;
  synth.kind = synth_kind_from_string(cfg.dataset_kind);
  return synth_generate(synth);
}

Zoo train_zoo(const ExperimentConfig& cfg, const Dataset& train_set, std::uint64_t seed) {
  const Tensor::Shape per_shape(train_set.inputs.shape().begin() + 1,
                                train_set.inputs.shape().end());
  const ArchSpec sub_arch = complete_arch(cfg.substitute, per_shape, train_set.classes);

  auto train_one = [&](const ArchSpec& arch, const std::string& name) {
    RngStream init_stream(seed, "init/" + name);
    Model model = Model::init(arch, init_stream);
    TrainConfig tc = cfg.train;
    tc.seed = RngStream(seed, "trainseed/" + name).next_u64();
    TrainResult res = train_sgd(model, train_set, tc);
    return res.model;
  };

  Zoo zoo;
  zoo.substitute = train_one(sub_arch, "substitute");
  for (std::size_t i = 0; i < cfg.victims.size(); ++i) {
    const ArchSpec arch = complete_arch(cfg.victims[i], per_shape, train_set.classes);
    if (!cfg.allow_same_arch)
      require(!(arch == sub_arch), ErrorCode::config,
              "victim " + std::to_string(i) + " duplicates the substitute architecture "
              "(set zoo.allow_same_arch=true to permit)");
    const std::string name = "victim" + std::to_string(i);
    zoo.victims.emplace_back(name, train_one(arch, name));
  }
  return zoo;
}

std::vector<std::size_t> build_pool(const Model& substitute,
                                    const std::vector<std::pair<std::string, Model>>& victims,
                                    const Dataset& test_set, std::size_t size, RngStream& stream) {
  require_contract(test_set.size() >= 1, "build_pool: empty test set");
  std::vector<char> ok(test_set.size(), 1);
  auto mark = [&](const Model& m) {
    const auto pred = m.predict(test_set.inputs);
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] != test_set.labels[i]) ok[i] = 0;
  };
  mark(substitute);
  for (const auto& [name, model] : victims) mark(model);

  std::vector<std::size_t> qualifying;
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (ok[i]) qualifying.push_back(i);
  require(!qualifying.empty(), ErrorCode::empty_pool,
          "build_pool: no test example is classified correctly by every model; "
          "train longer or weaken the victims");
  stream.shuffle(qualifying);
  if (qualifying.size() < size)
    std::cerr << "[pool] warning: only " << qualifying.size() << " of requested " << size
              << " examples qualify\n";
  qualifying.resize(std::min(size, qualifying.size()));
  return qualifying;
}

std::vector<VariantPlan> grid_variants(const ExperimentConfig& cfg) {
  std::vector<VariantPlan> plans;
  auto add_column = [&](bool ft, double sigma_e, const std::string& suffix) {
    plans.push_back({"plain" + suffix, ft, 1, 1, 0.0, 0.0});
    plans.push_back({"param" + suffix, ft, cfg.m_samples, 1, cfg.sigma, 0.0});
    plans.push_back({"input" + suffix, ft, 1, cfg.s_samples, 0.0, sigma_e});
    plans.push_back({"joint" + suffix, ft, cfg.m_samples, cfg.s_samples, cfg.sigma, sigma_e});
  };
  if (cfg.column_plainmean) add_column(false, cfg.sigma_e, "");
  if (cfg.column_finetuned) add_column(true, cfg.sigma_e_finetuned, "-ft");
  return plans;
}

namespace {

class Manifest {
 public:
  explicit Manifest(const fs::path& path) : path_(path) { std::ofstream(path_).flush(); }

  void mark(const std::string& stage) { append("stage " + stage + " done"); }
  void failed(const std::string& stage) { append("stage " + stage + " FAILED"); }
  void complete() { append("complete"); }

 private:
  void append(const std::string& line) {
    std::ofstream out(path_, std::ios::app);
    out << line << '\n';
  }
  fs::path path_;
};

struct VariantPosteriors {
  GaussianPosterior param;
  GaussianPosterior input;
  std::vector<GaussianPosterior> per_example_input;  // trajectory family only
};

GaussianPosterior make_param_posterior(const ExperimentConfig& cfg, const VariantPlan& plan,
                                       const Model& mean_model,
                                       const MomentCollector* ft_collector) {
  std::vector<double> mean(mean_model.params().flat().begin(), mean_model.params().flat().end());
  if (plan.finetuned && cfg.param_family == "swag" && plan.sigma > 0.0) {
    require_contract(ft_collector != nullptr, "swag parameter posterior needs a collector");
    GaussianPosterior p = swag_finalize(*ft_collector, cfg.alpha_param, cfg.beta);
    if (!cfg.param_lowrank) p.deviation_columns.clear();
    return p;
  }
  return isotropic_posterior(std::move(mean), plan.sigma);
}

/// Plain I-FGSM pass that only exists to collect per-example trajectories.
std::vector<GaussianPosterior> trajectory_input_posteriors(
    const ExperimentConfig& cfg, const Model& substitute, const Tensor& pool_inputs,
    std::span<const int> pool_labels, const RngStream& stream, double sigma_e_fallback) {
  const std::size_t n = pool_inputs.shape()[0];
  const std::size_t dim = pool_inputs.size() / std::max<std::size_t>(n, 1);
  std::vector<MomentCollector> collectors(n, MomentCollector(0));

  BayesSpec plain;
  plain.param_posterior = isotropic_posterior(
      std::vector<double>(substitute.params().flat().begin(), substitute.params().flat().end()),
      0.0);
  plain.input_posterior = isotropic_posterior(std::vector<double>(dim, 0.0), 0.0);
  plain.m_samples = plain.s_samples = 1;

  AttackOptions opt;
  opt.variant = AttackVariant::ifgsm;
  opt.budget = cfg.budget;
  opt.threads = cfg.threads;
  opt.trajectory_hook = [&](std::size_t example, std::size_t, std::span<const double> delta) {
    collectors[example].update(delta);
  };
  attack_run(substitute, plain, opt, pool_inputs, pool_labels, stream.derive("trajectory"));

  std::vector<GaussianPosterior> out;
  out.reserve(n);
  for (auto& c : collectors)
    out.push_back(input_posterior_from_trajectory(c, cfg.alpha_input, sigma_e_fallback).posterior);
  return out;
}

void write_trace_csv(const std::string& path, const std::vector<AttackTraceRow>& trace) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "example,iteration,loss,linf\n";
  for (const auto& r : trace)
    out << r.example << ',' << r.iteration << ',' << format_double(r.loss) << ','
        << format_double(r.linf) << '\n';
}

void write_loss_history_csv(const std::string& path, const std::vector<double>& history) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << ',' << format_double(history[i]) << '\n';
}

void write_attack_stats_csv(const std::string& path, const std::vector<AttackStat>& stats) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "variant,seed,mean_final_loss,mean_final_linf\n";
  for (const auto& s : stats)
    out << s.variant << ',' << s.seed << ',' << format_double(s.mean_final_loss) << ','
        << format_double(s.mean_final_linf) << '\n';
}

AttackStat final_iteration_stat(const std::string& variant, std::uint64_t seed,
                                const std::vector<AttackTraceRow>& trace,
                                std::size_t iterations) {
  AttackStat stat{variant, seed, 0.0, 0.0};
  std::size_t count = 0;
  for (const auto& r : trace)
    if (r.iteration == iterations) {
      stat.mean_final_loss += r.loss;
      stat.mean_final_linf += r.linf;
      ++count;
    }
  if (count) {
    stat.mean_final_loss /= static_cast<double>(count);
    stat.mean_final_linf /= static_cast<double>(count);
  }
  return stat;
}

}  // namespace

GridOutcome run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path root(cfg.output_dir);
  fs::create_directories(root);
  Manifest manifest(root / "MANIFEST");

  GridOutcome outcome;
  std::string stage = "dataset";
  try {
    const Dataset full = load_experiment_dataset(cfg);
    RngStream split_stream(cfg.synth.seed, "split");
    const SplitResult split = split_dataset(full, cfg.test_fraction, split_stream);
    manifest.mark(stage);

    const auto plans = grid_variants(cfg);
    for (const std::uint64_t seed : cfg.seeds) {
      const fs::path seed_dir = root / ("seed" + std::to_string(seed));
      fs::create_directories(seed_dir / "checkpoints");

      stage = "seed:" + std::to_string(seed) + "/train";
      Zoo zoo = train_zoo(cfg, split.train, seed);
      save_checkpoint(zoo.substitute, (seed_dir / "checkpoints" / "substitute.btck").string());
      for (const auto& [name, model] : zoo.victims)
        save_checkpoint(model, (seed_dir / "checkpoints" / (name + ".btck")).string());
      manifest.mark(stage);

      Model finetuned;
      MomentCollector ft_collector(cfg.swag_columns);
      if (cfg.column_finetuned) {
        stage = "seed:" + std::to_string(seed) + "/finetune";
        FinetuneConfig fcfg = cfg.finetune;
        fcfg.optimizer.seed = RngStream(seed, "finetuneseed").next_u64();
        FinetuneResult res = finetune_run(zoo.substitute, split.train, fcfg, cfg.swag_columns);
        finetuned = res.model;
        ft_collector = std::move(res.collector);
        save_checkpoint(finetuned, (seed_dir / "checkpoints" / "substitute_ft.btck").string());
        write_loss_history_csv((seed_dir / "finetune_loss.csv").string(), res.loss_history);
        manifest.mark(stage);
      }

      stage = "seed:" + std::to_string(seed) + "/pool";
      RngStream pool_stream(seed, "pool");
      const auto pool_idx =
          build_pool(zoo.substitute, zoo.victims, split.test, cfg.pool_size, pool_stream);
      const Dataset pool = split.test.subset(pool_idx);
      save_idx_images((seed_dir / "pool_images.idx").string(), pool.inputs);
      save_idx_labels((seed_dir / "pool_labels.idx").string(), pool.labels);
      manifest.mark(stage);

      const std::size_t input_dim = Tensor::shape_size(pool.input_shape());
      for (const auto& plan : plans) {
        stage = "seed:" + std::to_string(seed) + "/attack:" + plan.name;
        const fs::path vdir = seed_dir / plan.name;
        fs::create_directories(vdir);

        const Model& mean_model = plan.finetuned ? finetuned : zoo.substitute;
        BayesSpec spec;
        spec.param_posterior = make_param_posterior(cfg, plan, mean_model,
                                                    cfg.column_finetuned ? &ft_collector : nullptr);
        spec.input_posterior = isotropic_posterior(std::vector<double>(input_dim, 0.0),
                                                   plan.sigma_e);
        spec.m_samples = plan.m;
        spec.s_samples = plan.s;

        AttackOptions opt;
        opt.variant = cfg.variant;
        opt.budget = cfg.budget;
        opt.momentum_mu = cfg.momentum_mu;
        opt.threads = cfg.threads;

        std::vector<GaussianPosterior> per_example;
        if (cfg.input_family == "swag-trajectory" && !plan.finetuned && plan.sigma_e > 0.0) {
          per_example = trajectory_input_posteriors(cfg, mean_model, pool.inputs, pool.labels,
                                                    RngStream(seed, "attack:" + plan.name),
                                                    plan.sigma_e);
          opt.per_example_input_posteriors = &per_example;
          save_posterior_set((vdir / "input_posterior_set.btck").string(), per_example);
        }

        save_posterior(PosteriorFile{spec.param_posterior, mean_model.arch(),
                                     mean_model.normalization()},
                       (vdir / "param_posterior.btck").string());
        save_posterior(PosteriorFile{spec.input_posterior, std::nullopt, std::nullopt},
                       (vdir / "input_posterior.btck").string());

        const RngStream attack_stream(seed, "attack:" + plan.name);
        AttackResult attack = attack_run(mean_model, spec, opt, pool.inputs, pool.labels,
                                         attack_stream);
        save_idx_images((vdir / "adv.idx").string(), attack.adversarial);
        write_trace_csv((vdir / "trace.csv").string(), attack.trace);
        outcome.stats.push_back(final_iteration_stat(
            plan.name, seed, attack.trace,
            cfg.variant == AttackVariant::fgsm ? 1 : cfg.budget.iterations));
        manifest.mark(stage);

        stage = "seed:" + std::to_string(seed) + "/evaluate:" + plan.name;
        TransferReport report = evaluate_transfer(attack.adversarial, pool.labels, zoo.victims);
        for (auto row : report.rows) {
          row.variant = plan.name;
          row.seed = seed;
          outcome.results.push_back(std::move(row));
        }
        manifest.mark(stage);
      }
    }

    stage = "report";
    write_results_csv((root / "results.csv").string(), outcome.results);
    write_results_json((root / "results.json").string(), outcome.results, cfg.fingerprint_hex);
    write_summary_csv((root / "summary.csv").string(), summarize(outcome.results));
    write_attack_stats_csv((root / "attack_stats.csv").string(), outcome.stats);
    manifest.mark(stage);
    manifest.complete();
  } catch (...) {
    manifest.failed(stage);
    std::cerr << "[run] stage failed: " << stage << "\n";
    throw;
  }
  return outcome;
}

std::vector<MsCell> run_ms_sweep(const ExperimentConfig& cfg,
                                 const std::vector<std::size_t>& ms_values) {
  cfg.validate();
  const Dataset full = load_experiment_dataset(cfg);
  RngStream split_stream(cfg.synth.seed, "split");
  const SplitResult split = split_dataset(full, cfg.test_fraction, split_stream);

  std::vector<MsCell> cells;
  for (const std::uint64_t seed : cfg.seeds) {
    Zoo zoo = train_zoo(cfg, split.train, seed);
    RngStream pool_stream(seed, "pool");
    const auto pool_idx =
        build_pool(zoo.substitute, zoo.victims, split.test, cfg.pool_size, pool_stream);
    const Dataset pool = split.test.subset(pool_idx);
    const std::size_t input_dim = Tensor::shape_size(pool.input_shape());

    for (std::size_t m : ms_values)
      for (std::size_t s : ms_values) {
        BayesSpec spec;
        spec.param_posterior = isotropic_posterior(
            std::vector<double>(zoo.substitute.params().flat().begin(),
                                zoo.substitute.params().flat().end()),
            cfg.sigma);
        spec.input_posterior =
            isotropic_posterior(std::vector<double>(input_dim, 0.0), cfg.sigma_e);
        spec.m_samples = m;
        spec.s_samples = s;

        AttackOptions opt;
        opt.variant = cfg.variant;
        opt.budget = cfg.budget;
        opt.momentum_mu = cfg.momentum_mu;
        opt.threads = cfg.threads;

        const std::string name = "ms:" + std::to_string(m) + "x" + std::to_string(s);
        AttackResult attack = attack_run(zoo.substitute, spec, opt, pool.inputs, pool.labels,
                                         RngStream(seed, "attack:" + name));
        TransferReport report = evaluate_transfer(attack.adversarial, pool.labels, zoo.victims);
        const AttackStat stat = final_iteration_stat(
            name, seed, attack.trace,
            cfg.variant == AttackVariant::fgsm ? 1 : cfg.budget.iterations);
        cells.push_back(MsCell{m, s, seed, report.average, stat.mean_final_loss});
      }
  }
  return cells;
}

}  // namespace bayatt
