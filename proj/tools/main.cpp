// bayatt: train a local model zoo, build posteriors over parameters and
// inputs, run transfer attacks against it, and report success rates.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "bayatt/error.hpp"
#include "bayatt/experiment.hpp"

namespace fs = std::filesystem;
using namespace bayatt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

struct ConfigArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
};

void register_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--set", args.sets, "override a config key (KEY=VALUE, repeatable)");
  for (const auto& [key, def] : config_key_table()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&args, key = key](const std::string& v) { args.overrides[key] = v; },
        "config key " + key + (def.empty() ? "" : " (default: " + def + ")"));
  }
}

Config build_config(const ConfigArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::from_file(args.config_path);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorCode::config, "--set expects KEY=VALUE, got " + s);
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  return cfg;
}

std::uint64_t pick_seed(const ExperimentConfig& cfg, std::int64_t requested) {
  if (requested >= 0) return static_cast<std::uint64_t>(requested);
  return cfg.seeds.front();
}

SplitResult split_for(const ExperimentConfig& cfg) {
  const Dataset full = load_experiment_dataset(cfg);
  RngStream stream(cfg.synth.seed, "split");
  return split_dataset(full, cfg.test_fraction, stream);
}

int cmd_train(const ConfigArgs& args, std::int64_t seed_flag) {
  const ExperimentConfig cfg = ExperimentConfig::from_config(build_config(args));
  const std::uint64_t seed = pick_seed(cfg, seed_flag);
  const SplitResult split = split_for(cfg);
  Zoo zoo = train_zoo(cfg, split.train, seed);
  const fs::path dir = fs::path(cfg.output_dir) / ("seed" + std::to_string(seed)) / "checkpoints";
  fs::create_directories(dir);
  save_checkpoint(zoo.substitute, (dir / "substitute.btck").string());
  std::cout << "substitute: " << zoo.substitute.arch().to_string()
            << " train_acc=" << format_double(accuracy(zoo.substitute, split.train))
            << " test_acc=" << format_double(accuracy(zoo.substitute, split.test)) << "\n";
  for (const auto& [name, model] : zoo.victims) {
    save_checkpoint(model, (dir / (name + ".btck")).string());
    std::cout << name << ": " << model.arch().to_string()
              << " test_acc=" << format_double(accuracy(model, split.test)) << "\n";
  }
  std::cout << "checkpoints written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_finetune(const ConfigArgs& args, std::int64_t seed_flag, std::string checkpoint) {
  const ExperimentConfig cfg = ExperimentConfig::from_config(build_config(args));
  const std::uint64_t seed = pick_seed(cfg, seed_flag);
  const SplitResult split = split_for(cfg);
  const fs::path seed_dir = fs::path(cfg.output_dir) / ("seed" + std::to_string(seed));
  if (checkpoint.empty())
    checkpoint = (seed_dir / "checkpoints" / "substitute.btck").string();
  const Model base = load_checkpoint(checkpoint);

  FinetuneConfig fcfg = cfg.finetune;
  fcfg.optimizer.seed = RngStream(seed, "finetuneseed").next_u64();
  FinetuneResult res = finetune_run(base, split.train, fcfg, cfg.swag_columns);

  fs::create_directories(seed_dir / "checkpoints");
  const std::string out_ckpt = (seed_dir / "checkpoints" / "substitute_ft.btck").string();
  save_checkpoint(res.model, out_ckpt);
  std::ofstream loss_csv(seed_dir / "finetune_loss.csv");
  loss_csv << "epoch,loss\n";
  for (std::size_t i = 0; i < res.loss_history.size(); ++i)
    loss_csv << i << ',' << format_double(res.loss_history[i]) << '\n';

  GaussianPosterior post = swag_finalize(res.collector, cfg.alpha_param, cfg.beta);
  if (!cfg.param_lowrank) post.deviation_columns.clear();
  const std::string out_post = (seed_dir / "param_posterior_swag.btck").string();
  save_posterior(PosteriorFile{post, res.model.arch(), res.model.normalization()}, out_post);
  std::cout << "fine-tuned checkpoint: " << out_ckpt << "\n"
            << "swag parameter posterior: " << out_post << "\n"
            << "train_acc=" << format_double(accuracy(res.model, split.train)) << "\n";
  return kExitOk;
}

int cmd_collect_posterior(const ConfigArgs& args, const std::string& from,
                          const std::string& family, double sigma, const std::string& pool_images,
                          const std::string& pool_labels, const std::string& out) {
  const ExperimentConfig cfg = ExperimentConfig::from_config(build_config(args));
  const Model model = load_checkpoint(from);
  if (family == "isotropic") {
    const double s = sigma >= 0.0 ? sigma : cfg.sigma;
    GaussianPosterior p = isotropic_posterior(
        std::vector<double>(model.params().flat().begin(), model.params().flat().end()), s);
    save_posterior(PosteriorFile{p, model.arch(), model.normalization()}, out);
    std::cout << "isotropic posterior (sigma=" << format_double(s) << ") -> " << out << "\n";
    return kExitOk;
  }
  require(family == "swag-trajectory", ErrorCode::config,
          "collect-posterior family must be isotropic|swag-trajectory");
  require(!pool_images.empty() && !pool_labels.empty(), ErrorCode::config,
          "swag-trajectory needs --pool-images and --pool-labels");
  const Dataset pool = load_idx(pool_images, pool_labels);
  const std::size_t n = pool.size();
  const std::size_t dim = Tensor::shape_size(pool.input_shape());
  std::vector<MomentCollector> collectors(n, MomentCollector(0));

  BayesSpec plain;
  plain.param_posterior = isotropic_posterior(
      std::vector<double>(model.params().flat().begin(), model.params().flat().end()), 0.0);
  plain.input_posterior = isotropic_posterior(std::vector<double>(dim, 0.0), 0.0);

  AttackOptions opt;
  opt.variant = AttackVariant::ifgsm;
  opt.budget = cfg.budget;
  opt.threads = cfg.threads;
  opt.trajectory_hook = [&](std::size_t example, std::size_t, std::span<const double> delta) {
    collectors[example].update(delta);
  };
  attack_run(model, plain, opt, pool.inputs, pool.labels,
             RngStream(cfg.seeds.front(), "collect-posterior"));

  std::vector<GaussianPosterior> set;
  set.reserve(n);
  std::size_t fallbacks = 0;
  for (auto& c : collectors) {
    auto r = input_posterior_from_trajectory(c, cfg.alpha_input, cfg.sigma_e);
    if (r.fell_back_to_isotropic) ++fallbacks;
    set.push_back(std::move(r.posterior));
  }
  save_posterior_set(out, set);
  std::cout << "trajectory input posteriors for " << n << " examples -> " << out;
  if (fallbacks) std::cout << " (" << fallbacks << " isotropic fallbacks)";
  std::cout << "\n";
  return kExitOk;
}

int cmd_attack(const ConfigArgs& args, const std::string& substitute_path,
               const std::string& param_post_path, const std::string& input_post_path,
               const std::string& input_post_set_path, const std::string& pool_images,
               const std::string& pool_labels, const std::string& out_dir,
               std::int64_t seed_flag) {
  const ExperimentConfig cfg = ExperimentConfig::from_config(build_config(args));
  const std::uint64_t seed = pick_seed(cfg, seed_flag);
  const Model substitute = load_checkpoint(substitute_path);
  const Dataset pool = load_idx(pool_images, pool_labels);
  const std::size_t dim = Tensor::shape_size(pool.input_shape());

  BayesSpec spec;
  if (param_post_path.empty()) {
    spec.param_posterior = isotropic_posterior(
        std::vector<double>(substitute.params().flat().begin(),
                            substitute.params().flat().end()),
        cfg.sigma);
  } else {
    spec.param_posterior = load_posterior(param_post_path).posterior;
  }
  if (input_post_path.empty()) {
    spec.input_posterior = isotropic_posterior(std::vector<double>(dim, 0.0), cfg.sigma_e);
  } else {
    spec.input_posterior = load_posterior(input_post_path).posterior;
  }
  spec.m_samples = cfg.m_samples;
  spec.s_samples = cfg.s_samples;

  AttackOptions opt;
  opt.variant = cfg.variant;
  opt.budget = cfg.budget;
  opt.momentum_mu = cfg.momentum_mu;
  opt.threads = cfg.threads;
  std::vector<GaussianPosterior> per_example;
  if (!input_post_set_path.empty()) {
    per_example = load_posterior_set(input_post_set_path);
    opt.per_example_input_posteriors = &per_example;
  }

  AttackResult res = attack_run(substitute, spec, opt, pool.inputs, pool.labels,
                                RngStream(seed, "attack:cli"));
  fs::create_directories(out_dir);
  save_idx_images((fs::path(out_dir) / "adv.idx").string(), res.adversarial);
  std::ofstream trace(fs::path(out_dir) / "trace.csv");
  trace << "example,iteration,loss,linf\n";
  for (const auto& r : res.trace)
    trace << r.example << ',' << r.iteration << ',' << format_double(r.loss) << ','
          << format_double(r.linf) << '\n';
  std::cout << "adversarial batch (" << pool.size() << " examples) -> " << out_dir << "/adv.idx\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& adv_path, const std::string& labels_path,
                 const std::vector<std::string>& victim_paths, const std::string& out_csv) {
  const Dataset adv = load_idx(adv_path, labels_path);
  std::vector<std::pair<std::string, Model>> victims;
  for (const auto& p : victim_paths)
    victims.emplace_back(fs::path(p).stem().string(), load_checkpoint(p));
  TransferReport report = evaluate_transfer(adv.inputs, adv.labels, victims);
  for (auto& row : report.rows) row.variant = "cli";
  if (!out_csv.empty()) write_results_csv(out_csv, report.rows);
  for (const auto& row : report.rows) {
    std::cout << row.victim << ": ";
    if (row.error)
      std::cout << "ERROR " << *row.error << "\n";
    else
      std::cout << row.successes << "/" << row.pool_size << " = "
                << format_double(row.success_rate) << "\n";
  }
  std::cout << "average: " << format_double(report.average) << "\n";
  return kExitOk;
}

int cmd_run(const ConfigArgs& args) {
  const ExperimentConfig cfg = ExperimentConfig::from_config(build_config(args));
  const GridOutcome outcome = run_experiment(cfg);
  const auto summaries = summarize(outcome.results);
  std::cout << "variant,seeds,mean_success,stderr\n";
  for (const auto& s : summaries)
    std::cout << s.variant << ',' << s.runs << ',' << format_double(s.mean_success) << ','
              << format_double(s.stderr_success) << "\n";
  std::cout << "artifacts in " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_report(const std::string& results_path, const std::string& out_csv) {
  const auto rows = read_results_csv(results_path);
  const auto summaries = summarize(rows);
  if (!out_csv.empty()) write_summary_csv(out_csv, summaries);
  std::cout << "variant,seeds,mean_success,stderr\n";
  for (const auto& s : summaries)
    std::cout << s.variant << ',' << s.runs << ',' << format_double(s.mean_success) << ','
              << format_double(s.stderr_success) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian-posterior transfer attacks against a local model zoo"};
  app.require_subcommand(1);

  ConfigArgs train_args, finetune_args, collect_args, attack_args, run_args;
  std::int64_t train_seed = -1, finetune_seed = -1, attack_seed = -1;
  std::string finetune_ckpt;
  std::string collect_from, collect_family = "isotropic", collect_out = "posterior.btck";
  std::string collect_pool_images, collect_pool_labels;
  double collect_sigma = -1.0;
  std::string attack_substitute, attack_param_post, attack_input_post, attack_input_post_set;
  std::string attack_pool_images, attack_pool_labels, attack_out = "attack_out";
  std::string eval_adv, eval_labels, eval_out;
  std::vector<std::string> eval_victims;
  std::string report_results = "results.csv", report_out;

  auto* train = app.add_subcommand("train", "train the substitute and victim zoo");
  register_config_flags(train, train_args);
  train->add_option("--seed", train_seed, "seed (default: first of seeds)");

  auto* finetune = app.add_subcommand("finetune", "flat-minima fine-tuning of a substitute");
  register_config_flags(finetune, finetune_args);
  finetune->add_option("--seed", finetune_seed, "seed (default: first of seeds)");
  finetune->add_option("--checkpoint", finetune_ckpt, "substitute checkpoint to fine-tune");

  auto* collect = app.add_subcommand("collect-posterior", "build a posterior file");
  register_config_flags(collect, collect_args);
  collect->add_option("--from", collect_from, "model checkpoint")->required();
  collect->add_option("--family", collect_family, "isotropic|swag-trajectory");
  collect->add_option("--sigma", collect_sigma, "isotropic sigma (default: posterior.sigma)");
  collect->add_option("--pool-images", collect_pool_images, "IDX images (swag-trajectory)");
  collect->add_option("--pool-labels", collect_pool_labels, "IDX labels (swag-trajectory)");
  collect->add_option("--out", collect_out, "output posterior file");

  auto* attack = app.add_subcommand("attack", "run one attack from files");
  register_config_flags(attack, attack_args);
  attack->add_option("--substitute", attack_substitute, "substitute checkpoint")->required();
  attack->add_option("--param-posterior", attack_param_post, "parameter posterior file");
  attack->add_option("--input-posterior", attack_input_post, "input posterior file");
  attack->add_option("--input-posterior-set", attack_input_post_set,
                     "per-example input posterior set file");
  attack->add_option("--pool-images", attack_pool_images, "IDX pool images")->required();
  attack->add_option("--pool-labels", attack_pool_labels, "IDX pool labels")->required();
  attack->add_option("--out-dir", attack_out, "output directory");
  attack->add_option("--seed", attack_seed, "seed (default: first of seeds)");

  auto* evaluate = app.add_subcommand("evaluate", "success rates of an adversarial batch");
  evaluate->add_option("--adv", eval_adv, "adversarial IDX images")->required();
  evaluate->add_option("--labels", eval_labels, "IDX labels")->required();
  evaluate->add_option("--victims", eval_victims, "victim checkpoints")->required()->delimiter(',');
  evaluate->add_option("--out", eval_out, "write per-victim CSV here");

  auto* run = app.add_subcommand("run", "full grid: train, fine-tune, attack, evaluate");
  register_config_flags(run, run_args);

  auto* report = app.add_subcommand("report", "re-aggregate a results.csv");
  report->add_option("--results", report_results, "results.csv path");
  report->add_option("--out", report_out, "write summary CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args, train_seed);
    if (finetune->parsed()) return cmd_finetune(finetune_args, finetune_seed, finetune_ckpt);
    if (collect->parsed())
      return cmd_collect_posterior(collect_args, collect_from, collect_family, collect_sigma,
                                   collect_pool_images, collect_pool_labels, collect_out);
    if (attack->parsed())
      return cmd_attack(attack_args, attack_substitute, attack_param_post, attack_input_post,
                        attack_input_post_set, attack_pool_images, attack_pool_labels, attack_out,
                        attack_seed);
    if (evaluate->parsed()) return cmd_evaluate(eval_adv, eval_labels, eval_victims, eval_out);
    if (run->parsed()) return cmd_run(run_args);
    if (report->parsed()) return cmd_report(report_results, report_out);
  } catch (const bayatt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::config ? kExitConfigError : kExitStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitOk;
}
