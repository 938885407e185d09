// Copyright 2026 The fluidmarl Authors
// SPDX-License-Identifier: Apache-2.0

#include "fluidmarl/experiment.hpp"

#include <openssl/evp.h>

#include <Eigen/Core>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace fluidmarl {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Algorithm parse_algorithm(const std::string& name) {
  if (name == "mappo") return Algorithm::kMappo;
  if (name == "magrpo") return Algorithm::kMagrpo;
  throw InvalidConfig("field 'experiment.algorithm': expected 'mappo' or 'magrpo', got '" + name + "'");
}

std::vector<double> parse_list(const std::string& field, const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidConfig("field '" + field + "': cannot parse number '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidConfig("field '" + field + "': empty list");
  return out;
}

int to_int(long long v) { return static_cast<int>(v); }

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  return out;
}

const char* kMappoHeader =
    "phase,update,step,reward_mean,actor_loss,critic_loss,entropy,lr,entropy_coef,first_ratio,mean_ratio,"
    "clip_fraction,actor_grad_norm,critic_grad_norm,mean_abs_advantage\n";
const char* kMagrpoHeader =
    "phase,update,step,reward_mean,actor_loss,critic_loss,entropy,lr,entropy_coef,first_ratio,mean_ratio,"
    "clip_fraction,actor_grad_norm,critic_grad_norm,group_size,mean_abs_advantage,kl_mean\n";

void write_metrics_row(std::ostream& out, Algorithm algorithm, const UpdateMetrics& m) {
  out << m.phase << ',' << m.update << ',' << m.step << ',' << m.reward_mean << ',' << m.actor_loss << ','
      << m.critic_loss << ',' << m.entropy << ',' << m.lr << ',' << m.entropy_coef << ',' << m.first_ratio << ','
      << m.mean_ratio << ',' << m.clip_fraction << ',' << m.actor_grad_norm << ',' << m.critic_grad_norm << ',';
  if (algorithm == Algorithm::kMagrpo) out << m.group_size << ',';
  out << m.mean_abs_advantage;
  if (algorithm == Algorithm::kMagrpo) out << ',' << m.kl_mean;
  out << '\n';
}

Json network_json(const NetworkConfig& n) {
  return Json{{"N", n.num_bs},         {"K", n.num_users},      {"M", n.num_antennas},
              {"L", n.num_paths},      {"p_max_W", n.p_max},    {"d_min_m", n.d_min},
              {"noise_W", n.noise_power}, {"wavelength_m", n.wavelength},
              {"gain_mode", n.gain_mode == GainMode::kBounded ? "bounded" : "statistical"}};
}

std::string versions_string() {
  std::ostringstream v;
  v << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return v.str();
}

// The trainer is either a plain MAPPO run or MAGRPO with its warm-up.
class Runner {
 public:
  explicit Runner(const ExperimentConfig& cfg) : cfg_(cfg) {
    const StepOptions options{cfg.freeze_fa};
    if (cfg.algorithm == Algorithm::kMappo)
      mappo_ = std::make_unique<MappoTrainer>(cfg.network, options, cfg.trainer.warmup, cfg.seed);
    else
      magrpo_ = std::make_unique<MagrpoTrainer>(cfg.network, options, cfg.trainer, cfg.seed);
  }

  bool done() const { return mappo_ ? mappo_->done(cfg_.steps()) : magrpo_->done(); }
  UpdateMetrics iterate() { return mappo_ ? mappo_->iterate(cfg_.steps()) : magrpo_->iterate(); }
  bool in_warmup() const { return magrpo_ && magrpo_->in_warmup(); }
  const GaussianPolicy& policy() const { return mappo_ ? mappo_->policy() : magrpo_->policy(); }
  Checkpoint checkpoint() const { return mappo_ ? mappo_->checkpoint("mappo") : magrpo_->checkpoint(); }

 private:
  const ExperimentConfig& cfg_;
  std::unique_ptr<MappoTrainer> mappo_;
  std::unique_ptr<MagrpoTrainer> magrpo_;
};

void append_eval(RunResult& run, std::ostream& csv, long long step, EvalResult r, double factor) {
  for (double x : r.episode_sum_rates) {
    const double prev = run.ema.empty() ? x : run.ema.back();
    run.ema.push_back(run.ema.empty() ? x : factor * prev + (1 - factor) * x);
  }
  csv << step << ',' << r.mean << ',' << run.ema.back() << '\n';
  run.evaluations.push_back({step, std::move(r)});
}

}  // namespace

void ExperimentConfig::set_steps(long long steps) {
  trainer.total_steps = steps;
  if (entropy_horizon_follows_budget) trainer.warmup.schedule.entropy_horizon_steps = steps;
}

void ExperimentConfig::validate() const {
  network.validate();
  trainer.validate();
  if (eval_every < 1) throw InvalidConfig("experiment.eval_every must be >= 1");
  if (eval_episodes < 1) throw InvalidConfig("experiment.eval_episodes must be >= 1");
  if (!(ema >= 0 && ema < 1)) throw InvalidConfig("experiment.ema must lie in [0, 1)");
  if (checkpoint_every < 0) throw InvalidConfig("experiment.checkpoint_every must be >= 0");
  if (trainer.total_steps < 1) throw InvalidConfig("experiment.steps must be >= 1");
  if (trainer.warmup.shape.hidden_width < 1 || trainer.warmup.shape.hidden_layers < 1)
    throw InvalidConfig("trainer.hidden_width and trainer.hidden_layers must be >= 1");
}

ExperimentConfig parse_experiment(const ConfigFile& file) {
  ExperimentConfig cfg;
  cfg.source_text = file.text();
  cfg.network = parse_network(file);

  cfg.algorithm = parse_algorithm(file.get_string("experiment.algorithm", "magrpo"));
  cfg.seed = static_cast<std::uint64_t>(file.get_int("experiment.seed", 1));
  cfg.out_dir = file.get_string("experiment.out", "runs/default");
  cfg.eval_every = file.get_int("experiment.eval_every", cfg.eval_every);
  cfg.eval_episodes = to_int(file.get_int("experiment.eval_episodes", cfg.eval_episodes));
  cfg.ema = file.get_double("experiment.ema", cfg.ema);
  cfg.checkpoint_every = file.get_int("experiment.checkpoint_every", cfg.checkpoint_every);
  cfg.freeze_fa = file.get_bool("experiment.freeze_fa", false);

  MappoConfig& m = cfg.trainer.warmup;
  m.horizon = to_int(file.get_int("trainer.T", m.horizon));
  m.shape.hidden_width = to_int(file.get_int("trainer.hidden_width", m.shape.hidden_width));
  m.shape.hidden_layers = to_int(file.get_int("trainer.hidden_layers", m.shape.hidden_layers));
  m.epochs = to_int(file.get_int("trainer.epochs", m.epochs));
  m.max_grad_norm = file.get_double("trainer.max_grad_norm", m.max_grad_norm);
  m.initial_log_std = file.get_double("trainer.initial_log_std", m.initial_log_std);

  ScheduleConfig& s = m.schedule;
  s.lr_initial = file.get_double("schedule.lr", s.lr_initial);
  s.lr_floor = file.get_double("schedule.lr_floor", s.lr_floor);
  s.lr_hold_updates = file.get_int("schedule.lr_hold", s.lr_hold_updates);
  s.plateau_patience = to_int(file.get_int("schedule.patience", s.plateau_patience));
  s.plateau_smoothing = file.get_double("schedule.smoothing", s.plateau_smoothing);
  s.entropy_start = file.get_double("schedule.entropy_start", s.entropy_start);
  s.entropy_end = file.get_double("schedule.entropy_end", s.entropy_end);
  if (file.has("schedule.entropy_horizon")) {
    s.entropy_horizon_steps = file.get_int("schedule.entropy_horizon");
    cfg.entropy_horizon_follows_budget = false;
  }

  m.batch_trajectories = to_int(file.get_int("mappo.batch", m.batch_trajectories));
  m.gamma = file.get_double("mappo.gamma", m.gamma);
  m.lambda = file.get_double("mappo.lambda", m.lambda);
  m.clip = file.get_double("mappo.clip", m.clip);
  m.epochs = to_int(file.get_int("mappo.epochs", m.epochs));

  MagrpoConfig& g = cfg.trainer;
  g.group_size = to_int(file.get_int("magrpo.G", g.group_size));
  g.reference_steps = file.get_int("magrpo.T_ref", g.reference_steps);
  g.kl_coef = file.get_double("magrpo.kl_coef", g.kl_coef);
  g.clip = file.get_double("magrpo.clip", g.clip);
  g.epochs = to_int(file.get_int("trainer.epochs", g.epochs));
  g.epochs = to_int(file.get_int("magrpo.epochs", g.epochs));

  AnalysisSettings& a = cfg.analysis;
  a.samples = to_int(file.get_int("analysis.samples", a.samples));
  a.resolution = to_int(file.get_int("analysis.resolution", a.resolution));
  a.horizon = to_int(file.get_int("analysis.T", m.horizon));
  a.sweep_parameter = file.get_string("analysis.sweep", a.sweep_parameter);
  if (auto raw = file.find("analysis.values")) a.sweep_values = parse_list("analysis.values", *raw);

  cfg.set_steps(file.get_int("experiment.steps", cfg.trainer.total_steps));
  cfg.validate();
  return cfg;
}

std::string algorithm_name(Algorithm algorithm) { return algorithm == Algorithm::kMappo ? "mappo" : "magrpo"; }

std::vector<double> ema_curve(const std::vector<double>& values, double factor) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double x : values) out.push_back(out.empty() ? x : factor * out.back() + (1 - factor) * x);
  return out;
}

EvalResult evaluate_policy(const GaussianPolicy& policy, const NetworkConfig& network, StepOptions options,
                           int episodes, int horizon, std::uint64_t seed) {
  if (episodes < 1 || horizon < 1) throw InvalidConfig("evaluation needs at least one episode and one step");
  Environment env(network, options);
  if (env.observation_size() != policy.observation_size() || env.action_size() != policy.action_size() ||
      network.num_bs != policy.num_agents())
    throw ShapeMismatch("evaluate_policy: policy does not match the network dimensions");
  EvalResult r;
  r.episode_sum_rates.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_rng(seed, Stream::kEval, {static_cast<std::uint64_t>(e)});
    env.reset(rng);
    double total = 0;
    for (int t = 0; t < horizon; ++t) total += env.step_normalized(policy.mean(policy.make_input(env.observation_matrix())));
    r.episode_sum_rates.push_back(total / horizon);
    r.mean += total / horizon;
  }
  r.mean /= episodes;
  return r;
}

CheckpointEval evaluate_checkpoint(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  Environment env(cfg.network);
  GaussianPolicy policy(static_cast<int>(env.observation_size()), cfg.network.num_bs,
                        static_cast<int>(env.action_size()), cfg.trainer.warmup.shape);
  restore_policy(ck, policy);
  CheckpointEval out;
  out.result = evaluate_policy(policy, cfg.network, {cfg.freeze_fa}, cfg.eval_episodes, cfg.trainer.warmup.horizon,
                               cfg.seed);
  out.ema = ema_curve(out.result.episode_sum_rates, cfg.ema);
  return out;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

RunResult run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir / "checkpoints", ec);
  if (ec) throw InvalidConfig("experiment.out: cannot create '" + dir.string() + "': " + ec.message());

  Json manifest;
  manifest["program"] = "fluidmarl";
  manifest["versions"] = {{"format", kCheckpointVersion}, {"libraries", versions_string()}};
  manifest["algorithm"] = algorithm_name(cfg.algorithm);
  manifest["seed"] = cfg.seed;
  manifest["steps_budget"] = cfg.steps();
  manifest["freeze_fa"] = cfg.freeze_fa;
  manifest["config_sha256"] = sha256_hex(cfg.source_text);
  manifest["network"] = network_json(cfg.network);
  auto write_manifest = [&] {
    std::ofstream out = open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  };

  RunResult run;
  try {
    std::ofstream metrics = open_output(dir / "metrics.csv");
    std::ofstream timing = open_output(dir / "timing.csv");
    std::ofstream eval_csv = open_output(dir / "eval.csv");
    std::ofstream returns_csv = open_output(dir / "returns.csv");
    metrics << (cfg.algorithm == Algorithm::kMappo ? kMappoHeader : kMagrpoHeader);
    timing << "update,step,collect_seconds,update_seconds\n";
    eval_csv << "step,mean_sum_rate,ema\n";
    returns_csv << "trajectory,update,return\n";

    const int horizon = cfg.trainer.warmup.horizon;
    const StepOptions options{cfg.freeze_fa};
    auto evaluate = [&](const GaussianPolicy& p) {
      return evaluate_policy(p, cfg.network, options, cfg.eval_episodes, horizon, cfg.seed);
    };

    Runner runner(cfg);
    append_eval(run, eval_csv, 0, evaluate(runner.policy()), cfg.ema);
    long long next_eval = cfg.eval_every;
    std::uint64_t critic_calls_at_main = 0;
    while (!runner.done()) {
      const bool was_warmup = runner.in_warmup();
      UpdateMetrics m = runner.iterate();
      ++run.updates;
      run.steps = m.step;
      run.collect_seconds += m.collect_seconds;
      run.update_seconds += m.update_seconds;
      for (Eigen::Index i = 0; i < m.returns.size(); ++i) {
        returns_csv << run.trajectory_returns.size() << ',' << m.update << ',' << m.returns(i) << '\n';
        run.trajectory_returns.push_back(m.returns(i));
      }
      write_metrics_row(metrics, cfg.algorithm, m);
      timing << m.update << ',' << m.step << ',' << m.collect_seconds << ',' << m.update_seconds << '\n';

      bool evaluated = false;
      if (was_warmup && !runner.in_warmup()) {
        save_checkpoint(dir / "checkpoints" / "warmup.bin", runner.checkpoint());
        EvalResult r = evaluate(runner.policy());
        run.has_warmup_baseline = true;
        run.warmup_baseline = r.mean;
        append_eval(run, eval_csv, m.step, std::move(r), cfg.ema);
        critic_calls_at_main = critic_forward_calls();
        evaluated = true;
      }
      if (m.step >= next_eval || runner.done()) {
        if (!evaluated) append_eval(run, eval_csv, m.step, evaluate(runner.policy()), cfg.ema);
        while (next_eval <= m.step) next_eval += cfg.eval_every;
      }
      if (cfg.checkpoint_every > 0 && run.updates % cfg.checkpoint_every == 0) {
        std::ostringstream name;
        name << "update_" << std::setw(6) << std::setfill('0') << run.updates << ".bin";
        save_checkpoint(dir / "checkpoints" / name.str(), runner.checkpoint());
      }
    }
    if (cfg.algorithm == Algorithm::kMagrpo) run.critic_calls_main = critic_forward_calls() - critic_calls_at_main;
    save_checkpoint(dir / "checkpoints" / "final.bin", runner.checkpoint());
    run.final_ema = run.ema.back();
    run.train_seconds = run.collect_seconds + run.update_seconds;

    manifest["status"] = "ok";
    manifest["steps"] = run.steps;
    manifest["updates"] = run.updates;
    manifest["final_ema_sum_rate"] = run.final_ema;
    if (run.has_warmup_baseline) manifest["warmup_sum_rate"] = run.warmup_baseline;
    manifest["train_seconds"] = run.train_seconds;
    write_manifest();
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["steps"] = run.steps;
    manifest["updates"] = run.updates;
    write_manifest();
    throw;
  }
  return run;
}

double flop_ratio(const ExperimentConfig& cfg) {
  const Environment env(cfg.network);
  const auto& shape = cfg.trainer.warmup.shape;
  const double j = shape.hidden_width;
  const double d_s = static_cast<double>(env.state_size());
  const double d_o = static_cast<double>(env.observation_size());
  const double d_a = static_cast<double>(env.action_size());
  const double hidden = shape.hidden_layers - 1;
  return count_update_flops(Algorithm::kMagrpo, j, d_s, d_o, d_a, cfg.trainer.group_size, hidden) /
         count_update_flops(Algorithm::kMappo, j, d_s, d_o, d_a, cfg.trainer.group_size, hidden);
}

RuntimeComparison compare_runtimes(const ExperimentConfig& cfg) {
  RuntimeComparison out;
  ExperimentConfig mappo = cfg;
  mappo.algorithm = Algorithm::kMappo;
  mappo.out_dir = cfg.out_dir / "mappo";
  ExperimentConfig magrpo = cfg;
  magrpo.algorithm = Algorithm::kMagrpo;
  magrpo.out_dir = cfg.out_dir / "magrpo";
  out.mappo = run_training(mappo);
  out.magrpo = run_training(magrpo);
  out.wall_ratio = out.magrpo.train_seconds / out.mappo.train_seconds;
  out.update_ratio = out.magrpo.update_seconds / out.mappo.update_seconds;
  out.flop_ratio = flop_ratio(cfg);

  auto side = [](const RunResult& r) {
    return Json{{"steps", r.steps},
                {"updates", r.updates},
                {"collect_seconds", r.collect_seconds},
                {"update_seconds", r.update_seconds},
                {"train_seconds", r.train_seconds},
                {"final_ema_sum_rate", r.final_ema}};
  };
  Json report{{"mappo", side(out.mappo)},
              {"magrpo", side(out.magrpo)},
              {"wall_ratio", out.wall_ratio},
              {"update_phase_ratio", out.update_ratio},
              {"flop_ratio", out.flop_ratio}};
  std::ofstream f = open_output(cfg.out_dir / "compare.json");
  f << report.dump(2) << '\n';
  return out;
}

}  // namespace fluidmarl
