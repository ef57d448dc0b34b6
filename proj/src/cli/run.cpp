#include "wave/cli/run.hpp"

#include "wave/io.hpp"
#include "wave/nn/parameters.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <random>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#ifndef WAVE_VERSION
#define WAVE_VERSION "unknown"
#endif

namespace wave::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

nn::ParameterSet checkpoint_params(const agent::Networks& nets) {
  nn::ParameterSet out;
  const std::pair<const char*, const nn::ParameterSet*> parts[] = {
      {"actor.", &nets.actor},          {"critic1.", &nets.critic1},
      {"critic2.", &nets.critic2},      {"actor_target.", &nets.actor_target},
      {"critic1_target.", &nets.critic1_target}, {"critic2_target.", &nets.critic2_target}};
  for (const auto& [prefix, set] : parts) {
    for (const auto& [name, t] : *set) out.add(prefix + name, t);
  }
  return out;
}

class Manifest {
 public:
  Manifest(const ExperimentConfig& cfg, std::string command, fs::path path) : path_(std::move(path)) {
    doc_["command"] = std::move(command);
    doc_["version"] = WAVE_VERSION;
    nlohmann::ordered_json config;
    for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
    doc_["config"] = std::move(config);
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
    doc_["runs"] = nlohmann::ordered_json::array();
  }

  void record(const std::vector<SeedOutcome>& runs) {
    auto& arr = doc_["runs"];
    arr = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
      nlohmann::ordered_json j;
      j["arm"] = r.arm;
      j["seed"] = r.seed;
      j["csv"] = r.csv.string();
      j["checkpoint"] = r.checkpoint ? nlohmann::ordered_json(r.checkpoint->string()) : nullptr;
      j["trajectory"] = r.trajectory ? nlohmann::ordered_json(r.trajectory->string()) : nullptr;
      j["status"] = r.status;
      arr.push_back(std::move(j));
    }
  }

  void finish() { doc_["finished_at"] = utc_now(); }
  void write() const { atomic_write_file(path_, doc_.dump(2) + "\n"); }

 private:
  fs::path path_;
  nlohmann::ordered_json doc_;
};

void train_seed(const ExperimentConfig& cfg, const envs::Environment& env, const agent::WaveConfig& wave,
                SeedOutcome& run, std::ostream* progress) {
  agent::Trainer trainer(env, cfg.td3, wave, run.seed);
  trainer.set_log_wall_time(cfg.wall_time);
  std::string trajectory;
  if (cfg.trajectory) {
    const auto& spec = env.spec();
    trajectory = "step";
    for (std::size_t i = 0; i < spec.observation_dim; ++i) trajectory += ",obs_" + std::to_string(i);
    for (std::size_t i = 0; i < spec.action_dim; ++i) trajectory += ",action_" + std::to_string(i);
    trajectory += ",reward,done\n";
    trainer.set_step_observer([&](std::size_t step, const Vector& obs, const Vector& action, double reward, bool done) {
      trajectory += std::to_string(step);
      for (double v : obs) trajectory += "," + format_double(v);
      for (double v : action) trajectory += "," + format_double(v);
      trajectory += "," + format_double(reward) + (done ? ",1\n" : ",0\n");
    });
  }

  std::string csv = std::string(agent::kEpisodeCsvHeader) + "\n";
  double best = -INFINITY;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const agent::EpisodeLog log = trainer.run_episode();
    csv += agent::episode_csv_row(log) + "\n";
    best = std::max(best, log.moving_avg_return);
    run.episodes = log.episode;
    run.final_moving_avg_return = log.moving_avg_return;
    if (progress != nullptr && cfg.log_every > 0 && (log.episode % cfg.log_every == 0 || e + 1 == cfg.episodes)) {
      *progress << "[" << run.arm << " seed " << run.seed << "] episode " << log.episode << "/" << cfg.episodes
                << " return " << log.episode_return << " avg " << log.moving_avg_return << " lambda " << log.lambda
                << std::endl;
    }
  }
  run.best_moving_avg_return = best;
  atomic_write_file(run.csv, csv);
  if (cfg.checkpoint) nn::save_checkpoint(checkpoint_params(trainer.agent().networks()), *run.checkpoint);
  if (cfg.trajectory) atomic_write_file(*run.trajectory, trajectory);
}

std::string summary_csv(const ExperimentConfig& cfg, const std::vector<SeedOutcome>& runs, bool ablate) {
  std::string out = std::string(kSummaryCsvHeader) + "\n";
  struct Mean {
    double final_sum = 0.0, best_sum = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::pair<std::string, Mean>> means;
  for (const auto& r : runs) {
    const bool ok = r.status == "ok";
    out += cfg.env + "," + r.arm + "," + std::to_string(r.seed) + "," + std::to_string(r.episodes) + "," +
           (ok ? format_double(r.final_moving_avg_return) : "") + "," +
           (ok ? format_double(r.best_moving_avg_return) : "") + "," + csv_safe(r.status) + "\n";
    auto it = std::find_if(means.begin(), means.end(), [&](const auto& m) { return m.first == r.arm; });
    if (it == means.end()) it = means.insert(means.end(), {r.arm, Mean{}});
    if (ok) {
      it->second.final_sum += r.final_moving_avg_return;
      it->second.best_sum += r.best_moving_avg_return;
      ++it->second.n;
    }
  }
  for (const auto& [arm, m] : means) {
    if (m.n == 0) {
      out += cfg.env + "," + arm + ",mean,0,,,no successful seeds\n";
      continue;
    }
    const double n = static_cast<double>(m.n);
    out += cfg.env + "," + arm + ",mean," + std::to_string(m.n) + "," + format_double(m.final_sum / n) + "," +
           format_double(m.best_sum / n) + ",ok\n";
  }
  if (ablate && means.size() == 2 && means[0].second.n > 0 && means[1].second.n > 0) {
    const auto& w = means[0].second;
    const auto& b = means[1].second;
    const double wn = static_cast<double>(w.n), bn = static_cast<double>(b.n);
    out += cfg.env + ",gap,mean," + std::to_string(std::min(w.n, b.n)) + "," +
           format_double(w.final_sum / wn - b.final_sum / bn) + "," + format_double(w.best_sum / wn - b.best_sum / bn) +
           ",ok\n";
  }
  return out;
}

double phi1(const theory::ConvergenceConfig& c) {
  const double radius = c.G > 0.0 ? c.G / (2.0 * c.m) : 1.0;
  return radius * radius;
}

}  // namespace

bool TrainResult::all_ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const SeedOutcome& r) { return r.status == "ok"; });
}

fs::path resolve_out_dir(const std::optional<std::string>& flag, const ExperimentConfig& cfg,
                         std::string_view command) {
  if (flag) return *flag;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const char* root = std::getenv("WAVE_OUT");
  return fs::path(root != nullptr && *root != '\0' ? root : "wave_out") / std::string(command);
}

agent::WaveConfig resolve_wave(const ExperimentConfig& cfg, const envs::Environment& env, bool regularize) {
  agent::WaveConfig wave = cfg.wave;
  wave.regularize = regularize;
  wave.schedule.r_threshold = cfg.r_threshold ? *cfg.r_threshold : agent::auto_reward_threshold(env);
  return wave;
}

TrainResult run_train(const ExperimentConfig& cfg, const fs::path& out, bool ablate, std::ostream* progress) {
  validate_config(cfg);
  const auto env = envs::make_environment(cfg.env);
  std::vector<std::pair<std::string, bool>> arms;
  if (ablate) {
    arms = {{"wave", true}, {"td3", false}};
  } else {
    arms = {{cfg.wave.regularize ? "wave" : "td3", cfg.wave.regularize}};
  }

  TrainResult result;
  result.out_dir = out;
  for (const auto& [arm, regularize] : arms) {
    for (auto seed : cfg.seeds) {
      SeedOutcome r;
      r.arm = arm;
      r.seed = seed;
      const std::string stem = "seed_" + std::to_string(seed);
      r.csv = out / arm / (stem + ".csv");
      if (cfg.checkpoint) r.checkpoint = out / arm / (stem + ".ckpt");
      if (cfg.trajectory) r.trajectory = out / arm / (stem + "_trajectory.csv");
      result.runs.push_back(std::move(r));
    }
  }

  fs::create_directories(out);
  Manifest manifest(cfg, ablate ? "ablate" : "train", out / "manifest.json");
  manifest.record(result.runs);
  manifest.write();

  const bool any_regularized = std::any_of(arms.begin(), arms.end(), [](const auto& a) { return a.second; });
  const double r_threshold =
      cfg.r_threshold ? *cfg.r_threshold : (any_regularized ? agent::auto_reward_threshold(*env) : 0.0);
  if (progress != nullptr && cfg.log_every > 0 && any_regularized) {
    *progress << "reward threshold for " << cfg.env << ": " << r_threshold << std::endl;
  }

  for (auto& run : result.runs) {
    const bool regularize = run.arm == "wave";
    agent::WaveConfig wave = cfg.wave;
    wave.regularize = regularize;
    wave.schedule.r_threshold = r_threshold;
    try {
      train_seed(cfg, *env, wave, run, progress);
      run.status = "ok";
    } catch (const std::exception& e) {
      run.status = std::string("failed: ") + e.what();
      if (progress != nullptr) *progress << "[" << run.arm << " seed " << run.seed << "] " << run.status << std::endl;
    }
    manifest.record(result.runs);
    manifest.write();
  }

  atomic_write_file(out / "summary.csv", summary_csv(cfg, result.runs, ablate));
  manifest.finish();
  manifest.write();
  return result;
}

TheoryOutcome run_verify_theory(const ExperimentConfig& cfg, const fs::path& out, std::ostream* progress) {
  validate_config(cfg);
  const auto& t = cfg.theory;
  const auto& sk = cfg.wave.sinkhorn;
  auto say = [&](const std::string& s) {
    if (progress != nullptr) *progress << s << std::endl;
  };
  fs::create_directories(out);
  TheoryOutcome outcome;
  std::string summary;
  auto put = [&](const std::string& k, const std::string& v) { summary += k + " = " + v + "\n"; };

  say("contraction: " + std::to_string(t.mdps) + " MDPs x " + std::to_string(t.trials) + " pairs");
  std::vector<double> lambdas{0.0};
  lambdas.insert(lambdas.end(), t.lambdas.begin(), t.lambdas.end());
  std::vector<theory::ContractionReport> agg(lambdas.size());
  bool identity = true;
  for (std::size_t i = 0; i < t.mdps; ++i) {
    const auto mdp = theory::random_mdp(t.states, t.actions, t.gamma, t.seed + i);
    const std::uint64_t pair_seed = agent::derive_seed(t.seed + i, 1);
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
      const auto rep = theory::measure_contraction(mdp, lambdas[j], t.trials, pair_seed, sk);
      agg[j].op = rep.op;
      agg[j].lambda = lambdas[j];
      agg[j].gamma = t.gamma;
      agg[j].trials += rep.trials;
      agg[j].measured_factor = std::max(agg[j].measured_factor, rep.measured_factor);
      agg[j].measured_factor_w1 = std::max(agg[j].measured_factor_w1, rep.measured_factor_w1);
    }
    std::mt19937_64 rng(agent::derive_seed(t.seed + i, 2));
    std::uniform_real_distribution<double> u(-mdp.r_max / (1.0 - mdp.gamma), mdp.r_max / (1.0 - mdp.gamma));
    for (int k = 0; k < 10; ++k) {
      const auto rows = static_cast<Eigen::Index>(t.states), cols = static_cast<Eigen::Index>(t.actions);
      const theory::QTable q = theory::QTable::NullaryExpr(rows, cols, [&] { return u(rng); });
      const theory::QTable prev = theory::QTable::NullaryExpr(rows, cols, [&] { return u(rng); });
      if (!(theory::regularized_bellman_operator(mdp, q, prev, 0.0, sk) == theory::bellman_operator(mdp, q))) {
        identity = false;
      }
    }
  }
  std::string contraction = "lambda,measured_factor_sup,measured_factor_w1\n";
  for (const auto& r : agg) {
    contraction += format_double(r.lambda) + "," + format_double(r.measured_factor) + "," +
                   format_double(r.measured_factor_w1) + "\n";
  }
  atomic_write_file(out / "contraction.csv", contraction);
  double lambda_sq = 0.0;
  for (double l : t.lambdas) lambda_sq += l * l;
  const std::vector<theory::ContractionReport> regularized(agg.begin() + 1, agg.end());
  outcome.contraction_ok = identity && agg[0].measured_factor <= t.gamma + 1e-9;
  put("contraction.mdps", std::to_string(t.mdps));
  put("contraction.trials", std::to_string(t.trials));
  put("contraction.gamma", format_double(t.gamma));
  put("contraction.standard_factor_sup", format_double(agg[0].measured_factor));
  put("contraction.lambda0_identity", identity ? "true" : "false");
  put("contraction.fitted_c",
      lambda_sq > 0.0 ? format_double(theory::fit_contraction_constant(agg[0], regularized)) : "nan");

  say("rate: k_max " + std::to_string(t.rate.k_max) + ", " + std::to_string(t.rate.seeds) + " seeds");
  const auto rate = theory::convergence_rate_experiment(t.rate);
  std::string rate_csv = "k,mse\n";
  for (const auto& p : rate.curve) rate_csv += std::to_string(p.k) + "," + format_double(p.mse) + "\n";
  atomic_write_file(out / "rate.csv", rate_csv);
  outcome.rate_ok = rate.fitted_slope >= -1.3 && rate.fitted_slope <= -0.7 && rate.bound_holds;
  put("rate.a", format_double(t.rate.a));
  put("rate.m", format_double(t.rate.m));
  put("rate.g", format_double(t.rate.G));
  put("rate.phi1", format_double(phi1(t.rate)));
  put("rate.k_max", std::to_string(t.rate.k_max));
  put("rate.fit_from", std::to_string(t.rate.fit_from));
  put("rate.slope", format_double(rate.fitted_slope));
  put("rate.fitted_c", format_double(rate.fitted_C));
  put("rate.bound_holds", rate.bound_holds ? "true" : "false");

  if (t.variance) {
    const auto env = envs::make_environment(cfg.env);
    const agent::WaveConfig on = resolve_wave(cfg, *env, true);
    agent::WaveConfig off = on;
    off.regularize = false;
    std::vector<theory::VariancePair> pairs;
    std::string variance_csv = "seed,var_on,var_off\n";
    for (auto seed : cfg.seeds) {
      say("variance: seed " + std::to_string(seed));
      const auto a = theory::run_variance_arm(*env, cfg.td3, on, seed, t.variance_window, t.variance_max_episodes);
      const auto b = theory::run_variance_arm(*env, cfg.td3, off, seed, t.variance_window, t.variance_max_episodes);
      pairs.push_back({seed, a.variance, b.variance});
      variance_csv += std::to_string(seed) + "," + format_double(a.variance) + "," + format_double(b.variance) + "\n";
    }
    atomic_write_file(out / "variance.csv", variance_csv);
    const double ratio = theory::median_ratio(pairs);
    outcome.variance_ok = ratio <= 1.1;
    put("variance.env", cfg.env);
    put("variance.seeds", std::to_string(pairs.size()));
    put("variance.first_update", std::to_string(t.variance_window.first_update));
    put("variance.last_update", std::to_string(t.variance_window.last_update));
    put("variance.median_ratio", format_double(ratio));
    put("variance.target_met", ratio <= 1.0 ? "true" : "false");
  }

  auto verdict = [](bool ok) { return ok ? "PASS" : "FAIL"; };
  summary += std::string("check contraction: ") + verdict(outcome.contraction_ok) + "\n";
  summary += std::string("check rate: ") + verdict(outcome.rate_ok) + "\n";
  summary += std::string("check variance: ") + (outcome.variance_ok ? verdict(*outcome.variance_ok) : "SKIP") + "\n";
  summary += std::string("overall: ") + verdict(outcome.passed()) + "\n";
  atomic_write_file(out / "summary.txt", summary);
  return outcome;
}

BenchSamples read_two_column(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<double> xs, ys;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<double> row;
    for (std::string tok; fields >> tok;) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || !std::isfinite(v)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": not a finite number '" + tok + "'");
      }
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (row.size() != 2) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected two columns, got " +
                               std::to_string(row.size()));
    }
    xs.push_back(row[0]);
    ys.push_back(row[1]);
  }
  if (xs.empty()) throw std::runtime_error(path.string() + ": no samples");
  BenchSamples s;
  s.x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  s.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return s;
}

std::string sinkhorn_bench_report(const ot::SinkhornResult<double>& result) {
  return "distance = " + format_double(result.distance) + "\niterations = " + std::to_string(result.iterations) +
         "\nconverged = " + (result.converged ? "true" : "false") + "\n";
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace wave::cli
