#include "wave/cli/config.hpp"

#include "wave/envs/environment.hpp"
#include "wave/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>

namespace wave::cli {

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::runtime_error(key + ": " + message), key_(std::move(key)) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(const std::string& key, std::string_view v) {
  std::vector<std::string_view> out;
  if (trim(v).empty()) throw ConfigError(key, "expected a comma separated list, got an empty value");
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (item.empty()) throw ConfigError(key, "empty list entry in '" + std::string(v) + "'");
    out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& key, std::string_view v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw ConfigError(key, "expected a finite number, got '" + std::string(v) + "'");
  }
  return x;
}

template <typename Int>
Int parse_integer(const std::string& key, std::string_view v) {
  Int x{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return x;
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + std::string(v) + "'");
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Access>
Field real(std::string key, Access at) {
  return {key, [key, at](ExperimentConfig& c, std::string_view v) { at(c) = parse_double(key, v); },
          [at](const ExperimentConfig& c) { return format_double(at(c)); }};
}

template <typename Access>
Field count(std::string key, Access at) {
  return {key,
          [key, at](ExperimentConfig& c, std::string_view v) {
            at(c) = parse_integer<std::remove_reference_t<decltype(at(c))>>(key, v);
          },
          [at](const ExperimentConfig& c) { return std::to_string(at(c)); }};
}

template <typename Access>
Field flag(std::string key, Access at) {
  return {key, [key, at](ExperimentConfig& c, std::string_view v) { at(c) = parse_bool(key, v); },
          [at](const ExperimentConfig& c) { return std::string(at(c) ? "true" : "false"); }};
}

template <typename Access>
Field text(std::string key, Access at) {
  return {key, [at](ExperimentConfig& c, std::string_view v) { at(c) = std::string(v); },
          [at](const ExperimentConfig& c) { return at(c); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("env", [](auto& c) -> auto& { return c.env; }));
    f.push_back(count("episodes", [](auto& c) -> auto& { return c.episodes; }));
    f.push_back({"seeds", [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_seed_list(v); },
                 [](const ExperimentConfig& c) { return join(c.seeds); }});
    f.push_back(real("gamma", [](auto& c) -> auto& { return c.td3.gamma; }));
    f.push_back(count("batch_size", [](auto& c) -> auto& { return c.td3.batch_size; }));
    f.push_back(real("tau", [](auto& c) -> auto& { return c.td3.tau; }));
    f.push_back(count("policy_delay", [](auto& c) -> auto& { return c.td3.policy_delay; }));
    f.push_back(real("target_policy_noise", [](auto& c) -> auto& { return c.td3.target_policy_noise; }));
    f.push_back(real("target_noise_clip", [](auto& c) -> auto& { return c.td3.target_noise_clip; }));
    f.push_back(real("exploration_noise", [](auto& c) -> auto& { return c.td3.exploration_noise; }));
    f.push_back(count("warmup_steps", [](auto& c) -> auto& { return c.td3.warmup_steps; }));
    f.push_back(count("buffer_capacity", [](auto& c) -> auto& { return c.td3.buffer_capacity; }));
    f.push_back(real("actor_lr", [](auto& c) -> auto& { return c.td3.actor_lr; }));
    f.push_back(real("critic_lr", [](auto& c) -> auto& { return c.td3.critic_lr; }));
    f.push_back({"hidden_dims",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.td3.hidden_dims.clear();
                   for (auto item : split_list("hidden_dims", v)) {
                     c.td3.hidden_dims.push_back(parse_integer<std::size_t>("hidden_dims", item));
                   }
                 },
                 [](const ExperimentConfig& c) { return join(c.td3.hidden_dims); }});
    f.push_back(flag("layer_norm", [](auto& c) -> auto& { return c.td3.use_layer_norm; }));
    f.push_back(flag("regularize", [](auto& c) -> auto& { return c.wave.regularize; }));
    f.push_back(real("lambda_max", [](auto& c) -> auto& { return c.wave.schedule.lambda_max; }));
    f.push_back(real("lambda_min", [](auto& c) -> auto& { return c.wave.schedule.lambda_min; }));
    f.push_back(real("lambda_alpha", [](auto& c) -> auto& { return c.wave.schedule.alpha; }));
    f.push_back(count("lambda_window", [](auto& c) -> auto& { return c.wave.schedule.window; }));
    f.push_back({"r_threshold",
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "auto") {
                     c.r_threshold.reset();
                   } else {
                     c.r_threshold = parse_double("r_threshold", v);
                   }
                 },
                 [](const ExperimentConfig& c) { return c.r_threshold ? format_double(*c.r_threshold) : "auto"; }});
    f.push_back(real("sinkhorn_epsilon", [](auto& c) -> auto& { return c.wave.sinkhorn.epsilon; }));
    f.push_back({"sinkhorn_max_iter",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.wave.sinkhorn.max_iter = parse_integer<int>("sinkhorn_max_iter", v);
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.wave.sinkhorn.max_iter); }});
    f.push_back(real("sinkhorn_tol", [](auto& c) -> auto& { return c.wave.sinkhorn.tol; }));
    f.push_back(count("probe_size", [](auto& c) -> auto& { return c.wave.probe_size; }));
    f.push_back(text("out_dir", [](auto& c) -> auto& { return c.out_dir; }));
    f.push_back(count("log_every", [](auto& c) -> auto& { return c.log_every; }));
    f.push_back(flag("checkpoint", [](auto& c) -> auto& { return c.checkpoint; }));
    f.push_back(flag("trajectory", [](auto& c) -> auto& { return c.trajectory; }));
    f.push_back(flag("wall_time", [](auto& c) -> auto& { return c.wall_time; }));
    f.push_back(count("theory_states", [](auto& c) -> auto& { return c.theory.states; }));
    f.push_back(count("theory_actions", [](auto& c) -> auto& { return c.theory.actions; }));
    f.push_back(real("theory_gamma", [](auto& c) -> auto& { return c.theory.gamma; }));
    f.push_back(count("theory_trials", [](auto& c) -> auto& { return c.theory.trials; }));
    f.push_back(count("theory_mdps", [](auto& c) -> auto& { return c.theory.mdps; }));
    f.push_back(count("theory_seed", [](auto& c) -> auto& { return c.theory.seed; }));
    f.push_back({"theory_lambdas",
                 [](ExperimentConfig& c, std::string_view v) {
                   c.theory.lambdas.clear();
                   for (auto item : split_list("theory_lambdas", v)) {
                     c.theory.lambdas.push_back(parse_double("theory_lambdas", item));
                   }
                 },
                 [](const ExperimentConfig& c) { return join(c.theory.lambdas); }});
    f.push_back(real("rate_a", [](auto& c) -> auto& { return c.theory.rate.a; }));
    f.push_back(real("rate_m", [](auto& c) -> auto& { return c.theory.rate.m; }));
    f.push_back(real("rate_g", [](auto& c) -> auto& { return c.theory.rate.G; }));
    f.push_back(count("rate_dim", [](auto& c) -> auto& { return c.theory.rate.dim; }));
    f.push_back(count("rate_k_max", [](auto& c) -> auto& { return c.theory.rate.k_max; }));
    f.push_back(count("rate_seeds", [](auto& c) -> auto& { return c.theory.rate.seeds; }));
    f.push_back(count("rate_seed", [](auto& c) -> auto& { return c.theory.rate.seed; }));
    f.push_back(count("rate_fit_from", [](auto& c) -> auto& { return c.theory.rate.fit_from; }));
    f.push_back(count("rate_points_per_decade", [](auto& c) -> auto& { return c.theory.rate.points_per_decade; }));
    f.push_back(flag("variance", [](auto& c) -> auto& { return c.theory.variance; }));
    f.push_back(count("variance_first_update", [](auto& c) -> auto& { return c.theory.variance_window.first_update; }));
    f.push_back(count("variance_last_update", [](auto& c) -> auto& { return c.theory.variance_window.last_update; }));
    f.push_back(count("variance_max_episodes", [](auto& c) -> auto& { return c.theory.variance_max_episodes; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

// Library validators report "<field> must ..."; the field names match config keys.
template <typename F>
void forward_validation(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto space = msg.find(' ');
    throw ConfigError(msg.substr(0, space), space == std::string::npos ? msg : msg.substr(space + 1));
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError(std::string(key), "unknown key");
  f->set(cfg, trim(value));
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (auto item : split_list("seeds", text)) seeds.push_back(parse_integer<std::uint64_t>("seeds", item));
  return seeds;
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& names = envs::environment_names();
  require(std::find(names.begin(), names.end(), cfg.env) != names.end(), "env",
          "must be one of pendulum, acrobot, nav2d; got '" + cfg.env + "'");
  require(cfg.episodes >= 1, "episodes", "must be >= 1");
  require(!cfg.seeds.empty(), "seeds", "must list at least one seed");
  require(!cfg.td3.hidden_dims.empty(), "hidden_dims", "must list at least one layer width");
  forward_validation([&] { cfg.td3.validate(); });
  if (cfg.r_threshold) require(std::isfinite(*cfg.r_threshold), "r_threshold", "must be finite or auto");
  forward_validation([&] { cfg.wave.validate(); });
  require(cfg.out_dir.find_first_of("#\n") == std::string::npos && trim(cfg.out_dir) == cfg.out_dir, "out_dir",
          "must not contain '#', newlines or surrounding spaces");

  const auto& t = cfg.theory;
  require(t.states >= 1, "theory_states", "must be >= 1");
  require(t.actions >= 1, "theory_actions", "must be >= 1");
  require(t.gamma >= 0.0 && t.gamma < 1.0, "theory_gamma", "must be in [0, 1)");
  require(t.trials >= 1, "theory_trials", "must be >= 1");
  require(t.mdps >= 1, "theory_mdps", "must be >= 1");
  require(!t.lambdas.empty(), "theory_lambdas", "must list at least one value");
  for (double l : t.lambdas) require(l >= 0.0, "theory_lambdas", "entries must be >= 0");
  const auto& r = t.rate;
  require(r.a > 0.0, "rate_a", "must be > 0");
  require(r.m > 0.0, "rate_m", "must be > 0");
  require(r.G >= 0.0, "rate_g", "must be >= 0");
  require(r.G == 0.0 || r.a * r.m > 0.5, "rate_a", "rate_a * rate_m must exceed 1/2");
  require(r.dim >= 1, "rate_dim", "must be >= 1");
  require(r.k_max >= 2, "rate_k_max", "must be >= 2");
  require(r.seeds >= 1, "rate_seeds", "must be >= 1");
  require(r.fit_from >= 1 && r.fit_from < r.k_max, "rate_fit_from", "must be in [1, rate_k_max)");
  require(r.points_per_decade >= 1, "rate_points_per_decade", "must be >= 1");
  require(t.variance_window.first_update <= t.variance_window.last_update, "variance_last_update",
          "must be >= variance_first_update");
  require(t.variance_max_episodes >= 1, "variance_max_episodes", "must be >= 1");
}

ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(std::string(line), "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) throw ConfigError(key, "set more than once");
    apply_setting(cfg, key, line.substr(eq + 1));
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(std::string(trim(o)), "override must be key=value");
    apply_setting(cfg, trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides) {
  if (!path) return parse_config("", overrides);
  if (!std::filesystem::exists(*path)) throw ConfigError("--config", "no such file: " + path->string());
  return parse_config(read_file(*path), overrides);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace wave::cli
