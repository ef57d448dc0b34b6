#pragma once

#include "wave/agent/agent.hpp"
#include "wave/theory/theory.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wave::cli {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct TheorySettings {
  std::size_t states = 4;
  std::size_t actions = 2;
  double gamma = 0.9;
  std::size_t trials = 1000;
  std::size_t mdps = 5;
  std::uint64_t seed = 0;
  std::vector<double> lambdas{0.01, 0.05, 0.1};
  theory::ConvergenceConfig rate;
  bool variance = true;
  theory::VarianceWindow variance_window;
  std::size_t variance_max_episodes = 300;

  bool operator==(const TheorySettings&) const = default;
};

struct ExperimentConfig {
  std::string env = "pendulum";
  std::size_t episodes = 300;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  agent::Td3Config td3;
  /// `wave.schedule.r_threshold` is unused; see `r_threshold`.
  agent::WaveConfig wave;
  /// nullopt is "auto": random-policy baseline plus a quarter of the gap to
  /// the environment's optimistic return bound.
  std::optional<double> r_threshold;
  std::string out_dir;
  /// Progress line every this many episodes; 0 is silent.
  std::size_t log_every = 10;
  bool checkpoint = false;
  bool trajectory = false;
  bool wall_time = false;
  TheorySettings theory;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Keys in serialization order.
const std::vector<std::string>& config_keys();

/// Parses `value` into the field named `key`. Throws ConfigError naming the key.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Throws ConfigError naming the first offending key.
void validate_config(const ExperimentConfig& cfg);

/// Flat `key = value` document, `#` starts a comment. Overrides are
/// `key=value` strings applied after the document. The result is validated.
ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides = {});

/// Every key with its value, in `config_keys()` order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);
std::string serialize_config(const ExperimentConfig& cfg);

/// "1,2,3" with optional spaces; throws ConfigError for key "seeds".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace wave::cli
