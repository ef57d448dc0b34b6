#pragma once

#include "wave/cli/config.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace wave::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitRuntimeFailure = 3,
  kExitAcceptanceFailure = 4,
};

/// Output directory: `--out` if given, else `out_dir` from the config, else
/// `$WAVE_OUT/<command>`, else `wave_out/<command>`.
std::filesystem::path resolve_out_dir(const std::optional<std::string>& flag, const ExperimentConfig& cfg,
                                      std::string_view command);

agent::WaveConfig resolve_wave(const ExperimentConfig& cfg, const envs::Environment& env, bool regularize);

struct SeedOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  std::filesystem::path csv;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> trajectory;
  std::string status = "pending";
  std::size_t episodes = 0;
  double final_moving_avg_return = 0.0;
  double best_moving_avg_return = 0.0;
};

struct TrainResult {
  std::filesystem::path out_dir;
  std::vector<SeedOutcome> runs;
  bool all_ok() const;
};

inline constexpr const char* kSummaryCsvHeader =
    "env,arm,seed,episodes,final_moving_avg_return,best_moving_avg_return,status";

/// Trains every seed in `cfg.seeds`. With `ablate`, runs matched "wave"
/// (regularized) and "td3" (lambda pinned to 0) arms; otherwise one arm named
/// after `cfg.wave.regularize`. Writes `<arm>/seed_<s>.csv`, `summary.csv` and
/// `manifest.json` under `out`. A seed that throws is recorded as failed and
/// the remaining seeds still run.
TrainResult run_train(const ExperimentConfig& cfg, const std::filesystem::path& out, bool ablate,
                      std::ostream* progress = nullptr);

struct TheoryOutcome {
  bool contraction_ok = false;
  bool rate_ok = false;
  /// Unset when the variance experiment is disabled.
  std::optional<bool> variance_ok;
  bool passed() const { return contraction_ok && rate_ok && variance_ok.value_or(true); }
};

/// Writes contraction.csv, rate.csv, variance.csv (when enabled) and
/// summary.txt under `out`.
TheoryOutcome run_verify_theory(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                std::ostream* progress = nullptr);

struct BenchSamples {
  Vector x;
  Vector y;
};

/// Whitespace separated two-column numeric text; `#` starts a comment.
BenchSamples read_two_column(const std::filesystem::path& path);
std::string sinkhorn_bench_report(const ot::SinkhornResult<double>& result);

/// Keeps the many short-lived matrices of a training update off mmap and
/// avoids returning memory to the OS between updates. No-op outside glibc.
void tune_allocator();

}  // namespace wave::cli
