#include "wave/cli/config.hpp"
#include "wave/cli/plot.hpp"
#include "wave/cli/run.hpp"
#include "wave/io.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace wave;
using namespace wave::cli;

namespace {

// Shared by every subcommand; only the one that was invoked fills them in.
struct CommonFlags {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::string> out;
  std::optional<std::string> seeds;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Flat 'key = value' config file");
  sub->add_option("--set", f.sets, "Override one config key, key=value (repeatable)")->allow_extra_args(false);
  sub->add_option("--out", f.out, "Output directory (default: $WAVE_OUT/<command>)");
  sub->add_option("--seeds", f.seeds, "Comma separated seeds, e.g. 1,2,3");
}

ExperimentConfig load(const CommonFlags& f) {
  std::optional<std::filesystem::path> path;
  if (f.config) path = *f.config;
  ExperimentConfig cfg = load_config(path, f.sets);
  if (f.seeds) {
    cfg.seeds = parse_seed_list(*f.seeds);
    validate_config(cfg);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"WAVE: TD3 with an adaptively weighted Sinkhorn critic regularizer"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* train = app.add_subcommand("train", "Train every configured seed and log per-episode CSVs");
  add_common(train, flags);
  bool ablate_flag = false;
  train->add_flag("--ablate", ablate_flag, "Also run the lambda-off arm with matched seeds");

  auto* ablate = app.add_subcommand("ablate", "Paired regularized and plain TD3 arms with matched seeds");
  add_common(ablate, flags);

  auto* theory = app.add_subcommand("verify-theory", "Contraction, rate and variance experiments");
  add_common(theory, flags);

  auto* bench = app.add_subcommand("sinkhorn-bench", "Sinkhorn distance between the two columns of a sample file");
  add_common(bench, flags);
  std::string samples;
  bench->add_option("samples", samples, "Two-column numeric text file")->required()->check(CLI::ExistingFile);

  auto* plot = app.add_subcommand("plot", "SVG charts of cumulative reward and lambda from episode CSVs");
  add_common(plot, flags);
  std::vector<std::string> inputs;
  plot->add_option("inputs", inputs, "Episode CSVs or run directories")->required()->check(CLI::ExistingPath);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  ExperimentConfig cfg;
  try {
    cfg = load(flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    if (*train || *ablate) {
      const bool paired = *ablate || ablate_flag;
      const auto out = resolve_out_dir(flags.out, cfg, paired ? "ablate" : "train");
      const auto result = run_train(cfg, out, paired, &std::cerr);
      std::cout << read_file(out / "summary.csv");
      std::cout << "outputs in " << out.string() << "\n";
      return result.all_ok() ? kExitOk : kExitRuntimeFailure;
    }
    if (*theory) {
      const auto out = resolve_out_dir(flags.out, cfg, "verify-theory");
      const auto outcome = run_verify_theory(cfg, out, &std::cerr);
      std::cout << read_file(out / "summary.txt");
      return outcome.passed() ? kExitOk : kExitAcceptanceFailure;
    }
    if (*bench) {
      BenchSamples s;
      try {
        s = read_two_column(samples);
      } catch (const std::runtime_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfigError;
      }
      const auto r = ot::sinkhorn_distance(ot::EmpiricalDistribution<double>(s.x),
                                           ot::EmpiricalDistribution<double>(s.y), cfg.wave.sinkhorn);
      std::cout << sinkhorn_bench_report(r);
      return r.converged ? kExitOk : kExitRuntimeFailure;
    }
    if (*plot) {
      const auto out = resolve_out_dir(flags.out, cfg, "plot");
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      std::vector<std::filesystem::path> written;
      try {
        written = emit_plots(paths, out);
      } catch (const std::runtime_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfigError;
      }
      for (const auto& p : written) std::cout << p.string() << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeFailure;
  }
  return kExitOk;
}
