#pragma once

#include "wave/agent/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace wave::cli {

/// Throws std::runtime_error on a wrong header or malformed row.
std::vector<agent::EpisodeLog> parse_episode_csv(std::string_view text, std::string_view origin);
std::vector<agent::EpisodeLog> read_episode_csv(const std::filesystem::path& path);

/// Running mean of returns from the first episode.
std::vector<double> cumulative_average(const std::vector<agent::EpisodeLog>& logs);

struct Band {
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Pointwise mean, min and max over series; index i uses the series that
/// are longer than i.
Band aggregate(const std::vector<std::vector<double>>& series);

struct Curve {
  std::string label;
  std::vector<double> x;
  Band y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Curve> curves;
};

std::string render_svg(const Chart& chart);

/// CSVs are grouped into arms by their parent directory name. A directory
/// argument contributes every `*/seed_*.csv` below it. Writes
/// cumulative_reward.svg and lambda.svg into `out_dir`.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& inputs,
                                              const std::filesystem::path& out_dir);

}  // namespace wave::cli
