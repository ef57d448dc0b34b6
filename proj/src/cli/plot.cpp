#include "wave/cli/plot.hpp"

#include "wave/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

namespace wave::cli {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

template <typename T>
T field(std::string_view s, std::string_view origin, std::size_t line_no) {
  T x{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  bool ok = !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
  if constexpr (std::is_floating_point_v<T>) ok = ok && std::isfinite(x);
  if (!ok) {
    throw std::runtime_error(std::string(origin) + ":" + std::to_string(line_no) + ": malformed value '" +
                             std::string(s) + "'");
  }
  return x;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, double step) {
  if (std::abs(v) < step * 1e-9) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

struct Range {
  double lo;
  double hi;
};

Range padded(double lo, double hi) {
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
    const double pad = std::max(0.1 * std::abs(hi), 1e-3);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::vector<agent::EpisodeLog> parse_episode_csv(std::string_view text, std::string_view origin) {
  std::vector<agent::EpisodeLog> logs;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != agent::kEpisodeCsvHeader) {
        throw std::runtime_error(std::string(origin) + ": not an episode log (unexpected header)");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 10) {
      throw std::runtime_error(std::string(origin) + ":" + std::to_string(line_no) + ": expected 10 fields, got " +
                               std::to_string(f.size()));
    }
    agent::EpisodeLog l;
    l.episode = field<std::size_t>(f[0], origin, line_no);
    l.env_steps = field<std::size_t>(f[1], origin, line_no);
    l.episode_return = field<double>(f[2], origin, line_no);
    l.moving_avg_return = field<double>(f[3], origin, line_no);
    l.lambda = field<double>(f[4], origin, line_no);
    l.mean_td_loss = field<double>(f[5], origin, line_no);
    l.mean_w_term = field<double>(f[6], origin, line_no);
    l.mean_critic_grad_norm = field<double>(f[7], origin, line_no);
    l.mean_actor_loss = field<double>(f[8], origin, line_no);
    l.wall_ms = field<double>(f[9], origin, line_no);
    logs.push_back(l);
  }
  if (line_no == 0) throw std::runtime_error(std::string(origin) + ": empty file");
  if (logs.empty()) throw std::runtime_error(std::string(origin) + ": no data rows");
  return logs;
}

std::vector<agent::EpisodeLog> read_episode_csv(const std::filesystem::path& path) {
  return parse_episode_csv(read_file(path), path.string());
}

std::vector<double> cumulative_average(const std::vector<agent::EpisodeLog>& logs) {
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    sum += logs[i].episode_return;
    out.push_back(sum / static_cast<double>(i + 1));
  }
  return out;
}

Band aggregate(const std::vector<std::vector<double>>& series) {
  Band b;
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t k = 0;
    for (const auto& s : series) {
      if (i >= s.size()) continue;
      sum += s[i];
      lo = std::min(lo, s[i]);
      hi = std::max(hi, s[i]);
      ++k;
    }
    b.mean.push_back(sum / static_cast<double>(k));
    b.lo.push_back(lo);
    b.hi.push_back(hi);
  }
  return b;
}

std::string render_svg(const Chart& chart) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  for (const auto& c : chart.curves) {
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      x_lo = std::min(x_lo, c.x[i]);
      x_hi = std::max(x_hi, c.x[i]);
      y_lo = std::min(y_lo, c.y.lo[i]);
      y_hi = std::max(y_hi, c.y.hi[i]);
    }
  }
  if (!std::isfinite(x_lo)) x_lo = x_hi = y_lo = y_hi = 0.0;
  const Range xr = x_hi > x_lo ? Range{x_lo, x_hi} : Range{x_lo - 0.5, x_hi + 0.5};
  const Range yr = padded(y_lo, y_hi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(chart.title) + "</text>\n";
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";

  const double ys = nice_step(yr.hi - yr.lo);
  for (long i = std::lround(std::ceil(yr.lo / ys - 1e-9)); i <= std::lround(std::floor(yr.hi / ys + 1e-9)); ++i) {
    const double t = static_cast<double>(i) * ys;
    const std::string y = num(py(t));
    s += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + y + "\" x2=\"" + num(kLeft) + "\" y2=\"" + y +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(kLeft - 7) + "\" y=\"" + y + "\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
         tick_label(t, ys) + "</text>\n";
  }
  const double xs = std::max(1.0, nice_step(xr.hi - xr.lo));
  for (long i = std::lround(std::ceil(xr.lo / xs - 1e-9)); i <= std::lround(std::floor(xr.hi / xs + 1e-9)); ++i) {
    const double t = static_cast<double>(i) * xs;
    const std::string x = num(px(t));
    const std::string y0 = num(kTop + ph);
    s += "<line x1=\"" + x + "\" y1=\"" + y0 + "\" x2=\"" + x + "\" y2=\"" + num(kTop + ph + 4) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + x + "\" y=\"" + num(kTop + ph + 18) + "\" text-anchor=\"middle\">" + tick_label(t, xs) +
         "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
       escape(chart.x_label) + "</text>\n";
  s += "<text transform=\"translate(18 " + num(kTop + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(chart.y_label) + "</text>\n";

  for (std::size_t ci = 0; ci < chart.curves.size(); ++ci) {
    const auto& c = chart.curves[ci];
    const std::string color = kPalette[ci % std::size(kPalette)];
    if (c.x.size() > 1) {
      std::string band;
      for (std::size_t i = 0; i < c.x.size(); ++i) band += num(px(c.x[i])) + "," + num(py(c.y.hi[i])) + " ";
      for (std::size_t i = c.x.size(); i-- > 0;) {
        band += num(px(c.x[i])) + "," + num(py(c.y.lo[i]));
        if (i > 0) band += " ";
      }
      s += "<polygon class=\"band\" points=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string line;
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      if (i > 0) line += " ";
      line += num(px(c.x[i])) + "," + num(py(c.y.mean[i]));
    }
    s += "<polyline class=\"mean\" points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"1.5\"/>\n";
    if (c.x.size() == 1) {
      s += "<circle cx=\"" + num(px(c.x[0])) + "\" cy=\"" + num(py(c.y.mean[0])) + "\" r=\"3\" fill=\"" + color +
           "\"/>\n";
    }
    const double ly = kTop + 10 + 20.0 * static_cast<double>(ci);
    const double lx = kWidth - kRight + 15;
    s += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 20) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(lx + 26) + "\" y=\"" + num(ly) + "\" dominant-baseline=\"middle\">" + escape(c.label) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& inputs,
                                              const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> csvs;
  for (const auto& in : inputs) {
    if (!fs::is_directory(in)) {
      csvs.push_back(in);
      continue;
    }
    for (const auto& arm : fs::directory_iterator(in)) {
      if (!arm.is_directory()) continue;
      for (const auto& f : fs::directory_iterator(arm.path())) {
        const std::string name = f.path().filename().string();
        if (f.is_regular_file() && name.rfind("seed_", 0) == 0 && f.path().extension() == ".csv" &&
            name.find("_trajectory") == std::string::npos) {
          csvs.push_back(f.path());
        }
      }
    }
  }
  if (csvs.empty()) throw std::runtime_error("no episode CSVs to plot");
  std::sort(csvs.begin(), csvs.end());

  std::map<std::string, std::vector<std::vector<agent::EpisodeLog>>> arms;
  for (const auto& p : csvs) {
    std::string arm = p.parent_path().filename().string();
    if (arm.empty()) arm = "run";
    arms[arm].push_back(read_episode_csv(p));
  }

  Chart reward{"Cumulative average reward", "episode", "cumulative average return", {}};
  Chart lambda{"Adaptive regularization weight", "episode", "lambda", {}};
  for (const auto& [arm, runs] : arms) {
    std::vector<std::vector<double>> rewards, lambdas;
    std::vector<double> x;
    for (const auto& logs : runs) {
      rewards.push_back(cumulative_average(logs));
      std::vector<double> l;
      for (const auto& e : logs) l.push_back(e.lambda);
      lambdas.push_back(std::move(l));
      if (logs.size() > x.size()) {
        x.clear();
        for (const auto& e : logs) x.push_back(static_cast<double>(e.episode));
      }
    }
    const std::string label = arm + " (" + std::to_string(runs.size()) + (runs.size() == 1 ? " seed)" : " seeds)");
    reward.curves.push_back({label, x, aggregate(rewards)});
    lambda.curves.push_back({label, x, aggregate(lambdas)});
  }
  const std::string reward_svg = render_svg(reward);
  const std::string lambda_svg = render_svg(lambda);
  const std::vector<fs::path> out{out_dir / "cumulative_reward.svg", out_dir / "lambda.svg"};
  atomic_write_file(out[0], reward_svg);
  atomic_write_file(out[1], lambda_svg);
  return out;
}

}  // namespace wave::cli
