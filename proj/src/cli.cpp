#include "hrt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "hrt/harness.hpp"

namespace hrt::cli {

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config_path;
  std::string scenario, algo;
  long depth = -1;
  long long seed = -1;
  long long episodes = -1;
  long long eval_episodes = -1;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--scenario", f.scenario, "coop_nav|phys_deception|coop_comm|predator_prey");
  cmd->add_option("--algo", f.algo, "maddpg|rmaddpg|hrtmaddpg");
  cmd->add_option("--depth", f.depth, "transformer stack depth (hrtmaddpg only)");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--episodes", f.episodes, "training episodes");
  cmd->add_option("--eval-episodes", f.eval_episodes, "evaluation episodes");
  cmd->add_option("--out", f.out_dir, "output directory");
}

harness::ExperimentConfig resolve_config(const CommonFlags& f) {
  harness::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = harness::parse_config_file(f.config_path);
  if (!f.scenario.empty()) cfg.scenario = f.scenario;
  if (!f.algo.empty()) cfg.algo = f.algo;
  if (f.depth >= 0) {
    if (cfg.algo != "hrtmaddpg")
      throw CLI::ValidationError("--depth", "--depth requires --algo hrtmaddpg");
    cfg.marl.depth = static_cast<std::size_t>(f.depth);
  }
  if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (f.episodes >= 0) cfg.train_episodes = static_cast<std::size_t>(f.episodes);
  if (f.eval_episodes >= 0) cfg.eval_episodes = static_cast<std::size_t>(f.eval_episodes);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_train(const CommonFlags& f, const std::string& format) {
  harness::ExperimentConfig cfg = resolve_config(f);
  harness::RunMetrics m = harness::run_training(cfg, [](std::size_t ep, double mean) {
    if ((ep + 1) % 100 == 0) std::printf("episode %zu mean_return %.6f\n", ep + 1, mean);
  });
  if (format == "json")
    harness::export_metrics(m, (fs::path(cfg.out_dir) / "metrics.json").string(), "json");
  std::printf("done: %zu episodes, %zu transitions, %.1f s\n", m.returns.size(),
              m.transitions_stored, m.wall_clock_sec);
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, bool random_baseline) {
  harness::ExperimentConfig cfg = resolve_config(f);
  std::string path = checkpoint;
  if (!random_baseline) {
    if (path.empty()) path = (fs::path(cfg.out_dir) / "checkpoint_final.bin").string();
    if (!fs::exists(path)) throw std::runtime_error("eval: checkpoint not found: " + path);
  } else {
    path.clear();
  }
  harness::EvalReport rep = harness::run_evaluation(cfg, path);

  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "eval_report.csv");
  out << "agent,mean,stddev\n";
  for (std::size_t i = 0; i < rep.mean.size(); ++i)
    out << i << "," << harness::format_double(rep.mean[i]) << ","
        << harness::format_double(rep.stddev[i]) << "\n";

  std::printf("%s — %s, %zu episodes\n", scenario_display_name(cfg.scenario).c_str(),
              path.empty() ? "random policy" : path.c_str(), rep.returns.size());
  for (std::size_t i = 0; i < rep.mean.size(); ++i)
    std::printf("agent %zu  mean %.6f  stddev %.6f\n", i, rep.mean[i], rep.stddev[i]);
  return 0;
}

std::vector<double> smoothed_team_series(const harness::RunMetrics& m, std::size_t window) {
  std::vector<double> team;
  team.reserve(m.returns.size());
  for (const auto& r : m.returns) {
    double s = 0.0;
    for (double v : r) s += v;
    team.push_back(r.empty() ? 0.0 : s / static_cast<double>(r.size()));
  }
  std::vector<double> out(team.size());
  double acc = 0.0;
  for (std::size_t e = 0; e < team.size(); ++e) {
    acc += team[e];
    if (e >= window) acc -= team[e - window];
    out[e] = acc / static_cast<double>(std::min(e + 1, window));
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

int cmd_compare(const std::vector<std::string>& dirs) {
  std::string scenario;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> means;  // [run][agent]
  for (const auto& dir : dirs) {
    harness::ExperimentConfig cfg = harness::parse_config_file((fs::path(dir) / "config.txt").string());
    if (scenario.empty()) scenario = cfg.scenario;
    else if (scenario != cfg.scenario)
      throw std::runtime_error("compare: scenario mismatch (" + scenario + " vs " + cfg.scenario +
                               " in " + dir + ")");
    std::string label = cfg.algo;
    if (cfg.algo == "hrtmaddpg") label += " T" + std::to_string(cfg.marl.depth);
    labels.push_back(label);

    harness::RunMetrics m =
        harness::import_metrics_csv((fs::path(dir) / "metrics.csv").string());
    if (m.returns.empty()) throw std::runtime_error("compare: no episodes in " + dir);
    std::size_t n = m.returns[0].size();
    std::vector<double> mean(n, 0.0);
    for (const auto& r : m.returns)
      for (std::size_t i = 0; i < n; ++i) mean[i] += r[i];
    for (double& v : mean) v /= static_cast<double>(m.returns.size());
    means.push_back(std::move(mean));
  }

  std::printf("%s\n", scenario_display_name(scenario).c_str());
  std::printf("%-10s", "agent");
  for (const auto& l : labels) std::printf("  %14s", l.c_str());
  std::printf("\n");
  std::size_t n = means[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    std::printf("agent %-4zu", i);
    for (const auto& m : means) {
      if (i >= m.size()) throw std::runtime_error("compare: agent count mismatch across runs");
      std::printf("  %14.6f", m[i]);
    }
    std::printf("\n");
  }
  return 0;
}

}  // namespace

std::string scenario_display_name(const std::string& name) {
  if (name == "coop_nav") return "Cooperative Navigation";
  if (name == "phys_deception") return "Physical Deception";
  if (name == "coop_comm") return "Cooperative Communication";
  if (name == "predator_prey") return "Predator-Prey";
  return name;
}

int cmd_plot(const PlotSpec& spec) {
  if (spec.inputs.empty()) throw std::invalid_argument("plot: no input metrics files");
  if (spec.smooth < 1) throw std::invalid_argument("plot: smoothing window must be >= 1");

  std::vector<std::vector<double>> series;
  for (const auto& path : spec.inputs)
    series.push_back(smoothed_team_series(harness::import_metrics_csv(path), spec.smooth));

  double lo = 0.0, hi = 0.0;
  std::size_t max_len = 1;
  bool first = true;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.size());
    for (double v : s) {
      if (first) { lo = hi = v; first = false; }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-12) { hi += 1.0; lo -= 1.0; }

  const double width = 800, height = 480;
  const double ml = 70, mr = 20, mt = 20, mb = 50;
  auto sx = [&](std::size_t e) {
    double span = max_len > 1 ? static_cast<double>(max_len - 1) : 1.0;
    return ml + (width - ml - mr) * static_cast<double>(e) / span;
  };
  auto sy = [&](double v) { return mt + (height - mt - mb) * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                ml, height - mb, width - mr, height - mb);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                ml, mt, ml, height - mb);
  svg << buf;
  for (int k = 0; k <= 4; ++k) {
    double v = lo + (hi - lo) * k / 4.0;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\">%.3f</text>\n",
                  ml - 6, sy(v) + 4, v);
    svg << buf;
    std::size_t e = (max_len - 1) * k / 4;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">%zu</text>\n",
                  sx(e), height - mb + 18, e);
    svg << buf;
  }
  svg << "<text x=\"" << (ml + (width - ml - mr) / 2) << "\" y=\"" << (height - 12)
      << "\" font-size=\"13\" text-anchor=\"middle\">episode</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"16\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %.1f)\">mean return</text>\n",
                mt + (height - mt - mb) / 2, mt + (height - mt - mb) / 2);
  svg << buf;

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t e = 0; e < series[s].size(); ++e) {
      std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", e ? " " : "", sx(e), sy(series[s][e]));
      svg << buf;
    }
    svg << "\"/>\n";
    std::string label = s < spec.labels.size() ? spec.labels[s] : spec.inputs[s];
    double ly = mt + 16 + 18 * static_cast<double>(s);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                  "stroke-width=\"1.5\"/>\n",
                  width - mr - 180, ly - 4, width - mr - 150, ly - 4, color);
    svg << buf;
    svg << "<text x=\"" << (width - mr - 144) << "\" y=\"" << ly
        << "\" font-size=\"12\">" << label << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(spec.output);
  if (!out) throw std::runtime_error("plot: cannot write " + spec.output);
  out << svg.str();
  return 0;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"hierarchical recurrent-transformer multi-agent training"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags;
  std::string format = "csv";
  CLI::App* train = app.add_subcommand("train", "run one training experiment");
  add_common(train, train_flags);
  train->add_option("--format", format, "metrics export format")
      ->check(CLI::IsMember({"csv", "json"}));

  std::string checkpoint;
  bool random_baseline = false;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/checkpoint_final.bin)");
  eval->add_flag("--random", random_baseline, "evaluate the uniform-random baseline instead");

  PlotSpec spec;
  CLI::App* plot = app.add_subcommand("plot", "render reward curves to SVG");
  plot->add_option("inputs", spec.inputs, "metrics CSV files")->required();
  plot->add_option("--labels", spec.labels, "series labels (default: input paths)");
  plot->add_option("--smooth", spec.smooth, "trailing-mean window");
  plot->add_option("--out", spec.output, "output SVG path");

  std::vector<std::string> dirs;
  CLI::App* compare = app.add_subcommand("compare", "tabulate mean returns across runs");
  compare->add_option("dirs", dirs, "run directories (config.txt + metrics.csv)")
      ->expected(2, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags, format);
    if (eval->parsed()) return cmd_eval(eval_flags, checkpoint, random_baseline);
    if (plot->parsed()) return cmd_plot(spec);
    if (compare->parsed()) return cmd_compare(dirs);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace hrt::cli
