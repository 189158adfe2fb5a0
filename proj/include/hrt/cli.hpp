#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hrt::cli {

// One reward-curve figure: one polyline per input metrics CSV.
struct PlotSpec {
  std::vector<std::string> inputs;
  std::vector<std::string> labels;   // defaults to input paths
  std::size_t smooth = 100;          // trailing-mean window, >= 1
  std::string output = "curves.svg";
};

// Exit codes: 0 success, 1 usage, 2 runtime failure.
int run(int argc, const char* const* argv);

int cmd_plot(const PlotSpec& spec);

// "coop_nav" -> "Cooperative Navigation", etc.
std::string scenario_display_name(const std::string& name);

}  // namespace hrt::cli
