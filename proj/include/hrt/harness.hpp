#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hrt/checkpoint.hpp"
#include "hrt/env.hpp"
#include "hrt/marl.hpp"

namespace hrt::harness {

// Full description of one run. Every field maps to one key of the flat
// key=value config format and to one CLI flag; unknown keys are errors.
struct ExperimentConfig {
  std::string scenario = "coop_nav";
  std::string algo = "hrtmaddpg";
  int episode_length = 25;
  std::size_t train_episodes = 2000;
  std::size_t eval_episodes = 200;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t checkpoint_every = 500;
  bool coop_nav_literal = false;  // literal per-agent goal-assignment reward
  marl::MarlConfig marl;

  void validate() const;
};

// Canonical serialization (sorted keys, one per line), used for config.txt
// snapshots and the checkpoint hash.
std::string serialize_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Apply one key=value pair; throws on unknown keys or bad values.
void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig parse_config_file(const std::string& path);

struct RunMetrics {
  std::vector<std::vector<double>> returns;  // [episode][agent]
  std::vector<std::vector<double>> moving;   // trailing window mean, same shape
  std::size_t transitions_stored = 0;
  double wall_clock_sec = 0.0;
  std::uint64_t seed = 0;
  std::string config_snapshot;
};

struct EvalReport {
  std::vector<double> mean, stddev;                // per agent
  std::vector<std::vector<double>> returns;        // [episode][agent]
};

// Execute the full training loop for one seeded config. Metrics are
// flushed to <out_dir>/metrics.csv after every episode; checkpoints are
// written every `checkpoint_every` episodes and at the end
// (checkpoint_final.bin). The run is bit-reproducible from (config, seed).
RunMetrics run_training(const ExperimentConfig& cfg,
                        const std::function<void(std::size_t, double)>& progress = {});

// Frozen evaluation with exploration disabled. An empty checkpoint path
// evaluates the uniform-random-policy baseline.
EvalReport run_evaluation(const ExperimentConfig& cfg, const std::string& checkpoint_path);

// format is "csv" or "json"; floats written with 17 significant digits.
// CSV columns: episode,return_agent<k>...,ma_agent<k>...
void export_metrics(const RunMetrics& m, const std::string& path, const std::string& format);
RunMetrics import_metrics_csv(const std::string& path);

// Stable (name -> tensor) enumeration of every online/target parameter.
std::vector<std::pair<std::string, num::Tensor*>> named_params(marl::Trainer& trainer);
std::vector<CheckpointEntry> snapshot_params(marl::Trainer& trainer);
void load_params(marl::Trainer& trainer, const std::vector<CheckpointEntry>& entries);

// Trainer construction from a config (shared by training and evaluation).
marl::Trainer make_trainer(const ExperimentConfig& cfg, Rng& init_rng);

std::string format_double(double v);  // %.17g

}  // namespace hrt::harness
