#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvfl/config.hpp"
#include "badvfl/metrics.hpp"
#include "badvfl/protocol.hpp"

namespace badvfl {

// Dataset + shards for one run, fully determined by config and seed.
struct BuiltData {
  Dataset train;
  Dataset test;
  VerticalSplitSpec split;
  std::vector<PartyShard> train_shards;
  std::vector<PartyShard> test_shards;
  IdIndex index;  // train ids
};

BuiltData build_data(const ExperimentConfig& cfg, uint64_t dataset_seed);

struct System {
  ActiveParty active;
  std::vector<PassiveParty> parties;
};

// Fresh parties with Glorot-initialized models. Draw order: bottoms in
// party order, then the top model, all from one stream.
System build_system(const ExperimentConfig& cfg, const BuiltData& data, uint64_t model_seed);

// Fills in trigger kind (auto -> patch when the attacker shard has a grid)
// and value (default: max over the attacker's training shard).
TriggerSpec resolve_trigger(const ExperimentConfig& cfg, const BuiltData& data);

struct BaselineResult {
  double tar = 0.0;
  double asr = 0.0;
  std::string fingerprint;
};
using BaselineCache = std::map<std::string, BaselineResult>;

struct RunRecord {
  nlohmann::json resolved_config;
  std::string fingerprint;
  uint64_t seed = 0;
  std::string kind;  // benign | badvfl | gr
  MetricsReport metrics;
  double wall_ms = 0.0;
  std::string run_dir;
  std::vector<std::string> csv_rows;  // headerless rows this run contributed
  bool ok = true;
  std::string error;
};

// Executes one configuration under one seed: derives the dataset / model /
// schedule / attack streams, optionally computes (or reuses) the benign
// baseline, runs the attacked training when an attack is configured, and
// writes report.json, training.log, detection.csv and models.json under
// out_dir. All artifacts are byte-deterministic.
RunRecord run_single(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir,
                     BaselineCache* cache = nullptr, std::mutex* cache_mu = nullptr);

std::string runs_csv_header();
void append_csv_rows(const std::string& out_dir, const std::vector<std::string>& rows);

struct SweepAxis {
  std::string path;  // dotted config key, e.g. attack.eta
  std::vector<nlohmann::json> values;
};

struct SweepOutcome {
  int cells = 0;
  int failed_cells = 0;
  std::vector<RunRecord> runs;
  std::string summary_path;
};

// Cartesian product over the axes, each cell run under every seed. Benign
// baselines are shared across cells that agree on everything but the
// attack. Cell failures are recorded and the sweep continues.
SweepOutcome run_sweep(const nlohmann::json& user_cfg, const std::vector<SweepAxis>& axes,
                       const std::vector<uint64_t>& seeds, const std::string& out_dir, int jobs);

// Aggregates one or more runs.csv files into per-(config,kind) mean/std rows.
std::string aggregate_runs(const std::vector<std::string>& csv_paths);

}  // namespace badvfl
