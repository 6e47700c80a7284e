#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvfl/attack.hpp"
#include "badvfl/dataset.hpp"
#include "badvfl/defense.hpp"
#include "badvfl/nn.hpp"

namespace badvfl {

enum class AttackKind { None, BadVfl, Gr };

struct DatasetCfg {
  std::string kind = "blobs";  // blobs | idx
  int classes = 2;
  int train_per_class = 1000;
  int test_per_class = 250;
  int features = 16;
  double separation = 6.0;
  std::optional<GridShape> grid;
  std::string train_images, train_labels, test_images, test_labels;
  std::optional<int64_t> limit;
};

struct SplitCfg {
  int parties = 2;
  std::optional<std::vector<std::pair<int, int>>> ranges;
};

struct ModelCfg {
  std::vector<int> bottom_hidden = {16};
  int bottom_out = 8;
  Activation bottom_activation = Activation::ReLU;
  int top_hidden_layers = 0;
  int top_hidden_width = 16;
  double weight_decay = 0.0;
};

struct TriggerCfg {
  std::string kind = "auto";  // auto | patch | overwrite
  TriggerSpec::Position position = TriggerSpec::Position::Center;
  std::optional<int> offset;
  int size = 2;
  std::optional<double> value;  // default: attacker shard feature max
};

struct AttackSectionCfg {
  AttackKind kind = AttackKind::None;
  int target_class = 0;
  int64_t target_id = -1;  // -1: sample one from the target class
  double eta = 0.01;
  int n = 5;
  double alpha_thre = 0.6;
  SelectionRule selection = SelectionRule::Threshold;
  double top_percent = 0.01;
  PerturbMode perturb = PerturbMode::SameBatch;
  TriggerCfg trigger;
  int warmup_epochs = 1;
  int max_tests = 3;
  double mask_scale = 1.0;
  int repeats = 1;
};

struct DefenseCfg {
  DefenseSpec::Kind kind = DefenseSpec::Kind::None;
  double variance = 0.0;
  double keep_fraction = 1.0;
  uint64_t seed = 77;
};

struct RunCfg {
  uint64_t seed = 1;
  bool baseline = true;
  std::string out_dir = "out";
};

struct ExperimentConfig {
  DatasetCfg dataset;
  SplitCfg split;
  ModelCfg model;
  OptimizerSpec optimizer;
  int epochs = 30;
  int batch_size = 64;
  AttackSectionCfg attack;
  DefenseCfg defense;
  RunCfg run;

  nlohmann::json resolved;                // defaults overlaid with the user file
  std::set<std::string> explicit_paths;   // dotted keys the user actually set

  bool is_explicit(const std::string& path) const { return explicit_paths.count(path) != 0; }
};

// Full defaults tree; the schema is exactly this shape.
nlohmann::json config_defaults();

// Parses a JSON config against the defaults. Unknown keys, type mismatches
// and out-of-range values raise ConfigError naming the dotted key path.
ExperimentConfig config_from_json(const nlohmann::json& user);
ExperimentConfig parse_config(const std::string& text);

// Stable 16-hex-digit hash of the resolved config with run.seed normalized
// to 0, so repeated seeds of one cell share a fingerprint.
std::string config_fingerprint(const nlohmann::json& resolved);

}  // namespace badvfl
