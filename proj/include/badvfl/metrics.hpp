#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "badvfl/dataset.hpp"
#include "badvfl/protocol.hpp"

namespace badvfl {

struct MetricsReport {
  double tar = 0.0;  // clean test accuracy
  double asr = 0.0;  // triggered non-target-class samples predicted as target
  std::optional<double> benign_tar;
  std::vector<int> sdd_confusion;  // true-label histogram of the poison set
  int poisoned_count = 0;
  std::optional<double> detection_precision;
  std::string config_fingerprint;
  uint64_t seed = 0;
};

// Clean accuracy over held-out shards. Purely functional: models and data
// are never mutated by evaluation.
double compute_tar(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                   const std::vector<PartyShard>& test_shards,
                   const std::vector<int>& test_labels);

// Fraction of non-target-class test samples that the model assigns to the
// target class after the trigger is stamped into the attacker's (last
// party's) shard rows. The pool excludes true target-class samples.
double compute_asr(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                   const std::vector<PartyShard>& test_shards,
                   const std::vector<int>& test_labels, const TriggerSpec& trigger,
                   int target_class);

// True-label histogram of the detected/poisoned ids; labels are only for
// auditing and never flow back into any attack decision.
std::vector<int> sdd_confusion(std::span<const int64_t> poison_ids, const IdIndex& train_index,
                               std::span<const int> train_labels, int class_count);

// confusion[target_class] / total; nullopt for an empty set.
std::optional<double> detection_precision(const std::vector<int>& confusion, int target_class);

}  // namespace badvfl
