#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "badvfl/dataset.hpp"
#include "badvfl/protocol.hpp"

namespace badvfl {

enum class SelectionRule { Threshold, TopPercent };
enum class PerturbMode { None, SameBatch, WholeDataset };

// The attacker knows exactly one training sample of the class it wants the
// backdoor to hit (target_id). Everything else is inferred from its own
// shard and the gradient blocks the active party returns to it.
struct AttackConfig {
  int64_t target_id = -1;
  double eta = 0.01;        // poison budget as a fraction of the training set
  int n = 5;                // feature replacements per batch while detecting
  double alpha_thre = 0.6;  // cosine threshold (Threshold rule)
  SelectionRule rule = SelectionRule::Threshold;
  double top_percent = 0.01;  // TopPercent rule: per-epoch accepted fraction
  PerturbMode perturb = PerturbMode::SameBatch;
  TriggerSpec trigger;
  int warmup_epochs = 1;  // honest epochs before detection starts
  int max_tests = 3;      // similarity tests per candidate before giving up
  int detection_budget = 0;  // ceil(eta * N); filled in by the attacker ctor
};

enum class AttackPhase { AwaitTargetGradient, Detecting, Poisoning };

struct SimilarityRecord {
  int64_t candidate = -1;
  double cosine = 0.0;
  int epoch = -1;
  bool accepted = false;
};

struct AttackState {
  AttackPhase phase = AttackPhase::AwaitTargetGradient;
  std::vector<double> target_grad;
  bool has_target_grad = false;
  std::vector<int64_t> source_ids;  // detection order
  std::unordered_set<int64_t> source_set;
  std::vector<int64_t> pending_nset;  // replacements made this round
  std::vector<SimilarityRecord> detection_log;
  std::unordered_map<int64_t, int> test_counts;
  std::vector<size_t> epoch_pool;  // detection_log indices tested this epoch
  int epoch = 0;
  int poison_flip_epoch = -1;
  long poisoned_row_events = 0;
  long degenerate_cosines = 0;
  long fallback_draws = 0;  // SameBatch rounds that had to draw dataset-wide
  std::vector<std::string> notes;
};

// cos(a, b); 0 with *degenerate set when either norm is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* degenerate = nullptr);

// Uniform draw of up to cfg.n replacement candidates from the batch,
// excluding the target, already detected ids, and ids already tested
// cfg.max_tests times.
std::vector<int64_t> select_candidates(std::span<const int64_t> batch_ids, const AttackState& st,
                                       const AttackConfig& cfg, Rng& rng);

// Scores this round's replacements against the cached target gradient and
// updates the detection state. Throws ProtocolError if no target gradient
// has been observed yet. Returns ids newly added to source_ids (Threshold
// rule; TopPercent defers acceptance to the epoch boundary).
std::vector<int64_t> sdd_update(AttackState& st, const AttackConfig& cfg,
                                const Matrix& delivered_grads,
                                std::span<const int64_t> batch_ids);

class BadVflAttacker final : public PartyHook {
 public:
  // `own_shard` is the attacker's training shard; it must outlive the hook.
  BadVflAttacker(AttackConfig cfg, const PartyShard* own_shard, uint64_t rng_seed);

  void on_epoch_start(int epoch) override;
  void rewrite_input(std::span<const int64_t> batch_ids, Matrix& own_input) override;
  void on_round_end(std::span<const int64_t> batch_ids, const Matrix& delivered_grads) override;
  void on_epoch_end(int epoch) override;

  const AttackState& state() const { return st_; }
  const AttackConfig& config() const { return cfg_; }

 private:
  void flip_to_poisoning(const std::string& reason);
  bool all_candidates_exhausted() const;

  AttackConfig cfg_;
  AttackState st_;
  const PartyShard* shard_;
  IdIndex own_index_;
  Rng rng_;
  std::vector<int64_t> whole_donor_pool_;  // built at the poisoning flip
};

}  // namespace badvfl
