#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "badvfl/dataset.hpp"
#include "badvfl/defense.hpp"
#include "badvfl/matrix.hpp"
#include "badvfl/nn.hpp"

namespace badvfl {

// Interception surface for a passive party that deviates from the honest
// protocol. A hook only ever sees party-local state: its own raw feature
// rows, its own uploads, and the gradient block addressed to it. There is
// deliberately no parameter through which labels, other parties' features
// or the top model could reach an implementation.
//
// Call order within one training round:
//   rewrite_input  -> bottom forward -> rewrite_upload -> (active party)
//   -> rewrite_gradients -> bottom backward/update -> on_round_end
// plus on_epoch_start / on_epoch_end around each epoch.
class PartyHook {
 public:
  virtual ~PartyHook() = default;
  virtual void on_epoch_start(int /*epoch*/) {}
  // May rewrite the party's own raw input rows before the bottom forward.
  virtual void rewrite_input(std::span<const int64_t> /*batch_ids*/, Matrix& /*own_input*/) {}
  // May rewrite the uploaded representation rows.
  virtual void rewrite_upload(std::span<const int64_t> /*batch_ids*/, Matrix& /*own_upload*/) {}
  // May rewrite the returned gradient block before the local backward pass.
  virtual void rewrite_gradients(std::span<const int64_t> /*batch_ids*/, Matrix& /*own_grads*/) {}
  // Observes the gradient block exactly as the active party delivered it.
  virtual void on_round_end(std::span<const int64_t> /*batch_ids*/,
                            const Matrix& /*delivered_grads*/) {}
  virtual void on_epoch_end(int /*epoch*/) {}
};

// Label holder. Owns the top model and the returned-gradient defense; holds
// no feature shard.
struct ActiveParty {
  Mlp top;
  Optimizer top_opt;
  std::vector<int> labels;  // aligned with index.ids
  IdIndex index;
  int class_count = 0;
  double weight_decay = 0.0;
  DefenseSpec defense;
  Rng defense_rng{0};
};

// Feature holder with a bottom model. The optional hook makes this party
// the attacker.
struct PassiveParty {
  int party = 0;
  Mlp bottom;
  PartyShard shard;
  Optimizer opt;
  std::unique_ptr<PartyHook> hook;
};

struct RoundTranscript {
  std::vector<int64_t> batch_ids;
  std::vector<Matrix> uploads;         // per party, post-hook
  Matrix concat;                       // uploads in party order
  Matrix logits;
  double loss = 0.0;
  std::vector<Matrix> returned_grads;  // per party, post-defense, as delivered
};

// Batch plan for a whole run: every sample id appears exactly once per
// epoch; order reshuffles every epoch from one dedicated stream.
struct TrainSchedule {
  int epochs = 0;
  int batch_size = 0;
  std::vector<std::vector<std::vector<int64_t>>> plan;  // [epoch][batch][ids]

  static TrainSchedule build(const std::vector<int64_t>& ids, int epochs, int batch_size,
                             uint64_t shuffle_seed);
};

struct TrainLog {
  std::vector<double> epoch_loss;  // batch-size weighted mean round loss
  std::vector<double> epoch_acc;   // honest train-set accuracy after the epoch
};

// One synchronous round over one batch:
//  1. parties look up their feature rows for the broadcast ids
//  2. bottoms forward, uploads collected in party order
//  3. active party concatenates, tops forward, computes loss + gradients
//  4. per-party gradient blocks pass the defense and are returned
//  5. top model and bottoms take one optimizer step
RoundTranscript run_round(ActiveParty& active, std::vector<PassiveParty>& parties,
                          std::span<const int64_t> batch_ids);

TrainLog train(ActiveParty& active, std::vector<PassiveParty>& parties,
               const TrainSchedule& schedule);

// Inference-path prediction rows aligned to `ids` (used for ASR probes).
struct ShardOverride {
  int party = -1;
  Matrix features;
};

// Argmax prediction over honest shards (hooks never run here). Ties pick
// the lowest class index.
std::vector<int> predict(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                         std::span<const int64_t> ids, const ShardOverride* override_rows = nullptr);

// Same, but on caller-supplied per-party feature matrices (evaluation data).
Matrix vfl_logits(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                  const std::vector<Matrix>& party_inputs);
std::vector<int> predict_features(const ActiveParty& active,
                                  const std::vector<PassiveParty>& parties,
                                  const std::vector<Matrix>& party_inputs);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace badvfl
