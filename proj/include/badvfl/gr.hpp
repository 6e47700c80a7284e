#pragma once

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "badvfl/dataset.hpp"
#include "badvfl/protocol.hpp"

namespace badvfl {

// Gradient-replacement baseline. Picks a fixed random poison set up front,
// uploads Gaussian masks for those rows so the active party never sees
// their real representations, and locally backpropagates the target
// sample's returned gradient through the triggered inputs.
struct GrConfig {
  int64_t target_id = -1;
  double eta = 0.01;
  TriggerSpec trigger;
  double mask_scale = 1.0;  // stddev of the upload mask
};

struct GrState {
  std::vector<int64_t> poisoned_ids;  // fixed at construction, never the target
  std::unordered_set<int64_t> poisoned_set;
  std::vector<double> target_grad;
  bool has_target_grad = false;
  long skipped_replacements = 0;  // poisoned rows seen before any target gradient
};

class GrAttacker final : public PartyHook {
 public:
  GrAttacker(GrConfig cfg, const PartyShard* own_shard, uint64_t rng_seed);

  void rewrite_input(std::span<const int64_t> batch_ids, Matrix& own_input) override;
  void rewrite_upload(std::span<const int64_t> batch_ids, Matrix& own_upload) override;
  void rewrite_gradients(std::span<const int64_t> batch_ids, Matrix& own_grads) override;

  const GrState& state() const { return st_; }
  const GrConfig& config() const { return cfg_; }

 private:
  GrConfig cfg_;
  GrState st_;
  const PartyShard* shard_;
  IdIndex own_index_;
  Rng rng_;
};

}  // namespace badvfl
