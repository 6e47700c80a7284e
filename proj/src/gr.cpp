#include "badvfl/gr.hpp"

#include "badvfl/common.hpp"

namespace badvfl {

GrAttacker::GrAttacker(GrConfig cfg, const PartyShard* own_shard, uint64_t rng_seed)
    : cfg_(cfg), shard_(own_shard), rng_(rng_seed) {
  if (!shard_) throw InternalError("attacker without a shard");
  own_index_ = IdIndex::build(shard_->sample_ids);
  if (!own_index_.contains(cfg_.target_id))
    throw ConfigError("attack.target_id " + std::to_string(cfg_.target_id) +
                      " is not a training sample");
  if (!(cfg_.eta > 0.0 && cfg_.eta <= 1.0)) throw ConfigError("attack.eta must be in (0,1]");
  if (cfg_.mask_scale < 0.0) throw ConfigError("attack.mask_scale must be >= 0");
  trigger_footprint(cfg_.trigger, shard_->features.cols, shard_->grid);

  int budget = ceil_count(cfg_.eta, shard_->features.rows);
  std::vector<int64_t> pool;
  pool.reserve(shard_->sample_ids.size());
  for (int64_t id : shard_->sample_ids)
    if (id != cfg_.target_id) pool.push_back(id);
  st_.poisoned_ids = rng_.sample(std::move(pool), budget);
  st_.poisoned_set.insert(st_.poisoned_ids.begin(), st_.poisoned_ids.end());
}

void GrAttacker::rewrite_input(std::span<const int64_t> batch_ids, Matrix& own_input) {
  // local backprop must run against the triggered version of poisoned rows
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    if (!st_.poisoned_set.count(batch_ids[i])) continue;
    apply_trigger(own_input.row(static_cast<int>(i)), cfg_.trigger, shard_->grid);
  }
}

void GrAttacker::rewrite_upload(std::span<const int64_t> batch_ids, Matrix& own_upload) {
  // the active party only ever sees random masks for poisoned rows
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    if (!st_.poisoned_set.count(batch_ids[i])) continue;
    auto row = own_upload.row(static_cast<int>(i));
    for (double& v : row) v = rng_.gaussian(0.0, cfg_.mask_scale);
  }
}

void GrAttacker::rewrite_gradients(std::span<const int64_t> batch_ids, Matrix& own_grads) {
  // refresh the reference first: the target row is never poisoned, so its
  // delivered gradient always corresponds to an honest upload
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    if (batch_ids[i] != cfg_.target_id) continue;
    auto row = own_grads.row(static_cast<int>(i));
    st_.target_grad.assign(row.begin(), row.end());
    st_.has_target_grad = true;
  }
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    if (!st_.poisoned_set.count(batch_ids[i])) continue;
    if (!st_.has_target_grad) {
      st_.skipped_replacements++;
      continue;
    }
    auto row = own_grads.row(static_cast<int>(i));
    for (size_t j = 0; j < row.size(); ++j) row[j] = st_.target_grad[j];
  }
}

}  // namespace badvfl
