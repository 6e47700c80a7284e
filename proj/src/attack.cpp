#include "badvfl/attack.hpp"

#include <algorithm>
#include <cmath>

#include "badvfl/common.hpp"

namespace badvfl {

double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* degenerate) {
  if (a.size() != b.size())
    throw InputError("cosine of vectors with different lengths: " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  if (degenerate) *degenerate = false;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<int64_t> select_candidates(std::span<const int64_t> batch_ids, const AttackState& st,
                                       const AttackConfig& cfg, Rng& rng) {
  std::vector<int64_t> eligible;
  eligible.reserve(batch_ids.size());
  for (int64_t id : batch_ids) {
    if (id == cfg.target_id) continue;
    if (st.source_set.count(id)) continue;
    auto it = st.test_counts.find(id);
    if (it != st.test_counts.end() && it->second >= cfg.max_tests) continue;
    eligible.push_back(id);
  }
  return rng.sample(std::move(eligible), cfg.n);
}

namespace {

int pos_in_batch(std::span<const int64_t> batch_ids, int64_t id) {
  for (size_t i = 0; i < batch_ids.size(); ++i)
    if (batch_ids[i] == id) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::vector<int64_t> sdd_update(AttackState& st, const AttackConfig& cfg,
                                const Matrix& delivered_grads,
                                std::span<const int64_t> batch_ids) {
  if (!st.has_target_grad)
    throw ProtocolError("source-data detection ran before any target gradient was observed");
  std::vector<int64_t> newly;
  for (int64_t cand : st.pending_nset) {
    int pos = pos_in_batch(batch_ids, cand);
    if (pos < 0) throw ProtocolError("replacement candidate missing from its own batch");
    bool degen = false;
    double cos = cosine_similarity(st.target_grad, delivered_grads.row(pos), &degen);
    if (degen) st.degenerate_cosines++;
    st.test_counts[cand]++;
    bool accepted = false;
    if (cfg.rule == SelectionRule::Threshold) {
      if (cos > cfg.alpha_thre &&
          static_cast<int>(st.source_ids.size()) < cfg.detection_budget) {
        accepted = true;
        st.source_ids.push_back(cand);
        st.source_set.insert(cand);
        newly.push_back(cand);
      }
    } else {
      st.epoch_pool.push_back(st.detection_log.size());
    }
    st.detection_log.push_back({cand, cos, st.epoch, accepted});
  }
  return newly;
}

BadVflAttacker::BadVflAttacker(AttackConfig cfg, const PartyShard* own_shard, uint64_t rng_seed)
    : cfg_(cfg), shard_(own_shard), rng_(rng_seed) {
  if (!shard_) throw InternalError("attacker without a shard");
  own_index_ = IdIndex::build(shard_->sample_ids);
  if (!own_index_.contains(cfg_.target_id))
    throw ConfigError("attack.target_id " + std::to_string(cfg_.target_id) +
                      " is not a training sample");
  if (!(cfg_.eta > 0.0 && cfg_.eta <= 1.0)) throw ConfigError("attack.eta must be in (0,1]");
  if (cfg_.n < 1) throw ConfigError("attack.n must be >= 1");
  cfg_.detection_budget = ceil_count(cfg_.eta, shard_->features.rows);
  // validate footprint once up front so misconfigured triggers fail early
  trigger_footprint(cfg_.trigger, shard_->features.cols, shard_->grid);
}

void BadVflAttacker::on_epoch_start(int epoch) { st_.epoch = epoch; }

void BadVflAttacker::rewrite_input(std::span<const int64_t> batch_ids, Matrix& own_input) {
  if (st_.phase == AttackPhase::AwaitTargetGradient) return;

  if (st_.phase == AttackPhase::Detecting) {
    st_.pending_nset = select_candidates(batch_ids, st_, cfg_, rng_);
    auto target_row = shard_->features.row(own_index_.row(cfg_.target_id));
    for (int64_t cand : st_.pending_nset) {
      int pos = pos_in_batch(batch_ids, cand);
      auto dst = own_input.row(pos);
      for (size_t j = 0; j < dst.size(); ++j) dst[j] = target_row[j];
    }
    return;
  }

  // Poisoning: rewrite every detected source row that shows up
  for (size_t i = 0; i < batch_ids.size(); ++i) {
    if (!st_.source_set.count(batch_ids[i])) continue;
    auto dst = own_input.row(static_cast<int>(i));
    if (cfg_.perturb != PerturbMode::None) {
      int64_t donor = -1;
      if (cfg_.perturb == PerturbMode::SameBatch) {
        std::vector<int64_t> donors;
        for (int64_t id : batch_ids)
          if (id != cfg_.target_id && !st_.source_set.count(id)) donors.push_back(id);
        if (!donors.empty()) {
          donor = donors[static_cast<size_t>(rng_.uniform_int(static_cast<int>(donors.size())))];
        } else {
          st_.fallback_draws++;
          donor = whole_donor_pool_[static_cast<size_t>(
              rng_.uniform_int(static_cast<int>(whole_donor_pool_.size())))];
        }
      } else {
        donor = whole_donor_pool_[static_cast<size_t>(
            rng_.uniform_int(static_cast<int>(whole_donor_pool_.size())))];
      }
      auto src = shard_->features.row(own_index_.row(donor));
      for (size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
    }
    apply_trigger(dst, cfg_.trigger, shard_->grid);
    st_.poisoned_row_events++;
  }
}

void BadVflAttacker::on_round_end(std::span<const int64_t> batch_ids,
                                  const Matrix& delivered_grads) {
  // The target row is never replaced or poisoned, so any appearance is an
  // honest upload and refreshes the reference gradient.
  int tpos = pos_in_batch(batch_ids, cfg_.target_id);
  if (tpos >= 0) {
    auto row = delivered_grads.row(tpos);
    st_.target_grad.assign(row.begin(), row.end());
    st_.has_target_grad = true;
  }

  if (st_.phase == AttackPhase::Detecting && !st_.pending_nset.empty()) {
    sdd_update(st_, cfg_, delivered_grads, batch_ids);
    if (cfg_.rule == SelectionRule::Threshold &&
        static_cast<int>(st_.source_ids.size()) >= cfg_.detection_budget) {
      flip_to_poisoning("budget reached");
    }
  }
  st_.pending_nset.clear();
}

void BadVflAttacker::on_epoch_end(int epoch) {
  if (st_.phase == AttackPhase::AwaitTargetGradient) {
    if (st_.has_target_grad && epoch + 1 >= cfg_.warmup_epochs) {
      st_.phase = AttackPhase::Detecting;
      st_.notes.push_back("epoch " + std::to_string(epoch) + ": detection started");
    }
    return;
  }
  if (st_.phase != AttackPhase::Detecting) return;

  if (cfg_.rule == SelectionRule::TopPercent && !st_.epoch_pool.empty()) {
    int k = ceil_count(cfg_.top_percent, static_cast<long>(st_.epoch_pool.size()));
    std::stable_sort(st_.epoch_pool.begin(), st_.epoch_pool.end(), [&](size_t a, size_t b) {
      return st_.detection_log[a].cosine > st_.detection_log[b].cosine;
    });
    for (size_t i = 0; i < st_.epoch_pool.size() && static_cast<int>(i) < k; ++i) {
      if (static_cast<int>(st_.source_ids.size()) >= cfg_.detection_budget) break;
      SimilarityRecord& rec = st_.detection_log[st_.epoch_pool[i]];
      rec.accepted = true;
      st_.source_ids.push_back(rec.candidate);
      st_.source_set.insert(rec.candidate);
    }
    st_.epoch_pool.clear();
  }

  if (static_cast<int>(st_.source_ids.size()) >= cfg_.detection_budget) {
    flip_to_poisoning("budget reached");
  } else if (all_candidates_exhausted()) {
    flip_to_poisoning("all candidates examined");
  }
}

bool BadVflAttacker::all_candidates_exhausted() const {
  for (int64_t id : shard_->sample_ids) {
    if (id == cfg_.target_id) continue;
    if (st_.source_set.count(id)) continue;
    auto it = st_.test_counts.find(id);
    if (it == st_.test_counts.end() || it->second < cfg_.max_tests) return false;
  }
  return true;
}

void BadVflAttacker::flip_to_poisoning(const std::string& reason) {
  st_.phase = AttackPhase::Poisoning;
  st_.poison_flip_epoch = st_.epoch;
  st_.notes.push_back("epoch " + std::to_string(st_.epoch) + ": poisoning started (" + reason +
                      ", " + std::to_string(st_.source_ids.size()) + " source ids)");
  whole_donor_pool_.clear();
  for (int64_t id : shard_->sample_ids)
    if (id != cfg_.target_id && !st_.source_set.count(id)) whole_donor_pool_.push_back(id);
  if (whole_donor_pool_.empty())
    throw ProtocolError("no donor samples left for perturbation");
  if (st_.source_ids.empty())
    st_.notes.push_back("warning: empty source set, poisoning is a no-op");
}

}  // namespace badvfl
