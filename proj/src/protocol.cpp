#include "badvfl/protocol.hpp"

#include <algorithm>

#include "badvfl/common.hpp"

namespace badvfl {

namespace {

// weights-only squared norm (biases exempt from decay)
double weights_sumsq(const Mlp& m) {
  double s = 0.0;
  for (const auto& L : m.layers)
    for (double w : L.weights.data) s += w * w;
  return s;
}

void add_weight_decay(const Mlp& model, MlpGrads& grads, double lambda) {
  for (size_t i = 0; i < model.layers.size(); ++i)
    for (size_t k = 0; k < model.layers[i].weights.data.size(); ++k)
      grads.layers[i].weights.data[k] += lambda * model.layers[i].weights.data[k];
}

}  // namespace

TrainSchedule TrainSchedule::build(const std::vector<int64_t>& ids, int epochs, int batch_size,
                                   uint64_t shuffle_seed) {
  if (ids.empty()) throw ConfigError("empty training set");
  if (batch_size < 1) throw ConfigError("schedule.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("schedule.epochs must be >= 0");
  TrainSchedule s;
  s.epochs = epochs;
  s.batch_size = batch_size;
  s.plan.reserve(static_cast<size_t>(epochs));
  Rng rng(shuffle_seed);
  for (int e = 0; e < epochs; ++e) {
    std::vector<int64_t> perm = ids;
    rng.shuffle(perm);
    std::vector<std::vector<int64_t>> batches;
    for (size_t off = 0; off < perm.size(); off += static_cast<size_t>(batch_size)) {
      size_t end = std::min(perm.size(), off + static_cast<size_t>(batch_size));
      batches.emplace_back(perm.begin() + static_cast<long>(off), perm.begin() + static_cast<long>(end));
    }
    s.plan.push_back(std::move(batches));
  }
  return s;
}

RoundTranscript run_round(ActiveParty& active, std::vector<PassiveParty>& parties,
                          std::span<const int64_t> batch_ids) {
  if (batch_ids.empty()) throw InputError("empty batch");
  if (parties.empty()) throw ConfigError("no passive parties");

  std::vector<int> rix;
  rix.reserve(batch_ids.size());
  for (int64_t id : batch_ids) rix.push_back(active.index.row(id));

  RoundTranscript tr;
  tr.batch_ids.assign(batch_ids.begin(), batch_ids.end());

  // step 1+2: parties assemble inputs and upload feature representations
  std::vector<ForwardCache> caches(parties.size());
  for (size_t k = 0; k < parties.size(); ++k) {
    PassiveParty& p = parties[k];
    Matrix x = gather_rows(p.shard.features, rix);
    if (p.hook) p.hook->rewrite_input(batch_ids, x);
    Matrix f = forward(p.bottom, x, &caches[k]);
    if (p.hook) p.hook->rewrite_upload(batch_ids, f);
    tr.uploads.push_back(std::move(f));
  }

  // step 3: active party scores the concatenated representation
  tr.concat = hconcat(tr.uploads);
  if (tr.concat.cols != active.top.input_width())
    throw ConfigError("top model expects input width " +
                      std::to_string(active.top.input_width()) + ", uploads concatenate to " +
                      std::to_string(tr.concat.cols));
  ForwardCache top_cache;
  tr.logits = forward(active.top, tr.concat, &top_cache);

  std::vector<int> y;
  y.reserve(rix.size());
  for (int r : rix) y.push_back(active.labels[static_cast<size_t>(r)]);
  CeResult ce = softmax_cross_entropy(tr.logits, y);
  tr.loss = ce.loss;

  Matrix grad_concat;
  MlpGrads top_grads = backward(active.top, top_cache, ce.grad_logits, &grad_concat);
  if (active.weight_decay > 0.0) {
    double sq = weights_sumsq(active.top);
    for (const auto& p : parties) sq += weights_sumsq(p.bottom);
    tr.loss += 0.5 * active.weight_decay * sq;
    add_weight_decay(active.top, top_grads, active.weight_decay);
  }

  // step 4: per-party gradient blocks, defended, then the top model updates
  std::vector<int> widths;
  widths.reserve(parties.size());
  for (const auto& u : tr.uploads) widths.push_back(u.cols);
  std::vector<Matrix> blocks = hsplit(grad_concat, widths);
  for (auto& b : blocks)
    tr.returned_grads.push_back(apply_defense(b, active.defense, active.defense_rng));
  active.top_opt.step(active.top, top_grads);

  // step 5: passive parties update their bottom models
  for (size_t k = 0; k < parties.size(); ++k) {
    PassiveParty& p = parties[k];
    Matrix g = tr.returned_grads[k];
    if (p.hook) p.hook->rewrite_gradients(batch_ids, g);
    MlpGrads bg = backward(p.bottom, caches[k], g, nullptr);
    if (active.weight_decay > 0.0) add_weight_decay(p.bottom, bg, active.weight_decay);
    p.opt.step(p.bottom, bg);
    if (p.hook) p.hook->on_round_end(batch_ids, tr.returned_grads[k]);
  }
  return tr;
}

TrainLog train(ActiveParty& active, std::vector<PassiveParty>& parties,
               const TrainSchedule& schedule) {
  TrainLog log;
  for (int e = 0; e < schedule.epochs; ++e) {
    for (auto& p : parties)
      if (p.hook) p.hook->on_epoch_start(e);
    active.top_opt.start_epoch(e);
    for (auto& p : parties) p.opt.start_epoch(e);

    double loss_sum = 0.0;
    long n = 0;
    for (const auto& batch : schedule.plan[static_cast<size_t>(e)]) {
      RoundTranscript tr = run_round(active, parties, batch);
      loss_sum += tr.loss * static_cast<double>(batch.size());
      n += static_cast<long>(batch.size());
    }
    for (auto& p : parties)
      if (p.hook) p.hook->on_epoch_end(e);

    log.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    std::vector<int> preds = predict(active, parties, active.index.ids);
    log.epoch_acc.push_back(accuracy(preds, active.labels));
  }
  return log;
}

Matrix vfl_logits(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                  const std::vector<Matrix>& party_inputs) {
  if (party_inputs.size() != parties.size())
    throw InputError("need one input matrix per party");
  std::vector<Matrix> uploads;
  uploads.reserve(parties.size());
  for (size_t k = 0; k < parties.size(); ++k)
    uploads.push_back(forward(parties[k].bottom, party_inputs[k]));
  return forward(active.top, hconcat(uploads));
}

std::vector<int> predict_features(const ActiveParty& active,
                                  const std::vector<PassiveParty>& parties,
                                  const std::vector<Matrix>& party_inputs) {
  Matrix logits = vfl_logits(active, parties, party_inputs);
  std::vector<int> out;
  out.reserve(static_cast<size_t>(logits.rows));
  for (int i = 0; i < logits.rows; ++i) {
    auto r = logits.row(i);
    int best = 0;
    for (int j = 1; j < logits.cols; ++j)
      if (r[static_cast<size_t>(j)] > r[static_cast<size_t>(best)]) best = j;  // ties keep lowest index
    out.push_back(best);
  }
  return out;
}

std::vector<int> predict(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                         std::span<const int64_t> ids, const ShardOverride* override_rows) {
  if (ids.empty()) throw InputError("predict over empty id list");
  std::vector<int> rix;
  rix.reserve(ids.size());
  for (int64_t id : ids) rix.push_back(active.index.row(id));
  std::vector<Matrix> inputs;
  inputs.reserve(parties.size());
  for (const auto& p : parties) {
    if (override_rows && override_rows->party == p.party) {
      if (override_rows->features.rows != static_cast<int>(ids.size()))
        throw InputError("override rows must align with the id list");
      inputs.push_back(override_rows->features);
    } else {
      inputs.push_back(gather_rows(p.shard.features, rix));
    }
  }
  return predict_features(active, parties, inputs);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw InputError("accuracy needs equal, non-empty prediction/label lists");
  long hit = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

}  // namespace badvfl
