#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvfl/config.hpp"
#include "badvfl/nn.hpp"
#include "badvfl/runner.hpp"

namespace testutil {

inline badvfl::Matrix mat(int rows, int cols, std::initializer_list<double> vals) {
  badvfl::Matrix m(rows, cols);
  int i = 0;
  for (double v : vals) m.data[static_cast<size_t>(i++)] = v;
  return m;
}

// Independent dense forward: plain triple loop, no shared code with the
// library's matmul.
inline badvfl::Matrix naive_linear(const badvfl::Matrix& x, const badvfl::Matrix& w,
                                   const std::vector<double>& b) {
  badvfl::Matrix out(x.rows, w.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int o = 0; o < w.rows; ++o) {
      double s = b[static_cast<size_t>(o)];
      for (int k = 0; k < x.cols; ++k) s += x.at(i, k) * w.at(o, k);
      out.at(i, o) = s;
    }
  return out;
}

inline badvfl::ExperimentConfig parse_json(const std::string& text) {
  return badvfl::parse_config(text);
}

inline badvfl::PartyShard make_shard(int rows, int cols, uint64_t seed) {
  badvfl::PartyShard sh;
  sh.party = 0;
  sh.features = badvfl::Matrix(rows, cols);
  badvfl::Rng rng(seed);
  for (auto& v : sh.features.data) v = rng.uniform(-1.0, 1.0);
  sh.sample_ids.resize(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) sh.sample_ids[static_cast<size_t>(i)] = i;
  return sh;
}

struct NaiveRun {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_acc;
};

// Plain-loop reimplementation of a two-stage linear federation: per-party
// dense maps feeding one linear head, trained with SGD on softmax cross
// entropy. Only the Matrix container is shared with the library; every
// numeric step is written out longhand so this can serve as an oracle.
inline NaiveRun run_naive_linear_federation(
    const badvfl::Matrix& features, const std::vector<int>& labels,
    const std::vector<int64_t>& ids, const std::vector<std::pair<int, int>>& ranges,
    std::vector<badvfl::DenseLayer> bottoms, badvfl::DenseLayer head, double lr,
    const std::vector<std::vector<std::vector<int64_t>>>& plan) {
  std::unordered_map<int64_t, int> row_of;
  for (size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = static_cast<int>(i);
  const size_t parties = ranges.size();
  const int classes = head.weights.rows;
  const int concat = head.weights.cols;

  auto forward_rows = [&](const std::vector<int>& rows, std::vector<std::vector<double>>& h,
                          std::vector<std::vector<double>>& logits) {
    const int B = static_cast<int>(rows.size());
    h.assign(static_cast<size_t>(B), std::vector<double>(static_cast<size_t>(concat), 0.0));
    logits.assign(static_cast<size_t>(B), std::vector<double>(static_cast<size_t>(classes), 0.0));
    for (int i = 0; i < B; ++i) {
      int off = 0;
      for (size_t k = 0; k < parties; ++k) {
        auto [lo, hi] = ranges[k];
        const auto& W = bottoms[k].weights;
        for (int o = 0; o < W.rows; ++o) {
          double s = bottoms[k].bias[static_cast<size_t>(o)];
          for (int j = 0; j < hi - lo; ++j) s += features.at(rows[static_cast<size_t>(i)], lo + j) * W.at(o, j);
          h[static_cast<size_t>(i)][static_cast<size_t>(off + o)] = s;
        }
        off += W.rows;
      }
      for (int c = 0; c < classes; ++c) {
        double s = head.bias[static_cast<size_t>(c)];
        for (int m = 0; m < concat; ++m) s += h[static_cast<size_t>(i)][static_cast<size_t>(m)] * head.weights.at(c, m);
        logits[static_cast<size_t>(i)][static_cast<size_t>(c)] = s;
      }
    }
  };

  NaiveRun out;
  for (const auto& epoch : plan) {
    double loss_sum = 0.0;
    long n = 0;
    for (const auto& batch : epoch) {
      const int B = static_cast<int>(batch.size());
      std::vector<int> rows;
      rows.reserve(batch.size());
      for (int64_t id : batch) rows.push_back(row_of.at(id));
      std::vector<std::vector<double>> h, logits;
      forward_rows(rows, h, logits);

      std::vector<std::vector<double>> dlogits(
          static_cast<size_t>(B), std::vector<double>(static_cast<size_t>(classes), 0.0));
      double loss = 0.0;
      for (int i = 0; i < B; ++i) {
        int y = labels[static_cast<size_t>(rows[static_cast<size_t>(i)])];
        double mx = logits[static_cast<size_t>(i)][0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, logits[static_cast<size_t>(i)][static_cast<size_t>(c)]);
        double z = 0.0;
        for (int c = 0; c < classes; ++c) z += std::exp(logits[static_cast<size_t>(i)][static_cast<size_t>(c)] - mx);
        double lse = std::log(z);
        loss += -(logits[static_cast<size_t>(i)][static_cast<size_t>(y)] - mx - lse);
        for (int c = 0; c < classes; ++c) {
          double p = std::exp(logits[static_cast<size_t>(i)][static_cast<size_t>(c)] - mx - lse);
          dlogits[static_cast<size_t>(i)][static_cast<size_t>(c)] = (p - (c == y ? 1.0 : 0.0)) / B;
        }
      }
      loss /= B;
      loss_sum += loss * B;
      n += B;

      badvfl::Matrix dWh(classes, concat);
      std::vector<double> dbh(static_cast<size_t>(classes), 0.0);
      std::vector<std::vector<double>> dh(
          static_cast<size_t>(B), std::vector<double>(static_cast<size_t>(concat), 0.0));
      for (int i = 0; i < B; ++i)
        for (int c = 0; c < classes; ++c) {
          double g = dlogits[static_cast<size_t>(i)][static_cast<size_t>(c)];
          dbh[static_cast<size_t>(c)] += g;
          for (int m = 0; m < concat; ++m) {
            dWh.at(c, m) += g * h[static_cast<size_t>(i)][static_cast<size_t>(m)];
            dh[static_cast<size_t>(i)][static_cast<size_t>(m)] += g * head.weights.at(c, m);
          }
        }

      int off = 0;
      for (size_t k = 0; k < parties; ++k) {
        auto [lo, hi] = ranges[k];
        auto& W = bottoms[k].weights;
        badvfl::Matrix dW(W.rows, W.cols);
        std::vector<double> db(static_cast<size_t>(W.rows), 0.0);
        for (int i = 0; i < B; ++i)
          for (int o = 0; o < W.rows; ++o) {
            double g = dh[static_cast<size_t>(i)][static_cast<size_t>(off + o)];
            db[static_cast<size_t>(o)] += g;
            for (int j = 0; j < hi - lo; ++j)
              dW.at(o, j) += g * features.at(rows[static_cast<size_t>(i)], lo + j);
          }
        for (size_t t = 0; t < W.data.size(); ++t) W.data[t] -= lr * dW.data[t];
        for (size_t t = 0; t < db.size(); ++t) bottoms[k].bias[t] -= lr * db[t];
        off += W.rows;
      }
      for (size_t t = 0; t < head.weights.data.size(); ++t) head.weights.data[t] -= lr * dWh.data[t];
      for (size_t t = 0; t < dbh.size(); ++t) head.bias[t] -= lr * dbh[t];
    }
    out.epoch_loss.push_back(loss_sum / static_cast<double>(n));

    std::vector<int> all_rows(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) all_rows[i] = static_cast<int>(i);
    std::vector<std::vector<double>> h, logits;
    forward_rows(all_rows, h, logits);
    long hit = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      int best = 0;
      for (int c = 1; c < classes; ++c)
        if (logits[i][static_cast<size_t>(c)] > logits[i][static_cast<size_t>(best)]) best = c;
      if (best == labels[i]) ++hit;
    }
    out.epoch_acc.push_back(static_cast<double>(hit) / static_cast<double>(ids.size()));
  }
  return out;
}

// The tuned desk-scale attack task shared by the heavier tests.
inline std::string desk_task_json(const std::string& extra = "") {
  std::string base = R"({
    "dataset": {"classes": 2, "train_per_class": 1000, "test_per_class": 250,
                "features": 64, "separation": 3.0, "grid": [8, 8]},
    "split": {"parties": 2},
    "model": {"bottom_hidden": [16], "bottom_out": 8, "bottom_activation": "relu",
              "top_hidden_layers": 0},
    "optimizer": {"kind": "sgd", "lr": 0.1},
    "schedule": {"epochs": 60, "batch_size": 16},
    "attack": {"kind": "badvfl", "target_class": 1, "eta": 0.01, "n": 5, "alpha_thre": 0.6,
               "perturb": "same_batch", "warmup_epochs": 1,
               "trigger": {"kind": "patch", "position": "center", "size": 2, "value": 12.0}},
    "run": {"seed": 1, "baseline": true, "out_dir": "out"}
  })";
  if (!extra.empty()) {
    nlohmann::json j = nlohmann::json::parse(base);
    j.merge_patch(nlohmann::json::parse(extra));
    return j.dump();
  }
  return base;
}

}  // namespace testutil
