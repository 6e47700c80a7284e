#include "badvfl/metrics.hpp"

#include "badvfl/common.hpp"

namespace badvfl {

double compute_tar(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                   const std::vector<PartyShard>& test_shards,
                   const std::vector<int>& test_labels) {
  if (test_shards.size() != parties.size())
    throw InputError("need one test shard per party");
  if (test_labels.empty()) throw InputError("empty test set");
  std::vector<Matrix> inputs;
  inputs.reserve(test_shards.size());
  for (const auto& sh : test_shards) {
    if (sh.features.rows != static_cast<int>(test_labels.size()))
      throw AlignmentError("test shard rows != test labels");
    inputs.push_back(sh.features);
  }
  std::vector<int> preds = predict_features(active, parties, inputs);
  return accuracy(preds, test_labels);
}

double compute_asr(const ActiveParty& active, const std::vector<PassiveParty>& parties,
                   const std::vector<PartyShard>& test_shards,
                   const std::vector<int>& test_labels, const TriggerSpec& trigger,
                   int target_class) {
  if (test_shards.size() != parties.size())
    throw InputError("need one test shard per party");
  std::vector<int> pool;
  for (size_t i = 0; i < test_labels.size(); ++i)
    if (test_labels[i] != target_class) pool.push_back(static_cast<int>(i));
  if (pool.empty()) throw InputError("asr pool is empty: every test sample is target class");

  std::vector<Matrix> inputs;
  inputs.reserve(test_shards.size());
  for (size_t k = 0; k < test_shards.size(); ++k)
    inputs.push_back(gather_rows(test_shards[k].features, pool));
  Matrix& attacked = inputs.back();
  const auto& grid = test_shards.back().grid;
  for (int i = 0; i < attacked.rows; ++i) apply_trigger(attacked.row(i), trigger, grid);

  std::vector<int> preds = predict_features(active, parties, inputs);
  long hit = 0;
  for (int p : preds)
    if (p == target_class) ++hit;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<int> sdd_confusion(std::span<const int64_t> poison_ids, const IdIndex& train_index,
                               std::span<const int> train_labels, int class_count) {
  if (class_count < 1) throw InputError("class_count must be >= 1");
  std::vector<int> counts(static_cast<size_t>(class_count), 0);
  for (int64_t id : poison_ids) {
    int row = train_index.row(id);
    int y = train_labels[static_cast<size_t>(row)];
    if (y < 0 || y >= class_count)
      throw InputError("label " + std::to_string(y) + " outside [0," +
                       std::to_string(class_count) + ")");
    counts[static_cast<size_t>(y)]++;
  }
  return counts;
}

std::optional<double> detection_precision(const std::vector<int>& confusion, int target_class) {
  long total = 0;
  for (int c : confusion) total += c;
  if (total == 0) return std::nullopt;
  if (target_class < 0 || target_class >= static_cast<int>(confusion.size()))
    throw InputError("target_class outside the confusion histogram");
  return static_cast<double>(confusion[static_cast<size_t>(target_class)]) /
         static_cast<double>(total);
}

}  // namespace badvfl
