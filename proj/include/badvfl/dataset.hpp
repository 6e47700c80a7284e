#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "badvfl/matrix.hpp"
#include "badvfl/rng.hpp"

namespace badvfl {

struct GridShape {
  int h = 0;
  int w = 0;
};

struct Dataset {
  std::vector<int64_t> sample_ids;  // unique, aligned with feature rows
  Matrix features;                  // N x d
  std::vector<int> labels;          // in [0, class_count)
  int class_count = 0;
  std::optional<GridShape> grid;    // set when rows form an h x w grid

  int size() const { return features.rows; }
  int width() const { return features.cols; }
};

// id -> row lookup shared by every shard of one dataset
struct IdIndex {
  std::vector<int64_t> ids;
  std::unordered_map<int64_t, int> rows;

  static IdIndex build(std::span<const int64_t> ids);
  int row(int64_t id) const;  // AlignmentError when missing
  bool contains(int64_t id) const { return rows.count(id) != 0; }
};

struct VerticalSplitSpec {
  // party k owns feature columns [ranges[k].first, ranges[k].second)
  std::vector<std::pair<int, int>> ranges;

  static VerticalSplitSpec even(int width, int parties);
  void validate(int width) const;  // contiguous, disjoint, full cover, party order
  int parties() const { return static_cast<int>(ranges.size()); }
  std::vector<int> widths() const;
};

struct PartyShard {
  int party = 0;
  Matrix features;                  // N x (hi - lo)
  std::vector<int64_t> sample_ids;  // same order as the parent dataset
  std::optional<GridShape> grid;    // set when the range is whole grid rows
};

// Gaussian clusters with unit per-coordinate variance. Class means are
// drawn once and rescaled so the minimum pairwise distance equals
// `separation` (all means coincide at zero when separation == 0).
// Rows are grouped by class; sample_ids are 0..N-1.
Dataset make_synthetic_blobs(int classes, int per_class, int dims, double separation,
                             uint64_t seed);

// Moves the last `test_per_class` rows of each class into the test set,
// keeping ids. Row order within each part matches the parent.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int test_per_class);

// IDX image/label file pair (big-endian magics 0x00000803 / 0x00000801).
// Pixels are scaled to [0,1]; N = min(limit, file count). Malformed input
// raises FormatError naming the byte offset.
Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        int64_t limit);

std::vector<PartyShard> vertical_split(const Dataset& ds, const VerticalSplitSpec& spec);

struct TriggerSpec {
  enum class Kind { Patch, Overwrite };
  enum class Position { UpLeft, Center, BottomRight, Explicit };

  Kind kind = Kind::Overwrite;
  Position position = Position::Center;
  int offset = -1;     // flat index; only read when position == Explicit
  int size = 2;        // patch side length / overwrite run length
  double value = 1.0;  // constant fill
};

// Indices the trigger touches in a width-wide row. Patch triggers need the
// row's grid shape; centered placements use floor((extent - size) / 2).
std::vector<int> trigger_footprint(const TriggerSpec& t, int width,
                                   const std::optional<GridShape>& grid);

// Sets row[i] = value over the footprint. Idempotent by construction.
void apply_trigger(std::span<double> row, const TriggerSpec& t,
                   const std::optional<GridShape>& grid);

}  // namespace badvfl
