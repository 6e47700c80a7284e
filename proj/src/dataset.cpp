#include "badvfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "badvfl/common.hpp"

namespace badvfl {

IdIndex IdIndex::build(std::span<const int64_t> ids) {
  IdIndex ix;
  ix.ids.assign(ids.begin(), ids.end());
  ix.rows.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    auto [it, fresh] = ix.rows.emplace(ids[i], static_cast<int>(i));
    if (!fresh) throw AlignmentError("duplicate sample id " + std::to_string(ids[i]));
  }
  return ix;
}

int IdIndex::row(int64_t id) const {
  auto it = rows.find(id);
  if (it == rows.end()) throw AlignmentError("unknown sample id " + std::to_string(id));
  return it->second;
}

VerticalSplitSpec VerticalSplitSpec::even(int width, int parties) {
  if (parties < 1) throw ConfigError("split.parties must be >= 1");
  if (width < parties)
    throw ConfigError("cannot split " + std::to_string(width) + " features across " +
                      std::to_string(parties) + " parties");
  VerticalSplitSpec s;
  int base = width / parties;
  int extra = width % parties;
  int lo = 0;
  for (int k = 0; k < parties; ++k) {
    int w = base + (k < extra ? 1 : 0);
    s.ranges.emplace_back(lo, lo + w);
    lo += w;
  }
  return s;
}

void VerticalSplitSpec::validate(int width) const {
  if (ranges.empty()) throw ConfigError("split has no ranges");
  int expect = 0;
  for (size_t k = 0; k < ranges.size(); ++k) {
    auto [lo, hi] = ranges[k];
    if (lo != expect)
      throw ConfigError("split.ranges must be contiguous in party order: party " +
                        std::to_string(k) + " starts at " + std::to_string(lo) + ", expected " +
                        std::to_string(expect));
    if (hi <= lo)
      throw ConfigError("split.ranges party " + std::to_string(k) + " is empty");
    expect = hi;
  }
  if (expect != width)
    throw ConfigError("split.ranges cover [0," + std::to_string(expect) + ") but dataset has " +
                      std::to_string(width) + " features");
}

std::vector<int> VerticalSplitSpec::widths() const {
  std::vector<int> w;
  w.reserve(ranges.size());
  for (auto [lo, hi] : ranges) w.push_back(hi - lo);
  return w;
}

Dataset make_synthetic_blobs(int classes, int per_class, int dims, double separation,
                             uint64_t seed) {
  if (classes < 2) throw ConfigError("dataset.classes must be >= 2");
  if (per_class < 1) throw ConfigError("dataset per-class count must be >= 1");
  if (dims < 2) throw ConfigError("dataset.features must be >= 2");
  if (separation < 0.0) throw ConfigError("dataset.separation must be >= 0");

  Rng rng(seed);
  std::vector<std::vector<double>> means(static_cast<size_t>(classes),
                                         std::vector<double>(static_cast<size_t>(dims), 0.0));
  if (separation > 0.0) {
    for (auto& m : means)
      for (double& v : m) v = rng.gaussian();
    double min_dist = std::numeric_limits<double>::infinity();
    for (int a = 0; a < classes; ++a) {
      for (int b = a + 1; b < classes; ++b) {
        double d2 = 0.0;
        for (int k = 0; k < dims; ++k) {
          double diff = means[a][k] - means[b][k];
          d2 += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    }
    if (min_dist <= 1e-12) throw InternalError("degenerate class mean draw");
    double scale = separation / min_dist;
    for (auto& m : means)
      for (double& v : m) v *= scale;
  }

  int n = classes * per_class;
  Dataset ds;
  ds.features = Matrix(n, dims);
  ds.labels.reserve(static_cast<size_t>(n));
  ds.sample_ids.reserve(static_cast<size_t>(n));
  ds.class_count = classes;
  int row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      double* r = ds.features.data.data() + static_cast<size_t>(row) * dims;
      for (int k = 0; k < dims; ++k) r[k] = means[static_cast<size_t>(c)][static_cast<size_t>(k)] + rng.gaussian();
      ds.labels.push_back(c);
      ds.sample_ids.push_back(row);
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int test_per_class) {
  if (test_per_class < 0) throw ConfigError("test_per_class must be >= 0");
  std::vector<int> total(static_cast<size_t>(ds.class_count), 0);
  for (int y : ds.labels) total[static_cast<size_t>(y)]++;
  for (int c = 0; c < ds.class_count; ++c) {
    if (total[static_cast<size_t>(c)] < test_per_class)
      throw ConfigError("class " + std::to_string(c) + " has only " +
                        std::to_string(total[static_cast<size_t>(c)]) +
                        " samples, cannot hold out " + std::to_string(test_per_class));
  }
  std::vector<int> seen(static_cast<size_t>(ds.class_count), 0);
  std::vector<int> train_rows, test_rows;
  for (int i = 0; i < ds.size(); ++i) {
    int y = ds.labels[static_cast<size_t>(i)];
    bool to_test = seen[static_cast<size_t>(y)] >= total[static_cast<size_t>(y)] - test_per_class;
    (to_test ? test_rows : train_rows).push_back(i);
    seen[static_cast<size_t>(y)]++;
  }
  auto take = [&](const std::vector<int>& rows) {
    Dataset out;
    out.class_count = ds.class_count;
    out.grid = ds.grid;
    out.features = gather_rows(ds.features, rows);
    out.labels.reserve(rows.size());
    out.sample_ids.reserve(rows.size());
    for (int r : rows) {
      out.labels.push_back(ds.labels[static_cast<size_t>(r)]);
      out.sample_ids.push_back(ds.sample_ids[static_cast<size_t>(r)]);
    }
    return out;
  };
  return {take(train_rows), take(test_rows)};
}

namespace {

uint32_t read_be32(const std::vector<unsigned char>& buf, size_t off, const std::string& path) {
  if (off + 4 > buf.size())
    throw FormatError(path + ": truncated header at byte offset " + std::to_string(off));
  return (static_cast<uint32_t>(buf[off]) << 24) | (static_cast<uint32_t>(buf[off + 1]) << 16) |
         (static_cast<uint32_t>(buf[off + 2]) << 8) | static_cast<uint32_t>(buf[off + 3]);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open file");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx_images(const std::string& images_path, const std::string& labels_path,
                        int64_t limit) {
  if (limit < 0) throw InputError("idx limit must be >= 0");

  auto img = read_file(images_path);
  uint32_t magic = read_be32(img, 0, images_path);
  if (magic != 0x00000803u)
    throw FormatError(images_path + ": bad magic " + hex32(magic) + " at byte offset 0 (want 0x00000803)");
  int64_t count = read_be32(img, 4, images_path);
  int64_t h = read_be32(img, 8, images_path);
  int64_t w = read_be32(img, 12, images_path);
  if (h < 1 || w < 1)
    throw FormatError(images_path + ": bad image dims at byte offset 8");
  size_t need = 16 + static_cast<size_t>(count) * static_cast<size_t>(h) * static_cast<size_t>(w);
  if (img.size() < need)
    throw FormatError(images_path + ": truncated pixel data, file ends at byte offset " +
                      std::to_string(img.size()) + " but " + std::to_string(need) + " needed");

  auto lab = read_file(labels_path);
  uint32_t lmagic = read_be32(lab, 0, labels_path);
  if (lmagic != 0x00000801u)
    throw FormatError(labels_path + ": bad magic " + hex32(lmagic) + " at byte offset 0 (want 0x00000801)");
  int64_t lcount = read_be32(lab, 4, labels_path);
  if (lcount != count)
    throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                      " != image count " + std::to_string(count));
  if (lab.size() < 8 + static_cast<size_t>(lcount))
    throw FormatError(labels_path + ": truncated label data, file ends at byte offset " +
                      std::to_string(lab.size()) + " but " + std::to_string(8 + lcount) +
                      " needed");

  int64_t n = std::min(limit, count);
  Dataset ds;
  int dims = static_cast<int>(h * w);
  ds.features = Matrix(static_cast<int>(n), dims);
  ds.grid = GridShape{static_cast<int>(h), static_cast<int>(w)};
  ds.labels.reserve(static_cast<size_t>(n));
  ds.sample_ids.reserve(static_cast<size_t>(n));
  int max_label = -1;
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + 16 + static_cast<size_t>(i) * dims;
    double* r = ds.features.data.data() + static_cast<size_t>(i) * dims;
    for (int k = 0; k < dims; ++k) r[k] = static_cast<double>(px[k]) / 255.0;
    int y = lab[8 + static_cast<size_t>(i)];
    ds.labels.push_back(y);
    ds.sample_ids.push_back(i);
    max_label = std::max(max_label, y);
  }
  ds.class_count = max_label + 1;
  return ds;
}

std::vector<PartyShard> vertical_split(const Dataset& ds, const VerticalSplitSpec& spec) {
  spec.validate(ds.width());
  std::vector<PartyShard> shards;
  shards.reserve(spec.ranges.size());
  for (size_t k = 0; k < spec.ranges.size(); ++k) {
    auto [lo, hi] = spec.ranges[k];
    PartyShard sh;
    sh.party = static_cast<int>(k);
    sh.sample_ids = ds.sample_ids;
    sh.features = Matrix(ds.size(), hi - lo);
    for (int i = 0; i < ds.size(); ++i) {
      const double* src = ds.features.data.data() + static_cast<size_t>(i) * ds.width() + lo;
      double* dst = sh.features.data.data() + static_cast<size_t>(i) * (hi - lo);
      for (int j = 0; j < hi - lo; ++j) dst[j] = src[j];
    }
    if (ds.grid && lo % ds.grid->w == 0 && hi % ds.grid->w == 0) {
      sh.grid = GridShape{(hi - lo) / ds.grid->w, ds.grid->w};
    }
    shards.push_back(std::move(sh));
  }
  return shards;
}

std::vector<int> trigger_footprint(const TriggerSpec& t, int width,
                                   const std::optional<GridShape>& grid) {
  if (t.size < 1) throw ConfigError("trigger.size must be >= 1");
  std::vector<int> idx;
  if (t.kind == TriggerSpec::Kind::Overwrite) {
    int off;
    switch (t.position) {
      case TriggerSpec::Position::UpLeft: off = 0; break;
      case TriggerSpec::Position::Center: off = (width - t.size) / 2; break;
      case TriggerSpec::Position::BottomRight: off = width - t.size; break;
      case TriggerSpec::Position::Explicit: off = t.offset; break;
      default: throw InternalError("bad trigger position");
    }
    if (off < 0 || off + t.size > width)
      throw ConfigError("trigger run [" + std::to_string(off) + "," +
                        std::to_string(off + t.size) + ") exceeds row width " +
                        std::to_string(width));
    idx.reserve(static_cast<size_t>(t.size));
    for (int i = 0; i < t.size; ++i) idx.push_back(off + i);
    return idx;
  }
  // patch
  if (!grid)
    throw ConfigError("patch trigger needs a grid-shaped shard (overwrite works on flat rows)");
  int h = grid->h, w = grid->w;
  if (h * w != width) throw InternalError("grid shape does not match row width");
  int r0, c0;
  switch (t.position) {
    case TriggerSpec::Position::UpLeft: r0 = 0; c0 = 0; break;
    case TriggerSpec::Position::Center: r0 = (h - t.size) / 2; c0 = (w - t.size) / 2; break;
    case TriggerSpec::Position::BottomRight: r0 = h - t.size; c0 = w - t.size; break;
    case TriggerSpec::Position::Explicit: r0 = t.offset / w; c0 = t.offset % w; break;
    default: throw InternalError("bad trigger position");
  }
  if (r0 < 0 || c0 < 0 || r0 + t.size > h || c0 + t.size > w)
    throw ConfigError("trigger patch " + std::to_string(t.size) + "x" + std::to_string(t.size) +
                      " at (" + std::to_string(r0) + "," + std::to_string(c0) +
                      ") exceeds grid " + std::to_string(h) + "x" + std::to_string(w));
  idx.reserve(static_cast<size_t>(t.size) * t.size);
  for (int r = r0; r < r0 + t.size; ++r)
    for (int c = c0; c < c0 + t.size; ++c) idx.push_back(r * w + c);
  return idx;
}

void apply_trigger(std::span<double> row, const TriggerSpec& t,
                   const std::optional<GridShape>& grid) {
  for (int i : trigger_footprint(t, static_cast<int>(row.size()), grid))
    row[static_cast<size_t>(i)] = t.value;
}

}  // namespace badvfl
