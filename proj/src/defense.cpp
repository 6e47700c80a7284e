#include "badvfl/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "badvfl/common.hpp"

namespace badvfl {

Matrix apply_noise(const Matrix& block, double variance, Rng& rng) {
  if (variance < 0.0) throw ConfigError("defense.variance must be >= 0");
  Matrix out = block;
  if (variance == 0.0) return out;
  double sd = std::sqrt(variance);
  for (double& v : out.data) v += rng.gaussian(0.0, sd);
  return out;
}

Matrix apply_compression(const Matrix& block, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("defense.keep_fraction must be in (0,1]");
  size_t count = block.data.size();
  size_t k = static_cast<size_t>(ceil_count(keep_fraction, static_cast<long>(count)));
  if (k >= count) return block;
  std::vector<size_t> order(count);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::fabs(block.data[a]) > std::fabs(block.data[b]);
  });
  Matrix out(block.rows, block.cols);
  for (size_t i = 0; i < k; ++i) out.data[order[i]] = block.data[order[i]];
  return out;
}

Matrix apply_defense(const Matrix& block, const DefenseSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DefenseSpec::Kind::None: return block;
    case DefenseSpec::Kind::GaussianNoise: return apply_noise(block, spec.variance, rng);
    case DefenseSpec::Kind::Compression: return apply_compression(block, spec.keep_fraction);
  }
  throw InternalError("unknown defense kind");
}

}  // namespace badvfl
