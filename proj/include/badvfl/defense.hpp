#pragma once

#include <cstdint>

#include "badvfl/matrix.hpp"
#include "badvfl/rng.hpp"

namespace badvfl {

// Active-party defenses on returned feature gradients. These act on the
// per-party block right before it is sent back; uploads, labels and the
// top model never pass through here.
struct DefenseSpec {
  enum class Kind { None, GaussianNoise, Compression };
  Kind kind = Kind::None;
  double variance = 0.0;       // GaussianNoise
  double keep_fraction = 1.0;  // Compression: fraction of entries kept
  uint64_t seed = 0;           // defense noise stream, independent of training
};

// Adds iid zero-mean Gaussian noise with the given variance to every entry.
Matrix apply_noise(const Matrix& block, double variance, Rng& rng);

// Keeps the ceil(keep_fraction * count) largest-magnitude entries of the
// block (ties keep the earlier flat index) and zeroes the rest. Kept
// entries are passed through unchanged.
Matrix apply_compression(const Matrix& block, double keep_fraction);

Matrix apply_defense(const Matrix& block, const DefenseSpec& spec, Rng& rng);

}  // namespace badvfl
