#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "badvfl/common.hpp"

namespace badvfl {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive a stream-specific seed from a master seed. Streams are fixed
// small tags (dataset / model init / schedule / attack) so that changing
// one consumer never perturbs the others.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Deterministic RNG wrapper. All randomness in the library flows through
// this type so runs are bit-reproducible for a fixed seed. Gaussian draws
// use Box-Muller with a cached spare to stay implementation-independent.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  uint64_t next_u64() { return eng_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  int uniform_int(int n) {  // [0, n)
    if (n <= 0) throw InternalError("uniform_int with n <= 0");
    return static_cast<int>(eng_() % static_cast<uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct elements drawn uniformly without replacement.
  template <typename T>
  std::vector<T> sample(std::vector<T> pool, int k) {
    if (k > static_cast<int>(pool.size())) k = static_cast<int>(pool.size());
    std::vector<T> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(static_cast<int>(pool.size()) - i);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      out.push_back(pool[static_cast<size_t>(i)]);
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace badvfl
