#include <doctest.h>

#include <cmath>
#include <vector>

#include "badvfl/common.hpp"
#include "badvfl/defense.hpp"
#include "../helpers.hpp"

using namespace badvfl;

TEST_CASE("zero-variance noise is bit-identical") {
  Matrix block = testutil::mat(2, 3, {1.0, -2.0, 0.5, 0.0, 3.25, -0.125});
  Rng rng(9);
  Matrix out = apply_noise(block, 0.0, rng);
  CHECK(out.data == block.data);
}

TEST_CASE("noise perturbation has the requested moments") {
  const int n = 1000;
  Matrix block(n, 1000);  // 1e6 entries
  Rng rng(123);
  Matrix out = apply_noise(block, 1e-2, rng);
  double mean = 0;
  for (double v : out.data) mean += v;
  mean /= out.data.size();
  CHECK(std::abs(mean) < 1e-3);
  double var = 0;
  for (double v : out.data) var += (v - mean) * (v - mean);
  var /= out.data.size();
  CHECK(var == doctest::Approx(1e-2).epsilon(0.05));
}

TEST_CASE("noise rejects negative variance") {
  Matrix block(1, 1);
  Rng rng(1);
  CHECK_THROWS_AS((void)apply_noise(block, -0.5, rng), ConfigError);
}

TEST_CASE("full keep fraction is the identity") {
  Matrix block = testutil::mat(2, 2, {0.0, -7.0, 3.5, 1e-9});
  Matrix out = apply_compression(block, 1.0);
  CHECK(out.data == block.data);
}

TEST_CASE("half keep fraction keeps the two largest magnitudes") {
  Matrix block = testutil::mat(1, 4, {3.0, -1.0, 0.5, -4.0});
  Matrix out = apply_compression(block, 0.5);
  CHECK(out.data == std::vector<double>{3.0, 0.0, 0.0, -4.0});
}

TEST_CASE("compression keeps exactly ceil of fraction times count entries") {
  Rng rng(17);
  for (double keep : {0.1, 0.3, 0.5, 0.77, 0.99}) {
    Matrix block(7, 9);
    for (auto& v : block.data) v = rng.gaussian();
    Matrix out = apply_compression(block, keep);
    int nonzero = 0;
    for (double v : out.data)
      if (v != 0.0) nonzero++;
    int expected = static_cast<int>(std::ceil(keep * 63));
    CHECK(nonzero == expected);
  }
}

TEST_CASE("compression passes kept entries through unchanged") {
  Rng rng(29);
  Matrix block(5, 8);
  for (auto& v : block.data) v = rng.gaussian() * 3;
  Matrix out = apply_compression(block, 0.4);
  for (size_t i = 0; i < block.data.size(); ++i) {
    if (out.data[i] != 0.0) {
      CHECK(out.data[i] == block.data[i]);
      CHECK(std::signbit(out.data[i]) == std::signbit(block.data[i]));
    }
  }
  // every zeroed entry has magnitude <= every kept entry
  double min_kept = 1e300, max_dropped = 0.0;
  for (size_t i = 0; i < block.data.size(); ++i) {
    if (out.data[i] != 0.0)
      min_kept = std::min(min_kept, std::abs(block.data[i]));
    else
      max_dropped = std::max(max_dropped, std::abs(block.data[i]));
  }
  CHECK(max_dropped <= min_kept);
}

TEST_CASE("compression ties keep the earlier flat index") {
  Matrix block = testutil::mat(1, 4, {2.0, -2.0, 2.0, 2.0});
  Matrix out = apply_compression(block, 0.5);
  CHECK(out.data == std::vector<double>{2.0, -2.0, 0.0, 0.0});
}

TEST_CASE("compression rejects fractions outside (0,1]") {
  Matrix block(1, 4);
  CHECK_THROWS_AS((void)apply_compression(block, 0.0), ConfigError);
  CHECK_THROWS_AS((void)apply_compression(block, 1.5), ConfigError);
  CHECK_THROWS_AS((void)apply_compression(block, -0.2), ConfigError);
}

TEST_CASE("defense dispatch matches the direct calls") {
  Matrix block = testutil::mat(2, 3, {1, -2, 3, -4, 5, -6});

  DefenseSpec none;
  Rng r0(5);
  CHECK(apply_defense(block, none, r0).data == block.data);

  DefenseSpec comp;
  comp.kind = DefenseSpec::Kind::Compression;
  comp.keep_fraction = 0.5;
  Rng r1(5);
  CHECK(apply_defense(block, comp, r1).data == apply_compression(block, 0.5).data);

  DefenseSpec noise;
  noise.kind = DefenseSpec::Kind::GaussianNoise;
  noise.variance = 0.25;
  Rng r2(5);
  Rng r3(5);
  CHECK(apply_defense(block, noise, r2).data == apply_noise(block, 0.25, r3).data);
}

TEST_CASE("same defense seed reproduces the same noise") {
  Matrix block(3, 4);
  for (size_t i = 0; i < block.data.size(); ++i) block.data[i] = static_cast<double>(i);
  Rng a(77), b(77), c(78);
  Matrix out_a = apply_noise(block, 1e-2, a);
  Matrix out_b = apply_noise(block, 1e-2, b);
  Matrix out_c = apply_noise(block, 1e-2, c);
  CHECK(out_a.data == out_b.data);
  CHECK(out_a.data != out_c.data);
}
