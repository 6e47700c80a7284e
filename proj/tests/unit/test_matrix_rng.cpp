#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "badvfl/common.hpp"
#include "badvfl/matrix.hpp"
#include "badvfl/rng.hpp"
#include "../helpers.hpp"

using namespace badvfl;

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(11);
  Matrix a(5, 7), b(4, 7);
  for (auto& v : a.data) v = rng.gaussian();
  for (auto& v : b.data) v = rng.gaussian();

  Matrix nt = matmul_nt(a, b);  // a (5x7) times b^T (7x4)
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 7; ++k) s += a.at(i, k) * b.at(j, k);
      CHECK(nt.at(i, j) == doctest::Approx(s).epsilon(1e-12));
    }

  Matrix bt(7, 4);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 7; ++k) bt.at(k, i) = b.at(i, k);
  Matrix plain = matmul(a, bt);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) CHECK(plain.at(i, j) == doctest::Approx(nt.at(i, j)).epsilon(1e-12));

  Matrix tn = matmul_tn(a, a);  // a^T a, 7x7 symmetric
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += a.at(k, i) * a.at(k, j);
      CHECK(tn.at(i, j) == doctest::Approx(s).epsilon(1e-12));
      CHECK(tn.at(i, j) == doctest::Approx(tn.at(j, i)).epsilon(1e-12));
    }
}

TEST_CASE("matmul rejects shape mismatches") {
  Matrix a(2, 3), b(4, 5);
  CHECK_THROWS_AS((void)matmul(a, b), InternalError);
  CHECK_THROWS_AS((void)matmul_nt(a, b), InternalError);
}

TEST_CASE("hconcat and hsplit round trip") {
  Rng rng(3);
  Matrix a(4, 2), b(4, 3), c(4, 1);
  for (auto& v : a.data) v = rng.uniform();
  for (auto& v : b.data) v = rng.uniform();
  for (auto& v : c.data) v = rng.uniform();
  Matrix cat = hconcat({a, b, c});
  CHECK(cat.rows == 4);
  CHECK(cat.cols == 6);
  auto parts = hsplit(cat, {2, 3, 1});
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].data == a.data);
  CHECK(parts[1].data == b.data);
  CHECK(parts[2].data == c.data);
}

TEST_CASE("gather_rows picks rows in id order") {
  Matrix m = testutil::mat(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<int> rows = {2, 0};
  Matrix g = gather_rows(m, rows);
  CHECK(g.rows == 2);
  CHECK(g.at(0, 0) == 5);
  CHECK(g.at(1, 1) == 2);
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= (a2.uniform() != c.uniform());
  CHECK(any_diff);

  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("gaussian moments look right") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.gaussian();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform stays in [0,1) and uniform_int in range") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    int k = rng.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
  CHECK_THROWS_AS(rng.uniform_int(0), InternalError);
}

TEST_CASE("shuffle permutes and sample draws distinct elements") {
  Rng rng(13);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);

  auto picked = rng.sample(orig, 4);
  CHECK(picked.size() == 4);
  std::set<int> uniq(picked.begin(), picked.end());
  CHECK(uniq.size() == 4);
  for (int x : picked) CHECK((x >= 0 && x <= 9));

  auto all = rng.sample(orig, 99);
  CHECK(all.size() == orig.size());
}

TEST_CASE("ceil_count avoids floating point dust") {
  CHECK(ceil_count(0.01, 2000) == 20);
  CHECK(ceil_count(0.1, 10) == 1);
  CHECK(ceil_count(0.5, 4) == 2);
  CHECK(ceil_count(0.5, 5) == 3);
  CHECK(ceil_count(1.0, 7) == 7);
  CHECK(ceil_count(0.003, 1000) == 3);
}

TEST_CASE("fnv1a64 is stable") {
  CHECK(fnv1a64("") == 14695981039346656037ULL);
  CHECK(fnv1a64("a") == fnv1a64("a"));
  CHECK(fnv1a64("a") != fnv1a64("b"));
}
