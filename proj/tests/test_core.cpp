#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "quantopt/core.hpp"

using namespace quantopt;

TEST_CASE("Vec2 arithmetic") {
  Vec2 a{1.0, -2.0}, b{0.5, 4.0};
  CHECK((a + b).x == 1.5);
  CHECK((a + b).y == 2.0);
  CHECK((a - b).x == 0.5);
  CHECK((a - b).y == -6.0);
  CHECK((2.0 * a).x == 2.0);
  CHECK(dot(a, b) == 0.5 - 8.0);
  CHECK(linf_dist(a, b) == 6.0);
}

TEST_CASE("ClassPrior validates its range") {
  ClassPrior pr = ClassPrior::of(0.3);
  CHECK(pr.p == 0.3);
  CHECK(pr.n == 0.7);
  CHECK_THROWS_AS(ClassPrior::of(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ClassPrior::of(1.0), std::invalid_argument);
  CHECK_THROWS_AS(ClassPrior::of(-0.2), std::invalid_argument);
  CHECK_THROWS_AS(ClassPrior::of(std::nan("")), std::invalid_argument);
}

TEST_CASE("sparse dot and axpy") {
  LabeledPoint pt;
  pt.features = {{0, 2.0}, {3, -1.0}};
  std::vector<double> w{1.0, 5.0, 5.0, 4.0};
  CHECK(dot(w, pt) == 2.0 - 4.0);

  axpy(w, 0.5, pt);
  CHECK(w[0] == 2.0);
  CHECK(w[1] == 5.0);
  CHECK(w[3] == 3.5);

  // Features beyond the model dimension are ignored rather than faulting.
  std::vector<double> short_w{1.0};
  CHECK(dot(short_w, pt) == 2.0);
  axpy(short_w, 1.0, pt);
  CHECK(short_w.size() == 1);
}

TEST_CASE("norm2 and softplus") {
  CHECK(norm2({3.0, 4.0}) == 5.0);
  CHECK(norm2({}) == 0.0);

  CHECK(softplus(0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(1000.0) == Catch::Approx(1000.0));
  CHECK(softplus(-1000.0) >= 0.0);
  CHECK(softplus(-1000.0) < 1e-300);
  for (double x : {-30.0, -2.0, -0.1, 0.7, 5.0, 30.0})
    CHECK(softplus(x) == Catch::Approx(std::log1p(std::exp(x))).epsilon(1e-12));
}

TEST_CASE("derive_seed separates streams") {
  std::set<uint64_t> seen;
  for (uint64_t id = 0; id < 64; ++id) seen.insert(derive_seed(42, id));
  CHECK(seen.size() == 64);
  CHECK(derive_seed(42, 7) == derive_seed(42, 7));
  CHECK(derive_seed(42, 7) != derive_seed(43, 7));
}

TEST_CASE("Rng is deterministic per seed") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 256; ++i) {
    uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform_index stays in range and covers it") {
  Rng rng(7);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 20000; ++i) {
    uint64_t v = rng.uniform_index(10);
    REQUIRE(v < 10);
    ++counts[v];
  }
  for (int c : counts) {
    CHECK(c > 1700);  // fair-ish: expectation 2000
    CHECK(c < 2300);
  }
  CHECK_THROWS_AS(rng.uniform_index(0), std::invalid_argument);
}

TEST_CASE("uniform_real01 and bernoulli") {
  Rng rng(11);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double v = rng.uniform_real01();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    sum += v;
  }
  CHECK(sum / 20000 == Catch::Approx(0.5).margin(0.01));

  Rng rb(12);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) hits += rb.bernoulli(0.3) ? 1 : 0;
  CHECK(hits / 20000.0 == Catch::Approx(0.3).margin(0.015));
}

TEST_CASE("normal has the right first two moments") {
  Rng rng(5);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(mean == Catch::Approx(0.0).margin(0.02));
  CHECK(var == Catch::Approx(1.0).margin(0.03));
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;

  Rng a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);

  bool moved = false;
  for (int i = 0; i < 50; ++i) moved = moved || v[i] != i;
  CHECK(moved);
}
