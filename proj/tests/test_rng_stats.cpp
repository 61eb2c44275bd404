#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "peri/error.hpp"
#include "peri/parallel.hpp"
#include "peri/rng.hpp"
#include "peri/stats.hpp"

using namespace peri;

TEST_CASE("derived streams are reproducible and purpose-separated") {
  CHECK(rng::derive_seed(7, "forest", 3) == rng::derive_seed(7, "forest", 3));
  CHECK(rng::derive_seed(7, "forest", 3) != rng::derive_seed(7, "forest", 4));
  CHECK(rng::derive_seed(7, "forest", 3) != rng::derive_seed(7, "bootstrap", 3));
  CHECK(rng::derive_seed(7, "forest", 3) != rng::derive_seed(8, "forest", 3));

  rng::Stream a(7, "x", 1), b(7, "x", 1);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next() == b.next());
  rng::Stream n1(99), n2(99);
  for (int i = 0; i < 101; ++i) REQUIRE(n1.normal() == n2.normal());
}

TEST_CASE("uniform, below and normal stay in range with plausible moments") {
  rng::Stream s(3);
  std::vector<double> u, z;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double x = s.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    u.push_back(x);
    const auto k = s.below(7);
    REQUIRE(k < 7);
    ++counts[k];
    z.push_back(s.normal());
  }
  CHECK(stats::mean(u) == doctest::Approx(0.5).epsilon(0.01));
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK(std::abs(stats::mean(z)) < 0.02);
  CHECK(stats::variance(z) == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s.below(1) == 0);
}

TEST_CASE("percentile uses linear interpolation at p * (n - 1)") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(stats::percentile(v, 0.0) == 1.0);
  CHECK(stats::percentile(v, 1.0) == 4.0);
  CHECK(stats::percentile(v, 0.5) == 2.5);
  CHECK(stats::percentile(v, 0.25) == doctest::Approx(1.75));
  const std::vector<double> one{5};
  CHECK(stats::percentile(one, 0.3) == 5.0);
  CHECK(stats::mean(v) == 2.5);
  CHECK(stats::variance(v) == 1.25);
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 17 || i == 40) fail(ErrorKind::InvalidArgument, "idx " + std::to_string(i));
    });
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("idx 17") != std::string::npos);
  }
}

TEST_CASE("thread environment override") {
  ::setenv("PERITUMOR_THREADS", "3", 1);
  CHECK(resolve_threads(8) == 3);
  ::unsetenv("PERITUMOR_THREADS");
  CHECK(resolve_threads(2) == 2);
  CHECK(resolve_threads(0) >= 1);
}
