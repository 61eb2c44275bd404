#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peri/error.hpp"
#include "peri/morphology.hpp"
#include "peri/phantom.hpp"
#include "peri/segmentation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace peri;
using namespace peri::oracle;

namespace {

Volume3D line_volume(const std::vector<float>& v) {
  return Volume3D({static_cast<std::int64_t>(v.size()), 1, 1}, {1, 1, 1}, v);
}

std::vector<float> repeated(std::initializer_list<std::pair<float, int>> groups) {
  std::vector<float> out;
  for (auto [value, n] : groups) out.insert(out.end(), static_cast<std::size_t>(n), value);
  return out;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

}  // namespace

TEST_CASE("method names") {
  for (auto m : seg::kAllMethods) CHECK(seg::parse_method(seg::to_string(m)) == m);
  CHECK(seg::parse_method("GMM") == seg::Method::GMM);
  CHECK(kind_of([] { seg::parse_method("watershed"); }) == ErrorKind::InvalidArgument);
  seg::Params p;
  p.knn_k = 4;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.fcm_fuzzifier = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("histogram binning puts the lower edge in bin 0 and the upper edge in the last bin") {
  CHECK(seg::histogram_bin(0.0, 0.0, 10.0, 10) == 0);
  CHECK(seg::histogram_bin(1.0, 0.0, 10.0, 10) == 0);
  CHECK(seg::histogram_bin(1.5, 0.0, 10.0, 10) == 1);
  CHECK(seg::histogram_bin(10.0, 0.0, 10.0, 10) == 9);
}

TEST_CASE("otsu split equals an exhaustive between-class-variance scan") {
  rng::Stream s(100);
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = random_histogram(s);
    REQUIRE(seg::otsu_split(h) == otsu_oracle(h));
  }
}

TEST_CASE("otsu examples") {
  const Volume3D two = line_volume(repeated({{-800.0f, 50}, {0.0f, 50}}));
  const auto r = seg::segment_otsu(two);
  CHECK(r.mask.count() == 50);
  CHECK(r.diagnostics[0] > -800.0);
  CHECK(r.diagnostics[0] < 0.0);
  for (std::size_t i = 50; i < 100; ++i) CHECK(r.mask[i]);

  const Volume3D three = line_volume(repeated({{-800.0f, 80}, {-400.0f, 10}, {0.0f, 10}}));
  std::vector<std::uint64_t> h(256, 0);
  for (float v : three.data()) ++h[seg::histogram_bin(v, -800, 0, 256)];
  const int k = otsu_oracle(h);
  const auto r3 = seg::segment_otsu(three);
  CHECK(r3.diagnostics[0] == doctest::Approx(-800.0 + 800.0 * k / 256.0));
  std::size_t expected = 0;
  for (float v : three.data()) expected += seg::histogram_bin(v, -800, 0, 256) >= k;
  CHECK(r3.mask.count() == expected);

  CHECK(kind_of([] { seg::segment_otsu(line_volume(repeated({{5.0f, 10}}))); }) == ErrorKind::DegenerateInput);
}

TEST_CASE("fcm memberships sum to one at every iteration") {
  rng::Stream s(5);
  std::vector<double> x;
  for (int i = 0; i < 400; ++i) x.push_back(i % 3 == 0 ? s.normal(0, 30) : s.normal(-800, 40));
  seg::Params p;
  int calls = 0;
  const auto fit = seg::fcm_fit(x, p, [&](int, std::span<const double> u0, std::span<const double> u1) {
    ++calls;
    for (std::size_t i = 0; i < u0.size(); ++i) REQUIRE(std::abs(u0[i] + u1[i] - 1.0) <= 1e-9);
  });
  CHECK(calls == fit.iterations + 1);  // initial memberships are reported too
  CHECK(fit.converged);
}

TEST_CASE("fcm agrees with a plain reference iteration") {
  rng::Stream s(6);
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(i < 150 ? s.normal(-800, 20) : s.normal(0, 20));
  seg::Params p;
  const auto fit = seg::fcm_fit(x, p);

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    const double pos = q * double(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    return sorted[i] + (pos - double(i)) * (sorted[std::min(i + 1, sorted.size() - 1)] - sorted[i]);
  };
  double c0 = pct(0.25), c1 = pct(0.75);
  std::vector<double> u0(x.size(), 0), u1(x.size(), 0);
  for (int it = 0; it < 300; ++it) {
    double change = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d0 = std::abs(x[i] - c0), d1 = std::abs(x[i] - c1);
      double a, b;
      if (d0 == 0) a = 1, b = 0;
      else if (d1 == 0) a = 0, b = 1;
      else a = 1.0 / (1.0 + (d0 / d1) * (d0 / d1)), b = 1.0 - a;
      change = std::max(change, std::abs(a - u0[i]));
      u0[i] = a, u1[i] = b;
    }
    double n0 = 0, w0 = 0, n1 = 0, w1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      n0 += u0[i] * u0[i] * x[i], w0 += u0[i] * u0[i];
      n1 += u1[i] * u1[i] * x[i], w1 += u1[i] * u1[i];
    }
    c0 = n0 / w0, c1 = n1 / w1;
    if (it > 0 && change < 1e-12) break;
  }
  // the library stops at max |dU| < 1e-5, so compare to within a small HU slack
  CHECK(std::abs(fit.centers[0] - c0) < 1e-3);
  CHECK(std::abs(fit.centers[1] - c1) < 1e-3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double own = i < 150 ? fit.membership0[i] : fit.membership1[i];
    REQUIRE(own >= 0.99);
  }
  const auto roi = seg::segment_fcm(line_volume(std::vector<float>(x.begin(), x.end())));
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(roi.mask[i] == (i >= 150));
}

TEST_CASE("fcm singularity and symmetry") {
  // values sit exactly on the percentile centres
  const std::vector<double> x{0, 0, 0, 10, 10, 10};
  seg::Params p;
  const auto fit = seg::fcm_fit(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::isfinite(fit.membership0[i]));
    if (x[i] == fit.centers[0]) CHECK(fit.membership0[i] == 1.0);
  }
  std::vector<double> sym;
  rng::Stream s(8);
  for (int i = 0; i < 100; ++i) {
    const double d = s.normal(200, 15);
    sym.push_back(-d);
    sym.push_back(d);
  }
  const auto f = seg::fcm_fit(sym, p);
  CHECK(std::abs(f.centers[0] + f.centers[1]) <= 1e-6);
}

TEST_CASE("gmm log-likelihood is monotone and recovers the means") {
  rng::Stream s(9);
  std::vector<double> x;
  for (int i = 0; i < 500; ++i) x.push_back(s.normal(-800, 20));
  for (int i = 0; i < 500; ++i) x.push_back(s.normal(0, 20));
  seg::Params p;
  const auto fit = seg::gmm_fit(x, p);
  for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
    REQUIRE(fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9);
  CHECK(std::abs(fit.means[0] + 800) < 10);
  CHECK(std::abs(fit.means[1]) < 10);
  CHECK(fit.converged);
  const auto labels = seg::gmm_assign(x, fit);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(labels[i] == (i >= 500 ? 1 : 0));
}

TEST_CASE("gmm collapse is held by the variance floor") {
  std::vector<double> x(999, -500.0);
  x.push_back(300.0);
  seg::Params p;
  const auto fit = seg::gmm_fit(x, p);
  for (double v : fit.variances) CHECK(std::isfinite(v));
  for (double v : fit.variances) CHECK(v > 0);
  for (double ll : fit.log_likelihood) CHECK(std::isfinite(ll));
  const auto roi = seg::segment_gmm(line_volume(std::vector<float>(x.begin(), x.end())));
  CHECK(roi.mask.count() == 1);
  CHECK(roi.mask[999]);
}

TEST_CASE("knn vote agrees with a brute-force neighbour oracle") {
  rng::Stream s(41);
  for (int trial = 0; trial < 25; ++trial) {
    const Dims d = test::random_dims(s, 8);
    if (d.count() < 12) continue;
    std::vector<float> v(d.count());
    for (auto& x : v) x = static_cast<float>(std::round(s.uniform(-900, 100)));
    const Volume3D roi(d, test::random_spacing(s), v);
    seg::Params p;
    p.knn_k = 1 + 2 * static_cast<int>(s.below(3));
    seg::KnnProblem prob;
    try {
      prob = seg::knn_problem(roi, p);
    } catch (const Error&) {
      continue;
    }
    if (static_cast<int>(prob.n_seeds()) < p.knn_k) continue;
    const auto oracle = knn_oracle(prob, p.knn_k);
    REQUIRE(seg::knn_vote(prob, p.knn_k, 2) == oracle);
    REQUIRE(seg::serial::knn_vote(prob, p.knn_k) == oracle);
  }
}

TEST_CASE("knn examples") {
  std::vector<float> v(8 * 8 * 8);
  rng::Stream s(42);
  for (auto& x : v) x = static_cast<float>(s.normal(-850, 30));
  const Dims d{8, 8, 8};
  for (std::int64_t z = 3; z < 6; ++z)
    for (std::int64_t y = 3; y < 6; ++y)
      for (std::int64_t x = 3; x < 6; ++x) v[d.index(x, y, z)] = static_cast<float>(s.normal(20, 20));
  const Volume3D roi(d, {1, 1, 1}, v);
  const auto r = seg::segment_knn(roi);
  for (std::int64_t z = 3; z < 6; ++z)
    for (std::int64_t y = 3; y < 6; ++y)
      for (std::int64_t x = 3; x < 6; ++x) CHECK(r.mask.at(x, y, z));

  // k = 1 is the nearest-seed rule
  seg::Params p1;
  p1.knn_k = 1;
  const auto prob = seg::knn_problem(roi, p1);
  CHECK(seg::knn_vote(prob, 1) == knn_oracle(prob, 1));

  // spatially blind labelling thresholds at the intensity gap
  seg::Params blind;
  blind.knn_coord_weight = 0.0;
  std::vector<float> groups;
  for (int i = 0; i < 60; ++i) groups.push_back(static_cast<float>(-900 + i));
  for (int i = 0; i < 40; ++i) groups.push_back(static_cast<float>(-100 + 2 * i));
  const auto rb = seg::segment_knn(line_volume(groups), blind);
  for (std::size_t i = 0; i < groups.size(); ++i) REQUIRE(rb.mask[i] == (groups[i] > -500));

  CHECK(kind_of([] { seg::segment_knn(line_volume(repeated({{1.0f, 10}}))); }) == ErrorKind::DegenerateInput);
}

TEST_CASE("postprocess keeps the centre component and fills holes") {
  Mask3D m({12, 12, 12}, {1, 1, 1});
  for (std::int64_t z = 3; z < 8; ++z)
    for (std::int64_t y = 3; y < 8; ++y)
      for (std::int64_t x = 3; x < 8; ++x) m.set(x, y, z, true);
  m.set(10, 10, 10, true);
  const BoundingBox box{{3, 3, 3}, {8, 8, 8}};
  const Mask3D kept = seg::postprocess(m, box);
  CHECK(kept.count() == 125);
  CHECK(!kept.at(10, 10, 10));

  Mask3D single({12, 12, 12}, {1, 1, 1});
  for (std::int64_t z = 3; z < 8; ++z)
    for (std::int64_t y = 3; y < 8; ++y)
      for (std::int64_t x = 3; x < 8; ++x) single.set(x, y, z, true);
  CHECK(seg::postprocess(single, box) == single);

  Mask3D hollow = single;
  for (std::int64_t z = 4; z < 7; ++z)
    for (std::int64_t y = 4; y < 7; ++y)
      for (std::int64_t x = 4; x < 7; ++x) hollow.set(x, y, z, false);
  CHECK(hollow.count() == 98);
  CHECK(seg::postprocess(hollow, box) == single);

  // centre misses every component: nearest centroid wins
  Mask3D off({12, 12, 12}, {1, 1, 1});
  off.set(1, 1, 1, true);
  off.set(6, 6, 7, true);
  const Mask3D near = seg::postprocess(off, {{5, 5, 5}, {8, 8, 8}});
  CHECK(near.count() == 1);
  CHECK(near.at(6, 6, 7));

  CHECK(kind_of([] { seg::postprocess(Mask3D({3, 3, 3}, {1, 1, 1}), {{0, 0, 0}, {3, 3, 3}}); }) ==
        ErrorKind::EmptyMask);
}

TEST_CASE("postprocess output is one component without holes on random masks") {
  rng::Stream s(50);
  for (int trial = 0; trial < 40; ++trial) {
    const Mask3D m = test::random_mask(s, {10, 10, 10}, {1, 1, 1}, s.uniform(0.2, 0.6));
    const Mask3D out = seg::postprocess(m, {{2, 2, 2}, {8, 8, 8}});
    REQUIRE(morph::connected_components(out, 26).count() == 1);
    std::vector<std::uint8_t> inverse(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) inverse[i] = out[i] ? 0 : 1;
    const auto bg = morph::connected_components(Mask3D(out.dims(), out.spacing(), inverse), 6);
    std::vector<char> border(bg.count() + 1, 0);
    const Dims d = out.dims();
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t y = 0; y < d.ny; ++y)
        for (std::int64_t x = 0; x < d.nx; ++x)
          if (x == 0 || y == 0 || z == 0 || x == d.nx - 1 || y == d.ny - 1 || z == d.nz - 1)
            border[bg.labels[d.index(x, y, z)]] = 1;
    for (std::size_t l = 1; l <= bg.count(); ++l) REQUIRE(border[l]);
  }
}

TEST_CASE("every method reaches Dice 0.8 on phantom nodules and is deterministic") {
  phantom::PhantomSpec spec;
  spec.n_cases = 6;
  const auto labels = phantom::assign_labels(spec);
  for (int i = 0; i < spec.n_cases; ++i) {
    const auto pc = phantom::make_case(spec, i, labels[static_cast<std::size_t>(i)]);
    for (auto m : seg::kAllMethods) {
      const auto r = seg::segment(pc.image, pc.bbox, m);
      CAPTURE(i);
      CAPTURE(seg::to_string(m));
      CHECK(phantom::ground_truth_dice(pc.mask, r.mask) >= 0.8);
      CHECK(seg::segment(pc.image, pc.bbox, m).mask == r.mask);
      // mask lies inside the crop region
      for (std::int64_t z = 0; z < r.mask.dims().nz; ++z)
        for (std::int64_t y = 0; y < r.mask.dims().ny; ++y)
          for (std::int64_t x = 0; x < r.mask.dims().nx; ++x)
            if (r.mask.at(x, y, z))
              REQUIRE((x >= r.roi.offset.x && x < r.roi.offset.x + r.roi.dims.nx && y >= r.roi.offset.y &&
                       y < r.roi.offset.y + r.roi.dims.ny && z >= r.roi.offset.z &&
                       z < r.roi.offset.z + r.roi.dims.nz));
    }
  }
}

TEST_CASE("a box of uniform air is an error, not an empty mask") {
  const Volume3D air({16, 16, 16}, {1, 1, 1}, std::vector<float>(16 * 16 * 16, -1000.0f));
  for (auto m : seg::kAllMethods) {
    const auto k = kind_of([&] { seg::segment(air, {{4, 4, 4}, {10, 10, 10}}, m); });
    CHECK((k == ErrorKind::DegenerateInput || k == ErrorKind::EmptyMask));
  }
}
