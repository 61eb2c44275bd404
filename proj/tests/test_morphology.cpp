#include <doctest.h>

#include <cmath>
#include <limits>
#include <queue>

#include "peri/error.hpp"
#include "peri/morphology.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace peri;
using namespace peri::oracle;

namespace {

std::size_t flood_fill_count(const Mask3D& m, int connectivity) {
  const Dims d = m.dims();
  std::vector<char> seen(m.size(), 0);
  std::size_t count = 0;
  for (std::size_t start = 0; start < m.size(); ++start) {
    if (!m[start] || seen[start]) continue;
    ++count;
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop();
      const auto x = static_cast<std::int64_t>(i % d.nx);
      const auto y = static_cast<std::int64_t>((i / d.nx) % d.ny);
      const auto z = static_cast<std::int64_t>(i / (d.nx * d.ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
            if (manhattan == 0 || (connectivity == 6 && manhattan > 1)) continue;
            const std::int64_t a = x + dx, b = y + dy, c = z + dz;
            if (a < 0 || b < 0 || c < 0 || a >= d.nx || b >= d.ny || c >= d.nz) continue;
            const std::size_t n = d.index(a, b, c);
            if (m[n] && !seen[n]) {
              seen[n] = 1;
              q.push(n);
            }
          }
    }
  }
  return count;
}

bool subset(const Mask3D& a, const Mask3D& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("edt matches a brute-force nearest-foreground scan") {
  rng::Stream s(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const Dims d = test::random_dims(s, 16);
    const Spacing sp = test::random_spacing(s);
    const double density = s.uniform(0.002, 0.3);
    const Mask3D m = test::random_mask(s, d, sp, density);
    const auto dm = morph::edt(m, 2);
    const auto oracle = brute_force_edt(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
      REQUIRE(std::abs(dm.mm[i] - oracle[i]) <= 1e-9);
      if (m[i]) REQUIRE(dm.mm[i] == 0.0);
    }
  }
}

TEST_CASE("edt hand examples") {
  const Mask3D one = test::single_voxel({5, 5, 5}, {1, 1, 1}, 2, 2, 2);
  CHECK(morph::edt(one).at(3, 3, 2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  const Mask3D aniso = test::single_voxel({5, 5, 5}, {1, 1, 2}, 2, 2, 2);
  CHECK(morph::edt(aniso).at(2, 2, 3) == doctest::Approx(2.0).epsilon(1e-12));
  const Mask3D empty({3, 3, 3}, {1, 1, 1});
  CHECK_THROWS_AS(morph::edt(empty), Error);
  CHECK_THROWS_AS(morph::dilate_mm(empty, 1.0), Error);
}

TEST_CASE("explicit spacing argument overrides the mask spacing") {
  const Mask3D one = test::single_voxel({5, 5, 5}, {1, 1, 1}, 2, 2, 2);
  CHECK(morph::edt(one, Spacing{1, 1, 3}).at(2, 2, 4) == doctest::Approx(6.0));
}

TEST_CASE("serial and parallel edt are bitwise identical") {
  rng::Stream s(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask3D m = test::random_mask(s, test::random_dims(s, 24), test::random_spacing(s), 0.05);
    const auto serial = morph::serial::edt(m, m.spacing());
    for (int threads : {1, 2, 4}) REQUIRE(morph::edt(m, threads).mm == serial.mm);
  }
}

TEST_CASE("dilation lattice counts") {
  const Mask3D one = test::single_voxel({9, 9, 9}, {1, 1, 1}, 4, 4, 4);
  CHECK(morph::dilate_mm(one, 2.0).count() == 33);
  const Mask3D aniso = test::single_voxel({9, 9, 9}, {1, 1, 2}, 4, 4, 4);
  CHECK(morph::dilate_mm(aniso, 2.0).count() == 15);
  CHECK(morph::dilate_mm(one, 0.0) == one);
  CHECK_THROWS_AS(morph::dilate_mm(one, -1.0), Error);
}

TEST_CASE("dilation equals ball stamping") {
  rng::Stream s(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Mask3D m = test::random_mask(s, test::random_dims(s, 16), test::random_spacing(s), s.uniform(0.001, 0.05));
    const double r = s.uniform(0.0, 5.0);
    REQUIRE(morph::dilate_mm(m, r) == stamp_balls(m, r));
  }
  // integer radius lattice points must be included
  const Mask3D one = test::single_voxel({7, 7, 7}, {1, 1, 1}, 3, 3, 3);
  CHECK(morph::dilate_mm(one, 3.0) == stamp_balls(one, 3.0));
}

TEST_CASE("dilation is monotone in the radius and nests the sweep radii") {
  rng::Stream s(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask3D m = test::random_mask(s, test::random_dims(s, 14), test::random_spacing(s), 0.03);
    const double r1 = s.uniform(0, 4), r2 = r1 + s.uniform(0, 4);
    CHECK(subset(m, morph::dilate_mm(m, r1)));
    CHECK(subset(morph::dilate_mm(m, r1), morph::dilate_mm(m, r2)));
  }
  Mask3D blob({40, 40, 40}, {1, 1, 1});
  for (std::int64_t z = 18; z < 22; ++z)
    for (std::int64_t y = 18; y < 22; ++y)
      for (std::int64_t x = 18; x < 22; ++x) blob.set(x, y, z, true);
  const auto dm = morph::edt(blob);
  Mask3D previous = blob;
  for (double r : {2.0, 4.0, 6.0, 8.0, 10.0, 12.0}) {
    const Mask3D next = morph::dilate_from_distance(blob, dm, r);
    CHECK(subset(previous, next));
    CHECK(next.count() > previous.count());
    CHECK(next == morph::dilate_mm(blob, r));
    previous = next;
  }
}

TEST_CASE("shells") {
  const Mask3D one = test::single_voxel({9, 9, 9}, {1, 1, 1}, 4, 4, 4);
  CHECK(morph::shell_mm(one, 0, 2).count() == 32);
  CHECK_THROWS_AS(morph::shell_mm(one, 2, 2), Error);
  CHECK_THROWS_AS(morph::shell_mm(one, -1, 2), Error);
  rng::Stream s(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask3D m = test::random_mask(s, test::random_dims(s, 12), {1, 1, 1}, 0.05);
    const double r = s.uniform(0.5, 4);
    const Mask3D sh = morph::shell_mm(m, 0, r);
    const Mask3D full = morph::dilate_mm(m, r);
    for (std::size_t i = 0; i < m.size(); ++i) {
      REQUIRE((sh[i] || m[i]) == full[i]);
      REQUIRE(!(sh[i] && m[i]));
    }
    const Mask3D outer = morph::shell_mm(m, r, r + 1);
    const Mask3D inner = morph::dilate_mm(m, r);
    for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(!(outer[i] && inner[i]));
  }
}

TEST_CASE("connected components") {
  Mask3D diag({3, 3, 3}, {1, 1, 1});
  diag.set(0, 0, 0, true);
  diag.set(1, 1, 1, true);
  CHECK(morph::connected_components(diag, 26).count() == 1);
  CHECK(morph::connected_components(diag, 6).count() == 2);
  CHECK(morph::connected_components(Mask3D({3, 3, 3}, {1, 1, 1})).count() == 0);
  CHECK_THROWS_AS(morph::connected_components(diag, 18), Error);

  rng::Stream s(12);
  for (int trial = 0; trial < 60; ++trial) {
    const Mask3D m = test::random_mask(s, test::random_dims(s, 12), {1, 1, 1}, s.uniform(0.05, 0.4));
    for (int conn : {6, 26}) {
      const auto cc = morph::connected_components(m, conn);
      REQUIRE(cc.count() == flood_fill_count(m, conn));
      std::size_t total = 0;
      for (auto n : cc.sizes) total += n;
      REQUIRE(total == m.count());
      // labels are assigned in first-visit order
      std::int32_t next = 1;
      for (auto l : cc.labels)
        if (l == next) ++next;
        else REQUIRE(l < next);
    }
  }
}
