#pragma once

// Fixtures shared by the unit tests and the acceptance runner.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "peri/rng.hpp"
#include "peri/volume.hpp"

namespace peri::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("peri_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Mask3D random_mask(rng::Stream& s, const Dims& d, const Spacing& sp, double density) {
  Mask3D m(d, sp);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, s.uniform() < density);
  if (m.empty()) m.set(s.below(m.size()), true);
  return m;
}

inline Dims random_dims(rng::Stream& s, int max_side) {
  return {static_cast<std::int64_t>(1 + s.below(static_cast<std::uint64_t>(max_side))),
          static_cast<std::int64_t>(1 + s.below(static_cast<std::uint64_t>(max_side))),
          static_cast<std::int64_t>(1 + s.below(static_cast<std::uint64_t>(max_side)))};
}

inline Spacing random_spacing(rng::Stream& s) { return {s.uniform(0.4, 2.5), s.uniform(0.4, 2.5), s.uniform(0.4, 2.5)}; }

inline Mask3D single_voxel(const Dims& d, const Spacing& sp, std::int64_t x, std::int64_t y, std::int64_t z) {
  Mask3D m(d, sp);
  m.set(x, y, z, true);
  return m;
}

inline Volume3D volume_from(const Dims& d, const Spacing& sp, std::vector<float> v) {
  return Volume3D(d, sp, std::move(v));
}

}  // namespace peri::test
