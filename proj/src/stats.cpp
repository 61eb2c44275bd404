#include "peri/stats.hpp"

#include <algorithm>
#include <cmath>

#include "peri/error.hpp"

namespace peri::stats {

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) fail(ErrorKind::InvalidArgument, "percentile of empty data");
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double p) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  return percentile_sorted(s, p);
}

double mean(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "mean of empty data");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double variance(std::span<const double> values) {
  const double m = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return acc / static_cast<double>(values.size());
}

}  // namespace peri::stats
