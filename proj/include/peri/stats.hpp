#pragma once

#include <span>
#include <vector>

namespace peri::stats {

/// Linear-interpolation percentile (position p * (n - 1)) of sorted data; p in [0, 1].
double percentile_sorted(std::span<const double> sorted, double p);

/// Copies, sorts and calls percentile_sorted.
double percentile(std::span<const double> values, double p);

double mean(std::span<const double> values);
/// Population variance (divides by n), two-pass.
double variance(std::span<const double> values);

}  // namespace peri::stats
