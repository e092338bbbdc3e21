#pragma once

#include <span>
#include <vector>

namespace lapcam::stats {

/// Median with the even-count convention (mean of the middle pair).
/// The input is copied; returns 0 for an empty range.
double median(std::span<const double> values);

/// Same as median() but reorders `values` in place.
double median_inplace(std::vector<double>& values);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::span<const double> values, double p);

double mean(std::span<const double> values);

/// Population variance.
double variance(std::span<const double> values);

}  // namespace lapcam::stats
