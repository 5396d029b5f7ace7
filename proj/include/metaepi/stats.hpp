#pragma once

// Small descriptive-statistics helpers shared across modules.

#include <cstddef>
#include <span>
#include <vector>

namespace metaepi::stats {

double mean(std::span<const double> x);

// Sample standard deviation (n - 1 denominator); 0 for n < 2.
double sd(std::span<const double> x);

// Quantile of already-sorted data by linear interpolation between order
// statistics (h = (n - 1) q).
double quantile_sorted(std::span<const double> sorted, double q);

double quantile(std::vector<double> x, double q);

double median(std::vector<double> x);

}  // namespace metaepi::stats
