#include "metaepi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metaepi::stats {

double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean of empty sample");
    // Two-pass compensated for large draw counts.
    double sum = 0.0;
    for (double v : x) sum += v;
    double m = sum / static_cast<double>(x.size());
    double corr = 0.0;
    for (double v : x) corr += v - m;
    return m + corr / static_cast<double>(x.size());
}

double sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || sorted[hi] == sorted[lo]) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> x, double q) {
    std::sort(x.begin(), x.end());
    return quantile_sorted(x, q);
}

double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

}  // namespace metaepi::stats
