#pragma once

// Brute-force grid posterior for tiny instances. Up to three coordinates
// are free; every other coordinate (and every indicator) is held at the
// supplied base state. The joint density is evaluated on a dense grid and
// integrated with the trapezoid rule.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "metaepi/model.hpp"

namespace metaepi {

class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GridAxis {
    std::size_t coordinate = 0;  // layout index
    double lo = 0.0;
    double hi = 1.0;
    std::size_t points = 201;
};

struct OracleConfig {
    std::vector<GridAxis> axes;  // 1 to 3
    ParameterState base;
    std::size_t max_points = 10'000'000;
    // Relative tolerance (in marginal SDs) of the grid-doubling self-check.
    double self_check_tolerance = 0.005;
    bool self_check = true;
};

struct OracleMarginal {
    std::size_t coordinate = 0;
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double q025 = 0.0;
    double q975 = 0.0;
    // Density at the grid ends times the SD; well above ~1e-4 means the
    // bounds cut off posterior mass.
    double edge_density = 0.0;
    std::vector<double> grid;
    std::vector<double> density;  // normalised on `grid`
};

// Evaluates one grid without the self-check.
std::vector<OracleMarginal> grid_marginals(const Model& model, const OracleConfig& config);

// grid_marginals plus the self-check: every axis is refined to 2 n - 1
// points and the summaries must move by less than the tolerance times the
// marginal SD. Throws OracleError on failure.
std::vector<OracleMarginal> oracle_posterior(const Model& model, const OracleConfig& config);

// Quantile of a piecewise-linear density on a grid (exact inversion of the
// piecewise-quadratic CDF).
double grid_quantile(const std::vector<double>& grid, const std::vector<double>& density, double q);

}  // namespace metaepi
