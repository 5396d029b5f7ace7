#include "metaepi/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metaepi {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

// Trapezoid weights on a uniform grid.
std::vector<double> trapezoid_weights(std::size_t n, double h) {
    std::vector<double> w(n, h);
    w.front() = w.back() = h / 2.0;
    return w;
}

void check_config(const Model& model, const OracleConfig& cfg) {
    if (cfg.axes.empty() || cfg.axes.size() > 3) throw OracleError("oracle needs 1 to 3 free coordinates");
    if (cfg.base.values.size() != model.dimension()) throw OracleError("base state does not match the model");
    double total = 1.0;
    for (std::size_t a = 0; a < cfg.axes.size(); ++a) {
        const auto& ax = cfg.axes[a];
        if (ax.coordinate >= model.dimension()) throw OracleError("grid axis coordinate out of range");
        if (!(ax.lo < ax.hi) || ax.points < 3) throw OracleError("grid axis needs lo < hi and >= 3 points");
        for (std::size_t b = 0; b < a; ++b) {
            if (cfg.axes[b].coordinate == ax.coordinate) throw OracleError("grid axis listed twice");
        }
        total *= static_cast<double>(ax.points);
    }
    if (total > static_cast<double>(cfg.max_points)) throw OracleError("grid exceeds the point budget");
}

}  // namespace

double grid_quantile(const std::vector<double>& x, const std::vector<double>& f, double q) {
    const std::size_t n = x.size();
    if (n < 2 || f.size() != n) throw OracleError("grid_quantile needs >= 2 points and one density value per point");
    if (!(q >= 0.0 && q <= 1.0)) throw OracleError("grid_quantile probability outside [0, 1]");
    std::vector<double> cdf(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) cdf[i] = cdf[i - 1] + 0.5 * (f[i - 1] + f[i]) * (x[i] - x[i - 1]);
    const double target = q * cdf.back();
    const auto it = std::lower_bound(cdf.begin() + 1, cdf.end(), target);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n - 1);
    // Solve for t in [0, h]: f0 t + (f1 - f0) t^2 / (2 h) = target - cdf[i-1].
    const double h = x[i] - x[i - 1];
    const double f0 = f[i - 1];
    const double slope = (f[i] - f0) / h;
    const double r = target - cdf[i - 1];
    double t;
    if (std::abs(slope) < 1e-300) {
        t = f0 > 0.0 ? r / f0 : 0.0;
    } else {
        const double disc = std::max(0.0, f0 * f0 + 2.0 * slope * r);
        t = (std::sqrt(disc) - f0) / slope;
        if (!std::isfinite(t)) t = 0.0;
    }
    return x[i - 1] + std::clamp(t, 0.0, h);
}

std::vector<OracleMarginal> grid_marginals(const Model& model, const OracleConfig& cfg) {
    check_config(model, cfg);
    const std::size_t dims = cfg.axes.size();
    std::vector<std::vector<double>> grids, weights;
    std::size_t total = 1;
    for (const auto& ax : cfg.axes) {
        grids.push_back(linspace(ax.lo, ax.hi, ax.points));
        weights.push_back(trapezoid_weights(ax.points, (ax.hi - ax.lo) / static_cast<double>(ax.points - 1)));
        total *= ax.points;
    }

    // Log density at every grid point, row-major with the last axis fastest.
    std::vector<double> logd(total);
    ParameterState s = cfg.base;
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(dims, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t a = dims; a-- > 0;) {
            idx[a] = rem % cfg.axes[a].points;
            rem /= cfg.axes[a].points;
            s.values[cfg.axes[a].coordinate] = grids[a][idx[a]];
        }
        const double v = model.in_support(s) ? model.log_posterior(s) : -std::numeric_limits<double>::infinity();
        logd[flat] = v;
        max_log = std::max(max_log, v);
    }
    if (!std::isfinite(max_log)) throw OracleError("density is zero or non-finite on the whole grid");

    std::vector<std::vector<double>> marg(dims);
    for (std::size_t a = 0; a < dims; ++a) marg[a].assign(cfg.axes[a].points, 0.0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t a = dims; a-- > 0;) {
            idx[a] = rem % cfg.axes[a].points;
            rem /= cfg.axes[a].points;
        }
        const double d = std::exp(logd[flat] - max_log);
        if (d == 0.0) continue;
        for (std::size_t a = 0; a < dims; ++a) {
            double w = d;
            for (std::size_t b = 0; b < dims; ++b) {
                if (b != a) w *= weights[b][idx[b]];
            }
            marg[a][idx[a]] += w;
        }
    }

    std::vector<OracleMarginal> out;
    for (std::size_t a = 0; a < dims; ++a) {
        OracleMarginal m;
        m.coordinate = cfg.axes[a].coordinate;
        m.grid = grids[a];
        double z = 0.0;
        for (std::size_t i = 0; i < m.grid.size(); ++i) z += weights[a][i] * marg[a][i];
        m.density = marg[a];
        for (auto& v : m.density) v /= z;
        double mean = 0.0, second = 0.0;
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            mean += weights[a][i] * m.density[i] * m.grid[i];
            second += weights[a][i] * m.density[i] * m.grid[i] * m.grid[i];
        }
        m.mean = mean;
        m.sd = std::sqrt(std::max(0.0, second - mean * mean));
        m.median = grid_quantile(m.grid, m.density, 0.5);
        m.q025 = grid_quantile(m.grid, m.density, 0.025);
        m.q975 = grid_quantile(m.grid, m.density, 0.975);
        m.edge_density = std::max(m.density.front(), m.density.back()) * m.sd;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<OracleMarginal> oracle_posterior(const Model& model, const OracleConfig& cfg) {
    auto coarse = grid_marginals(model, cfg);
    if (!cfg.self_check) return coarse;
    OracleConfig fine = cfg;
    for (auto& ax : fine.axes) ax.points = 2 * ax.points - 1;
    fine.max_points = cfg.max_points << fine.axes.size();
    auto refined = grid_marginals(model, fine);
    for (std::size_t a = 0; a < coarse.size(); ++a) {
        const auto& c = coarse[a];
        const auto& f = refined[a];
        const double tol = cfg.self_check_tolerance * std::max(f.sd, 1e-12);
        const double worst = std::max({std::abs(c.mean - f.mean), std::abs(c.median - f.median),
                                       std::abs(c.q025 - f.q025), std::abs(c.q975 - f.q975),
                                       std::abs(c.sd - f.sd)});
        if (worst > tol) {
            throw OracleError("grid too coarse for " + model.parameter_name(c.coordinate) +
                              ": doubling the resolution moved a summary by " + std::to_string(worst / f.sd) +
                              " SD");
        }
    }
    return refined;
}

}  // namespace metaepi
