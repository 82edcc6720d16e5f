#pragma once

// Reference forecasters (persistence, VAR(1)), MSPE scoring, and simple knot selectors used
// as comparators in the benchmarks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/random.hpp"
#include "windcast/field_store.hpp"
#include "windcast/knots.hpp"

namespace windcast::simbench {

namespace detail {

inline void check_leads(const std::vector<int>& leads, Eigen::Index t_train, Eigen::Index rows) {
    if (leads.empty()) throw ArgumentError("at least one lead is required");
    for (int a : leads) {
        if (a < 1) throw ArgumentError("leads must be positive");
        if (t_train < a) throw ArgumentError("history shorter than lead " + std::to_string(a));
    }
    if (t_train >= rows) throw ArgumentError("no test rows after the history");
}

inline ForecastSet empty_set(int lead, Eigen::Index t_train, const Matrix& y) {
    ForecastSet fs;
    fs.lead = lead;
    for (Eigen::Index j = 0; j < y.rows() - t_train; ++j) fs.origins.push_back(t_train + j - lead);
    fs.point.resize(y.rows() - t_train, y.cols());
    return fs;
}

}  // namespace detail

/// Persistence: the forecast for origin + lead is the value at the origin. Rows cover [t_train, T).
inline std::vector<ForecastSet> baseline_per(const Matrix& y, Eigen::Index t_train, const std::vector<int>& leads) {
    detail::check_leads(leads, t_train, y.rows());
    std::vector<ForecastSet> out;
    for (int a : leads) {
        auto fs = detail::empty_set(a, t_train, y);
        for (Eigen::Index j = 0; j < fs.point.rows(); ++j) fs.point.row(j) = y.row(fs.origins[static_cast<std::size_t>(j)]);
        out.push_back(std::move(fs));
    }
    return out;
}

struct Var1Model {
    /// y_t = intercept + coef * y_{t-1}.
    Vector intercept;
    Matrix coef;
    /// Ridge penalty actually added to the Gram diagonal (0 for plain least squares).
    double ridge = 0.0;
    double condition = 0.0;

    Vector step(const Vector& prev) const { return intercept + coef * prev; }
};

inline constexpr double var_condition_limit = 1e8;
inline constexpr double var_ridge = 1e-6;

/// Least-squares VAR(1) with intercept; a small ridge on the slopes kicks in when the centred
/// Gram matrix is ill-conditioned (including rank deficiency from short or constant series).
/// The ridge is var_ridge times the mean Gram diagonal, so rescaling the data does not change
/// the fit; a zero Gram falls back to the absolute value.
inline Var1Model fit_var1(const Matrix& train) {
    if (train.rows() < 2) throw ArgumentError("VAR(1) needs at least two time steps");
    const Eigen::Index n = train.cols(), T = train.rows() - 1;
    const Matrix x = train.topRows(T), z = train.bottomRows(T);
    const Eigen::RowVectorXd mx = x.colwise().mean(), mz = z.colwise().mean();
    const Matrix xc = x.rowwise() - mx, zc = z.rowwise() - mz;
    Matrix gram = xc.transpose() * xc;
    Var1Model m;
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues();
    const double lmax = ev.maxCoeff(), lmin = ev.minCoeff();
    m.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(m.condition < var_condition_limit)) {
        const double scale = gram.diagonal().mean();
        m.ridge = var_ridge * (scale > 0.0 ? scale : 1.0);
        gram.diagonal().array() += m.ridge;
    }
    const Matrix rhs = xc.transpose() * zc;
    m.coef = gram.ldlt().solve(rhs).transpose();
    m.intercept = mz.transpose() - m.coef * mx.transpose();
    if (n > 0 && !m.coef.allFinite()) throw NumericalError("VAR(1) fit produced non-finite coefficients");
    return m;
}

/// Iterated VAR(1) forecasts over rows [t_train, T), fitted on rows [0, t_train).
inline std::vector<ForecastSet> baseline_var1(const Matrix& y, Eigen::Index t_train, const std::vector<int>& leads,
                                              Var1Model* fitted = nullptr) {
    detail::check_leads(leads, t_train, y.rows());
    const auto model = fit_var1(y.topRows(t_train));
    if (fitted) *fitted = model;
    std::vector<ForecastSet> out;
    for (int a : leads) {
        auto fs = detail::empty_set(a, t_train, y);
        for (Eigen::Index j = 0; j < fs.point.rows(); ++j) {
            Vector v = y.row(fs.origins[static_cast<std::size_t>(j)]).transpose();
            for (int s = 0; s < a; ++s) v = model.step(v);
            fs.point.row(j) = v.transpose();
        }
        out.push_back(std::move(fs));
    }
    return out;
}

// ---------------------------------------------------------------- scoring

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw ArgumentError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct MspeSummary {
    /// Mean over all cells.
    double mean = 0.0;
    /// Median and interquartile range of the per-time-step MSPE.
    double median = 0.0;
    double iqr = 0.0;
    std::vector<double> per_step;
};

inline MspeSummary score_mspe(const Matrix& forecast, const Matrix& truth) {
    if (forecast.rows() != truth.rows() || forecast.cols() != truth.cols()) {
        throw ShapeError("forecast and truth panels must have the same shape");
    }
    if (forecast.size() == 0) throw ShapeError("cannot score an empty panel");
    MspeSummary s;
    const Matrix e2 = (forecast - truth).array().square().matrix();
    s.mean = e2.mean();
    for (Eigen::Index t = 0; t < e2.rows(); ++t) s.per_step.push_back(e2.row(t).mean());
    s.median = median(s.per_step);
    s.iqr = quantile(s.per_step, 0.75) - quantile(s.per_step, 0.25);
    return s;
}

// ---------------------------------------------------------------- knot selectors

enum class KnotMethod { sp, grid, rand, sf };

inline KnotMethod knot_method_from_string(const std::string& s) {
    if (s == "sp") return KnotMethod::sp;
    if (s == "grid") return KnotMethod::grid;
    if (s == "rand") return KnotMethod::rand;
    if (s == "sf") return KnotMethod::sf;
    throw ConfigError("unknown knot method '" + s + "' (expected sp, grid, rand or sf)");
}

inline std::string to_string(KnotMethod m) {
    switch (m) {
        case KnotMethod::sp: return "SP";
        case KnotMethod::grid: return "Grid";
        case KnotMethod::rand: return "Rand";
        case KnotMethod::sf: return "SF";
    }
    return "?";
}

namespace detail {

inline void check_reduction(const LocationTable& data, std::size_t n_red) {
    if (n_red < 1 || n_red > data.size()) {
        throw ArgumentError("reduced size must lie in [1, " + std::to_string(data.size()) + "]");
    }
}

inline knots::KnotSet finish(const LocationTable& data, std::vector<std::size_t> idx) {
    knots::KnotSet k;
    k.indices = std::move(idx);
    for (auto i : k.indices) k.continuous.push_back(data[i]);
    k.energy = knots::energy_distance(k.continuous, data);
    k.converged = true;
    return k;
}

}  // namespace detail

/// Nearest distinct data points to the cell centres of a ceil(sqrt(n_red))-per-side lattice over
/// the bounding box; surplus lattice points are dropped evenly when the square exceeds n_red.
inline knots::KnotSet grid_knots(const LocationTable& data, std::size_t n_red) {
    detail::check_reduction(data, n_red);
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_red)) - 1e-12));
    const auto& c = data.coords();
    double x0 = c[0].x, x1 = c[0].x, y0 = c[0].y, y1 = c[0].y;
    for (const auto& p : c) {
        x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    std::vector<Point> lattice;
    for (std::size_t j = 0; j < side; ++j) {
        for (std::size_t i = 0; i < side; ++i) {
            lattice.push_back({x0 + (x1 - x0) * (static_cast<double>(i) + 0.5) / static_cast<double>(side),
                               y0 + (y1 - y0) * (static_cast<double>(j) + 0.5) / static_cast<double>(side)});
        }
    }
    if (lattice.size() > n_red) {
        std::vector<Point> kept;
        for (std::size_t k = 0; k < n_red; ++k) kept.push_back(lattice[k * lattice.size() / n_red]);
        lattice = std::move(kept);
    }
    return detail::finish(data, knots::snap_to_data(lattice, data));
}

/// Uniform sample without replacement, returned in sampled order.
inline knots::KnotSet random_knots(const LocationTable& data, std::size_t n_red, std::uint64_t seed) {
    detail::check_reduction(data, n_red);
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t k = 0; k < n_red; ++k) std::swap(idx[k], idx[k + uniform_index(rng, idx.size() - k)]);
    idx.resize(n_red);
    return detail::finish(data, std::move(idx));
}

/// Greedy maximin (farthest-point) design started from a random data point.
inline knots::KnotSet space_filling_knots(const LocationTable& data, std::size_t n_red, std::uint64_t seed) {
    detail::check_reduction(data, n_red);
    Rng rng(seed);
    const std::size_t n = data.size();
    std::vector<double> gap(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> idx{uniform_index(rng, n)};
    while (idx.size() < n_red) {
        const Point& last = data[idx.back()];
        std::size_t best = 0;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            gap[i] = std::min(gap[i], distance(data[i], last));
            if (gap[i] > best_gap) best_gap = gap[i], best = i;
        }
        idx.push_back(best);
    }
    return detail::finish(data, std::move(idx));
}

inline knots::KnotSet select_knots(KnotMethod method, const LocationTable& data, std::size_t n_red, std::uint64_t seed,
                                   const knots::SupportOptions& sp = {}) {
    switch (method) {
        case KnotMethod::sp: return knots::support_points(data, n_red, seed, sp);
        case KnotMethod::grid: return grid_knots(data, n_red);
        case KnotMethod::rand: return random_knots(data, n_red, seed);
        case KnotMethod::sf: return space_filling_knots(data, n_red, seed);
    }
    throw ArgumentError("unknown knot method");
}

}  // namespace windcast::simbench
