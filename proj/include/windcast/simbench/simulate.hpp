#pragma once

// Synthetic data for the benchmark studies: preferential spatial sampling schemes, the
// bi-resolution Gaussian field, and the Lorenz-96 system.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/random.hpp"
#include "windcast/field_store.hpp"

namespace windcast::simbench {

// ---------------------------------------------------------------- Matern

/// Matern correlation with range beta and smoothness nu; closed forms for half-integers.
inline double matern_correlation(double d, double beta, double nu) {
    if (!(beta > 0.0) || !(nu > 0.0)) throw ArgumentError("Matern range and smoothness must be positive");
    if (d <= 0.0) return 1.0;
    const double r = d / beta;
    if (nu == 0.5) return std::exp(-r);
    if (nu == 1.5) return (1.0 + r) * std::exp(-r);
    if (nu == 2.5) return (1.0 + r + r * r / 3.0) * std::exp(-r);
    if (r > 700.0) return 0.0;
    return std::pow(r, nu) * std::cyl_bessel_k(nu, r) / (std::pow(2.0, nu - 1.0) * std::tgamma(nu));
}

inline Matrix matern_matrix(const std::vector<Point>& pts, double beta, double nu) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Matrix c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        c(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            c(i, j) = c(j, i) = matern_correlation(distance(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]), beta, nu);
        }
    }
    return c;
}

/// One draw from N(0, corr); a small diagonal jitter keeps near-singular kernels factorizable.
inline Vector gaussian_draw(const Matrix& corr, Rng& rng) {
    Matrix c = corr;
    Eigen::LLT<Matrix> llt;
    for (double jitter = 0.0; jitter <= 1e-4; jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0) {
        if (jitter > 0.0) c.diagonal().array() += jitter;
        llt.compute(c);
        if (llt.info() == Eigen::Success) break;
    }
    if (llt.info() != Eigen::Success) throw NumericalError("correlation matrix is not positive definite");
    Vector w(corr.rows());
    for (auto& v : w) v = standard_normal(rng);
    return llt.matrixL() * w;
}

// ---------------------------------------------------------------- sampling schemes

enum class Scheme { chessboard, ray };

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "chessboard") return Scheme::chessboard;
    if (s == "ray") return Scheme::ray;
    throw ConfigError("unknown sampling scheme '" + s + "' (expected chessboard or ray)");
}

inline std::string to_string(Scheme s) { return s == Scheme::chessboard ? "chessboard" : "ray"; }

/// Chessboard: 4 x 4 blocks, the dense ones where column + row is even.
inline bool chessboard_dense(const Point& p) {
    const int bx = std::min(3, static_cast<int>(p.x * 4.0));
    const int by = std::min(3, static_cast<int>(p.y * 4.0));
    return (bx + by) % 2 == 0;
}

struct SchemeOptions {
    /// Dense-to-sparse sampling odds for the chessboard.
    double odds = 9.0;
    /// Ray: side lengths of the nested squares anchored at the origin corner.
    std::array<double, 3> ray_sides{0.25, 0.5, 1.0};
};

/// Index of the nested ray region containing p (0 = smallest square).
inline int ray_region(const Point& p, const std::array<double, 3>& sides) {
    const double m = std::max(p.x, p.y);
    for (int k = 0; k < 3; ++k) {
        if (m < sides[static_cast<std::size_t>(k)]) return k;
    }
    return 2;
}

inline LocationTable sample_scheme(Scheme scheme, std::size_t n, std::uint64_t seed, const SchemeOptions& opt = {}) {
    if (n < 1) throw ArgumentError("location count must be positive");
    Rng rng(seed);
    std::vector<Point> pts;
    pts.reserve(n);
    if (scheme == Scheme::chessboard) {
        if (!(opt.odds > 0.0)) throw ArgumentError("sampling odds must be positive");
        const double p_dense = opt.odds / (opt.odds + 1.0);
        std::vector<std::array<int, 2>> dense, sparse;
        for (int bx = 0; bx < 4; ++bx) {
            for (int by = 0; by < 4; ++by) ((bx + by) % 2 == 0 ? dense : sparse).push_back({bx, by});
        }
        while (pts.size() < n) {
            const auto& pool = uniform01(rng) < p_dense ? dense : sparse;
            const auto b = pool[uniform_index(rng, pool.size())];
            pts.push_back({(b[0] + uniform01(rng)) / 4.0, (b[1] + uniform01(rng)) / 4.0});
        }
    } else {
        const auto& s = opt.ray_sides;
        if (!(s[0] > 0.0 && s[0] < s[1] && s[1] < s[2] && s[2] <= 1.0)) {
            throw ArgumentError("ray sides must be increasing within (0, 1]");
        }
        for (int k = 0; k < 3; ++k) {
            // Equal counts per region; the remainder goes to the smallest regions first.
            const std::size_t count = n / 3 + (static_cast<std::size_t>(k) < n % 3 ? 1 : 0);
            const double side = s[static_cast<std::size_t>(k)];
            const double inner = k == 0 ? 0.0 : s[static_cast<std::size_t>(k - 1)];
            for (std::size_t c = 0; c < count;) {
                const Point p{side * uniform01(rng), side * uniform01(rng)};
                if (std::max(p.x, p.y) < inner) continue;
                pts.push_back(p);
                ++c;
            }
        }
    }
    return LocationTable(std::move(pts));
}

// ---------------------------------------------------------------- bi-resolution field

struct BiResolutionSpec {
    std::size_t n = 3200;
    Scheme scheme = Scheme::chessboard;
    /// Local-effect weight per quadrant block (lower-left, lower-right, upper-left, upper-right).
    std::array<double, 4> omega{0.70, 0.6, 0.9, 0.55};
    double loc_range = 0.1, loc_smoothness = 0.5;
    double reg_range = 0.03, reg_smoothness = 1.0;
    SchemeOptions sampling{};

    void validate() const {
        for (double w : omega) {
            if (!(w >= 0.0 && w <= 1.0)) throw ArgumentError("block weights must lie in [0, 1]");
        }
        if (!(loc_range > 0.0 && reg_range > 0.0 && loc_smoothness > 0.0 && reg_smoothness > 0.0)) {
            throw ArgumentError("Matern parameters must be positive");
        }
        if (n > 5000) {
            throw ArgumentError("bi-resolution simulation builds a dense covariance; n = " + std::to_string(n) +
                                " exceeds 5000, reduce the location count");
        }
    }
};

inline int quadrant(const Point& p) { return (p.x >= 0.5 ? 1 : 0) + (p.y >= 0.5 ? 2 : 0); }

struct BiResolutionSample {
    LocationTable locations;
    Vector local;
    /// Regional effect expanded to locations (constant within each block).
    Vector regional;
    Vector value;
};

inline BiResolutionSample simulate_biresolution_parts(const BiResolutionSpec& spec, std::uint64_t seed) {
    spec.validate();
    BiResolutionSample s;
    s.locations = sample_scheme(spec.scheme, spec.n, split_seed(seed, "locations"), spec.sampling);
    Rng rng(split_seed(seed, "field"));
    s.local = gaussian_draw(matern_matrix(s.locations.coords(), spec.loc_range, spec.loc_smoothness), rng);
    const std::vector<Point> centres{{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
    const Vector block = gaussian_draw(matern_matrix(centres, spec.reg_range, spec.reg_smoothness), rng);
    const auto n = static_cast<Eigen::Index>(spec.n);
    s.regional.resize(n);
    s.value.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int q = quadrant(s.locations[static_cast<std::size_t>(i)]);
        const double w = spec.omega[static_cast<std::size_t>(q)];
        s.regional(i) = block(q);
        s.value(i) = w * s.local(i) + (1.0 - w) * s.regional(i);
    }
    return s;
}

/// Single-snapshot field Y = Omega H_loc + (I - Omega) H_reg.
inline SpaceTimeField simulate_biresolution(const BiResolutionSpec& spec, std::uint64_t seed) {
    auto s = simulate_biresolution_parts(spec, seed);
    return SpaceTimeField(Matrix(s.value.transpose()), std::move(s.locations));
}

// ---------------------------------------------------------------- Lorenz-96

struct Lorenz96Spec {
    Eigen::Index n = 81;
    double forcing = 4.5;
    /// RK4 step in model time units.
    double dt = 0.01;
    /// RK4 steps per recorded time point.
    int thin = 10;
    /// Recorded time points.
    Eigen::Index steps = 1000;
    /// Recorded time points discarded before the first kept one.
    Eigen::Index transient = 500;
    Eigen::Index train = 800;
    /// Standard deviation of the initial perturbation around the forcing value.
    double perturbation = 1.0;

    void validate() const {
        if (n < 4) throw ArgumentError("Lorenz-96 needs at least 4 variables");
        if (!(dt > 0.0)) throw ArgumentError("step size must be positive");
        if (thin < 1) throw ArgumentError("thinning must be at least 1");
        if (steps < 2) throw ArgumentError("need at least two time points");
        if (train < 1 || train >= steps) throw ArgumentError("train split must lie inside the series");
        if (transient < 0) throw ArgumentError("transient must be non-negative");
    }
};

inline Vector lorenz96_rhs(const Vector& y, double forcing) {
    const auto n = y.size();
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ip1 = y((i + 1) % n), im1 = y((i + n - 1) % n), im2 = y((i + n - 2) % n);
        d(i) = (ip1 - im2) * im1 - y(i) + forcing;
    }
    return d;
}

inline void rk4_step(Vector& y, double forcing, double h) {
    const Vector k1 = lorenz96_rhs(y, forcing);
    const Vector k2 = lorenz96_rhs(y + 0.5 * h * k1, forcing);
    const Vector k3 = lorenz96_rhs(y + 0.5 * h * k2, forcing);
    const Vector k4 = lorenz96_rhs(y + h * k3, forcing);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Advances `steps` RK4 steps; throws on blow-up.
inline Vector integrate_lorenz96(Vector y, double forcing, double h, long steps) {
    for (long s = 0; s < steps; ++s) {
        rk4_step(y, forcing, h);
        if (!(y.cwiseAbs().maxCoeff() <= 1e6)) throw NumericalError("Lorenz-96 integration blew up at step " + std::to_string(s + 1));
    }
    return y;
}

/// Recorded trajectory (steps x n) after the transient, one row per thinned time point.
inline SpaceTimeField simulate_lorenz96(const Lorenz96Spec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Vector y = Vector::Constant(spec.n, spec.forcing);
    for (auto& v : y) v += spec.perturbation * standard_normal(rng);
    y = integrate_lorenz96(std::move(y), spec.forcing, spec.dt, static_cast<long>(spec.transient) * spec.thin);
    Matrix out(spec.steps, spec.n);
    for (Eigen::Index t = 0; t < spec.steps; ++t) {
        out.row(t) = y.transpose();
        y = integrate_lorenz96(std::move(y), spec.forcing, spec.dt, spec.thin);
    }
    return SpaceTimeField(std::move(out), LocationTable::unplaced(static_cast<std::size_t>(spec.n)), 0.0,
                          spec.dt * spec.thin);
}

/// Mean absolute off-diagonal correlation between columns.
inline double mean_abs_correlation(const Matrix& y) {
    const Matrix c = y.rowwise() - y.colwise().mean();
    const Vector sd = c.colwise().norm();
    const Matrix corr = (c.transpose() * c).array() / (sd * sd.transpose()).array();
    const auto n = corr.rows();
    return (corr.cwiseAbs().sum() - corr.diagonal().cwiseAbs().sum()) / static_cast<double>(n * (n - 1));
}

// ---------------------------------------------------------------- synthetic wind

/// Hourly wind-speed panel for pipeline demos and smoke runs: a spatially varying diurnal cycle
/// on the square-root scale plus a space-time AR(1) anomaly with Matern spatial structure.
struct WindSpec {
    std::size_t locations = 200;
    Eigen::Index steps = 1500;
    /// Anomaly persistence per hour.
    double persistence = 0.85;
    double range = 0.25;
    double smoothness = 1.5;
    /// Typical square-root speed (sqrt(m/s)) and its spatial spread.
    double root_mean = 2.3;
    double root_spread = 0.3;
    double diurnal = 0.25;
    /// Anomaly scale on the square-root scale.
    double anomaly = 0.35;

    void validate() const {
        if (locations < 2) throw ArgumentError("synthetic wind needs at least two locations");
        if (locations > 5000) throw ArgumentError("synthetic wind builds a dense covariance; use at most 5000 locations");
        if (steps < 10) throw ArgumentError("synthetic wind needs at least 10 steps");
        if (!(persistence >= 0.0 && persistence < 1.0)) throw ArgumentError("persistence must lie in [0, 1)");
        if (!(range > 0.0 && smoothness > 0.0 && anomaly >= 0.0)) throw ArgumentError("invalid anomaly parameters");
    }
};

inline SpaceTimeField simulate_wind(const WindSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(split_seed(seed, "wind-locations"));
    std::vector<Point> pts;
    while (pts.size() < spec.locations) pts.push_back({uniform01(rng), uniform01(rng)});
    LocationTable locs(pts);

    const auto n = static_cast<Eigen::Index>(spec.locations);
    Matrix c = matern_matrix(pts, spec.range, spec.smoothness);
    c.diagonal().array() += 1e-8;
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() != Eigen::Success) throw NumericalError("wind anomaly covariance is not positive definite");
    const Matrix L = llt.matrixL();

    Rng field(split_seed(seed, "wind-field"));
    Vector base(n), amp(n), phase(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = pts[static_cast<std::size_t>(i)];
        base(i) = spec.root_mean + spec.root_spread * (p.x - 0.5) + 0.1 * spec.root_spread * standard_normal(field);
        amp(i) = spec.diurnal * (0.75 + 0.5 * p.y);
        phase(i) = 2.0 * std::numbers::pi * (14.0 + 2.0 * p.x) / 24.0;
    }
    const double innov = std::sqrt(1.0 - spec.persistence * spec.persistence);
    Vector w(n);
    for (auto& v : w) v = standard_normal(field);
    Vector anomaly = L * w;
    Matrix z(spec.steps, n);
    for (Eigen::Index t = 0; t < spec.steps; ++t) {
        for (auto& v : w) v = standard_normal(field);
        anomaly = spec.persistence * anomaly + innov * (L * w);
        const double hour = 2.0 * std::numbers::pi * static_cast<double>(t) / 24.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double root = base(i) + amp(i) * std::cos(hour - phase(i)) + spec.anomaly * anomaly(i);
            z(t, i) = root > 0.0 ? root * root : 0.0;
        }
    }
    return SpaceTimeField(std::move(z), std::move(locs));
}

}  // namespace windcast::simbench
