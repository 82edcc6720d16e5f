#pragma once

// Non-stationary SPDE / GMRF spatial model:
//   log tau(s) and log kappa(s) are Fourier-basis expansions evaluated at mesh vertices,
//   z ~ N(0, Q^{-1}) on the mesh, observations y = A z + e with e ~ N(0, sigma2 I).
// Parameters are MAP estimates (N(0,1) prior on the non-intercept coefficients) found with a
// bounded Nelder-Mead search.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/random.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/spde/fem.hpp"
#include "windcast/spde/mesh.hpp"

namespace windcast::spde {

/// Tensor-product Fourier basis over a rectangle: {1, cos(2 pi k u), sin(2 pi k u)}_{k<=p} in
/// each coordinate, u scaled to [0, 1] over the rectangle. Function 0 is the constant.
struct FourierBasis {
    double x0 = 0.0, y0 = 0.0, lx = 1.0, ly = 1.0;
    int order = 0;

    Eigen::Index size() const { return (2 * order + 1) * (2 * order + 1); }

    static Vector univariate(double u, int order) {
        Vector v(2 * order + 1);
        v(0) = 1.0;
        for (int k = 1; k <= order; ++k) {
            const double w = 2.0 * std::numbers::pi * k * u;
            v(2 * k - 1) = std::cos(w);
            v(2 * k) = std::sin(w);
        }
        return v;
    }

    Matrix evaluate(const std::vector<Point>& pts) const {
        const Eigen::Index q = 2 * order + 1;
        Matrix out(static_cast<Eigen::Index>(pts.size()), size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Vector bx = univariate((pts[i].x - x0) / lx, order);
            const Vector by = univariate((pts[i].y - y0) / ly, order);
            for (Eigen::Index a = 0; a < q; ++a) {
                for (Eigen::Index b = 0; b < q; ++b) out(static_cast<Eigen::Index>(i), a * q + b) = bx(a) * by(b);
            }
        }
        return out;
    }
};

inline FourierBasis basis_for(const Mesh& mesh, int order) {
    if (order < 0) throw ArgumentError("basis order must be non-negative");
    FourierBasis b;
    const auto box = detail::bounds(mesh.vertices);
    b.x0 = box.xmin;
    b.y0 = box.ymin;
    b.lx = std::max(box.width(), 1e-12);
    b.ly = std::max(box.height(), 1e-12);
    b.order = order;
    return b;
}

struct SpdeParams {
    int alpha = 2;
    /// Coefficients of log tau and log kappa on the basis; entry 0 is the intercept.
    Vector theta_tau;
    Vector theta_kappa;
    double sigma2 = 1.0;
};

struct SpdeModel {
    Mesh mesh;
    FemMatrices fem;
    FourierBasis basis;
    /// Basis functions evaluated at the vertices (m x basis size).
    Matrix basis_values;
    SpdeParams params;
    SparseMatrix precision;
    /// False when the optimizer stopped at its evaluation budget.
    bool converged = true;
    int evaluations = 0;
    double objective = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;

    Vector log_tau() const { return basis_values * params.theta_tau; }
    Vector log_kappa() const { return basis_values * params.theta_kappa; }
};

inline SparseMatrix precision_for(const FemMatrices& fem, const Matrix& basis_values, const SpdeParams& p) {
    const Vector kappa2 = (2.0 * (basis_values * p.theta_kappa)).array().exp().matrix();
    const Vector tau = (basis_values * p.theta_tau).array().exp().matrix();
    return assemble_precision(fem, kappa2, tau, p.alpha);
}

/// Assembles a model for fixed parameters.
inline SpdeModel make_model(Mesh mesh, int order, SpdeParams params) {
    SpdeModel m;
    m.mesh = std::move(mesh);
    m.fem = assemble_fem(m.mesh);
    m.basis = basis_for(m.mesh, order);
    m.basis_values = m.basis.evaluate(m.mesh.vertices);
    if (params.theta_tau.size() != m.basis.size() || params.theta_kappa.size() != m.basis.size()) {
        throw ShapeError("parameter vectors must have " + std::to_string(m.basis.size()) + " basis coefficients");
    }
    if (!(params.sigma2 > 0.0)) throw ArgumentError("noise variance must be positive");
    m.params = std::move(params);
    m.precision = precision_for(m.fem, m.basis_values, m.params);
    return m;
}

/// Stationary parameters (intercepts only) for a given basis order.
inline SpdeParams stationary_params(int order, double kappa, double tau, double sigma2, int alpha = 2) {
    const Eigen::Index nb = (2 * order + 1) * (2 * order + 1);
    SpdeParams p;
    p.alpha = alpha;
    p.theta_tau = Vector::Zero(nb);
    p.theta_kappa = Vector::Zero(nb);
    p.theta_tau(0) = std::log(tau);
    p.theta_kappa(0) = std::log(kappa);
    p.sigma2 = sigma2;
    return p;
}

/// Sparse Cholesky that reuses its symbolic analysis while the sparsity pattern is unchanged.
class SparseCholesky {
public:
    void factor(const SparseMatrix& q, const std::string& what) {
        if (!analyzed_ || q.nonZeros() != nnz_ || q.rows() != rows_) {
            llt_.analyzePattern(q);
            analyzed_ = true;
            nnz_ = q.nonZeros();
            rows_ = q.rows();
        }
        llt_.factorize(q);
        if (llt_.info() != Eigen::Success) {
            Eigen::SimplicialLDLT<SparseMatrix> ldlt(q);
            const double pivot = ldlt.info() == Eigen::Success ? ldlt.vectorD().minCoeff()
                                                               : -std::numeric_limits<double>::infinity();
            throw NumericalError(what + " is not positive definite (smallest pivot " + text::format_double(pivot) + ")");
        }
    }

    double log_det() const {
        const SparseMatrix& l = llt_.matrixL();
        double s = 0.0;
        for (Eigen::Index k = 0; k < l.outerSize(); ++k) s += std::log(l.coeff(k, k));
        return 2.0 * s;
    }

    template <class Rhs>
    Matrix solve(const Rhs& b) const {
        return llt_.solve(b);
    }

    /// Maps iid standard normal columns to draws with covariance Q^{-1}.
    Matrix sample(const Matrix& white) const {
        const Matrix x = llt_.matrixU().solve(white);
        return llt_.permutationPinv() * x;
    }

private:
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
    bool analyzed_ = false;
    Eigen::Index nnz_ = -1;
    Eigen::Index rows_ = -1;
};

/// Log marginal likelihood of snapshots y (n x L, one column per snapshot) under
/// y = A z + e. Uses |A Q^{-1} A' + s I| = |Q_post| |Q|^{-1} s^n and the Woodbury identity.
struct LikelihoodWorkspace {
    SparseCholesky prior;
    SparseCholesky post;
};

inline double log_likelihood(const SparseMatrix& q, const SparseMatrix& a, const Matrix& y, double sigma2,
                             LikelihoodWorkspace& ws) {
    const auto n = static_cast<double>(a.rows());
    const auto L = static_cast<double>(y.cols());
    ws.prior.factor(q, "prior precision");
    SparseMatrix at = a.transpose();
    SparseMatrix qpost = q + (at * a) / sigma2;
    qpost.makeCompressed();
    ws.post.factor(qpost, "posterior precision");
    const double log_det_sigma = ws.post.log_det() - ws.prior.log_det() + n * std::log(sigma2);
    const Matrix b = (at * y) / sigma2;
    const Matrix mu = ws.post.solve(b);
    const double quad = y.squaredNorm() / sigma2 - (b.array() * mu.array()).sum();
    return -0.5 * (L * (n * std::log(2.0 * std::numbers::pi) + log_det_sigma) + quad);
}

struct FitOptions {
    int order = 0;
    int alpha = 2;
    int max_evaluations = 3000;
    /// Nelder-Mead simplex size at which the search stops.
    double tol = 1e-5;
    double sigma2_floor = 1e-8;
};

namespace detail {

struct Objective {
    const SpdeModel* model;
    const SparseMatrix* a;
    const Matrix* y;
    Vector lo, hi;
    Eigen::Index nb;
    int alpha;
    LikelihoodWorkspace ws;
    int evaluations = 0;
    double best = std::numeric_limits<double>::infinity();
    Vector best_x;

    SpdeParams unpack(const Vector& x) const {
        SpdeParams p;
        p.alpha = alpha;
        p.theta_tau = x.head(nb);
        p.theta_kappa = x.segment(nb, nb);
        p.sigma2 = std::exp(x(2 * nb));
        return p;
    }

    double operator()(const Vector& raw) {
        ++evaluations;
        const Vector x = raw.cwiseMax(lo).cwiseMin(hi);
        const double outside = (raw - x).squaredNorm();
        const auto p = unpack(x);
        double value;
        try {
            const SparseMatrix q = precision_for(model->fem, model->basis_values, p);
            value = -log_likelihood(q, *a, *y, p.sigma2, ws);
            double prior = 0.0;
            for (Eigen::Index k = 1; k < nb; ++k) prior += p.theta_tau(k) * p.theta_tau(k) + p.theta_kappa(k) * p.theta_kappa(k);
            value += 0.5 * prior;
        } catch (const NumericalError&) {
            value = std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(value)) return 1e300;
        if (value < best) {
            best = value;
            best_x = x;
        }
        return value + 1e3 * outside;
    }
};

inline double gsl_trampoline(const gsl_vector* v, void* self) {
    auto* obj = static_cast<Objective*>(self);
    Vector x(static_cast<Eigen::Index>(v->size));
    for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Eigen::Index>(i)) = gsl_vector_get(v, i);
    return (*obj)(x);
}

}  // namespace detail

/// MAP fit of the SPDE parameters to snapshots observed at `knots` (rows = snapshots).
inline SpdeModel fit_spde(const Mesh& mesh, const LocationTable& knots, const Matrix& snapshots,
                          const FitOptions& opt = {}) {
    if (snapshots.rows() < 1) throw ArgumentError("SPDE fit needs at least one snapshot");
    if (snapshots.cols() != static_cast<Eigen::Index>(knots.size())) {
        throw ShapeError("snapshots have " + std::to_string(snapshots.cols()) + " columns but there are " +
                         std::to_string(knots.size()) + " knots");
    }
    if (!snapshots.allFinite()) throw ArgumentError("SPDE snapshots contain non-finite values");
    if (opt.alpha != 1 && opt.alpha != 2) throw ArgumentError("alpha must be 1 or 2");

    SpdeModel model;
    model.mesh = mesh;
    model.fem = assemble_fem(model.mesh);
    model.basis = basis_for(model.mesh, opt.order);
    model.basis_values = model.basis.evaluate(model.mesh.vertices);
    const SparseMatrix a = projection_matrix(model.mesh, knots);
    const Matrix y = snapshots.transpose();
    const Eigen::Index nb = model.basis.size();

    // Starting point: practical range a fifth of the knot-cloud diameter, marginal variance
    // splitting the data variance 80/20 between field and noise.
    const auto kbox = detail::bounds(knots.coords());
    const double diam = std::max(std::hypot(kbox.width(), kbox.height()), 1e-9);
    const double var = y.squaredNorm() / static_cast<double>(y.size());
    const double v = var > 0.0 ? var : 1.0;
    const double kappa0 = std::sqrt(8.0) / (0.2 * diam);
    const double tau0 = 1.0 / std::sqrt(4.0 * std::numbers::pi * kappa0 * kappa0 * 0.8 * v);
    Vector x0 = Vector::Zero(2 * nb + 1);
    x0(0) = std::log(tau0);
    x0(nb) = std::log(kappa0);
    x0(2 * nb) = std::log(std::max(0.2 * v, opt.sigma2_floor));

    detail::Objective obj{&model, &a, &y, Vector::Constant(2 * nb + 1, -5.0), Vector::Constant(2 * nb + 1, 5.0), nb,
                          opt.alpha, {}, 0, std::numeric_limits<double>::infinity(), x0};
    obj.lo(0) = x0(0) - 10.0;
    obj.hi(0) = x0(0) + 10.0;
    obj.lo(nb) = std::log(kappa0) - 6.0;
    obj.hi(nb) = std::log(kappa0) + 6.0;
    obj.lo(2 * nb) = std::log(opt.sigma2_floor);
    obj.hi(2 * nb) = std::log(10.0 * v);

    const std::size_t dim = static_cast<std::size_t>(2 * nb + 1);
    gsl_set_error_handler_off();
    gsl_multimin_function fn{&detail::gsl_trampoline, dim, &obj};
    gsl_vector* start = gsl_vector_alloc(dim);
    gsl_vector* step = gsl_vector_alloc(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        gsl_vector_set(start, i, x0(static_cast<Eigen::Index>(i)));
        const bool intercept = i == 0 || i == static_cast<std::size_t>(nb) || i == dim - 1;
        gsl_vector_set(step, i, intercept ? 0.7 : 0.3);
    }
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
    gsl_multimin_fminimizer_set(s, &fn, start, step);
    bool converged = false;
    // Restart once from the best point so a collapsed simplex gets a fresh shape.
    for (int round = 0; round < 2 && obj.evaluations < opt.max_evaluations; ++round) {
        if (round > 0) {
            for (std::size_t i = 0; i < dim; ++i) gsl_vector_set(start, i, obj.best_x(static_cast<Eigen::Index>(i)));
            gsl_multimin_fminimizer_set(s, &fn, start, step);
        }
        converged = false;
        while (obj.evaluations < opt.max_evaluations) {
            if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.tol) == GSL_SUCCESS) {
                converged = true;
                break;
            }
        }
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(start);
    gsl_vector_free(step);

    if (!std::isfinite(obj.best)) throw NumericalError("SPDE likelihood could not be evaluated at any parameter value");
    model.params = obj.unpack(obj.best_x);
    model.precision = precision_for(model.fem, model.basis_values, model.params);
    model.converged = converged;
    model.evaluations = obj.evaluations;
    model.objective = obj.best;
    if (!converged) {
        model.warnings.push_back("SPDE optimizer stopped after " + std::to_string(obj.evaluations) +
                                 " evaluations without meeting the tolerance; returning the best iterate");
    }
    return model;
}

/// Posterior of the latent field given observations at fixed knot locations. One
/// factorization serves every snapshot and every target set.
class Posterior {
public:
    Posterior(const SpdeModel& model, const LocationTable& knots)
        : model_(model), a_(projection_matrix(model.mesh, knots)) {
        SparseMatrix at = a_.transpose();
        SparseMatrix qpost = model.precision + (at * a_) / model.params.sigma2;
        qpost.makeCompressed();
        chol_.factor(qpost, "posterior precision");
    }

    /// Posterior means at the mesh vertices; values is T x n_knots, result is m x T.
    Matrix vertex_mean(const Matrix& values) const {
        if (values.cols() != a_.rows()) {
            throw ShapeError("expected " + std::to_string(a_.rows()) + " knot values per snapshot, got " +
                             std::to_string(values.cols()));
        }
        const Matrix b = (a_.transpose() * values.transpose()) / model_.params.sigma2;
        return chol_.solve(b);
    }

    /// T x n_targets posterior means.
    Matrix mean(const Matrix& values, const SparseMatrix& a_targets) const {
        return (a_targets * vertex_mean(values)).transpose();
    }

    /// A_t Q_post^{-1} A_t'.
    Matrix covariance(const SparseMatrix& a_targets) const {
        const Matrix rhs = Matrix(a_targets.transpose());
        const Matrix x = chol_.solve(rhs);
        Matrix c = a_targets * x;
        return 0.5 * (c + c.transpose());
    }

    const SparseMatrix& knot_projection() const { return a_; }

private:
    const SpdeModel& model_;
    SparseMatrix a_;
    SparseCholesky chol_;
};

/// Posterior mean at `targets` for every snapshot row of `values` (T x n_knots -> T x n_targets).
inline Matrix interpolate(const SpdeModel& model, const LocationTable& knots, const Matrix& values,
                          const LocationTable& targets) {
    Posterior post(model, knots);
    return post.mean(values, projection_matrix(model.mesh, targets));
}

inline Matrix posterior_covariance(const SpdeModel& model, const LocationTable& knots, const LocationTable& targets) {
    Posterior post(model, knots);
    return post.covariance(projection_matrix(model.mesh, targets));
}

/// Model-implied covariance of observations at `targets`: A Q^{-1} A' (+ sigma2 I).
inline Matrix prior_covariance(const SpdeModel& model, const LocationTable& targets, bool with_noise = true) {
    const SparseMatrix a = projection_matrix(model.mesh, targets);
    SparseCholesky chol;
    chol.factor(model.precision, "prior precision");
    const Matrix x = chol.solve(Matrix(a.transpose()));
    Matrix c = a * x;
    c = (0.5 * (c + c.transpose())).eval();
    if (with_noise) c.diagonal().array() += model.params.sigma2;
    return c;
}

/// Prior draws of the latent field at the vertices (m x count).
inline Matrix sample_prior(const SpdeModel& model, Eigen::Index count, Rng& rng) {
    SparseCholesky chol;
    chol.factor(model.precision, "prior precision");
    Matrix w(model.precision.rows(), count);
    for (Eigen::Index j = 0; j < count; ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = standard_normal(rng);
    }
    return chol.sample(w);
}

/// Marginal variances (diagonal of Q^{-1}) at the requested vertices.
inline Vector vertex_variances(const SpdeModel& model, const std::vector<std::size_t>& vertices) {
    SparseCholesky chol;
    chol.factor(model.precision, "prior precision");
    Matrix e = Matrix::Zero(model.precision.rows(), static_cast<Eigen::Index>(vertices.size()));
    for (std::size_t k = 0; k < vertices.size(); ++k) e(static_cast<Eigen::Index>(vertices[k]), static_cast<Eigen::Index>(k)) = 1.0;
    const Matrix x = chol.solve(e);
    Vector v(static_cast<Eigen::Index>(vertices.size()));
    for (std::size_t k = 0; k < vertices.size(); ++k) v(static_cast<Eigen::Index>(k)) = x(static_cast<Eigen::Index>(vertices[k]), static_cast<Eigen::Index>(k));
    return v;
}

// ---------------------------------------------------------------- serialization

inline nlohmann::json params_json(const SpdeModel& m) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"alpha", m.params.alpha},
            {"order", m.basis.order},
            {"theta_tau", vec(m.params.theta_tau)},
            {"theta_kappa", vec(m.params.theta_kappa)},
            {"sigma2", m.params.sigma2},
            {"basis_box", {m.basis.x0, m.basis.y0, m.basis.lx, m.basis.ly}},
            {"converged", m.converged},
            {"evaluations", m.evaluations},
            {"objective", std::isfinite(m.objective) ? nlohmann::json(m.objective) : nlohmann::json(nullptr)},
            {"warnings", m.warnings}};
}

namespace detail {

inline constexpr char spde_magic[8] = {'W', 'C', 'S', 'P', 'D', 'E', '0', '1'};

inline void put64(std::string& b, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) b.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}

inline std::uint64_t get64(const std::string& b, std::size_t& pos, const std::string& where) {
    if (pos + 8 > b.size()) throw SchemaError(where + ": truncated SPDE model container");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + static_cast<std::size_t>(k)])) << (8 * k);
    pos += 8;
    return v;
}

}  // namespace detail

/// Container: magic | u64 json length | json | u64 m, m x (f64 x, f64 y) | u64 t, t x 3 u64 |
/// u64 nnz, nnz x (u64 row, u64 col, f64 value) for the precision.
inline std::string encode_spde(const SpdeModel& m) {
    std::string b(detail::spde_magic, 8);
    const std::string js = params_json(m).dump();
    detail::put64(b, js.size());
    b += js;
    detail::put64(b, m.mesh.size());
    for (const auto& p : m.mesh.vertices) {
        detail::put64(b, std::bit_cast<std::uint64_t>(p.x));
        detail::put64(b, std::bit_cast<std::uint64_t>(p.y));
    }
    detail::put64(b, m.mesh.triangles.size());
    for (const auto& t : m.mesh.triangles) {
        for (auto v : t) detail::put64(b, v);
    }
    detail::put64(b, static_cast<std::uint64_t>(m.precision.nonZeros()));
    for (Eigen::Index k = 0; k < m.precision.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m.precision, k); it; ++it) {
            detail::put64(b, static_cast<std::uint64_t>(it.row()));
            detail::put64(b, static_cast<std::uint64_t>(it.col()));
            detail::put64(b, std::bit_cast<std::uint64_t>(it.value()));
        }
    }
    return b;
}

inline SpdeModel decode_spde(const std::string& b, const std::string& where = "<spde>") {
    if (b.size() < 16 || b.compare(0, 8, std::string(detail::spde_magic, 8)) != 0) {
        throw SchemaError(where + ": not an SPDE model container");
    }
    std::size_t pos = 8;
    const auto len = detail::get64(b, pos, where);
    if (pos + len > b.size()) throw SchemaError(where + ": truncated SPDE header");
    nlohmann::json js;
    SpdeParams p;
    int order = 0;
    try {
        js = nlohmann::json::parse(b.substr(pos, len));
        p.alpha = js.at("alpha").get<int>();
        order = js.at("order").get<int>();
        const auto tt = js.at("theta_tau").get<std::vector<double>>();
        const auto tk = js.at("theta_kappa").get<std::vector<double>>();
        p.theta_tau = Eigen::Map<const Vector>(tt.data(), static_cast<Eigen::Index>(tt.size()));
        p.theta_kappa = Eigen::Map<const Vector>(tk.data(), static_cast<Eigen::Index>(tk.size()));
        p.sigma2 = js.at("sigma2").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(where + ": bad SPDE header: " + e.what());
    }
    pos += len;
    Mesh mesh;
    const auto m = detail::get64(b, pos, where);
    for (std::uint64_t i = 0; i < m; ++i) {
        const double x = std::bit_cast<double>(detail::get64(b, pos, where));
        const double y = std::bit_cast<double>(detail::get64(b, pos, where));
        mesh.vertices.push_back({x, y});
    }
    const auto nt = detail::get64(b, pos, where);
    for (std::uint64_t i = 0; i < nt; ++i) {
        Triangle t{};
        for (auto& v : t) {
            v = detail::get64(b, pos, where);
            if (v >= m) throw SchemaError(where + ": triangle vertex out of range");
        }
        mesh.triangles.push_back(t);
    }
    mesh.boundary = detail::boundary_flags(mesh.size(), mesh.triangles);
    const auto nnz = detail::get64(b, pos, where);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::uint64_t i = 0; i < nnz; ++i) {
        const auto r = static_cast<Eigen::Index>(detail::get64(b, pos, where));
        const auto c = static_cast<Eigen::Index>(detail::get64(b, pos, where));
        const double v = std::bit_cast<double>(detail::get64(b, pos, where));
        if (r >= static_cast<Eigen::Index>(m) || c >= static_cast<Eigen::Index>(m)) throw SchemaError(where + ": precision index out of range");
        trips.emplace_back(r, c, v);
    }
    if (pos != b.size()) throw SchemaError(where + ": trailing bytes after SPDE model");
    auto model = make_model(std::move(mesh), order, p);
    SparseMatrix stored(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    stored.setFromTriplets(trips.begin(), trips.end());
    stored.makeCompressed();
    model.precision = std::move(stored);
    model.converged = js.value("converged", true);
    model.evaluations = js.value("evaluations", 0);
    if (js.contains("objective") && js["objective"].is_number()) model.objective = js["objective"].get<double>();
    model.warnings = js.value("warnings", std::vector<std::string>{});
    return model;
}

inline void write_spde(const SpdeModel& m, const std::filesystem::path& path) {
    auto out = text::open_output(path, true);
    const auto bytes = encode_spde(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    text::check_written(out, path);
}

inline SpdeModel read_spde(const std::filesystem::path& path) { return decode_spde(text::read_all(path), path.string()); }

}  // namespace windcast::spde
