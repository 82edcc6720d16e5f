#pragma once

// Deep echo state network with a quadratic ridge readout.
//
// Layer d keeps a state h_d that leaks towards tanh(scale_d W_d h_d + W_in_d u_d), where
// u_1 is the lagged input vector and u_d (d > 1) is the PCA-reduced state of layer d-1.
// The readout regresses the target on [1, k(r), k(r * r)] where r stacks the top-layer state
// with the reduced states of the lower layers and k() standardizes with training statistics.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <tuple>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/parallel.hpp"
#include "windcast/core/random.hpp"
#include "windcast/field_store.hpp"

namespace windcast::reservoir {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct LayerParams {
    Eigen::Index n_h = 2500;
    /// Retained principal components when this layer feeds the next one.
    Eigen::Index n_reduced = 2500;
    double nu = 0.9;
    double eta_w = 0.05;
    double eta_in = 0.01;
    double pi_w = 0.1;
    double pi_in = 0.01;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct EsnHyperParams {
    std::vector<LayerParams> layers{LayerParams{}};
    int m = 1;
    int tau = 1;
    double alpha = 1.0;
    double lambda = 0.15;
    int batch = 75;
    int ensemble = 1;
    /// Leading steps discarded before fitting; the effective value is max(burn_in, m * tau).
    int burn_in = 50;

    int depth() const { return static_cast<int>(layers.size()); }
    int washout() const { return std::max(burn_in, m * tau); }

    void validate() const {
        if (layers.empty()) throw ArgumentError("ESN depth must be at least 1");
        for (std::size_t d = 0; d < layers.size(); ++d) {
            const auto& l = layers[d];
            const auto where = " (layer " + std::to_string(d + 1) + ")";
            if (l.n_h < 1) throw ArgumentError("n_h must be positive" + where);
            if (d + 1 < layers.size() && (l.n_reduced < 1 || l.n_reduced > l.n_h)) {
                throw ArgumentError("reduced dimension must lie in [1, n_h]" + where);
            }
            if (!(l.pi_w >= 0.0 && l.pi_w <= 1.0)) throw ArgumentError("pi_w must lie in [0, 1]" + where);
            if (!(l.pi_in >= 0.0 && l.pi_in <= 1.0)) throw ArgumentError("pi_in must lie in [0, 1]" + where);
            if (!(l.eta_w > 0.0) || !(l.eta_in > 0.0)) throw ArgumentError("weight widths must be positive" + where);
            if (!(l.nu > 0.0)) throw ArgumentError("nu must be positive" + where);
        }
        if (m < 0) throw ArgumentError("input lag count m must be non-negative");
        if (tau < 1) throw ArgumentError("lead stride tau must be at least 1");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("leaking rate alpha must lie in (0, 1]");
        if (!(lambda >= 0.0)) throw ArgumentError("ridge penalty must be non-negative");
        if (batch < 1) throw ArgumentError("batch window b must be at least 1");
        if (ensemble < 1) throw ArgumentError("ensemble size must be at least 1");
        if (burn_in < 0) throw ArgumentError("burn-in must be non-negative");
    }

    friend bool operator==(const EsnHyperParams&, const EsnHyperParams&) = default;
};

struct Pca {
    Vector mean;
    /// n_h x r, orthonormal columns ordered by decreasing variance.
    Matrix loadings;

    Vector reduce(const Vector& h) const { return loadings.transpose() * (h - mean); }
};

/// Per-coordinate location-scale standardization; zero-variance coordinates pass through.
struct Standardizer {
    Vector mean;
    Vector scale;

    Vector apply(const Vector& v) const { return (v - mean).cwiseQuotient(scale); }
};

struct Layer {
    SparseMatrix w;
    SparseMatrix w_in;
    /// Magnitude of the dominant eigenvalue of w (1 when w is all zero).
    double radius = 1.0;
    /// nu / radius.
    double scale = 0.0;
};

struct EsnMember {
    std::uint64_t seed = 0;
    std::vector<Layer> layers;
    /// One reducer per layer except the top one.
    std::vector<Pca> reducers;
    Standardizer linear;
    Standardizer quadratic;
    /// (1 + 2 r) x n_out readout; row 0 is the intercept.
    Matrix readout;
    std::vector<std::string> warnings;
};

struct EsnModel {
    EsnHyperParams hp;
    std::uint64_t seed = 0;
    Eigen::Index n_out = 0;
    std::vector<EsnMember> members;
};

/// Reservoir state for all layers at one time step.
struct LayerState {
    std::vector<Vector> h;
};

// ---------------------------------------------------------------- weights

inline SparseMatrix sparse_uniform(Eigen::Index rows, Eigen::Index cols, double density, double width, Rng& rng) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(density * static_cast<double>(rows) * static_cast<double>(cols) * 1.1) + 16);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (uniform01(rng) < density) trips.emplace_back(i, j, uniform(rng, -width, width));
        }
    }
    SparseMatrix m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

/// Dense eigen-decomposition up to this size; power iteration above it.
inline constexpr Eigen::Index exact_radius_limit = 400;

/// Magnitude of the dominant eigenvalue. Power iteration on a real non-symmetric matrix does
/// not settle when the dominant eigenvalues form a complex pair, so the large-matrix branch
/// measures the asymptotic growth rate ||W^k v||^(1/k) instead of a Rayleigh quotient.
inline double spectral_radius(const SparseMatrix& w, std::uint64_t seed, int max_iter = 200, double rel_tol = 1e-10) {
    const Eigen::Index n = w.rows();
    if (w.nonZeros() == 0) return 0.0;
    if (n <= exact_radius_limit) {
        Eigen::EigenSolver<Matrix> es(Matrix(w), false);
        if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed for a reservoir matrix");
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
    Rng rng(seed);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = standard_normal(rng);
    v.normalize();
    double log_growth = 0.0;
    double estimate = 0.0;
    const int warm = max_iter / 4;
    for (int k = 1; k <= max_iter; ++k) {
        Vector next = w * v;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        v = next / norm;
        if (k <= warm) continue;
        log_growth += std::log(norm);
        const double updated = std::exp(log_growth / static_cast<double>(k - warm));
        if (k > warm + 10 && std::abs(updated - estimate) <= rel_tol * updated) return updated;
        estimate = updated;
    }
    return estimate;
}

/// Draws every layer's transition and input matrices from `seed`.
inline EsnMember generate_weights(const EsnHyperParams& hp, Eigen::Index n_in, std::uint64_t seed) {
    hp.validate();
    EsnMember member;
    member.seed = seed;
    for (int d = 0; d < hp.depth(); ++d) {
        const auto& lp = hp.layers[static_cast<std::size_t>(d)];
        const Eigen::Index in_dim = d == 0 ? n_in : hp.layers[static_cast<std::size_t>(d - 1)].n_reduced;
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(d)));
        Layer layer;
        layer.w = sparse_uniform(lp.n_h, lp.n_h, lp.pi_w, lp.eta_w, rng);
        layer.w_in = sparse_uniform(lp.n_h, in_dim, lp.pi_in, lp.eta_in, rng);
        const double r = spectral_radius(layer.w, split_seed(seed, 1000 + static_cast<std::uint64_t>(d)));
        if (r <= 0.0) {
            layer.radius = 1.0;
            member.warnings.push_back("layer " + std::to_string(d + 1) +
                                      ": transition matrix has no non-zero eigenvalue, spectral scaling disabled");
        } else {
            layer.radius = r;
        }
        layer.scale = lp.nu / layer.radius;
        member.layers.push_back(std::move(layer));
    }
    return member;
}

// ---------------------------------------------------------------- recursion

inline LayerState zero_state(const EsnHyperParams& hp) {
    LayerState s;
    for (const auto& l : hp.layers) s.h.push_back(Vector::Zero(l.n_h));
    return s;
}

/// Lagged input x_t = (Y_{t-tau}, ..., Y_{t-m tau}); lags before the series start are zero.
/// `lookup(s)` returns the row for time s.
template <class Lookup>
Vector lagged_input(Eigen::Index t, int m, int tau, Eigen::Index n_out, Lookup&& lookup) {
    Vector x(static_cast<Eigen::Index>(m) * n_out);
    for (int j = 1; j <= m; ++j) {
        const Eigen::Index s = t - static_cast<Eigen::Index>(j) * tau;
        auto seg = x.segment(static_cast<Eigen::Index>(j - 1) * n_out, n_out);
        if (s < 0) {
            seg.setZero();
        } else {
            seg = lookup(s);
        }
    }
    return x;
}

inline Vector lagged_input(const Matrix& y, Eigen::Index t, int m, int tau) {
    return lagged_input(t, m, tau, y.cols(), [&](Eigen::Index s) -> Vector { return y.row(s).transpose(); });
}

/// Advances layers [0, upto) by one step. Layers above the first need their input reducer.
inline void step(const EsnMember& member, const EsnHyperParams& hp, LayerState& state, const Vector& x,
                 int upto = -1) {
    const int depth = upto < 0 ? hp.depth() : upto;
    Vector input = x;
    for (int d = 0; d < depth; ++d) {
        const auto& layer = member.layers[static_cast<std::size_t>(d)];
        auto& h = state.h[static_cast<std::size_t>(d)];
        if (input.size() != layer.w_in.cols()) {
            throw ShapeError("layer " + std::to_string(d + 1) + " expects input dimension " +
                             std::to_string(layer.w_in.cols()) + ", got " + std::to_string(input.size()));
        }
        Vector pre = layer.scale * (layer.w * h);
        if (layer.w_in.cols() > 0) pre.noalias() += layer.w_in * input;
        const Vector omega = pre.array().tanh().matrix();
        if (hp.alpha == 1.0) {
            h = omega;
        } else {
            h = (1.0 - hp.alpha) * h + hp.alpha * omega;
        }
        if (d + 1 < depth) input = member.reducers[static_cast<std::size_t>(d)].reduce(h);
    }
}

/// Raw stacked vector r = (h_D, h~_{D-1}, ..., h~_1).
inline Vector stacked(const EsnMember& member, const EsnHyperParams& hp, const LayerState& state) {
    const int D = hp.depth();
    Eigen::Index len = hp.layers.back().n_h;
    for (int d = 0; d + 1 < D; ++d) len += hp.layers[static_cast<std::size_t>(d)].n_reduced;
    Vector r(len);
    r.head(hp.layers.back().n_h) = state.h.back();
    Eigen::Index off = hp.layers.back().n_h;
    for (int d = D - 2; d >= 0; --d) {
        const auto& pca = member.reducers[static_cast<std::size_t>(d)];
        r.segment(off, pca.loadings.cols()) = pca.reduce(state.h[static_cast<std::size_t>(d)]);
        off += pca.loadings.cols();
    }
    return r;
}

/// Readout regressors [1, k(r), k(r * r)].
inline Vector features(const EsnMember& member, const EsnHyperParams& hp, const LayerState& state) {
    const Vector r = stacked(member, hp, state);
    Vector f(1 + 2 * r.size());
    f(0) = 1.0;
    f.segment(1, r.size()) = member.linear.apply(r);
    f.segment(1 + r.size(), r.size()) = member.quadratic.apply(r.cwiseProduct(r));
    return f;
}

/// Raw per-layer state trajectories (T x n_h each) driven by `inputs` (T x input dim) from h0.
inline std::vector<Matrix> run_layer_states(const EsnMember& member, const EsnHyperParams& hp, const Matrix& inputs,
                                            LayerState h0) {
    if (h0.h.size() != static_cast<std::size_t>(hp.depth())) throw ShapeError("initial state depth mismatch");
    std::vector<Matrix> out;
    for (const auto& l : hp.layers) out.emplace_back(inputs.rows(), l.n_h);
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        step(member, hp, h0, inputs.row(t).transpose());
        for (int d = 0; d < hp.depth(); ++d) out[static_cast<std::size_t>(d)].row(t) = h0.h[static_cast<std::size_t>(d)].transpose();
    }
    return out;
}

struct StateTrajectory {
    /// T x (1 + 2 r) standardized regressors; row t belongs to time t.
    Matrix features;
};

/// Standardized regressors for every time step of the series `y` (inputs built from lags of y).
inline StateTrajectory run_states(const EsnMember& member, const EsnHyperParams& hp, const Matrix& y) {
    LayerState s = zero_state(hp);
    StateTrajectory traj;
    const Eigen::Index p = member.readout.rows() > 0 ? member.readout.rows()
                                                     : 1 + 2 * member.linear.mean.size();
    traj.features.resize(y.rows(), p);
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        step(member, hp, s, lagged_input(y, t, hp.m, hp.tau));
        traj.features.row(t) = features(member, hp, s).transpose();
    }
    return traj;
}

// ---------------------------------------------------------------- readout

namespace detail {

/// Solves (G + lambda I) B = R with a Cholesky factorization.
inline Matrix solve_normal(Matrix gram, const Matrix& rhs, double lambda) {
    gram.diagonal().array() += lambda;
    if (lambda > 0.0) {
        Eigen::LLT<Matrix> llt(gram);
        if (llt.info() == Eigen::Success) return llt.solve(rhs);
    }
    Eigen::LDLT<Matrix> ldlt(gram);
    const Vector d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    const double dmin = d.minCoeff();
    if (ldlt.info() != Eigen::Success || !(dmin > 1e-12 * std::max(dmax, 1e-300))) {
        throw NumericalError("ridge normal equations are singular (smallest pivot " + std::to_string(dmin) +
                             " vs largest " + std::to_string(dmax) + "); use a ridge penalty lambda > 0");
    }
    return ldlt.solve(rhs);
}

}  // namespace detail

/// (H'H + lambda I)^{-1} H'Y.
inline Matrix fit_readout(const Matrix& h, const Matrix& y, double lambda) {
    if (h.rows() != y.rows()) {
        throw ShapeError("regressor and target rows differ: " + std::to_string(h.rows()) + " vs " + std::to_string(y.rows()));
    }
    if (!(lambda >= 0.0)) throw ArgumentError("ridge penalty must be non-negative");
    Matrix gram = Matrix::Zero(h.cols(), h.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose());
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    return detail::solve_normal(std::move(gram), h.transpose() * y, lambda);
}

/// Streaming H'H / H'Y accumulator with row blocking.
class GramAccumulator {
public:
    GramAccumulator(Eigen::Index p, Eigen::Index q, Eigen::Index block = 256)
        : gram_(Matrix::Zero(p, p)), cross_(Matrix::Zero(p, q)), hbuf_(block, p), ybuf_(block, q) {}

    void add(const Vector& f, const Vector& y) {
        hbuf_.row(fill_) = f.transpose();
        ybuf_.row(fill_) = y.transpose();
        if (++fill_ == hbuf_.rows()) flush();
        ++rows_;
    }

    void flush() {
        if (fill_ == 0) return;
        const auto h = hbuf_.topRows(fill_);
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose());
        cross_.noalias() += h.transpose() * ybuf_.topRows(fill_);
        fill_ = 0;
    }

    Matrix solve(double lambda) {
        flush();
        Matrix g = gram_;
        g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
        return detail::solve_normal(std::move(g), cross_, lambda);
    }

    Eigen::Index rows() const { return rows_; }

private:
    Matrix gram_;
    Matrix cross_;
    Matrix hbuf_;
    Matrix ybuf_;
    Eigen::Index fill_ = 0;
    Eigen::Index rows_ = 0;
};

// ---------------------------------------------------------------- fitting

namespace detail {

struct Moments {
    Vector sum;
    Vector sq;
    Eigen::Index n = 0;
    Vector m;

    explicit Moments(Eigen::Index p) : sum(Vector::Zero(p)), sq(Vector::Zero(p)), m(Vector::Zero(p)) {}

    // Welford update.
    void add(const Vector& v) {
        ++n;
        const Vector delta = v - m;
        m += delta / static_cast<double>(n);
        sq += delta.cwiseProduct(v - m);
    }

    Standardizer finish() const {
        Standardizer s;
        s.mean = m;
        s.scale.resize(m.size());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double sd = n > 1 ? std::sqrt(sq(i) / static_cast<double>(n - 1)) : 0.0;
            if (sd > 1e-10 * std::max(1.0, std::abs(m(i)))) {
                s.scale(i) = sd;
            } else {
                s.mean(i) = 0.0;
                s.scale(i) = 1.0;
            }
        }
        return s;
    }
};

inline Pca fit_pca(const Matrix& states, Eigen::Index r) {
    Pca pca;
    pca.mean = states.colwise().mean().transpose();
    const Matrix centered = states.rowwise() - pca.mean.transpose();
    Matrix cov = Matrix::Zero(states.cols(), states.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition failed");
    pca.loadings.resize(states.cols(), r);
    for (Eigen::Index k = 0; k < r; ++k) {
        Vector v = es.eigenvectors().col(states.cols() - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        pca.loadings.col(k) = v;
    }
    return pca;
}

inline void check_series(const Matrix& y) {
    if (!y.allFinite()) throw ArgumentError("ESN input series contains non-finite or masked values");
}

}  // namespace detail

/// Fits PCA reducers, standardization and readout for one member on the training rows of `y`.
inline void fit_member(EsnMember& member, const EsnHyperParams& hp, const Matrix& y) {
    const Eigen::Index T = y.rows();
    const Eigen::Index burn = hp.washout();
    if (T - burn < 2) {
        throw ArgumentError("training series of length " + std::to_string(T) + " is too short for a washout of " +
                            std::to_string(burn) + " steps");
    }
    const int D = hp.depth();
    member.reducers.clear();
    // Reducers are fitted bottom-up: layer d's PCA needs the layers below it already fixed.
    for (int d = 0; d + 1 < D; ++d) {
        LayerState s = zero_state(hp);
        Matrix states(T - burn, hp.layers[static_cast<std::size_t>(d)].n_h);
        for (Eigen::Index t = 0; t < T; ++t) {
            step(member, hp, s, lagged_input(y, t, hp.m, hp.tau), d + 1);
            if (t >= burn) states.row(t - burn) = s.h[static_cast<std::size_t>(d)].transpose();
        }
        member.reducers.push_back(detail::fit_pca(states, hp.layers[static_cast<std::size_t>(d)].n_reduced));
    }

    Eigen::Index r_dim = hp.layers.back().n_h;
    for (int d = 0; d + 1 < D; ++d) r_dim += hp.layers[static_cast<std::size_t>(d)].n_reduced;
    detail::Moments lin(r_dim), quad(r_dim);
    {
        LayerState s = zero_state(hp);
        for (Eigen::Index t = 0; t < T; ++t) {
            step(member, hp, s, lagged_input(y, t, hp.m, hp.tau));
            if (t < burn) continue;
            const Vector r = stacked(member, hp, s);
            lin.add(r);
            quad.add(r.cwiseProduct(r));
        }
    }
    member.linear = lin.finish();
    member.quadratic = quad.finish();

    GramAccumulator acc(1 + 2 * r_dim, y.cols());
    LayerState s = zero_state(hp);
    for (Eigen::Index t = 0; t < T; ++t) {
        step(member, hp, s, lagged_input(y, t, hp.m, hp.tau));
        if (t >= burn) acc.add(features(member, hp, s), y.row(t).transpose());
    }
    member.readout = acc.solve(hp.lambda);
}

/// Draws and fits every ensemble member. Member k uses sub-seed split_seed(seed, k).
inline EsnModel fit_esn(const Matrix& y_train, const EsnHyperParams& hp, std::uint64_t seed,
                        unsigned threads = worker_count()) {
    hp.validate();
    detail::check_series(y_train);
    EsnModel model;
    model.hp = hp;
    model.seed = seed;
    model.n_out = y_train.cols();
    model.members.resize(static_cast<std::size_t>(hp.ensemble));
    parallel_for(model.members.size(), [&](std::size_t k) {
        auto member = generate_weights(hp, static_cast<Eigen::Index>(hp.m) * y_train.cols(), split_seed(seed, k));
        fit_member(member, hp, y_train);
        model.members[k] = std::move(member);
    }, threads);
    return model;
}

// ---------------------------------------------------------------- forecasting

struct ForecastRequest {
    std::vector<int> leads{1, 2, 3};
    /// Batch window; 0 keeps the fitted readout for the whole test period.
    int batch = 0;
};

namespace detail {

/// Rolling forecasts for one member. Result [lead index] is test_len x n_out where row j
/// predicts y(t_train + j) from data up to t_train + j - lead.
inline std::vector<Matrix> member_forecasts(const EsnMember& member, const EsnHyperParams& hp, const Matrix& y,
                                            Eigen::Index t_train, const std::vector<int>& leads, int batch) {
    const Eigen::Index T = y.rows();
    const Eigen::Index n = y.cols();
    const Eigen::Index test_len = T - t_train;
    const int max_lead = *std::max_element(leads.begin(), leads.end());
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < leads.size(); ++k) out.emplace_back(test_len, n);

    const bool batched = batch > 0;
    const Eigen::Index burn = hp.washout();
    std::unique_ptr<GramAccumulator> acc;
    if (batched) acc = std::make_unique<GramAccumulator>(member.readout.rows(), n);
    Matrix readout = member.readout;
    Eigen::Index version = 0;

    LayerState s = zero_state(hp);
    Vector prev_features;
    std::vector<Vector> preds(static_cast<std::size_t>(max_lead) + 1);
    // Invariant at the top of iteration t: s holds h_{t-1}; rows < t have been added to acc
    // when batched and not yet in the test period.
    for (Eigen::Index t = 0; t < T; ++t) {
        step(member, hp, s, lagged_input(y, t, hp.m, hp.tau));
        const Vector f = features(member, hp, s);
        const Eigen::Index origin = t - 1;

        if (batched && t - 1 >= burn && t - 1 >= 0) {
            acc->add(prev_features, y.row(t - 1).transpose());
        }
        prev_features = f;

        if (origin < t_train - max_lead || origin > T - 2) continue;
        if (batched) {
            const Eigen::Index since = std::max<Eigen::Index>(0, origin - (t_train - 1));
            const Eigen::Index v = since / batch;
            if (v > version) {
                readout = acc->solve(hp.lambda);
                version = v;
            }
        }
        // Branch from the true state h_{origin+1}, feeding predictions back as inputs.
        LayerState branch = s;
        preds[1] = readout.transpose() * f;
        for (int a = 2; a <= max_lead && origin + a < T; ++a) {
            const Eigen::Index target = origin + a;
            auto lookup = [&](Eigen::Index q) -> Vector {
                return q <= origin ? Vector(y.row(q).transpose()) : preds[static_cast<std::size_t>(q - origin)];
            };
            step(member, hp, branch, lagged_input(target, hp.m, hp.tau, n, lookup));
            preds[static_cast<std::size_t>(a)] = readout.transpose() * features(member, hp, branch);
        }
        for (std::size_t k = 0; k < leads.size(); ++k) {
            const Eigen::Index target = origin + leads[k];
            if (target < t_train || target >= T) continue;
            out[k].row(target - t_train) = preds[static_cast<std::size_t>(leads[k])].transpose();
        }
    }
    return out;
}

}  // namespace detail

/// Rolling multi-lead forecasts over rows [t_train, T) of `y`. One ForecastSet per lead;
/// `point` is the ensemble mean and `ensemble` holds each member's forecasts.
inline std::vector<ForecastSet> forecast(const EsnModel& model, const Matrix& y, Eigen::Index t_train,
                                         const ForecastRequest& req = {}, unsigned threads = worker_count()) {
    detail::check_series(y);
    if (y.cols() != model.n_out) {
        throw ShapeError("forecast series has " + std::to_string(y.cols()) + " columns, model expects " +
                         std::to_string(model.n_out));
    }
    if (req.leads.empty()) throw ArgumentError("at least one lead is required");
    for (int a : req.leads) {
        if (a < 1) throw ArgumentError("leads must be positive");
    }
    if (req.batch < 0) throw ArgumentError("batch window must be positive");
    const int max_lead = *std::max_element(req.leads.begin(), req.leads.end());
    const Eigen::Index need = std::max<Eigen::Index>(static_cast<Eigen::Index>(model.hp.m) * model.hp.tau, max_lead);
    if (t_train < need || t_train < 1) {
        throw ArgumentError("forecasting needs at least " + std::to_string(need) + " history steps, got " +
                            std::to_string(t_train));
    }
    if (t_train >= y.rows()) throw ArgumentError("no test rows after the history");

    std::vector<std::vector<Matrix>> per_member(model.members.size());
    parallel_for(model.members.size(), [&](std::size_t k) {
        per_member[k] = detail::member_forecasts(model.members[k], model.hp, y, t_train, req.leads, req.batch);
    }, threads);

    std::vector<ForecastSet> sets;
    for (std::size_t li = 0; li < req.leads.size(); ++li) {
        ForecastSet fs;
        fs.lead = req.leads[li];
        for (Eigen::Index j = 0; j < y.rows() - t_train; ++j) fs.origins.push_back(t_train + j - fs.lead);
        fs.point = Matrix::Zero(y.rows() - t_train, y.cols());
        for (const auto& m : per_member) {
            fs.ensemble.push_back(m[li]);
            fs.point += m[li];
        }
        fs.point /= static_cast<double>(per_member.size());
        sets.push_back(std::move(fs));
    }
    return sets;
}

inline std::vector<ForecastSet> forecast_batched(const EsnModel& model, const Matrix& y, Eigen::Index t_train,
                                                 std::vector<int> leads, int b, unsigned threads = worker_count()) {
    if (b < 1) throw ArgumentError("batch window b must be at least 1");
    return forecast(model, y, t_train, ForecastRequest{std::move(leads), b}, threads);
}

// ---------------------------------------------------------------- tuning

struct TuneResult {
    EsnHyperParams best;
    double best_mspe = std::numeric_limits<double>::infinity();
    std::vector<double> mspe;
};

/// Validation MSPE averaged over leads for each grid point. Ties prefer the smaller top-layer
/// width, then the smaller m.
inline TuneResult tune(const std::vector<EsnHyperParams>& grid, const Matrix& train, const Matrix& validation,
                       std::uint64_t seed, const std::vector<int>& leads = {1}, unsigned threads = worker_count()) {
    if (grid.empty()) throw ArgumentError("tuning grid is empty");
    if (train.cols() != validation.cols()) throw ShapeError("training and validation series differ in width");
    Matrix all(train.rows() + validation.rows(), train.cols());
    all << train, validation;
    TuneResult res;
    res.mspe.assign(grid.size(), 0.0);
    parallel_for(grid.size(), [&](std::size_t g) {
        const auto model = fit_esn(train, grid[g], seed, 1);
        const auto sets = forecast(model, all, train.rows(), ForecastRequest{leads, 0}, 1);
        double total = 0.0;
        for (const auto& fs : sets) total += (fs.point - validation).squaredNorm() / static_cast<double>(validation.size());
        res.mspe[g] = total / static_cast<double>(sets.size());
    }, threads);
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        const auto key = [&](std::size_t i) {
            return std::tuple(res.mspe[i], grid[i].layers.back().n_h, grid[i].m);
        };
        if (key(g) < key(best)) best = g;
    }
    res.best = grid[best];
    res.best_mspe = res.mspe[best];
    return res;
}

}  // namespace windcast::reservoir
