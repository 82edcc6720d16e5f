#include <gtest/gtest.h>

#include "windcast/core/random.hpp"
#include "windcast/reservoir.hpp"

using namespace windcast;
using namespace windcast::reservoir;

namespace {

EsnHyperParams small_hp(Eigen::Index n_h = 40, int m = 1) {
    EsnHyperParams hp;
    hp.layers = {LayerParams{n_h, n_h, 0.9, 0.5, 0.5, 0.2, 0.5}};
    hp.m = m;
    hp.lambda = 1e-3;
    hp.burn_in = 20;
    return hp;
}

Matrix ar1_series(Eigen::Index T, Eigen::Index n, double phi, std::uint64_t seed) {
    Rng rng(seed);
    Matrix y(T, n);
    y.row(0).setZero();
    for (Eigen::Index t = 1; t < T; ++t)
        for (Eigen::Index i = 0; i < n; ++i) y(t, i) = phi * y(t - 1, i) + std::sqrt(1 - phi * phi) * standard_normal(rng);
    return y;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
    return m;
}

}  // namespace

TEST(Reservoir, DefaultsAreTheSelectedConfiguration) {
    const EsnHyperParams hp;
    ASSERT_EQ(hp.depth(), 1);
    EXPECT_EQ(hp.layers[0].n_h, 2500);
    EXPECT_EQ(hp.m, 1);
    EXPECT_DOUBLE_EQ(hp.layers[0].nu, 0.9);
    EXPECT_DOUBLE_EQ(hp.lambda, 0.15);
    EXPECT_DOUBLE_EQ(hp.layers[0].eta_w, 0.05);
    EXPECT_DOUBLE_EQ(hp.layers[0].eta_in, 0.01);
    EXPECT_DOUBLE_EQ(hp.layers[0].pi_w, 0.1);
    EXPECT_DOUBLE_EQ(hp.layers[0].pi_in, 0.01);
    EXPECT_DOUBLE_EQ(hp.alpha, 1.0);
    EXPECT_EQ(hp.batch, 75);
    EXPECT_EQ(hp.tau, 1);
}

TEST(Reservoir, SparsityFractionAndEntryRange) {
    Rng rng(5);
    const auto w = sparse_uniform(500, 500, 0.1, 0.05, rng);
    const double frac = static_cast<double>(w.nonZeros()) / 250000.0;
    EXPECT_NEAR(frac, 0.1, 0.01);
    for (Eigen::Index k = 0; k < w.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(w, k); it; ++it) {
            EXPECT_GT(it.value(), -0.05);
            EXPECT_LT(it.value(), 0.05);
            EXPECT_NE(it.value(), 0.0);
        }
}

TEST(Reservoir, ZeroDensityFallsBackWithWarning) {
    auto hp = small_hp();
    hp.layers[0].pi_w = 0.0;
    const auto member = generate_weights(hp, 3, 1);
    EXPECT_EQ(member.layers[0].w.nonZeros(), 0);
    EXPECT_EQ(member.layers[0].radius, 1.0);
    EXPECT_EQ(member.warnings.size(), 1u);
}

TEST(Reservoir, SpectralScalingInvariant) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto hp = small_hp(60 + static_cast<Eigen::Index>(seed) * 30);
        hp.layers[0].nu = 0.3 + 0.07 * static_cast<double>(seed);
        const auto member = generate_weights(hp, 4, seed);
        const Matrix eff = member.layers[0].scale * Matrix(member.layers[0].w);
        const double rho = Eigen::EigenSolver<Matrix>(eff, false).eigenvalues().cwiseAbs().maxCoeff();
        EXPECT_LE(rho, hp.layers[0].nu * (1 + 1e-6));
        EXPECT_NEAR(rho, hp.layers[0].nu, 1e-9);
    }
}

TEST(Reservoir, GrowthRateEstimateTracksExactRadiusAboveDenseLimit) {
    Rng rng(17);
    const auto w = sparse_uniform(600, 600, 0.05, 1.0, rng);
    const double exact = Eigen::EigenSolver<Matrix>(Matrix(w), false).eigenvalues().cwiseAbs().maxCoeff();
    const double est = spectral_radius(w, 3);
    EXPECT_NEAR(est / exact, 1.0, 0.05);
}

TEST(Reservoir, RecursionMatchesScalarLoop) {
    for (double alpha : {1.0, 0.6}) {
        auto hp = small_hp(3);
        hp.alpha = alpha;
        hp.layers[0].pi_w = 1.0;
        hp.layers[0].pi_in = 1.0;
        const auto member = generate_weights(hp, 2, 42);
        Rng rng(1);
        const Matrix x = random_matrix(5, 2, rng);
        const auto states = run_layer_states(member, hp, x, zero_state(hp));

        const Matrix W(member.layers[0].w), Win(member.layers[0].w_in);
        const double c = member.layers[0].scale;
        double h[3] = {0, 0, 0};
        for (int t = 0; t < 5; ++t) {
            double nh[3];
            for (int i = 0; i < 3; ++i) {
                double a = 0.0;
                for (int j = 0; j < 3; ++j) a += c * W(i, j) * h[j];
                for (int j = 0; j < 2; ++j) a += Win(i, j) * x(t, j);
                nh[i] = (1 - alpha) * h[i] + alpha * std::tanh(a);
            }
            for (int i = 0; i < 3; ++i) {
                h[i] = nh[i];
                EXPECT_NEAR(states[0](t, i), h[i], 1e-12);
            }
        }
    }
}

TEST(Reservoir, ZeroWeightsKeepZeroState) {
    auto hp = small_hp(10);
    auto member = generate_weights(hp, 2, 3);
    member.layers[0].w.setZero();
    member.layers[0].w_in.setZero();
    Rng rng(2);
    const auto states = run_layer_states(member, hp, random_matrix(20, 2, rng), zero_state(hp));
    EXPECT_EQ(states[0].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Reservoir, InputDimensionMismatchIsShapeError) {
    auto hp = small_hp(10);
    const auto member = generate_weights(hp, 2, 3);
    EXPECT_THROW(run_layer_states(member, hp, Matrix::Zero(4, 3), zero_state(hp)), ShapeError);
}

TEST(Reservoir, RidgeHandSolveAndOrthonormal) {
    Matrix h(2, 2);
    h << 1, 0, 0, 2;
    Matrix y(2, 1);
    y << 1, 2;
    const Matrix b = fit_readout(h, y, 1.0);
    EXPECT_NEAR(b(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(b(1, 0), 0.8, 1e-15);

    Rng rng(4);
    const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(30, 6, rng)).householderQ() * Matrix::Identity(30, 6);
    const Matrix yy = random_matrix(30, 3, rng);
    EXPECT_LT((fit_readout(q, yy, 0.0) - q.transpose() * yy).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reservoir, RidgeMatchesExplicitInverseAndSatisfiesNormalEquations) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix h = random_matrix(50, 20, rng);
        const Matrix y = random_matrix(50, 4, rng);
        const double lambda = uniform(rng, 0.0, 2.0);
        const Matrix b = fit_readout(h, y, lambda);
        const Matrix g = h.transpose() * h + lambda * Matrix::Identity(20, 20);
        const Matrix oracle = g.inverse() * h.transpose() * y;
        EXPECT_LT((b - oracle).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((g * b - h.transpose() * y).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Reservoir, UnpenalizedRankDeficientRidgeFails) {
    Matrix h(10, 3);
    Rng rng(2);
    h.leftCols(2) = random_matrix(10, 2, rng);
    h.col(2) = h.col(0) + h.col(1);
    EXPECT_THROW(fit_readout(h, Matrix::Ones(10, 1), 0.0), NumericalError);
    EXPECT_NO_THROW(fit_readout(h, Matrix::Ones(10, 1), 0.1));
    EXPECT_THROW(fit_readout(h, Matrix::Ones(9, 1), 0.1), ShapeError);
}

TEST(Reservoir, TrainingFeaturesAreStandardized) {
    const Matrix y = ar1_series(300, 5, 0.8, 3);
    auto hp = small_hp(30);
    const auto model = fit_esn(y, hp, 9);
    const auto traj = run_states(model.members[0], hp, y);
    const Matrix f = traj.features.bottomRows(300 - hp.washout()).rightCols(traj.features.cols() - 1);
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
        const double mean = f.col(c).mean();
        const double sd = std::sqrt((f.col(c).array() - mean).square().sum() / static_cast<double>(f.rows() - 1));
        EXPECT_LT(std::abs(mean), 1e-8);
        EXPECT_NEAR(sd, 1.0, 1e-6);
    }
}

TEST(Reservoir, ConstantHistoryIsReproduced) {
    Matrix y(600, 3);
    y.col(0).setConstant(1.5);
    y.col(1).setConstant(-0.25);
    y.col(2).setConstant(4.0);
    auto hp = small_hp(20);
    hp.lambda = 1e-12;
    hp.burn_in = 400;
    const auto model = fit_esn(y.topRows(500), hp, 1);
    const auto sets = forecast(model, y, 500, ForecastRequest{{1, 2, 3}, 0});
    for (const auto& fs : sets) EXPECT_LT((fs.point - y.bottomRows(100)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reservoir, IteratedLeadMatchesManualFeedback) {
    const Matrix y = ar1_series(200, 3, 0.7, 12);
    auto hp = small_hp(25, 2);
    const auto model = fit_esn(y.topRows(150), hp, 4);
    const auto sets = forecast(model, y, 150, ForecastRequest{{1, 3}, 0});
    const auto& mem = model.members[0];
    const Eigen::Index origin = 160;
    LayerState s = zero_state(hp);
    for (Eigen::Index t = 0; t <= origin + 1; ++t) step(mem, hp, s, lagged_input(y, t, hp.m, hp.tau));
    Matrix z = y;
    Vector p1 = mem.readout.transpose() * features(mem, hp, s);
    EXPECT_LT((p1 - sets[0].point.row(origin + 1 - 150).transpose()).cwiseAbs().maxCoeff(), 1e-12);
    z.row(origin + 1) = p1.transpose();
    step(mem, hp, s, lagged_input(z, origin + 2, hp.m, hp.tau));
    z.row(origin + 2) = (mem.readout.transpose() * features(mem, hp, s)).transpose();
    step(mem, hp, s, lagged_input(z, origin + 3, hp.m, hp.tau));
    const Vector p3 = mem.readout.transpose() * features(mem, hp, s);
    EXPECT_EQ(sets[1].origins[static_cast<std::size_t>(origin + 3 - 150)], origin);
    EXPECT_LT((p3 - sets[1].point.row(origin + 3 - 150).transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reservoir, EchoStateContraction) {
    int converged = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto hp = small_hp(100);
        hp.layers[0].nu = 0.9;
        const auto member = generate_weights(hp, 4, seed);
        Rng rng(seed + 77);
        const Matrix x = random_matrix(500, 4, rng);
        LayerState a = zero_state(hp), b = zero_state(hp);
        for (Eigen::Index i = 0; i < 100; ++i) {
            a.h[0](i) = uniform(rng, -1, 1);
            b.h[0](i) = uniform(rng, -1, 1);
        }
        const double d0 = (a.h[0] - b.h[0]).norm();
        const auto sa = run_layer_states(member, hp, x, a);
        const auto sb = run_layer_states(member, hp, x, b);
        double last = d0;
        for (Eigen::Index t = 0; t < 500; ++t) {
            const double d = (sa[0].row(t) - sb[0].row(t)).norm();
            EXPECT_LE(d, d0 * (1 + 1e-12));
            last = d;
        }
        converged += last < 1e-6;
    }
    EXPECT_GE(converged, 19);
}

TEST(Reservoir, DeterministicAcrossRunsAndThreads) {
    const Matrix y = ar1_series(250, 4, 0.6, 2);
    auto hp = small_hp(30);
    hp.ensemble = 3;
    const auto a = forecast(fit_esn(y.topRows(200), hp, 11, 1), y, 200, ForecastRequest{{1, 2}, 10}, 1);
    const auto b = forecast(fit_esn(y.topRows(200), hp, 11, 4), y, 200, ForecastRequest{{1, 2}, 10}, 3);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_TRUE(a[k].point == b[k].point);
        for (std::size_t e = 0; e < a[k].ensemble.size(); ++e) EXPECT_TRUE(a[k].ensemble[e] == b[k].ensemble[e]);
    }
    EXPECT_FALSE(a[0].ensemble[0] == a[0].ensemble[1]);
}

TEST(Reservoir, BatchWindowDegeneracy) {
    const Matrix y = ar1_series(400, 4, 0.8, 21);
    auto hp = small_hp(30);
    const auto model = fit_esn(y.topRows(250), hp, 5);
    const auto plain = forecast(model, y, 250, ForecastRequest{{1, 3}, 0});
    const auto wide = forecast_batched(model, y, 250, {1, 3}, 150);
    const auto wider = forecast_batched(model, y, 250, {1, 3}, 1000);
    for (std::size_t k = 0; k < plain.size(); ++k) {
        EXPECT_TRUE(plain[k].point == wide[k].point);
        EXPECT_TRUE(plain[k].point == wider[k].point);
    }
    const int b = 40;
    const auto batched = forecast_batched(model, y, 250, {1, 3}, b);
    for (std::size_t k = 0; k < plain.size(); ++k) {
        bool differs_after = false;
        for (Eigen::Index r = 0; r < plain[k].point.rows(); ++r) {
            const Eigen::Index origin = plain[k].origins[static_cast<std::size_t>(r)];
            const bool same = plain[k].point.row(r) == batched[k].point.row(r);
            if (origin < 250 - 1 + b) EXPECT_TRUE(same) << "row " << r;
            else differs_after |= !same;
        }
        EXPECT_TRUE(differs_after);
    }
}

TEST(Reservoir, TwoLayerNetworkRuns) {
    const Matrix y = ar1_series(300, 3, 0.8, 7);
    EsnHyperParams hp = small_hp(30);
    hp.layers.push_back(LayerParams{25, 25, 0.8, 0.5, 0.5, 0.2, 0.5});
    hp.layers[0].n_reduced = 8;
    const auto model = fit_esn(y.topRows(250), hp, 3);
    EXPECT_EQ(model.members[0].readout.rows(), 1 + 2 * (25 + 8));
    const auto sets = forecast(model, y, 250, ForecastRequest{{1}, 0});
    EXPECT_TRUE(sets[0].point.allFinite());
    const Matrix& l = model.members[0].reducers[0].loadings;
    EXPECT_LT((l.transpose() * l - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Reservoir, TuneSingleGridAndLagPreference) {
    const Matrix y = ar1_series(500, 4, 0.9, 31);
    auto hp = small_hp(40);
    const auto single = tune({hp}, y.topRows(400), y.bottomRows(100), 1);
    EXPECT_TRUE(single.best == hp);
    auto broken = hp;
    broken.m = 0;
    const auto res = tune({broken, hp}, y.topRows(400), y.bottomRows(100), 1);
    EXPECT_GE(res.best.m, 1);
    EXPECT_LT(res.mspe[1], res.mspe[0]);
    EXPECT_THROW(tune({}, y, y, 1), ArgumentError);
}

TEST(Reservoir, HistoryTooShortIsArgumentError) {
    const Matrix y = ar1_series(200, 2, 0.5, 1);
    auto hp = small_hp(10, 3);
    const auto model = fit_esn(y.topRows(150), hp, 1);
    EXPECT_THROW(forecast(model, y, 2, ForecastRequest{{1}, 0}), ArgumentError);
    EXPECT_THROW(forecast(model, Matrix(y.leftCols(1)), 150), ShapeError);
}
