#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <set>

#include "windcast/spde/model.hpp"

using namespace windcast;
using namespace windcast::spde;

namespace {

std::vector<Point> random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
    return pts;
}

LocationTable grid_locations(int side) {
    std::vector<Point> pts;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) pts.push_back({(i + 0.5) / side, (j + 0.5) / side});
    }
    return LocationTable(pts);
}

// Matern covariance with smoothness 1.
double matern1(double d, double kappa, double var) {
    if (d <= 0.0) return var;
    const double r = kappa * d;
    return var * r * std::cyl_bessel_k(1.0, r);
}

}  // namespace

TEST(Delaunay, FourCornersGiveTwoTriangles) {
    const std::vector<Point> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const auto tris = delaunay(sq);
    ASSERT_EQ(tris.size(), 2u);
    auto mesh = mesh_from_points(sq);
    EXPECT_EQ(mesh.triangles.size(), 2u);
    double area = 0;
    for (std::size_t t = 0; t < 2; ++t) area += mesh.area(t);
    EXPECT_NEAR(area, 1.0, 1e-14);
    // The two triangles share exactly one edge.
    std::set<std::size_t> a(tris[0].begin(), tris[0].end());
    int shared = 0;
    for (auto v : tris[1]) shared += static_cast<int>(a.count(v));
    EXPECT_EQ(shared, 2);
    for (auto b : mesh.boundary) EXPECT_TRUE(b);
}

TEST(Delaunay, RandomCloudIsPositiveAndEmptyCircle) {
    const auto pts = random_cloud(500, 11);
    const auto tris = delaunay(pts);
    double total = 0;
    for (const auto& t : tris) {
        const double a = orient(pts[t[0]], pts[t[1]], pts[t[2]]);
        EXPECT_GT(a, 2e-12);
        total += 0.5 * a;
    }
    Rng rng(5);
    for (int s = 0; s < 100; ++s) {
        const auto& t = tris[uniform_index(rng, tris.size())];
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == t[0] || i == t[1] || i == t[2]) continue;
            EXPECT_LE(incircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[i]), 1e-12);
        }
    }
    // Euler: a triangulation of n points with h hull points has 2n - 2 - h triangles.
    EXPECT_GT(tris.size(), 900u);
    EXPECT_LT(total, 1.0);
}

TEST(Delaunay, CollinearInputRejected) {
    EXPECT_THROW(delaunay({{0, 0}, {1, 1}, {2, 2}, {3, 3}}), GeometryError);
    EXPECT_THROW(build_mesh(LocationTable({{0, 0}, {1, 0}, {2, 0}})), GeometryError);
    EXPECT_THROW(delaunay({{0, 0}, {1, 1}}), GeometryError);
}

TEST(Mesh, VertexCountAndCoverage) {
    const LocationTable locs(random_cloud(400, 3));
    for (std::size_t target : {300u, 1000u, 2500u}) {
        const auto mesh = build_mesh(locs, {target, false, 0.25});
        EXPECT_NEAR(static_cast<double>(mesh.size()), static_cast<double>(target), 0.1 * target);
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) EXPECT_GT(mesh.area(t), 1e-12);
        const Eigen::SparseMatrix<double, Eigen::RowMajor> a = projection_matrix(mesh, locs);
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            double s = 0;
            int nz = 0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a, i); it; ++it) {
                EXPECT_GE(it.value(), 0.0);
                EXPECT_LE(it.value(), 1.0);
                s += it.value();
                ++nz;
            }
            EXPECT_LE(nz, 3);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
        // Extension band reaches at least 20% of the diameter beyond the data box.
        const auto box = spde::detail::bounds(mesh.vertices);
        const auto dbox = spde::detail::bounds(locs.coords());
        const double diam = std::hypot(dbox.width(), dbox.height());
        EXPECT_GE(dbox.xmin - box.xmin, 0.2 * diam);
        EXPECT_GE(box.ymax - dbox.ymax, 0.2 * diam);
    }
}

TEST(Mesh, IncludeLocationsPlacesVertices) {
    const auto locs = grid_locations(10);
    const auto mesh = build_mesh(locs, {600, true, 0.25});
    const auto a = projection_matrix(mesh, locs);
    for (int k = 0; k < a.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) EXPECT_NEAR(it.value(), 1.0, 1e-9);
    }
    EXPECT_EQ(a.nonZeros(), 100);
}

TEST(Mesh, CsvRoundTrip) {
    const auto mesh = build_mesh(LocationTable(random_cloud(50, 2)), {200, false, 0.25});
    const auto dir = std::filesystem::temp_directory_path() / "wc_mesh_rt";
    std::filesystem::create_directories(dir);
    write_mesh(mesh, dir / "v.csv", dir / "t.csv");
    const auto back = read_mesh(dir / "v.csv", dir / "t.csv");
    ASSERT_EQ(back.size(), mesh.size());
    EXPECT_EQ(back.triangles, mesh.triangles);
    for (std::size_t i = 0; i < mesh.size(); ++i) EXPECT_EQ(back.vertices[i], mesh.vertices[i]);
    std::filesystem::remove_all(dir);
}

TEST(Fem, PrecisionMatchesDenseOracle) {
    const auto mesh = mesh_from_points(random_cloud(30, 8));
    const auto m = static_cast<Eigen::Index>(mesh.size());
    Rng rng(4);
    Vector kappa2(m), tau(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        kappa2(i) = uniform(rng, 1.0, 30.0);
        tau(i) = uniform(rng, 0.2, 3.0);
    }
    // Dense oracle: gradients of the hat functions from the inverse of the affine map.
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m), g = Eigen::MatrixXd::Zero(m, m);
    for (const auto& t : mesh.triangles) {
        Eigen::Matrix3d aff;
        for (int k = 0; k < 3; ++k) aff.row(k) << 1.0, mesh.vertices[t[k]].x, mesh.vertices[t[k]].y;
        const double area = 0.5 * std::abs(aff.determinant());
        const Eigen::Matrix3d coef = aff.inverse();  // column k: coefficients of hat k
        for (int i = 0; i < 3; ++i) {
            c(t[i], t[i]) += area / 3.0;
            for (int j = 0; j < 3; ++j) {
                g(t[i], t[j]) += area * (coef(1, i) * coef(1, j) + coef(2, i) * coef(2, j));
            }
        }
    }
    const Eigen::MatrixXd k = Eigen::MatrixXd(kappa2.asDiagonal()) * c + g;
    const Eigen::MatrixXd tt = tau.asDiagonal();
    const Eigen::MatrixXd q2 = tt * k * c.inverse() * k * tt;
    const Eigen::MatrixXd q1 = tt * k * tt;
    const auto fem = assemble_fem(mesh);
    const Eigen::MatrixXd s2 = Eigen::MatrixXd(assemble_precision(fem, kappa2, tau, 2));
    const Eigen::MatrixXd s1 = Eigen::MatrixXd(assemble_precision(fem, kappa2, tau, 1));
    EXPECT_LT((s2 - q2).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, q2.cwiseAbs().maxCoeff()));
    EXPECT_LT((s1 - q1).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fem, DoublingTauQuadruplesPrecision) {
    const auto mesh = mesh_from_points(random_cloud(80, 9));
    const auto fem = assemble_fem(mesh);
    const Vector k2 = Vector::Constant(static_cast<Eigen::Index>(mesh.size()), 7.3);
    Rng rng(1);
    Vector tau(static_cast<Eigen::Index>(mesh.size()));
    for (auto& v : tau) v = uniform(rng, 0.5, 2.0);
    for (int alpha : {1, 2}) {
        const Eigen::MatrixXd a = Eigen::MatrixXd(assemble_precision(fem, k2, tau, alpha));
        const Eigen::MatrixXd b = Eigen::MatrixXd(assemble_precision(fem, k2, 2.0 * tau, alpha));
        EXPECT_TRUE((b.array() == 4.0 * a.array()).all());
    }
}

TEST(Fem, SparsityFollowsAdjacency) {
    const auto mesh = mesh_from_points(random_cloud(60, 10));
    const auto m = mesh.size();
    std::vector<std::set<std::size_t>> nb(m);
    for (const auto& t : mesh.triangles) {
        for (auto a : t) {
            for (auto b : t) nb[a].insert(b);
        }
    }
    const auto fem = assemble_fem(mesh);
    const Vector ones = Vector::Ones(static_cast<Eigen::Index>(m));
    const auto q1 = assemble_precision(fem, ones, ones, 1);
    const auto q2 = assemble_precision(fem, ones, ones, 2);
    for (int k = 0; k < q1.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(q1, k); it; ++it) {
            EXPECT_TRUE(nb[static_cast<std::size_t>(it.row())].count(static_cast<std::size_t>(it.col())));
        }
    }
    for (int k = 0; k < q2.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(q2, k); it; ++it) {
            bool two = false;
            for (auto mid : nb[static_cast<std::size_t>(it.row())]) two = two || nb[mid].count(static_cast<std::size_t>(it.col()));
            EXPECT_TRUE(two);
        }
    }
}

TEST(Fem, RejectsBadAlpha) {
    const auto mesh = mesh_from_points(random_cloud(10, 1));
    const auto fem = assemble_fem(mesh);
    const Vector ones = Vector::Ones(static_cast<Eigen::Index>(mesh.size()));
    EXPECT_THROW(assemble_precision(fem, ones, ones, 3), ArgumentError);
}

TEST(Spde, MarginalVarianceMatchesFormula) {
    const auto locs = grid_locations(20);
    const auto mesh = build_mesh(locs, {4000, false, 0.5});
    const double kappa = 12.0, tau = 0.5;
    const auto model = make_model(mesh, 0, stationary_params(0, kappa, tau, 1.0));
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < mesh.size(); ++i) {
        if (distance(mesh.vertices[i], {0.5, 0.5}) < 0.3) interior.push_back(i);
    }
    ASSERT_GT(interior.size(), 50u);
    const auto v = vertex_variances(model, interior);
    const double expect = 1.0 / (4.0 * std::numbers::pi * kappa * kappa * tau * tau);
    for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_NEAR(v(i), expect, 0.1 * expect);
}

TEST(Spde, InterpolationIsLinearAndHitsKnotsInTheLimit) {
    const auto locs = grid_locations(12);
    const auto mesh = build_mesh(locs, {800, true, 0.25});
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < locs.size(); i += 3) ids.push_back(i);
    const auto knots = locs.subset(ids);
    auto model = make_model(mesh, 0, stationary_params(0, 8.0, 1.0, 1e-10));
    Rng rng(3);
    Matrix y1(2, static_cast<Eigen::Index>(ids.size())), y2(2, static_cast<Eigen::Index>(ids.size()));
    for (auto& v : y1.reshaped()) v = standard_normal(rng);
    for (auto& v : y2.reshaped()) v = standard_normal(rng);
    const Matrix a = interpolate(model, knots, y1, locs);
    const Matrix b = interpolate(model, knots, y2, locs);
    const Matrix ab = interpolate(model, knots, y1 + y2, locs);
    EXPECT_LT((ab - a - b).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix at_knots = interpolate(model, knots, y1, knots);
    EXPECT_LT((at_knots - y1).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_THROW(interpolate(model, knots, Matrix::Zero(1, 3), locs), ShapeError);
}

TEST(Spde, VertexPermutationInvariance) {
    const auto locs = grid_locations(10);
    const auto mesh = build_mesh(locs, {500, false, 0.25});
    const auto knots = locs.subset({0, 5, 13, 27, 38, 44, 59, 61, 72, 80, 95, 99});
    const auto p = stationary_params(0, 6.0, 0.7, 0.05);
    const auto model = make_model(mesh, 0, p);
    std::vector<std::size_t> perm(mesh.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(12);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mesh shuffled;
    shuffled.vertices.resize(mesh.size());
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.vertices[perm[i]] = mesh.vertices[i];
    for (auto t : mesh.triangles) {
        for (auto& v : t) v = perm[v];
        shuffled.triangles.push_back(t);
    }
    shuffled.boundary = spde::detail::boundary_flags(shuffled.size(), shuffled.triangles);
    const auto model2 = make_model(shuffled, 0, p);
    Matrix y(3, 12);
    for (auto& v : y.reshaped()) v = standard_normal(rng);
    const Matrix a = interpolate(model, knots, y, locs);
    const Matrix b = interpolate(model2, knots, y, locs);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Spde, ConstantKnotsStayWithinHullOfZeroAndData) {
    // The prior mean is zero, so the posterior mean is a shrunk average of the data.
    const auto locs = grid_locations(10);
    const auto mesh = build_mesh(locs, {500, false, 0.25});
    const auto knots = locs.subset({11, 18, 33, 47, 52, 66, 81, 88});
    const auto model = make_model(mesh, 0, stationary_params(0, 60.0, 0.1, 0.1));
    const Matrix y = Matrix::Constant(1, 8, 2.5);
    const Matrix out = interpolate(model, knots, y, locs);
    EXPECT_GE(out.minCoeff(), -1e-12);
    EXPECT_LE(out.maxCoeff(), 2.5 + 1e-12);
}

TEST(Spde, ZeroSnapshotsDriveNoiseToFloor) {
    const auto locs = grid_locations(8);
    const auto mesh = build_mesh(locs, {300, true, 0.25});
    const auto knots = locs.subset({0, 9, 18, 27, 36, 45, 54, 63, 7, 14});
    const auto model = fit_spde(mesh, knots, Matrix::Zero(3, 10));
    EXPECT_LE(model.params.sigma2, 1.0001e-8);
    const Matrix out = interpolate(model, knots, Matrix::Zero(3, 10), locs);
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Spde, FitRejectsBadShapes) {
    const auto locs = grid_locations(6);
    const auto mesh = build_mesh(locs, {200, true, 0.25});
    EXPECT_THROW(fit_spde(mesh, locs, Matrix::Zero(2, 5)), ShapeError);
    EXPECT_THROW(fit_spde(mesh, locs, Matrix::Zero(0, 36)), ArgumentError);
}

TEST(Spde, RecoversStationaryParameters) {
    const auto locs = grid_locations(15);
    const auto mesh = build_mesh(locs, {900, true, 0.25});
    const double kappa = 10.0, tau = 0.3;
    const auto truth = make_model(mesh, 0, stationary_params(0, kappa, tau, 1e-4));
    std::vector<double> rel_k, rel_t;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 100);
        const Matrix z = sample_prior(truth, 20, rng);
        const auto a = projection_matrix(mesh, locs);
        Matrix y = (a * z).transpose();
        for (auto& v : y.reshaped()) v += 1e-2 * standard_normal(rng);
        const auto fit = fit_spde(mesh, locs, y);
        rel_k.push_back(std::abs(std::exp(fit.params.theta_kappa(0)) / kappa - 1.0));
        rel_t.push_back(std::abs(std::exp(fit.params.theta_tau(0)) / tau - 1.0));
    }
    for (std::size_t s = 0; s < rel_k.size(); ++s) {
        EXPECT_LT(rel_k[s], 0.15) << "seed " << s;
        EXPECT_LT(rel_t[s], 0.15) << "seed " << s;
    }
}

TEST(Spde, ModelContainerRoundTrip) {
    const auto locs = grid_locations(6);
    const auto mesh = build_mesh(locs, {200, true, 0.25});
    auto p = stationary_params(1, 5.0, 0.8, 0.02);
    p.theta_kappa(3) = 0.2;
    const auto model = make_model(mesh, 1, p);
    const auto bytes = encode_spde(model);
    const auto back = decode_spde(bytes);
    EXPECT_EQ(back.params.theta_kappa, model.params.theta_kappa);
    EXPECT_EQ(back.params.sigma2, model.params.sigma2);
    EXPECT_EQ(Eigen::MatrixXd(back.precision), Eigen::MatrixXd(model.precision));
    EXPECT_THROW(decode_spde(bytes.substr(0, bytes.size() - 5)), SchemaError);
    EXPECT_THROW(decode_spde("garbage-garbage-garbage"), SchemaError);
}

TEST(Spde, KrigingOracleEquivalence) {
    const auto locs = grid_locations(30);
    const auto mesh = build_mesh(locs, {3000, true, 0.3});
    Rng pick(21);
    std::vector<std::size_t> knot_ids;
    for (std::size_t i = 0; i < locs.size(); ++i) {
        if (uniform01(pick) < 0.2) knot_ids.push_back(i);
    }
    const auto knots = locs.subset(knot_ids);
    const double kappa = std::sqrt(8.0) / 0.3, tau = 0.4;
    const auto truth = make_model(mesh, 0, stationary_params(0, kappa, tau, 0.01));
    Rng rng(77);
    const Matrix z = sample_prior(truth, 8, rng);
    Matrix y = (projection_matrix(mesh, knots) * z).transpose();
    for (auto& v : y.reshaped()) v += 0.1 * standard_normal(rng);
    const auto fit = fit_spde(mesh, knots, y);
    const double k = std::exp(fit.params.theta_kappa(0));
    const double t = std::exp(fit.params.theta_tau(0));
    const double var = 1.0 / (4.0 * std::numbers::pi * k * k * t * t);

    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < locs.size(); ++i) {
        const auto& p = locs[i];
        if (p.x > 0.2 && p.x < 0.8 && p.y > 0.2 && p.y < 0.8) interior.push_back(i);
    }
    const auto targets = locs.subset(interior);
    const Matrix gmrf = interpolate(fit, knots, y, targets);

    const auto nk = static_cast<Eigen::Index>(knots.size());
    Eigen::MatrixXd ckk(nk, nk), ctk(static_cast<Eigen::Index>(targets.size()), nk);
    for (Eigen::Index i = 0; i < nk; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) ckk(i, j) = matern1(distance(knots[i], knots[j]), k, var);
        ckk(i, i) += fit.params.sigma2;
    }
    for (Eigen::Index i = 0; i < ctk.rows(); ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) ctk(i, j) = matern1(distance(targets[i], knots[j]), k, var);
    }
    const Eigen::MatrixXd dense = (ctk * ckk.llt().solve(y.transpose())).transpose();
    const double rel = std::sqrt((gmrf - dense).squaredNorm() / dense.squaredNorm());
    EXPECT_LT(rel, 0.05);
}
