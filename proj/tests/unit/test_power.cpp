#include <gtest/gtest.h>

#include <cmath>

#include "windcast/core/random.hpp"
#include "windcast/power.hpp"

using namespace windcast;
using namespace windcast::power;

namespace {

PowerCurve simple_curve() {
    PowerCurve c;
    c.name = "test";
    c.cut_in = 3.0;
    c.rated_speed = 12.0;
    c.cut_out = 25.0;
    c.rated_power = 2000.0;
    c.nodes = {{3.0, 0.0}, {6.0, 400.0}, {9.0, 1200.0}, {12.0, 2000.0}};
    return c;
}

std::filesystem::path curves_dir() { return std::filesystem::path(WINDCAST_SOURCE_DIR) / "data" / "curves"; }

}  // namespace

TEST(Shear, HubEqualsSurfaceGivesZero) {
    Rng rng(1);
    Matrix s(50, 3);
    for (auto& v : s.reshaped()) v = uniform(rng, 0.5, 15.0);
    const auto m = fit_shear(s, s, 80.0);
    EXPECT_EQ(m.alpha.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Shear, RecoversOneSeventh) {
    Rng rng(2);
    Matrix s(200, 4);
    for (auto& v : s.reshaped()) v = uniform(rng, 0.1, 20.0);
    const Matrix hub = s * std::pow(8.0, 1.0 / 7.0);
    const auto m = fit_shear(s, hub, 80.0);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(m.alpha(i), 1.0 / 7.0, 1e-10);
    EXPECT_LT(m.residual_var.maxCoeff(), 1e-20);
}

TEST(Shear, NonPositiveSpeedsListed) {
    Matrix s = Matrix::Constant(3, 2, 4.0);
    s(1, 1) = 0.0;
    try {
        fit_shear(s, Matrix::Constant(3, 2, 5.0), 80.0);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
    }
}

TEST(Shear, ExtrapolationExamples) {
    const auto sh = constant_shear(1);
    Matrix z(1, 1);
    z << 5.0;
    EXPECT_NEAR(extrapolate(z, sh, 80.0)(0, 0), 5.0 * std::pow(8.0, 1.0 / 7.0), 1e-12);
    EXPECT_NEAR(extrapolate(z, sh, 80.0)(0, 0), 6.7295, 1e-4);
    EXPECT_EQ(extrapolate(z, sh, 10.0)(0, 0), 5.0);
    EXPECT_EQ(extrapolate(Matrix::Zero(1, 1), sh, 120.0)(0, 0), 0.0);
    EXPECT_THROW(extrapolate(-z, sh, 80.0), DomainError);
}

TEST(Shear, MonotoneInHeightAndSpeed) {
    Rng rng(3);
    ShearModel sh{Vector::Constant(5, 0.2), Vector::Zero(5), reference_height};
    for (int trial = 0; trial < 100; ++trial) {
        Matrix z(1, 5);
        for (auto& v : z.reshaped()) v = uniform(rng, 0.0, 20.0);
        const double h1 = uniform(rng, 5.0, 100.0), h2 = h1 + uniform(rng, 0.1, 50.0);
        EXPECT_TRUE((extrapolate(z, sh, h2).array() >= extrapolate(z, sh, h1).array()).all());
        const Matrix z2 = z.array() + 0.5;
        EXPECT_TRUE((extrapolate(z2, sh, h1).array() >= extrapolate(z, sh, h1).array()).all());
    }
}

TEST(Curve, RegionsAndRated) {
    const auto c = simple_curve();
    EXPECT_EQ(c(2.99), 0.0);
    EXPECT_EQ(c(25.0), 0.0);
    EXPECT_EQ(c(30.0), 0.0);
    EXPECT_EQ(c(12.0), 2000.0);
    EXPECT_EQ(c(24.9), 2000.0);
    EXPECT_NEAR(c(7.5), 800.0, 1e-12);
    EXPECT_EQ(c(std::nan("")), 0.0);
}

TEST(Curve, NonDecreasingOnRamp) {
    const auto c = simple_curve();
    double prev = 0.0;
    for (double s = c.cut_in; s <= c.rated_speed; s += 0.01) {
        const double p = c(s);
        EXPECT_GE(p, prev);
        prev = p;
    }
}

TEST(Curve, Validation) {
    auto c = simple_curve();
    c.cut_out = 10.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = simple_curve();
    c.nodes = {{3.0, 0.0}, {6.0, 500.0}, {9.0, 400.0}};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Curve, BundledCurvesLoadAndRoundTrip) {
    for (const auto* name : {"nordex_like.csv", "ge_like.csv"}) {
        const auto c = read_curve(curves_dir() / name);
        EXPECT_FALSE(c.note.empty());
        EXPECT_EQ(c(c.rated_speed), c.rated_power);
        EXPECT_EQ(c(c.cut_in - 0.1), 0.0);
        const auto tmp = std::filesystem::temp_directory_path() / "wc_curve.csv";
        write_curve(c, tmp);
        const auto back = read_curve(tmp);
        EXPECT_EQ(back.nodes, c.nodes);
        EXPECT_EQ(back.rated_power, c.rated_power);
        std::filesystem::remove(tmp);
    }
    EXPECT_THROW(parse_curve("speed_mps,power_kw\n3,0\n"), SchemaError);
}

TEST(Energy, DifferenceExamples) {
    Matrix a(2, 1), b(2, 1);
    a << 300, 200;
    b << 200, 150;
    EXPECT_EQ(energy_difference(a, b), 150.0);
    EXPECT_EQ(energy_difference(a, a), 0.0);
    EXPECT_THROW(energy_difference(a, Matrix::Zero(3, 1)), ShapeError);
}

TEST(Energy, TriangleInequalityPerCell) {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix a(4, 3), b(4, 3), c(4, 3);
        for (auto& v : a.reshaped()) v = uniform(rng, 0, 2000);
        for (auto& v : b.reshaped()) v = uniform(rng, 0, 2000);
        for (auto& v : c.reshaped()) v = uniform(rng, 0, 2000);
        EXPECT_LE(energy_difference(a, c), energy_difference(a, b) + energy_difference(b, c) + 1e-9);
        EXPECT_GT(energy_difference(a, b), 0.0);
    }
}
