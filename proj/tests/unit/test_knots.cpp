#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "windcast/core/random.hpp"
#include "windcast/knots.hpp"

using namespace windcast;
using namespace windcast::knots;

namespace {

// 16 blocks, the 8 "black" squares nine times as likely as the others.
LocationTable chessboard(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point> pts;
    while (pts.size() < n) {
        const bool dense = uniform01(rng) < 0.9;
        std::size_t cell = 0;
        do cell = uniform_index(rng, 16);
        while (((cell / 4 + cell % 4) % 2 == 0) != dense);
        pts.push_back({(static_cast<double>(cell % 4) + uniform01(rng)) / 4.0,
                       (static_cast<double>(cell / 4) + uniform01(rng)) / 4.0});
    }
    return LocationTable(pts);
}

LocationTable cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
    return LocationTable(pts);
}

// Direct quadruple-sum energy distance.
double energy_oracle(const std::vector<Point>& x, const std::vector<Point>& s) {
    double cross = 0.0, ss = 0.0, xx = 0.0;
    for (const auto& a : x)
        for (const auto& b : s) cross += std::hypot(a.x - b.x, a.y - b.y);
    for (const auto& a : s)
        for (const auto& b : s) ss += std::hypot(a.x - b.x, a.y - b.y);
    for (const auto& a : x)
        for (const auto& b : x) xx += std::hypot(a.x - b.x, a.y - b.y);
    const double n = static_cast<double>(s.size()), m = static_cast<double>(x.size());
    return 2.0 * cross / (n * m) - ss / (n * n) - xx / (m * m);
}

}  // namespace

TEST(Knots, EnergyDistanceHandValueAndIdentity) {
    LocationTable data({{0, 0}, {1, 0}});
    EXPECT_NEAR(energy_distance(std::vector<Point>{{0.5, 0}}, data), 0.5, 1e-15);
    const auto c = cloud(40, 3);
    EXPECT_NEAR(energy_distance(c.coords(), c), 0.0, 1e-12);
    EXPECT_THROW(energy_distance(std::vector<Point>{}, data), ArgumentError);
}

TEST(Knots, EnergyDistanceMatchesOracleAndIsRotationInvariant) {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const auto data = cloud(30 + static_cast<std::size_t>(trial), 100 + static_cast<std::uint64_t>(trial));
        std::vector<Point> cand(7);
        for (auto& p : cand) p = {uniform(rng, -1, 2), uniform(rng, -1, 2)};
        const double e = energy_distance(cand, data);
        EXPECT_NEAR(e, energy_oracle(cand, data.coords()), 1e-12);
        EXPECT_GE(e, -1e-12);

        const double th = uniform(rng, 0, 2 * std::numbers::pi);
        auto rot = [&](Point p) { return Point{std::cos(th) * p.x - std::sin(th) * p.y + 3.0, std::sin(th) * p.x + std::cos(th) * p.y - 1.0}; };
        std::vector<Point> rc, rd;
        for (auto p : cand) rc.push_back(rot(p));
        for (auto p : data.coords()) rd.push_back(rot(p));
        EXPECT_NEAR(energy_distance(rc, rd), e, 1e-10);
    }
}

TEST(Knots, SnapRules) {
    LocationTable data({{0, 0}, {1, 0}, {3, 0}});
    EXPECT_EQ(snap_to_data({{1, 0}}, data), (std::vector<std::size_t>{1}));
    EXPECT_EQ(snap_to_data({{0.9, 0}, {1.1, 0}}, data), (std::vector<std::size_t>{1, 0}));
    // Equidistant point takes the lower index.
    EXPECT_EQ(snap_to_data({{0.5, 0}}, data), (std::vector<std::size_t>{0}));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto d = cloud(50, seed);
        Rng rng(seed + 1000);
        std::vector<Point> pts(25);
        for (auto& p : pts) p = {0.5 + 0.05 * uniform01(rng), 0.5 + 0.05 * uniform01(rng)};
        const auto idx = snap_to_data(pts, d);
        EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), idx.size());
    }
}

TEST(Knots, FullSelectionHasZeroEnergy) {
    const auto data = cloud(30, 5);
    const auto k = support_points(data, 30, 1);
    EXPECT_NEAR(k.energy, 0.0, 1e-12);
    EXPECT_EQ(std::set<std::size_t>(k.indices.begin(), k.indices.end()).size(), 30u);
}

TEST(Knots, SinglePointOnSquareCornersGoesToCentre) {
    LocationTable data({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    SupportOptions opt;
    opt.max_iter = 5000;
    opt.tol = 1e-10;
    const auto k = support_points(data, 1, 9, opt);
    EXPECT_TRUE(k.converged);
    EXPECT_NEAR(k.continuous[0].x, 0.5, 1e-6);
    EXPECT_NEAR(k.continuous[0].y, 0.5, 1e-6);
}

TEST(Knots, MonotoneDescentAndDeterminism) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = chessboard(300, seed);
        const auto k = support_points(data, 25, seed);
        ASSERT_GT(k.history.size(), 1u);
        for (std::size_t i = 1; i < k.history.size(); ++i) EXPECT_LE(k.history[i], k.history[i - 1] + 1e-10) << "iteration " << i;
        const auto again = support_points(data, 25, seed);
        EXPECT_EQ(again.indices, k.indices);
        for (std::size_t i = 0; i < k.size(); ++i) EXPECT_EQ(again.continuous[i], k.continuous[i]);
    }
}

TEST(Knots, TranslationEquivariance) {
    const auto data = chessboard(200, 4);
    std::vector<Point> shifted;
    for (auto p : data.coords()) shifted.push_back({p.x + 10.0, p.y - 4.0});
    SupportOptions opt;
    opt.tol = 1e-9;
    opt.max_iter = 3000;
    const auto a = support_points(data, 10, 3, opt);
    const auto b = support_points(LocationTable(shifted), 10, 3, opt);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(b.continuous[i].x, a.continuous[i].x + 10.0, 1e-5);
        EXPECT_NEAR(b.continuous[i].y, a.continuous[i].y - 4.0, 1e-5);
    }
}

TEST(Knots, BeatsBestOfThousandRandomSubsetsOnChessboard) {
    const auto data = chessboard(200, 2024);
    const std::size_t n_red = 20;
    const auto k = support_points(data, n_red, 7);
    Rng rng(99);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> ids(data.size());
    for (int trial = 0; trial < 1000; ++trial) {
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::vector<Point> sub;
        for (std::size_t j = 0; j < n_red; ++j) {
            std::swap(ids[j], ids[j + uniform_index(rng, ids.size() - j)]);
            sub.push_back(data[ids[j]]);
        }
        best = std::min(best, energy_distance(sub, data, 1));
    }
    EXPECT_LE(k.energy, best);
}

TEST(Knots, SubsampledModeRunsAndSnapsDistinct) {
    const auto data = cloud(600, 8);
    SupportOptions opt;
    opt.subsample = 200;
    opt.max_iter = 50;
    const auto k = support_points(data, 15, 2, opt);
    EXPECT_TRUE(k.history.empty());
    EXPECT_EQ(std::set<std::size_t>(k.indices.begin(), k.indices.end()).size(), 15u);
}

TEST(Knots, ArgumentErrorsAndSerialization) {
    const auto data = cloud(10, 1);
    EXPECT_THROW(support_points(data, 11, 0), ArgumentError);
    EXPECT_THROW(support_points(data, 0, 0), ArgumentError);
    const auto k = support_points(data, 4, 0);
    const auto dir = std::filesystem::temp_directory_path() / "windcast_knots";
    write_knots(k, data, dir / "k.csv", dir / "k.json");
    const auto r = read_knots(dir / "k.csv", dir / "k.json");
    EXPECT_EQ(r.indices, k.indices);
    EXPECT_EQ(r.energy, k.energy);
    EXPECT_EQ(r.continuous[2], k.continuous[2]);
}
