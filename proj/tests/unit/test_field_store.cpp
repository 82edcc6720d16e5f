#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "windcast/core/random.hpp"
#include "windcast/field_store.hpp"

namespace fs = std::filesystem;
using namespace windcast;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "windcast_field_store";
    fs::create_directories(dir);
    return dir / name;
}

SpaceTimeField random_field(Eigen::Index T, Eigen::Index n, std::uint64_t seed, bool with_coords = true) {
    Rng rng(seed);
    Matrix v(T, n);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index i = 0; i < n; ++i) v(t, i) = standard_normal(rng) * 1e3;
    std::vector<Point> pts;
    for (Eigen::Index i = 0; i < n; ++i) pts.push_back({uniform01(rng), uniform01(rng) + static_cast<double>(i)});
    auto locs = with_coords ? LocationTable(pts) : LocationTable::unplaced(static_cast<std::size_t>(n));
    return SpaceTimeField(v, locs, 17.0, 0.5);
}

}  // namespace

TEST(FieldStore, ReadsThreeLocationCsv) {
    auto path = scratch("three.csv");
    std::ofstream(path) << "t,loc0,loc1,loc2\n0,1.5,2,3\n1,4,5,6.25\n";
    auto f = read_field(path, FieldFormat::csv);
    EXPECT_EQ(f.steps(), 2);
    EXPECT_EQ(f.size(), 3);
    EXPECT_DOUBLE_EQ(f.values()(1, 2), 6.25);
    EXPECT_FALSE(f.locations().placed());
}

TEST(FieldStore, RaggedRowIsSchemaErrorNamingRow) {
    auto path = scratch("ragged.csv");
    std::ofstream(path) << "t,loc0,loc1,loc2\n0,1,2,3\n1,4,5\n";
    try {
        read_field(path, FieldFormat::csv);
        FAIL() << "expected a schema error";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(FieldStore, MalformedHeaderAndNonFiniteValues) {
    auto bad_header = scratch("bad_header.csv");
    std::ofstream(bad_header) << "time;a;b\n0;1;2\n";
    EXPECT_THROW(read_field(bad_header, FieldFormat::csv), SchemaError);

    auto non_finite = scratch("nonfinite.csv");
    std::ofstream(non_finite) << "t,loc0,loc1\n0,1,inf\n";
    try {
        read_field(non_finite, FieldFormat::csv);
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos) << e.what();
    }
}

TEST(FieldStore, BinaryRoundTripIsBitExactForLargeRandomField) {
    const auto f = random_field(1000, 100, 20240601);
    auto path = scratch("big.bin");
    write_field(f, path, FieldFormat::flat_binary);
    EXPECT_EQ(fs::file_size(path), 64u + 8u * 1000u * 100u + 16u * 100u);
    const auto g = read_field(path, FieldFormat::flat_binary);
    EXPECT_TRUE(f == g);
}

TEST(FieldStore, BinaryRoundTripPropertyOverRandomShapes) {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const auto T = static_cast<Eigen::Index>(1 + uniform_index(rng, 40));
        const auto n = static_cast<Eigen::Index>(1 + uniform_index(rng, 12));
        auto base = random_field(T, n, 100 + static_cast<std::uint64_t>(trial), trial % 2 == 0);
        std::vector<std::uint8_t> mask;
        if (trial % 3 == 0) {
            mask.assign(static_cast<std::size_t>(T * n), 0);
            for (auto& m : mask) m = uniform01(rng) < 0.2;
        }
        SpaceTimeField f(base.values(), base.locations(), base.t0(), base.dt(), mask);
        const auto g = decode_field_binary(encode_field_binary(f));
        ASSERT_TRUE(f == g) << "trial " << trial;
    }
}

TEST(FieldStore, MaskedCellRoundTripsInBothFormats) {
    Matrix v(2, 2);
    v << 1.0, 2.0, 3.0, 4.0;
    SpaceTimeField f(v, LocationTable::unplaced(2), 0.0, 1.0, {0, 1, 0, 0});
    EXPECT_TRUE(f.masked(0, 1));
    EXPECT_TRUE(std::isnan(f.values()(0, 1)));
    for (auto fmt : {FieldFormat::csv, FieldFormat::flat_binary}) {
        auto path = scratch(fmt == FieldFormat::csv ? "masked.csv" : "masked.bin");
        write_field(f, path, fmt);
        const auto g = read_field(path, fmt);
        EXPECT_TRUE(g.masked(0, 1));
        EXPECT_FALSE(g.masked(1, 1));
        EXPECT_EQ(g.values()(1, 1), 4.0);
    }
}

TEST(FieldStore, EmptyMaskCsvRoundTripWithinRelativeTolerance) {
    const auto f = random_field(30, 7, 99, false);
    auto path = scratch("plain.csv");
    write_field(f, path, FieldFormat::csv);
    const auto g = read_field(path, FieldFormat::csv);
    ASSERT_EQ(g.steps(), f.steps());
    EXPECT_FALSE(g.has_mask());
    for (Eigen::Index k = 0; k < f.values().size(); ++k) {
        const double a = f.values().data()[k];
        const double b = g.values().data()[k];
        EXPECT_LE(std::abs(a - b), 1e-12 * std::abs(a));
    }
    EXPECT_DOUBLE_EQ(g.t0(), 17.0);
    EXPECT_DOUBLE_EQ(g.dt(), 0.5);
}

TEST(FieldStore, LocationTableInvariantsAndCsv) {
    EXPECT_THROW(LocationTable(std::vector<Point>{}), ArgumentError);
    EXPECT_THROW(LocationTable({{0, 0}, {1, 1}, {0, 0}}), ArgumentError);
    LocationTable locs({{0.5, 1.0}, {2.0, -3.25}});
    auto path = scratch("locs.csv");
    write_locations(locs, path);
    EXPECT_TRUE(read_locations(path) == locs);
    EXPECT_THROW(locs.subset({0, 2}), ArgumentError);
}

TEST(FieldStore, ForecastSetValidatesShapes) {
    ForecastSet fs;
    fs.lead = 2;
    fs.origins = {0, 1, 2};
    fs.point = Matrix::Zero(3, 4);
    fs.ensemble = {Matrix::Zero(3, 4), Matrix::Zero(3, 4)};
    EXPECT_NO_THROW(fs.validate());
    fs.ensemble.push_back(Matrix::Zero(2, 4));
    EXPECT_THROW(fs.validate(), ShapeError);
    fs.ensemble.pop_back();
    fs.lead = 0;
    EXPECT_THROW(fs.validate(), ArgumentError);
}

TEST(FieldStore, SelectAndSlicePreserveMetadata) {
    const auto f = random_field(10, 5, 3);
    const auto sub = f.select_locations({4, 1});
    EXPECT_EQ(sub.size(), 2);
    EXPECT_EQ(sub.values()(3, 0), f.values()(3, 4));
    EXPECT_TRUE(sub.locations()[1] == f.locations()[1]);
    const auto win = f.slice_steps(4, 3);
    EXPECT_DOUBLE_EQ(win.t0(), f.time(4));
    EXPECT_EQ(win.values()(0, 2), f.values()(4, 2));
}
