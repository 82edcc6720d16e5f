#pragma once

// Space-time fields, location tables and forecast sets, plus their file formats.
//
// Flat-binary field layout (all little-endian):
//
//   offset  size  content
//        0     8  magic "WCFIELD1"
//        8     4  u32 format version (1)
//       12     4  u32 flags: bit 0 = mask bitmap present, bit 1 = coordinates present
//       16     8  u64 T (time steps)
//       24     8  u64 n (locations)
//       32     8  f64 t0
//       40     8  f64 dt (hours)
//       48    16  zero padding
//       64  8*T*n f64 values, row-major (time-major)
//        -  ceil(T*n/8) mask bitmap, LSB first, 1 = masked        (flag bit 0)
//        -  16*n  f64 (x, y) per location                          (flag bit 1)

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"

namespace windcast {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Planar location coordinates; the id of a location is its index.
class LocationTable {
public:
    LocationTable() = default;

    explicit LocationTable(std::vector<Point> coords) : coords_(std::move(coords)) {
        if (coords_.empty()) throw ArgumentError("location table must contain at least one location");
        std::vector<std::size_t> order(coords_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::pair(coords_[a].x, coords_[a].y) < std::pair(coords_[b].x, coords_[b].y);
        });
        for (std::size_t k = 1; k < order.size(); ++k) {
            if (coords_[order[k]] == coords_[order[k - 1]]) {
                throw ArgumentError("duplicate location coordinates at ids " + std::to_string(order[k - 1]) +
                                    " and " + std::to_string(order[k]));
            }
        }
        for (const auto& p : coords_) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ArgumentError("non-finite location coordinate");
        }
    }

    /// Placeholder table for fields read without coordinates: location i sits at (i, 0).
    static LocationTable unplaced(std::size_t n) {
        std::vector<Point> pts(n);
        for (std::size_t i = 0; i < n; ++i) pts[i] = {static_cast<double>(i), 0.0};
        LocationTable t(std::move(pts));
        t.placed_ = false;
        return t;
    }

    std::size_t size() const { return coords_.size(); }
    bool empty() const { return coords_.empty(); }
    bool placed() const { return placed_; }
    const Point& operator[](std::size_t i) const { return coords_[i]; }
    const std::vector<Point>& coords() const { return coords_; }

    LocationTable subset(const std::vector<std::size_t>& ids) const {
        std::vector<Point> pts;
        pts.reserve(ids.size());
        for (auto id : ids) {
            if (id >= coords_.size()) throw ArgumentError("location id " + std::to_string(id) + " out of range");
            pts.push_back(coords_[id]);
        }
        LocationTable t(std::move(pts));
        t.placed_ = placed_;
        return t;
    }

    friend bool operator==(const LocationTable& a, const LocationTable& b) { return a.coords_ == b.coords_; }

private:
    std::vector<Point> coords_;
    bool placed_ = true;
};

/// T x n matrix of values indexed by (time step, location). Immutable after construction.
class SpaceTimeField {
public:
    SpaceTimeField() = default;

    /// `mask` is empty (nothing masked) or T*n row-major flags with 1 = masked.
    SpaceTimeField(Matrix values, LocationTable locations, double t0 = 0.0, double dt_hours = 1.0,
                   std::vector<std::uint8_t> mask = {})
        : values_(std::move(values)), locations_(std::move(locations)), mask_(std::move(mask)), t0_(t0),
          dt_(dt_hours) {
        if (static_cast<std::size_t>(values_.cols()) != locations_.size()) {
            throw ShapeError("field has " + std::to_string(values_.cols()) + " columns but " +
                             std::to_string(locations_.size()) + " locations");
        }
        if (!(dt_ > 0.0) || !std::isfinite(t0_)) throw ArgumentError("field time metadata must have dt > 0");
        const auto T = static_cast<std::size_t>(values_.rows());
        const auto n = static_cast<std::size_t>(values_.cols());
        if (!mask_.empty() && mask_.size() != T * n) throw ShapeError("mask size does not match field shape");
        if (!mask_.empty() && std::none_of(mask_.begin(), mask_.end(), [](auto m) { return m != 0; })) mask_.clear();
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!mask_.empty() && mask_[t * n + i]) {
                    values_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
                        std::numeric_limits<double>::quiet_NaN();
                } else if (!std::isfinite(values_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)))) {
                    throw SchemaError("non-finite unmasked value at row " + std::to_string(t) + ", column " +
                                      std::to_string(i));
                }
            }
        }
    }

    Eigen::Index steps() const { return values_.rows(); }
    Eigen::Index size() const { return values_.cols(); }
    const Matrix& values() const { return values_; }
    const LocationTable& locations() const { return locations_; }
    double t0() const { return t0_; }
    double dt() const { return dt_; }
    double time(Eigen::Index k) const { return t0_ + static_cast<double>(k) * dt_; }

    bool has_mask() const { return !mask_.empty(); }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    bool masked(Eigen::Index t, Eigen::Index i) const {
        return !mask_.empty() && mask_[static_cast<std::size_t>(t * size() + i)] != 0;
    }

    /// Field restricted to the given location ids (column subset).
    SpaceTimeField select_locations(const std::vector<std::size_t>& ids) const {
        Matrix v(steps(), static_cast<Eigen::Index>(ids.size()));
        std::vector<std::uint8_t> m;
        if (has_mask()) m.assign(static_cast<std::size_t>(steps()) * ids.size(), 0);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto c = static_cast<Eigen::Index>(ids[k]);
            if (c >= size()) throw ArgumentError("location id " + std::to_string(ids[k]) + " out of range");
            v.col(static_cast<Eigen::Index>(k)) = values_.col(c);
            if (has_mask()) {
                for (Eigen::Index t = 0; t < steps(); ++t) m[static_cast<std::size_t>(t) * ids.size() + k] = masked(t, c);
            }
        }
        return SpaceTimeField(std::move(v), locations_.subset(ids), t0_, dt_, std::move(m));
    }

    /// Time window [begin, begin + count).
    SpaceTimeField slice_steps(Eigen::Index begin, Eigen::Index count) const {
        if (begin < 0 || count < 0 || begin + count > steps()) throw ArgumentError("time slice out of range");
        std::vector<std::uint8_t> m;
        if (has_mask()) {
            m.assign(mask_.begin() + begin * size(), mask_.begin() + (begin + count) * size());
        }
        return SpaceTimeField(values_.middleRows(begin, count), locations_, time(begin), dt_, std::move(m));
    }

    /// Same layout with new values (mask and metadata carried over).
    SpaceTimeField with_values(Matrix values) const {
        return SpaceTimeField(std::move(values), locations_, t0_, dt_, mask_);
    }

    friend bool operator==(const SpaceTimeField& a, const SpaceTimeField& b) {
        if (a.values_.rows() != b.values_.rows() || a.values_.cols() != b.values_.cols()) return false;
        if (!(a.locations_ == b.locations_) || a.mask_ != b.mask_) return false;
        if (std::bit_cast<std::uint64_t>(a.t0_) != std::bit_cast<std::uint64_t>(b.t0_)) return false;
        if (std::bit_cast<std::uint64_t>(a.dt_) != std::bit_cast<std::uint64_t>(b.dt_)) return false;
        for (Eigen::Index k = 0; k < a.values_.size(); ++k) {
            const double x = a.values_.data()[k];
            const double y = b.values_.data()[k];
            if (std::isnan(x) && std::isnan(y)) continue;
            if (std::bit_cast<std::uint64_t>(x) != std::bit_cast<std::uint64_t>(y)) return false;
        }
        return true;
    }

private:
    Matrix values_;
    LocationTable locations_;
    std::vector<std::uint8_t> mask_;
    double t0_ = 0.0;
    double dt_ = 1.0;
};

/// Forecasts at a single lead. Row r is the forecast issued at origins[r] for time origins[r] + lead.
struct ForecastSet {
    int lead = 1;
    std::vector<Eigen::Index> origins;
    Matrix point;
    std::vector<Matrix> ensemble;
    std::optional<Matrix> half_width;

    void validate() const {
        if (lead < 1) throw ArgumentError("forecast lead must be >= 1");
        if (static_cast<std::size_t>(point.rows()) != origins.size()) {
            throw ShapeError("forecast rows do not match origin count");
        }
        for (const auto& m : ensemble) {
            if (m.rows() != point.rows() || m.cols() != point.cols()) {
                throw ShapeError("ensemble members must share the point-forecast shape");
            }
        }
        if (half_width && (half_width->rows() != point.rows() || half_width->cols() != point.cols())) {
            throw ShapeError("interval half-widths must match the point-forecast shape");
        }
    }
};

enum class FieldFormat { csv, flat_binary };

inline FieldFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".bin" || ext == ".wcf") return FieldFormat::flat_binary;
    return FieldFormat::csv;
}

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}
inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(const std::string& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(k)]);
    return v;
}
inline std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(buf[off + static_cast<std::size_t>(k)]);
    return v;
}
inline double get_f64(const std::string& buf, std::size_t off) { return std::bit_cast<double>(get_u64(buf, off)); }

inline constexpr char field_magic[8] = {'W', 'C', 'F', 'I', 'E', 'L', 'D', '1'};
inline constexpr std::uint32_t field_version = 1;

}  // namespace detail

inline std::string encode_field_binary(const SpaceTimeField& field) {
    const auto T = static_cast<std::uint64_t>(field.steps());
    const auto n = static_cast<std::uint64_t>(field.size());
    std::uint32_t flags = 0;
    if (field.has_mask()) flags |= 1u;
    if (field.locations().placed()) flags |= 2u;
    std::string buf;
    buf.reserve(64 + 8 * T * n);
    buf.append(detail::field_magic, 8);
    detail::put_u32(buf, detail::field_version);
    detail::put_u32(buf, flags);
    detail::put_u64(buf, T);
    detail::put_u64(buf, n);
    detail::put_f64(buf, field.t0());
    detail::put_f64(buf, field.dt());
    buf.resize(64, '\0');
    for (std::uint64_t t = 0; t < T; ++t) {
        for (std::uint64_t i = 0; i < n; ++i) {
            detail::put_f64(buf, field.values()(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
        }
    }
    if (flags & 1u) {
        std::string bits((T * n + 7) / 8, '\0');
        for (std::uint64_t k = 0; k < T * n; ++k) {
            if (field.mask()[k]) bits[k / 8] = static_cast<char>(bits[k / 8] | (1 << (k % 8)));
        }
        buf += bits;
    }
    if (flags & 2u) {
        for (const auto& p : field.locations().coords()) {
            detail::put_f64(buf, p.x);
            detail::put_f64(buf, p.y);
        }
    }
    return buf;
}

inline SpaceTimeField decode_field_binary(const std::string& buf, const std::string& origin = "<buffer>") {
    if (buf.size() < 64 || std::memcmp(buf.data(), detail::field_magic, 8) != 0) {
        throw SchemaError(origin + ": not a flat-binary field (bad magic)");
    }
    const auto version = detail::get_u32(buf, 8);
    if (version != detail::field_version) {
        throw SchemaError(origin + ": unsupported flat-binary version " + std::to_string(version));
    }
    const auto flags = detail::get_u32(buf, 12);
    const auto T = detail::get_u64(buf, 16);
    const auto n = detail::get_u64(buf, 24);
    const double t0 = detail::get_f64(buf, 32);
    const double dt = detail::get_f64(buf, 40);
    if (n == 0) throw SchemaError(origin + ": field header declares zero locations");
    std::uint64_t expected = 64 + 8 * T * n;
    if (flags & 1u) expected += (T * n + 7) / 8;
    if (flags & 2u) expected += 16 * n;
    if (buf.size() != expected) {
        throw SchemaError(origin + ": size " + std::to_string(buf.size()) + " does not match header (expected " +
                          std::to_string(expected) + ")");
    }
    Matrix values(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(n));
    std::size_t off = 64;
    for (std::uint64_t t = 0; t < T; ++t) {
        for (std::uint64_t i = 0; i < n; ++i, off += 8) {
            values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = detail::get_f64(buf, off);
        }
    }
    std::vector<std::uint8_t> mask;
    if (flags & 1u) {
        mask.assign(T * n, 0);
        for (std::uint64_t k = 0; k < T * n; ++k) {
            mask[k] = (static_cast<unsigned char>(buf[off + k / 8]) >> (k % 8)) & 1u;
        }
        off += (T * n + 7) / 8;
    }
    LocationTable locs = LocationTable::unplaced(n);
    if (flags & 2u) {
        std::vector<Point> pts(n);
        for (std::uint64_t i = 0; i < n; ++i, off += 16) pts[i] = {detail::get_f64(buf, off), detail::get_f64(buf, off + 8)};
        locs = LocationTable(std::move(pts));
    }
    for (std::uint64_t t = 0; t < T; ++t) {
        for (std::uint64_t i = 0; i < n; ++i) {
            const bool m = !mask.empty() && mask[t * n + i];
            if (!m && !std::isfinite(values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)))) {
                throw SchemaError(origin + ": non-finite unmasked value at row " + std::to_string(t) + ", column " +
                                  std::to_string(i));
            }
        }
    }
    return SpaceTimeField(std::move(values), std::move(locs), t0, dt, std::move(mask));
}

inline std::string encode_field_csv(const SpaceTimeField& field) {
    std::string out = "t";
    for (Eigen::Index i = 0; i < field.size(); ++i) out += ",loc" + std::to_string(i);
    out += '\n';
    for (Eigen::Index t = 0; t < field.steps(); ++t) {
        out += text::format_double(field.time(t));
        for (Eigen::Index i = 0; i < field.size(); ++i) {
            out += ',';
            if (!field.masked(t, i)) out += text::format_double(field.values()(t, i));
        }
        out += '\n';
    }
    return out;
}

/// Parses the CSV field layout: header "t,<loc>,...", first column time, empty cells masked.
inline SpaceTimeField decode_field_csv(const std::string& content, const std::string& origin = "<csv>") {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(origin + ": empty file, header row required");
    const auto header = text::split(line);
    if (header.size() < 2 || header[0] != "t") {
        throw SchemaError(origin + ": malformed header, expected 't,<location>,...'");
    }
    const std::size_t n = header.size() - 1;
    std::vector<double> vals;
    std::vector<double> times;
    std::vector<std::uint8_t> mask;
    bool any_mask = false;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != n + 1) {
            throw SchemaError(origin + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " columns, expected " + std::to_string(n + 1));
        }
        const auto t = text::parse_double(cells[0]);
        if (!t || !std::isfinite(*t)) throw SchemaError(origin + ": row " + std::to_string(row) + ": bad time index");
        times.push_back(*t);
        for (std::size_t i = 0; i < n; ++i) {
            if (cells[i + 1].empty()) {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                mask.push_back(1);
                any_mask = true;
                continue;
            }
            const auto v = text::parse_double(cells[i + 1]);
            if (!v || !std::isfinite(*v)) {
                throw SchemaError(origin + ": row " + std::to_string(row) + ", column " + std::to_string(i + 1) +
                                  ": non-finite or non-numeric value '" + std::string(cells[i + 1]) + "'");
            }
            vals.push_back(*v);
            mask.push_back(0);
        }
    }
    const auto T = static_cast<Eigen::Index>(times.size());
    Matrix values(T, static_cast<Eigen::Index>(n));
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
            values(t, i) = vals[static_cast<std::size_t>(t) * n + static_cast<std::size_t>(i)];
        }
    }
    const double t0 = T > 0 ? times[0] : 0.0;
    const double dt = T > 1 ? times[1] - times[0] : 1.0;
    if (!(dt > 0.0)) throw SchemaError(origin + ": time index must be strictly increasing");
    if (!any_mask) mask.clear();
    return SpaceTimeField(std::move(values), LocationTable::unplaced(n), t0, dt, std::move(mask));
}

inline LocationTable read_locations(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty location table");
    const auto header = text::split(line);
    if (header.size() != 3 || header[0] != "id" || header[1] != "x" || header[2] != "y") {
        throw SchemaError(path.string() + ": location header must be 'id,x,y'");
    }
    std::vector<std::pair<long long, Point>> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != 3) {
            throw SchemaError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " columns, expected 3");
        }
        const auto id = text::parse_int(cells[0]);
        const auto x = text::parse_double(cells[1]);
        const auto y = text::parse_double(cells[2]);
        if (!id || !x || !y) throw SchemaError(path.string() + ": row " + std::to_string(row) + ": malformed values");
        rows.push_back({*id, {*x, *y}});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Point> pts;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].first != static_cast<long long>(k)) {
            throw SchemaError(path.string() + ": location ids must be 0..n-1 without gaps");
        }
        pts.push_back(rows[k].second);
    }
    return LocationTable(std::move(pts));
}

inline void write_locations(const LocationTable& locs, const std::filesystem::path& path) {
    auto out = text::open_output(path);
    out << "id,x,y\n";
    for (std::size_t i = 0; i < locs.size(); ++i) {
        out << i << ',' << text::format_double(locs[i].x) << ',' << text::format_double(locs[i].y) << '\n';
    }
    text::check_written(out, path);
}

inline SpaceTimeField read_field(const std::filesystem::path& path, FieldFormat format) {
    const auto content = text::read_all(path);
    if (format == FieldFormat::flat_binary) return decode_field_binary(content, path.string());
    return decode_field_csv(content, path.string());
}

/// Reads a field and attaches coordinates from a location table.
inline SpaceTimeField read_field(const std::filesystem::path& path, FieldFormat format, const LocationTable& locs) {
    auto f = read_field(path, format);
    if (static_cast<std::size_t>(f.size()) != locs.size()) {
        throw ShapeError(path.string() + ": field has " + std::to_string(f.size()) + " locations, table has " +
                         std::to_string(locs.size()));
    }
    return SpaceTimeField(f.values(), locs, f.t0(), f.dt(), f.mask());
}

inline void write_field(const SpaceTimeField& field, const std::filesystem::path& path, FieldFormat format) {
    auto out = text::open_output(path, format == FieldFormat::flat_binary);
    const auto content = format == FieldFormat::flat_binary ? encode_field_binary(field) : encode_field_csv(field);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    text::check_written(out, path);
}

/// Writes a forecast set as CSV: origin,target,<loc columns> for the point forecasts.
inline void write_forecast_csv(const ForecastSet& fs, const std::filesystem::path& path) {
    fs.validate();
    auto out = text::open_output(path);
    out << "origin,target";
    for (Eigen::Index i = 0; i < fs.point.cols(); ++i) out << ",loc" << i;
    out << '\n';
    for (Eigen::Index r = 0; r < fs.point.rows(); ++r) {
        const auto o = fs.origins[static_cast<std::size_t>(r)];
        out << o << ',' << o + fs.lead;
        for (Eigen::Index i = 0; i < fs.point.cols(); ++i) out << ',' << text::format_double(fs.point(r, i));
        out << '\n';
    }
    text::check_written(out, path);
}

}  // namespace windcast
