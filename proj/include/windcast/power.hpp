#pragma once

// Wind speed to power: power-law shear extrapolation to hub height and turbine power curves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"

namespace windcast::power {

inline constexpr double reference_height = 10.0;

struct ShearModel {
    /// Per-location shear exponent.
    Vector alpha;
    /// Residual variance of the log-ratio regression (0 for the constant fallback).
    Vector residual_var;
    double reference = reference_height;
};

/// Same exponent everywhere; 1/7 is the classic open-terrain value.
inline ShearModel constant_shear(Eigen::Index locations, double alpha = 1.0 / 7.0) {
    if (!std::isfinite(alpha)) throw ArgumentError("shear exponent must be finite");
    return {Vector::Constant(locations, alpha), Vector::Zero(locations), reference_height};
}

namespace detail {

inline void require_positive(const Matrix& m, const char* what) {
    std::vector<std::string> bad;
    for (Eigen::Index t = 0; t < m.rows() && bad.size() < 10; ++t) {
        for (Eigen::Index i = 0; i < m.cols() && bad.size() < 10; ++i) {
            if (!(m(t, i) > 0.0)) bad.push_back("(" + std::to_string(t) + "," + std::to_string(i) + ")");
        }
    }
    if (!bad.empty()) {
        std::string msg = std::string(what) + " must be strictly positive; offending (step,location):";
        for (const auto& b : bad) msg += " " + b;
        throw DomainError(msg);
    }
}

}  // namespace detail

/// Per location, least squares of log(hub / surface) on log(h / 10) through the origin.
inline ShearModel fit_shear(const Matrix& surface, const Matrix& hub, double hub_height) {
    if (surface.rows() != hub.rows() || surface.cols() != hub.cols()) {
        throw ShapeError("surface and hub speed panels must have the same shape");
    }
    if (!(hub_height > 0.0) || hub_height == reference_height) {
        throw ArgumentError("hub height must be positive and differ from the 10 m reference");
    }
    if (surface.rows() < 1) throw ArgumentError("shear fit needs at least one time step");
    detail::require_positive(surface, "surface speeds");
    detail::require_positive(hub, "hub speeds");
    const double x = std::log(hub_height / reference_height);
    const Matrix ratio = (hub.array() / surface.array()).log().matrix();
    ShearModel m;
    m.alpha = ratio.colwise().sum().transpose() / (x * static_cast<double>(ratio.rows()));
    m.residual_var = Vector::Zero(ratio.cols());
    if (ratio.rows() > 1) {
        for (Eigen::Index i = 0; i < ratio.cols(); ++i) {
            m.residual_var(i) = (ratio.col(i).array() - m.alpha(i) * x).square().sum() / static_cast<double>(ratio.rows() - 1);
        }
    }
    return m;
}

/// Z (h / 10)^alpha per location; point forecasts drop the multiplicative noise.
inline Matrix extrapolate(const Matrix& speeds, const ShearModel& shear, double height) {
    if (!(height > 0.0)) throw ArgumentError("target height must be positive");
    if (speeds.cols() != shear.alpha.size()) throw ShapeError("speed panel and shear model disagree on location count");
    if ((speeds.array() < 0.0).any()) throw DomainError("wind speeds must be non-negative");
    Matrix out = speeds;
    for (Eigen::Index i = 0; i < out.cols(); ++i) out.col(i) *= std::pow(height / shear.reference, shear.alpha(i));
    return out;
}

struct PowerCurve {
    std::string name;
    double cut_in = 3.0;
    double rated_speed = 12.0;
    double cut_out = 25.0;
    double rated_power = 2000.0;
    /// (speed m/s, power kW) nodes for the ramp between cut-in and rated speed.
    std::vector<std::pair<double, double>> nodes;
    std::string note;

    void validate() const {
        if (!(cut_in > 0.0 && cut_in < rated_speed && rated_speed < cut_out)) {
            throw ConfigError("power curve needs 0 < cut-in < rated speed < cut-out");
        }
        if (!(rated_power > 0.0)) throw ConfigError("rated power must be positive");
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const auto [s, p] = nodes[k];
            if (s < cut_in || s > rated_speed) throw ConfigError("power curve nodes must lie in [cut-in, rated speed]");
            if (p < 0.0 || p > rated_power) throw ConfigError("power curve nodes must lie in [0, rated power]");
            if (k > 0 && (s <= nodes[k - 1].first || p < nodes[k - 1].second)) {
                throw ConfigError("power curve nodes must have increasing speed and non-decreasing power");
            }
        }
    }

    /// Ramp nodes padded with (cut-in, 0) and (rated, rated power) when absent.
    std::vector<std::pair<double, double>> ramp() const {
        auto r = nodes;
        if (r.empty() || r.front().first > cut_in) r.insert(r.begin(), {cut_in, 0.0});
        if (r.back().first < rated_speed) r.emplace_back(rated_speed, rated_power);
        return r;
    }

    double operator()(double speed) const {
        if (!(speed >= cut_in) || speed >= cut_out) return 0.0;
        if (speed >= rated_speed) return rated_power;
        const auto r = ramp();
        auto hi = std::upper_bound(r.begin(), r.end(), speed, [](double s, const auto& n) { return s < n.first; });
        if (hi == r.begin()) return r.front().second;
        if (hi == r.end()) return r.back().second;
        const auto lo = hi - 1;
        const double w = (speed - lo->first) / (hi->first - lo->first);
        return lo->second + w * (hi->second - lo->second);
    }
};

inline Matrix to_power(const Matrix& hub_speeds, const PowerCurve& curve) {
    curve.validate();
    return hub_speeds.unaryExpr([&](double s) { return curve(s); });
}

/// Sum over steps and sites of |forecast - truth| * step length (kWh for kW panels).
inline double energy_difference(const Matrix& forecast, const Matrix& truth, double step_hours = 1.0) {
    if (forecast.rows() != truth.rows() || forecast.cols() != truth.cols()) {
        throw ShapeError("forecast and truth power panels must have the same shape");
    }
    return (forecast - truth).cwiseAbs().sum() * step_hours;
}

// Curve file: first line "# {json header}", then "speed_mps,power_kw" and the ramp nodes.
inline PowerCurve parse_curve(const std::string& text_in, const std::string& where = "<curve>") {
    std::istringstream in(text_in);
    std::string line;
    PowerCurve c;
    bool header = false, columns = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = text::trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            if (header) continue;
            try {
                const auto js = nlohmann::json::parse(t.substr(1));
                c.name = js.value("name", std::string());
                c.cut_in = js.at("cut_in").get<double>();
                c.rated_speed = js.at("rated_speed").get<double>();
                c.cut_out = js.at("cut_out").get<double>();
                c.rated_power = js.at("rated_power").get<double>();
                c.note = js.value("note", std::string());
            } catch (const nlohmann::json::exception& e) {
                throw SchemaError(where + ": bad curve header: " + e.what());
            }
            header = true;
            continue;
        }
        if (!columns) {
            if (t != "speed_mps,power_kw") throw SchemaError(where + ": expected columns speed_mps,power_kw");
            columns = true;
            continue;
        }
        const auto f = text::split(t);
        const auto s = f.size() == 2 ? text::parse_double(f[0]) : std::nullopt;
        const auto p = f.size() == 2 ? text::parse_double(f[1]) : std::nullopt;
        if (!s || !p) throw SchemaError(where + ":" + std::to_string(lineno) + ": expected two numbers");
        c.nodes.emplace_back(*s, *p);
    }
    if (!header) throw SchemaError(where + ": missing '# {...}' curve header");
    if (!columns) throw SchemaError(where + ": missing column line");
    c.validate();
    return c;
}

inline PowerCurve read_curve(const std::filesystem::path& path) { return parse_curve(text::read_all(path), path.string()); }

inline void write_curve(const PowerCurve& c, const std::filesystem::path& path) {
    auto out = text::open_output(path);
    const nlohmann::json js{{"name", c.name},       {"cut_in", c.cut_in},           {"rated_speed", c.rated_speed},
                            {"cut_out", c.cut_out}, {"rated_power", c.rated_power}, {"note", c.note}};
    out << "# " << js.dump() << "\nspeed_mps,power_kw\n";
    for (const auto& [s, p] : c.nodes) out << text::format_double(s) << ',' << text::format_double(p) << '\n';
    text::check_written(out, path);
}

/// Built-in copy of data/curves/nordex_like.csv, used when no curve file is configured.
inline PowerCurve reference_curve() {
    static const char* text = R"(# {"name":"nordex-like 2.5 MW","cut_in":3.0,"rated_speed":12.5,"cut_out":25.0,"rated_power":2500.0,"note":"illustrative shape only; node values are invented, not manufacturer data"}
speed_mps,power_kw
3.0,0
4.0,65
5.0,180
6.0,350
7.0,590
8.0,900
9.0,1280
10.0,1700
11.0,2120
12.0,2420
12.5,2500
)";
    return parse_curve(text, "<reference curve>");
}

}  // namespace windcast::power
