#pragma once

// Run configuration: a JSON document merged over built-in defaults, then over environment
// overrides, then over command-line overrides (later wins).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/parallel.hpp"
#include "windcast/core/text.hpp"
#include "windcast/reservoir.hpp"
#include "windcast/reservoir_io.hpp"
#include "windcast/simbench/simulate.hpp"
#include "windcast/trend.hpp"

extern char** environ;

namespace windcast::pipeline {

using nlohmann::json;

/// Environment variables with this prefix override scalar config fields; "__" separates
/// nesting levels, e.g. WINDCAST_CFG_knots__n_red=40.
inline constexpr const char* env_prefix = "WINDCAST_CFG_";

inline const std::vector<std::string>& all_stages() {
    static const std::vector<std::string> s{"input", "trend", "knots", "esn", "spde", "calibrate", "power", "bench"};
    return s;
}

inline json default_config() {
    return json::parse(R"({
  "output_dir": "run",
  "seed": 20240601,
  "threads": 0,
  "stages": ["input", "trend", "knots", "esn", "spde", "calibrate", "power"],
  "input": {
    "field": "",
    "locations": "",
    "synthetic": {"locations": 150, "steps": 1200, "persistence": 0.85, "range": 0.25,
                  "smoothness": 1.5, "root_mean": 2.3, "root_spread": 0.3, "diurnal": 0.25, "anomaly": 0.35}
  },
  "trend": {"periods": [24.0, 12.0, 8.0]},
  "knots": {"n_red": 30, "max_iter": 300, "tol": 1e-7},
  "esn": {
    "train_fraction": 0.8,
    "leads": [1, 2, 3],
    "batch": 75,
    "hyper": {"n_h": 50, "nu": 0.9, "eta_w": 0.05, "eta_in": 0.05, "pi_w": 0.1, "pi_in": 0.1,
              "m": 1, "alpha": 1.0, "lambda": 1.0, "ensemble": 3, "burn_in": 50}
  },
  "spde": {"mesh_vertices": 400, "basis_order": 0, "alpha": 2, "max_snapshots": 40, "buffer": 0.25},
  "calibrate": {"levels": [0.6, 0.8, 0.95], "center": null, "half_sides": [0.1, 0.2, 0.3, 0.4, 0.5],
                "step": 0.01, "fit_fraction": 0.5, "max_locations": 3000},
  "power": {"curve": "", "hub_height": 80.0, "shear": 0.14285714285714285},
  "bench": {
    "lorenz96": {"enabled": false, "nsim": 20, "leads": [1, 2, 3], "thin": 10, "tune": false, "batch": 75},
    "spatial": {"enabled": false, "schemes": ["chessboard", "ray"], "nsim": 20, "n": 3200, "n_red": 100,
                "mesh_vertices": 1000}
  }
})");
}

namespace detail {

inline json parse_scalar(const std::string& text) {
    try {
        auto v = json::parse(text);
        if (v.is_primitive() || v.is_array()) return v;
    } catch (const json::exception&) {
    }
    return text;
}

inline json* locate(json& root, const std::vector<std::string>& path, const std::string& name) {
    json* node = &root;
    for (const auto& key : path) {
        if (!node->is_object() || !node->contains(key)) throw ConfigError("override '" + name + "' names an unknown field");
        node = &(*node)[key];
    }
    if (node->is_object()) throw ConfigError("override '" + name + "' must target a scalar or list field");
    return node;
}

inline std::vector<std::string> split_path(const std::string& s, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = s.find(sep, pos);
        out.push_back(s.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + sep.size();
    }
    return out;
}

}  // namespace detail

/// "a.b.c=value" assignments from the command line.
inline void apply_assignment(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
    const auto key = assignment.substr(0, eq);
    *detail::locate(cfg, detail::split_path(key, "."), key) = detail::parse_scalar(assignment.substr(eq + 1));
}

inline void apply_environment(json& cfg) {
    const std::string prefix = env_prefix;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        const auto key = entry.substr(prefix.size(), eq - prefix.size());
        *detail::locate(cfg, detail::split_path(key, "__"), entry.substr(0, eq)) = detail::parse_scalar(entry.substr(eq + 1));
    }
}

struct Config {
    json raw;
    /// Directory against which relative input paths resolve.
    std::filesystem::path base;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<std::string> stages;

    std::filesystem::path field_path, locations_path, curve_path;
    std::optional<simbench::WindSpec> synthetic;
    std::vector<double> periods;

    std::size_t n_red = 30;
    std::size_t knot_max_iter = 300;
    double knot_tol = 1e-7;

    reservoir::EsnHyperParams esn;
    double train_fraction = 0.8;
    std::vector<int> leads;
    int batch = 75;

    std::size_t mesh_vertices = 400;
    int basis_order = 0;
    int alpha = 2;
    std::size_t max_snapshots = 40;
    double mesh_buffer = 0.25;

    std::vector<double> levels;
    std::optional<Point> center;
    std::vector<double> half_sides;
    double delta_step = 0.01;
    double fit_fraction = 0.5;
    std::size_t max_locations = 3000;

    double hub_height = 80.0;
    double shear = 1.0 / 7.0;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

/// Validates and unpacks a fully merged config document.
inline Config interpret(const json& raw, const std::filesystem::path& base) {
    Config c;
    c.raw = raw;
    c.base = base;
    try {
        c.output_dir = resolve(base, raw.at("output_dir").get<std::string>());
        if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
        if (!raw.at("seed").is_number_unsigned() && !raw.at("seed").is_number_integer()) {
            throw ConfigError("seed must be an explicit integer");
        }
        c.seed = raw.at("seed").get<std::uint64_t>();
        const int threads = raw.at("threads").get<int>();
        c.threads = threads > 0 ? static_cast<unsigned>(threads) : worker_count();
        c.stages = raw.at("stages").get<std::vector<std::string>>();
        for (const auto& s : c.stages) {
            if (std::find(all_stages().begin(), all_stages().end(), s) == all_stages().end()) {
                throw ConfigError("unknown stage '" + s + "'");
            }
        }

        const auto& in = raw.at("input");
        c.field_path = resolve(base, in.at("field").get<std::string>());
        c.locations_path = resolve(base, in.at("locations").get<std::string>());
        if (c.field_path.empty()) {
            const auto& s = in.at("synthetic");
            simbench::WindSpec w;
            w.locations = s.value("locations", w.locations);
            w.steps = s.value("steps", w.steps);
            w.persistence = s.value("persistence", w.persistence);
            w.range = s.value("range", w.range);
            w.smoothness = s.value("smoothness", w.smoothness);
            w.root_mean = s.value("root_mean", w.root_mean);
            w.root_spread = s.value("root_spread", w.root_spread);
            w.diurnal = s.value("diurnal", w.diurnal);
            w.anomaly = s.value("anomaly", w.anomaly);
            try {
                w.validate();
            } catch (const ArgumentError& e) {
                throw ConfigError(std::string("input.synthetic: ") + e.what());
            }
            c.synthetic = w;
        } else if (c.locations_path.empty()) {
            throw ConfigError("input.locations is required when input.field is given");
        }
        c.periods = raw.at("trend").at("periods").get<std::vector<double>>();

        const auto& k = raw.at("knots");
        c.n_red = k.at("n_red").get<std::size_t>();
        c.knot_max_iter = k.at("max_iter").get<std::size_t>();
        c.knot_tol = k.at("tol").get<double>();
        if (c.n_red < 2) throw ConfigError("knots.n_red must be at least 2");

        const auto& e = raw.at("esn");
        c.train_fraction = e.at("train_fraction").get<double>();
        c.leads = e.at("leads").get<std::vector<int>>();
        c.batch = e.at("batch").get<int>();
        try {
            c.esn = reservoir::hyperparams_from_json(e.at("hyper"));
        } catch (const ConfigError& err) {
            throw ConfigError(std::string("esn.hyper: ") + err.what());
        }
        c.esn.batch = c.batch;
        if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("esn.train_fraction must lie in (0, 1)");
        if (c.leads.empty()) throw ConfigError("esn.leads must not be empty");
        for (int a : c.leads) {
            if (a < 1) throw ConfigError("esn.leads must be positive");
        }
        if (c.batch < 1) throw ConfigError("esn.batch must be at least 1");

        const auto& s = raw.at("spde");
        c.mesh_vertices = s.at("mesh_vertices").get<std::size_t>();
        c.basis_order = s.at("basis_order").get<int>();
        c.alpha = s.at("alpha").get<int>();
        c.max_snapshots = s.at("max_snapshots").get<std::size_t>();
        c.mesh_buffer = s.at("buffer").get<double>();
        if (c.alpha != 1 && c.alpha != 2) throw ConfigError("spde.alpha must be 1 or 2");
        if (c.basis_order < 0) throw ConfigError("spde.basis_order must be non-negative");
        if (c.max_snapshots < 1) throw ConfigError("spde.max_snapshots must be positive");

        const auto& cal = raw.at("calibrate");
        c.levels = cal.at("levels").get<std::vector<double>>();
        for (double l : c.levels) {
            if (!(l > 0.0 && l < 1.0)) throw ConfigError("calibrate.levels must lie in (0, 1)");
        }
        if (!cal.at("center").is_null()) {
            const auto v = cal.at("center").get<std::vector<double>>();
            if (v.size() != 2) throw ConfigError("calibrate.center must be [x, y] or null");
            c.center = Point{v[0], v[1]};
        }
        c.half_sides = cal.at("half_sides").get<std::vector<double>>();
        c.delta_step = cal.at("step").get<double>();
        c.fit_fraction = cal.at("fit_fraction").get<double>();
        c.max_locations = cal.at("max_locations").get<std::size_t>();
        if (c.half_sides.empty()) throw ConfigError("calibrate.half_sides must not be empty");
        if (!(c.fit_fraction > 0.0 && c.fit_fraction < 1.0)) throw ConfigError("calibrate.fit_fraction must lie in (0, 1)");

        const auto& p = raw.at("power");
        c.curve_path = resolve(base, p.at("curve").get<std::string>());
        c.hub_height = p.at("hub_height").get<double>();
        c.shear = p.at("shear").get<double>();
        if (!(c.hub_height > 0.0)) throw ConfigError("power.hub_height must be positive");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    for (const auto& path : {c.field_path, c.locations_path, c.curve_path}) {
        if (!path.empty() && !std::filesystem::exists(path)) throw ConfigError("referenced file does not exist: " + path.string());
    }
    return c;
}

/// defaults <- file <- environment <- assignments.
inline Config load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& assignments = {},
                          bool use_environment = true) {
    json cfg = default_config();
    std::filesystem::path base = std::filesystem::current_path();
    if (file) {
        if (!std::filesystem::is_regular_file(*file)) throw ConfigError("config file " + file->string() + " does not exist");
        json user;
        try {
            user = json::parse(text::read_all(*file));
        } catch (const json::exception& e) {
            throw ConfigError(file->string() + ": " + e.what());
        }
        if (!user.is_object()) throw ConfigError(file->string() + ": top level must be an object");
        // Unknown top-level or section keys are errors rather than silently ignored.
        for (const auto& [k, v] : user.items()) {
            if (!cfg.contains(k)) throw ConfigError(file->string() + ": unknown key '" + k + "'");
            if (v.is_object() && cfg[k].is_object() && k != "input") {
                for (const auto& [k2, v2] : v.items()) {
                    if (!cfg[k].contains(k2) && k != "esn") throw ConfigError(file->string() + ": unknown key '" + k + "." + k2 + "'");
                    (void)v2;
                }
            }
        }
        cfg.merge_patch(user);
        base = std::filesystem::absolute(*file).parent_path();
    }
    if (use_environment) apply_environment(cfg);
    for (const auto& a : assignments) apply_assignment(cfg, a);
    return interpret(cfg, base);
}

}  // namespace windcast::pipeline
