#pragma once

// The end-to-end pipeline. Each stage reads its inputs from the run directory, so a stage
// whose fingerprint is unchanged can be skipped and its files reused by later stages.
//
//   input      input/field.wcf, input/locations.csv
//   trend      trend/model.{csv,json}, trend/residuals.wcf
//   knots      knots/knots.{csv,json}
//   esn        esn/model.wcm, esn/hyper.json, esn/forecast_<model>_lead<a>.wcf, esn/mspe.csv
//   spde       spde/{vertices,triangles}.csv, spde/model.wcs, spde/params.json,
//              spde/interp_<model>_lead<a>.wcf, spde/mspe.csv, spde/error_map.csv
//   calibrate  calibrate/coverage.csv, calibrate/delta_lead<a>_q<level>.csv, calibrate/summary.json
//   power      power/power_<model>_lead<a>.wcf, power/truth.wcf, power/energy.csv
//   bench      bench/<name>.csv, bench/<name>_summary.json, bench/sample_*.csv

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/calibrate.hpp"
#include "windcast/core/error.hpp"
#include "windcast/core/hash.hpp"
#include "windcast/core/random.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/knots.hpp"
#include "windcast/pipeline/config.hpp"
#include "windcast/pipeline/manifest.hpp"
#include "windcast/power.hpp"
#include "windcast/reservoir.hpp"
#include "windcast/reservoir_io.hpp"
#include "windcast/simbench/baselines.hpp"
#include "windcast/simbench/bench.hpp"
#include "windcast/simbench/simulate.hpp"
#include "windcast/spde/mesh.hpp"
#include "windcast/spde/model.hpp"
#include "windcast/trend.hpp"

namespace windcast::pipeline {

/// Forecast models carried through the pipeline, with their file tags.
inline const std::vector<std::pair<std::string, std::string>>& pipeline_models() {
    static const std::vector<std::pair<std::string, std::string>> m{{"B-ESN", "besn"}, {"ESN", "esn"}, {"PER", "per"}};
    return m;
}

inline const std::map<std::string, std::vector<std::string>>& stage_dependencies() {
    static const std::map<std::string, std::vector<std::string>> d{
        {"input", {}},
        {"trend", {"input"}},
        {"knots", {"input"}},
        {"esn", {"trend", "knots"}},
        {"spde", {"trend", "knots", "esn"}},
        {"calibrate", {"trend", "spde"}},
        {"power", {"input", "trend", "spde"}},
        {"bench", {}}};
    return d;
}

/// Config that a stage's results depend on.
inline json stage_section(const Config& cfg, const std::string& stage) {
    const auto& r = cfg.raw;
    json s{{"stage", stage}, {"seed", cfg.seed}};
    if (stage == "input") s["input"] = r.at("input");
    if (stage == "trend") s["trend"] = r.at("trend"), s["train_fraction"] = r.at("esn").at("train_fraction");
    if (stage == "knots") s["knots"] = r.at("knots");
    if (stage == "esn") s["esn"] = r.at("esn");
    if (stage == "spde") s["spde"] = r.at("spde");
    if (stage == "calibrate") s["calibrate"] = r.at("calibrate");
    if (stage == "power") s["power"] = r.at("power");
    if (stage == "bench") s["bench"] = r.at("bench");
    return s;
}

namespace detail {

inline std::string lead_tag(int a) { return "lead" + std::to_string(a); }

inline SpaceTimeField load_field(const fs::path& p) { return read_field(p, FieldFormat::flat_binary); }

inline SpaceTimeField load_input(const fs::path& run) {
    const auto locs = read_locations(run / "input" / "locations.csv");
    return read_field(run / "input" / "field.wcf", FieldFormat::flat_binary, locs);
}

inline Eigen::Index train_rows(const Config& cfg, Eigen::Index steps) {
    const auto t = static_cast<Eigen::Index>(std::floor(cfg.train_fraction * static_cast<double>(steps)));
    const int max_lead = *std::max_element(cfg.leads.begin(), cfg.leads.end());
    if (t < max_lead + 2 || steps - t < 4) {
        throw ConfigError("esn.train_fraction leaves too few training or test steps for " + std::to_string(steps) +
                          " time steps");
    }
    return t;
}

inline void write_mspe_row(std::ostream& out, const std::string& model, int lead, const simbench::MspeSummary& s) {
    out << model << ',' << lead << ',' << text::format_double(s.mean) << ',' << text::format_double(s.median) << ','
        << text::format_double(s.iqr) << '\n';
}

inline void write_json(const json& j, const fs::path& path) {
    auto out = text::open_output(path);
    out << j.dump(2) << '\n';
    text::check_written(out, path);
}

/// Up to `cap` location ids spread evenly over the table.
inline std::vector<std::size_t> spread_ids(std::size_t n, std::size_t cap) {
    std::vector<std::size_t> ids;
    const std::size_t k = std::min(n, cap);
    for (std::size_t i = 0; i < k; ++i) ids.push_back(i * n / k);
    return ids;
}

// ---------------------------------------------------------------- stages

inline void run_input(const Config& cfg, const fs::path& run) {
    SpaceTimeField field;
    if (cfg.synthetic) {
        field = simbench::simulate_wind(*cfg.synthetic, split_seed(cfg.seed, "input"));
    } else {
        const auto locs = read_locations(cfg.locations_path);
        field = read_field(cfg.field_path, format_from_path(cfg.field_path), locs);
    }
    if (field.has_mask()) throw ArgumentError("the pipeline needs a complete field; masked cells are not supported");
    write_field(field, run / "input" / "field.wcf", FieldFormat::flat_binary);
    write_locations(field.locations(), run / "input" / "locations.csv");
}

inline void run_trend(const Config& cfg, const fs::path& run) {
    const auto field = load_input(run);
    const auto t_train = train_rows(cfg, field.steps());
    const auto model = trend::fit_trend(field.slice_steps(0, t_train), cfg.periods);
    write_trend_model(model, run / "trend" / "model.csv", run / "trend" / "model.json");
    write_field(trend::detrend(field, model), run / "trend" / "residuals.wcf", FieldFormat::flat_binary);
}

inline void run_knots(const Config& cfg, const fs::path& run) {
    const auto locs = read_locations(run / "input" / "locations.csv");
    if (cfg.n_red > locs.size()) {
        throw ConfigError("knots.n_red = " + std::to_string(cfg.n_red) + " exceeds the " + std::to_string(locs.size()) +
                          " available locations");
    }
    knots::SupportOptions opt;
    opt.max_iter = cfg.knot_max_iter;
    opt.tol = cfg.knot_tol;
    opt.threads = cfg.threads;
    const auto k = knots::support_points(locs, cfg.n_red, split_seed(cfg.seed, "knots"), opt);
    knots::write_knots(k, locs, run / "knots" / "knots.csv", run / "knots" / "knots.json");
}

struct KnotData {
    knots::KnotSet set;
    LocationTable locations;
};

inline KnotData load_knots(const fs::path& run, const LocationTable& all) {
    KnotData d;
    d.set = knots::read_knots(run / "knots" / "knots.csv", run / "knots" / "knots.json");
    d.locations = all.subset(d.set.indices);
    return d;
}

inline SpaceTimeField as_field(const ForecastSet& fs, const LocationTable& locs, const SpaceTimeField& like,
                               Eigen::Index t_train) {
    return SpaceTimeField(fs.point, locs, like.time(t_train), like.dt());
}

inline void run_esn(const Config& cfg, const fs::path& run) {
    const auto residuals = load_field(run / "trend" / "residuals.wcf");
    const auto locs = read_locations(run / "input" / "locations.csv");
    const auto kd = load_knots(run, locs);
    const Matrix y = residuals.select_locations(kd.set.indices).values();
    const auto t_train = train_rows(cfg, y.rows());

    auto hp = cfg.esn;
    json hyper{{"tuned", false}};
    if (cfg.raw.at("esn").contains("grid")) {
        const auto grid = reservoir::expand_grid(cfg.raw.at("esn").at("grid"), hp, split_seed(cfg.seed, "esn-grid"));
        const Eigen::Index t_fit = t_train * 3 / 4;
        const auto res = reservoir::tune(grid, y.topRows(t_fit), y.middleRows(t_fit, t_train - t_fit),
                                         split_seed(cfg.seed, "esn-tune"), cfg.leads, cfg.threads);
        hp = res.best;
        hp.batch = cfg.batch;
        hyper = {{"tuned", true}, {"grid_points", grid.size()}, {"validation_mspe", res.best_mspe}};
    }
    hyper["hyper"] = reservoir::to_json(hp);
    write_json(hyper, run / "esn" / "hyper.json");

    const auto model = reservoir::fit_esn(y.topRows(t_train), hp, split_seed(cfg.seed, "esn"), cfg.threads);
    reservoir::write_model(model, run / "esn" / "model.wcm");
    const std::vector<std::vector<ForecastSet>> sets{
        reservoir::forecast(model, y, t_train, {cfg.leads, cfg.batch}, cfg.threads),
        reservoir::forecast(model, y, t_train, {cfg.leads, 0}, cfg.threads),
        simbench::baseline_per(y, t_train, cfg.leads)};
    const Matrix truth = y.bottomRows(y.rows() - t_train);
    auto out = text::open_output(run / "esn" / "mspe.csv");
    out << "model,lead,mean,median,iqr\n";
    for (std::size_t m = 0; m < sets.size(); ++m) {
        const auto& [name, tag] = pipeline_models()[m];
        for (const auto& fs : sets[m]) {
            write_field(as_field(fs, kd.locations, residuals, t_train),
                        run / "esn" / ("forecast_" + tag + "_" + lead_tag(fs.lead) + ".wcf"), FieldFormat::flat_binary);
            write_mspe_row(out, name, fs.lead, simbench::score_mspe(fs.point, truth));
        }
    }
    text::check_written(out, run / "esn" / "mspe.csv");
}

inline void run_spde(const Config& cfg, const fs::path& run) {
    const auto residuals = load_field(run / "trend" / "residuals.wcf");
    const auto locs = read_locations(run / "input" / "locations.csv");
    const auto kd = load_knots(run, locs);
    const auto t_train = train_rows(cfg, residuals.steps());
    const Matrix yk = residuals.select_locations(kd.set.indices).values();

    spde::MeshOptions mo;
    mo.target_vertices = cfg.mesh_vertices;
    mo.buffer = cfg.mesh_buffer;
    const auto mesh = spde::build_mesh(locs, mo);
    spde::write_mesh(mesh, run / "spde" / "vertices.csv", run / "spde" / "triangles.csv");

    const auto s = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.max_snapshots, static_cast<std::size_t>(t_train)));
    Matrix snaps(s, yk.cols());
    for (Eigen::Index k = 0; k < s; ++k) snaps.row(k) = yk.row(k * t_train / s);
    spde::FitOptions fo;
    fo.order = cfg.basis_order;
    fo.alpha = cfg.alpha;
    const auto model = spde::fit_spde(mesh, kd.locations, snaps, fo);
    spde::write_spde(model, run / "spde" / "model.wcs");
    write_json(spde::params_json(model), run / "spde" / "params.json");

    const Matrix truth = residuals.values().bottomRows(residuals.steps() - t_train);
    auto mspe = text::open_output(run / "spde" / "mspe.csv");
    mspe << "model,lead,mean,median,iqr\n";
    auto map = text::open_output(run / "spde" / "error_map.csv");
    map << "model,lead,id,x,y,mspe\n";
    for (const auto& [name, tag] : pipeline_models()) {
        for (int a : cfg.leads) {
            const auto f = load_field(run / "esn" / ("forecast_" + tag + "_" + lead_tag(a) + ".wcf"));
            const Matrix pred = spde::interpolate(model, kd.locations, f.values(), locs);
            write_field(SpaceTimeField(pred, locs, f.t0(), f.dt()), run / "spde" / ("interp_" + tag + "_" + lead_tag(a) + ".wcf"),
                        FieldFormat::flat_binary);
            write_mspe_row(mspe, name, a, simbench::score_mspe(pred, truth));
            const Vector per_loc = (pred - truth).array().square().colwise().mean().transpose();
            for (std::size_t i = 0; i < locs.size(); ++i) {
                map << name << ',' << a << ',' << i << ',' << text::format_double(locs[i].x) << ','
                    << text::format_double(locs[i].y) << ',' << text::format_double(per_loc(static_cast<Eigen::Index>(i))) << '\n';
            }
        }
    }
    text::check_written(mspe, run / "spde" / "mspe.csv");
    text::check_written(map, run / "spde" / "error_map.csv");
}

inline std::string level_tag(double q) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "q%.2f", q);
    return buf;
}

inline void run_calibrate(const Config& cfg, const fs::path& run) {
    const auto residuals = load_field(run / "trend" / "residuals.wcf");
    const auto locs = read_locations(run / "input" / "locations.csv");
    const auto t_train = train_rows(cfg, residuals.steps());
    const auto model = spde::read_spde(run / "spde" / "model.wcs");
    const auto ids = spread_ids(locs.size(), cfg.max_locations);
    const auto cal_locs = locs.subset(ids);
    const Point center = cfg.center ? *cfg.center : calibrate::centroid(cal_locs);
    const Matrix prior = spde::prior_covariance(model, cal_locs, true);
    const Matrix truth = residuals.select_locations(ids).values().bottomRows(residuals.steps() - t_train);
    const Eigen::Index n_fit = static_cast<Eigen::Index>(std::floor(cfg.fit_fraction * static_cast<double>(truth.rows())));
    if (n_fit < 2 || truth.rows() - n_fit < 1) throw ConfigError("calibrate.fit_fraction leaves too few test steps");

    auto cov = text::open_output(run / "calibrate" / "coverage.csv");
    cov << "model,lead,level,variant,delta,expected,achieved_mean,achieved_median\n";
    json summary{{"model", "B-ESN"}, {"center", {center.x, center.y}}, {"locations", ids.size()},
                 {"fit_steps", n_fit}, {"evaluation_steps", truth.rows() - n_fit}, {"selections", json::array()}};
    for (int a : cfg.leads) {
        const auto f = load_field(run / "spde" / ("interp_besn_" + lead_tag(a) + ".wcf")).select_locations(ids);
        const Matrix r = truth - f.values();
        std::vector<Eigen::Index> origins;
        for (Eigen::Index w = 0; w < n_fit; ++w) origins.push_back(t_train + w - a);
        const auto fit = calibrate::summarize(a, origins, r.topRows(n_fit));
        const Matrix eval = r.bottomRows(r.rows() - n_fit);
        const Matrix emp = calibrate::empirical_covariance(fit);
        // Model covariance on the calibrated-residual scale.
        Matrix spde_cal = prior;
        for (Eigen::Index i = 0; i < spde_cal.rows(); ++i) {
            for (Eigen::Index j = 0; j < spde_cal.cols(); ++j) {
                const double d = fit.sd(i) * fit.sd(j);
                spde_cal(i, j) = d > 0.0 ? prior(i, j) / d : 0.0;
            }
        }
        for (double q : cfg.levels) {
            calibrate::SelectOptions so;
            so.level = q;
            so.step = cfg.delta_step;
            const auto sel = calibrate::select_delta(fit, spde_cal, emp, cal_locs, center, cfg.half_sides, so);
            calibrate::write_delta_diagnostics(sel, run / "calibrate" / ("delta_" + lead_tag(a) + "_" + level_tag(q) + ".csv"));
            summary["selections"].push_back({{"lead", a}, {"level", q}, {"delta", sel.delta}, {"half_side", sel.half_side}});
            const double z = calibrate::interval_z(q);
            for (const auto& [variant, delta] : std::vector<std::pair<std::string, double>>{
                     {"calibrated", sel.delta}, {"spatial", 1.0}, {"empirical", 0.0}}) {
                Vector hw(eval.cols());
                for (Eigen::Index i = 0; i < hw.size(); ++i) {
                    hw(i) = z * fit.sd(i) * std::sqrt(std::max(0.0, delta * spde_cal(i, i) + (1.0 - delta) * emp(i, i)));
                }
                const Vector c = calibrate::empirical_coverage(eval, hw);
                cov << "B-ESN," << a << ',' << text::format_double(q) << ',' << variant << ',' << text::format_double(delta)
                    << ',' << text::format_double(q) << ',' << text::format_double(c.mean()) << ','
                    << text::format_double(simbench::median(std::vector<double>(c.data(), c.data() + c.size()))) << '\n';
            }
        }
    }
    text::check_written(cov, run / "calibrate" / "coverage.csv");
    write_json(summary, run / "calibrate" / "summary.json");
}

inline power::PowerCurve load_curve(const Config& cfg) {
    return cfg.curve_path.empty() ? power::reference_curve() : power::read_curve(cfg.curve_path);
}

inline void run_power(const Config& cfg, const fs::path& run) {
    const auto input = load_input(run);
    const auto tm = trend::read_trend_model(run / "trend" / "model.csv", run / "trend" / "model.json");
    const auto t_train = train_rows(cfg, input.steps());
    const auto curve = load_curve(cfg);
    const auto shear = power::constant_shear(input.size(), cfg.shear);
    auto to_power = [&](const Matrix& speeds) {
        return power::to_power(power::extrapolate(speeds, shear, cfg.hub_height), curve);
    };
    const auto truth_field = input.slice_steps(t_train, input.steps() - t_train);
    const Matrix truth = to_power(truth_field.values());
    write_field(truth_field.with_values(truth), run / "power" / "truth.wcf", FieldFormat::flat_binary);

    auto out = text::open_output(run / "power" / "energy.csv");
    out << "model,lead,energy_difference_kwh,mean_abs_kw\n";
    for (const auto& [name, tag] : pipeline_models()) {
        for (int a : cfg.leads) {
            const auto y = load_field(run / "spde" / ("interp_" + tag + "_" + lead_tag(a) + ".wcf"));
            const SpaceTimeField yf(y.values(), input.locations(), y.t0(), y.dt());
            const Matrix p = to_power(trend::retrend(yf, tm).values());
            write_field(yf.with_values(p), run / "power" / ("power_" + tag + "_" + lead_tag(a) + ".wcf"), FieldFormat::flat_binary);
            const double e = power::energy_difference(p, truth, input.dt());
            out << name << ',' << a << ',' << text::format_double(e) << ','
                << text::format_double(e / (input.dt() * static_cast<double>(p.size()))) << '\n';
        }
    }
    text::check_written(out, run / "power" / "energy.csv");
}

inline void write_bench(const simbench::BenchResult& res, const fs::path& dir) {
    simbench::write_bench_csv(res, dir / (res.name + ".csv"));
    if (!res.energy.empty()) simbench::write_energy_csv(res, dir / (res.name + "_energy.csv"));
    write_json(simbench::summary_json(res), dir / (res.name + "_summary.json"));
}

inline void run_bench(const Config& cfg, const fs::path& run) {
    const auto& b = cfg.raw.at("bench");
    const fs::path dir = run / "bench";
    fs::create_directories(dir);
    bool any = false;
    try {
        const auto& lz = b.at("lorenz96");
        if (lz.at("enabled").get<bool>()) {
            any = true;
            simbench::LorenzBenchOptions o;
            o.replications = lz.at("nsim").get<std::size_t>();
            o.leads = lz.at("leads").get<std::vector<int>>();
            o.system.thin = lz.at("thin").get<int>();
            o.tune = lz.at("tune").get<bool>();
            o.batch = lz.at("batch").get<int>();
            o.seed = cfg.seed;
            o.curve = load_curve(cfg);
            o.threads = cfg.threads;
            write_bench(simbench::run_lorenz_bench(o), dir);
            // Forecast panels of the first replication, for inspection and plotting.
            const std::uint64_t seed = split_seed(o.seed, std::uint64_t{0});
            const auto field = simbench::simulate_lorenz96(o.system, seed);
            const auto& y = field.values();
            const Eigen::Index t_train = o.system.train;
            auto hp = o.esn;
            if (o.tune) hp = simbench::tune_lorenz_esn(o).chosen;
            const auto model = reservoir::fit_esn(y.topRows(t_train), hp, split_seed(seed, "esn"), cfg.threads);
            for (const auto& fs : reservoir::forecast(model, y, t_train, {o.leads, o.batch}, cfg.threads)) {
                write_forecast_csv(fs, dir / ("sample_besn_" + lead_tag(fs.lead) + ".csv"));
            }
            for (const auto& fs : simbench::baseline_per(y, t_train, o.leads)) {
                write_forecast_csv(fs, dir / ("sample_per_" + lead_tag(fs.lead) + ".csv"));
            }
        }
        const auto& sp = b.at("spatial");
        if (sp.at("enabled").get<bool>()) {
            any = true;
            for (const auto& scheme : sp.at("schemes").get<std::vector<std::string>>()) {
                simbench::SpatialBenchOptions o;
                o.field.scheme = simbench::scheme_from_string(scheme);
                o.field.n = sp.at("n").get<std::size_t>();
                o.n_red = sp.at("n_red").get<std::size_t>();
                o.replications = sp.at("nsim").get<std::size_t>();
                o.mesh.target_vertices = sp.at("mesh_vertices").get<std::size_t>();
                o.seed = cfg.seed;
                o.threads = cfg.threads;
                write_bench(simbench::run_spatial_bench(o), dir);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid bench configuration: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ConfigError(std::string("invalid bench configuration: ") + e.what());
    }
    if (!any) throw ConfigError("bench stage requested but neither bench.lorenz96 nor bench.spatial is enabled");
}

inline const std::map<std::string, std::function<void(const Config&, const fs::path&)>>& stage_functions() {
    static const std::map<std::string, std::function<void(const Config&, const fs::path&)>> f{
        {"input", run_input}, {"trend", run_trend}, {"knots", run_knots},         {"esn", run_esn},
        {"spde", run_spde},   {"power", run_power}, {"calibrate", run_calibrate}, {"bench", run_bench}};
    return f;
}

/// Relative path -> digest for every file under run/stage.
inline std::map<std::string, std::string> hash_outputs(const fs::path& run, const std::string& stage) {
    std::map<std::string, std::string> out;
    const auto dir = run / stage;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), run).generic_string()] = hash::sha256_file(e.path());
    }
    return out;
}

}  // namespace detail

/// Requested stages plus everything they depend on, in pipeline order.
inline std::vector<std::string> stage_closure(const std::vector<std::string>& requested) {
    std::vector<std::string> want = requested;
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& s : std::vector<std::string>(want)) {
            for (const auto& d : stage_dependencies().at(s)) {
                if (std::find(want.begin(), want.end(), d) == want.end()) want.push_back(d), grew = true;
            }
        }
    }
    std::vector<std::string> ordered;
    for (const auto& s : all_stages()) {
        if (std::find(want.begin(), want.end(), s) != want.end()) ordered.push_back(s);
    }
    return ordered;
}

struct StageOutcome {
    std::string stage;
    /// ran | cached | failed | not attempted
    std::string action;
    double seconds = 0.0;
};

struct RunResult {
    std::vector<StageOutcome> stages;
    Manifest manifest;

    std::size_t count(const std::string& action) const {
        return static_cast<std::size_t>(std::count_if(stages.begin(), stages.end(), [&](const auto& s) { return s.action == action; }));
    }
    const StageOutcome* find(const std::string& stage) const {
        for (const auto& s : stages) {
            if (s.stage == stage) return &s;
        }
        return nullptr;
    }
};

/// Runs the configured stages. A stage is skipped when its fingerprint matches the manifest,
/// its outputs are intact and no upstream stage reran. On failure the manifest records the
/// error, later stages are marked not attempted and the original exception propagates.
inline RunResult run_pipeline(const Config& cfg, std::ostream* log = nullptr) {
    const fs::path run = cfg.output_dir;
    RunLock lock(run);
    Manifest manifest = read_manifest(run);
    RunResult result;
    std::map<std::string, bool> reran;
    std::exception_ptr failure;

    for (const auto& stage : stage_closure(cfg.stages)) {
        StageRecord rec;
        rec.stage = stage;
        if (failure) {
            rec.status = "not attempted";
            manifest.put(rec);
            result.stages.push_back({stage, rec.status, 0.0});
            continue;
        }
        std::vector<const StageRecord*> upstream;
        bool upstream_reran = false;
        for (const auto& d : stage_dependencies().at(stage)) {
            upstream.push_back(manifest.find(d));
            upstream_reran = upstream_reran || reran[d];
        }
        std::map<std::string, std::string> external;
        if (stage == "input") {
            for (const auto& p : {cfg.field_path, cfg.locations_path}) {
                if (!p.empty()) external[p.string()] = hash::sha256_file(p);
            }
        }
        if ((stage == "power" || stage == "bench") && !cfg.curve_path.empty()) {
            external[cfg.curve_path.string()] = hash::sha256_file(cfg.curve_path);
        }
        rec.fingerprint = fingerprint(stage_section(cfg, stage), upstream, external);

        const auto* prev = manifest.find(stage);
        if (!upstream_reran && prev && prev->succeeded() && prev->fingerprint == rec.fingerprint &&
            outputs_intact(*prev, run)) {
            rec = *prev;
            rec.status = "cached";
            manifest.put(rec);
            reran[stage] = false;
            result.stages.push_back({stage, "cached", 0.0});
            if (log) *log << "[" << stage << "] up to date\n";
            continue;
        }

        std::error_code ec;
        fs::remove_all(run / stage, ec);
        const auto start = std::chrono::steady_clock::now();
        if (log) *log << "[" << stage << "] running\n" << std::flush;
        try {
            detail::stage_functions().at(stage)(cfg, run);
            rec.status = "ok";
        } catch (const std::exception& e) {
            failure = std::current_exception();
            rec.status = "failed";
            rec.error = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rec.outputs = detail::hash_outputs(run, stage);
        reran[stage] = true;
        manifest.put(rec);
        write_manifest(manifest, run);
        result.stages.push_back({stage, rec.status == "ok" ? "ran" : "failed", rec.seconds});
        if (log) {
            char secs[32];
            std::snprintf(secs, sizeof secs, "%.2f", rec.seconds);
            *log << "[" << stage << "] " << (rec.status == "ok" ? "done" : "FAILED: " + rec.error) << " (" << secs << " s)\n";
        }
    }
    write_manifest(manifest, run);
    result.manifest = manifest;
    if (failure) std::rethrow_exception(failure);
    return result;
}

}  // namespace windcast::pipeline
