// windcast: command-line front end for the forecasting pipeline and the benchmarks.
//
// Exit codes: 0 success, 2 configuration or argument error, 3 numerical failure, 4 I/O failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/calibrate.hpp"
#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/knots.hpp"
#include "windcast/pipeline/config.hpp"
#include "windcast/pipeline/manifest.hpp"
#include "windcast/pipeline/report.hpp"
#include "windcast/pipeline/stages.hpp"
#include "windcast/power.hpp"
#include "windcast/reservoir.hpp"
#include "windcast/reservoir_io.hpp"
#include "windcast/simbench/baselines.hpp"
#include "windcast/simbench/bench.hpp"
#include "windcast/spde/mesh.hpp"
#include "windcast/spde/model.hpp"
#include "windcast/trend.hpp"

namespace fs = std::filesystem;
using namespace windcast;
using nlohmann::json;

namespace {

enum Exit { ok = 0, config_error = 2, numerical_error = 3, io_error = 4 };

SpaceTimeField load_field(const fs::path& field, const std::string& locations = {}) {
    const auto fmt = format_from_path(field);
    if (locations.empty()) return read_field(field, fmt);
    return read_field(field, fmt, read_locations(locations));
}

void save_field(const SpaceTimeField& f, const fs::path& path) { write_field(f, path, format_from_path(path)); }

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

Eigen::Index train_rows(Eigen::Index steps, double fraction, long explicit_rows) {
    if (explicit_rows > 0) return explicit_rows;
    if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("--train-fraction must lie in (0, 1)");
    return static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(steps)));
}

/// Knot coordinates from a knots CSV: the snapped locations, in knot order.
LocationTable knot_locations(const fs::path& csv, const LocationTable& all) {
    const auto k = knots::read_knots(csv, fs::path(csv).replace_extension(".json"));
    return all.subset(k.indices);
}

json load_json(const fs::path& p) {
    try {
        return json::parse(text::read_all(p));
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"windcast: space-time wind forecasting with reservoir computing and SPDE interpolation"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
    auto workers = [&] { return threads > 0 ? threads : worker_count(); };

    // ------------------------------------------------------------ trend
    auto* trend_cmd = app.add_subcommand("trend", "Fit the harmonic trend and write standardized residuals");
    std::string tr_input, tr_locs, tr_out;
    std::vector<double> tr_periods = trend::default_periods;
    double tr_fraction = 1.0;
    trend_cmd->add_option("--input", tr_input, "Wind-speed field (.wcf or .csv)")->required();
    trend_cmd->add_option("--locations", tr_locs, "Location table id,x,y");
    trend_cmd->add_option("--periods", tr_periods, "Harmonic periods in hours")->delimiter(',');
    trend_cmd->add_option("--fit-fraction", tr_fraction, "Leading fraction of steps used for fitting")->check(CLI::Range(0.0, 1.0));
    trend_cmd->add_option("--out", tr_out, "Output directory")->required();
    trend_cmd->callback([&] {
        const auto field = load_field(tr_input, tr_locs);
        auto rows = static_cast<Eigen::Index>(std::floor(tr_fraction * static_cast<double>(field.steps())));
        const auto model = trend::fit_trend(field.slice_steps(0, std::max<Eigen::Index>(rows, 1)), tr_periods);
        const fs::path out(tr_out);
        trend::write_trend_model(model, out / "model.csv", out / "model.json");
        save_field(trend::detrend(field, model), out / "residuals.wcf");
        for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
    });

    // ------------------------------------------------------------ select-knots
    auto* knots_cmd = app.add_subcommand("select-knots", "Choose representative locations");
    std::string kn_locs, kn_out, kn_method = "sp";
    std::size_t kn_nred = 100, kn_iter = 500;
    std::uint64_t kn_seed = 0;
    double kn_tol = 1e-7;
    knots_cmd->add_option("--locations", kn_locs, "Location table id,x,y")->required();
    knots_cmd->add_option("--n-red", kn_nred, "Number of knots")->required();
    knots_cmd->add_option("--seed", kn_seed, "Random seed")->required();
    knots_cmd->add_option("--tol", kn_tol, "Support-point convergence tolerance");
    knots_cmd->add_option("--max-iter", kn_iter, "Support-point iteration cap");
    knots_cmd->add_option("--method", kn_method, "sp, grid, rand or sf")->check(CLI::IsMember({"sp", "grid", "rand", "sf"}));
    knots_cmd->add_option("--out", kn_out, "Output directory")->required();
    knots_cmd->callback([&] {
        const auto locs = read_locations(kn_locs);
        knots::SupportOptions opt;
        opt.tol = kn_tol;
        opt.max_iter = kn_iter;
        opt.threads = workers();
        const auto k = simbench::select_knots(simbench::knot_method_from_string(kn_method), locs, kn_nred, kn_seed, opt);
        knots::write_knots(k, locs, fs::path(kn_out) / "knots.csv", fs::path(kn_out) / "knots.json");
        print_json({{"n_red", k.size()}, {"energy_distance", k.energy}, {"iterations", k.iterations}, {"converged", k.converged}});
    });

    // ------------------------------------------------------------ esn
    auto* esn_cmd = app.add_subcommand("esn", "Echo state network forecasting");
    esn_cmd->require_subcommand(1);
    std::string es_input, es_hyper, es_model, es_out, es_grid;
    std::uint64_t es_seed = 0;
    double es_fraction = 0.8;
    long es_rows = 0;
    int es_ensemble = 0, es_batch = 0;
    std::vector<int> es_leads{1, 2, 3};

    auto* esn_fit = esn_cmd->add_subcommand("fit", "Fit reservoirs and readouts on the training window");
    esn_fit->add_option("--input", es_input, "Residual field at the knots")->required();
    esn_fit->add_option("--hyper", es_hyper, "Hyper-parameter JSON (defaults when omitted)");
    esn_fit->add_option("--seed", es_seed, "Random seed")->required();
    esn_fit->add_option("--train-fraction", es_fraction, "Leading fraction of steps used for training");
    esn_fit->add_option("--train-rows", es_rows, "Explicit training length (overrides --train-fraction)");
    esn_fit->add_option("--ensemble", es_ensemble, "Number of independent reservoirs");
    esn_fit->add_option("--out", es_model, "Model file (.wcm)")->required();
    esn_fit->callback([&] {
        const auto y = load_field(es_input).values();
        auto hp = es_hyper.empty() ? reservoir::EsnHyperParams{} : reservoir::hyperparams_from_json(load_json(es_hyper));
        if (es_ensemble > 0) hp.ensemble = es_ensemble;
        const auto t = train_rows(y.rows(), es_fraction, es_rows);
        reservoir::write_model(reservoir::fit_esn(y.topRows(t), hp, es_seed, workers()), es_model);
    });

    auto* esn_fc = esn_cmd->add_subcommand("forecast", "Rolling multi-lead forecasts over the test window");
    esn_fc->add_option("--model", es_model, "Model file (.wcm)")->required();
    esn_fc->add_option("--input", es_input, "Residual field at the knots")->required();
    esn_fc->add_option("--train-fraction", es_fraction, "Leading fraction of steps treated as history");
    esn_fc->add_option("--train-rows", es_rows, "Explicit history length");
    esn_fc->add_option("--lead", es_leads, "Forecast leads")->delimiter(',');
    esn_fc->add_option("--batch", es_batch, "Readout refresh window (0 = fixed readout)");
    esn_fc->add_option("--out", es_out, "Output directory")->required();
    esn_fc->callback([&] {
        const auto field = load_field(es_input);
        const auto model = reservoir::read_model(es_model);
        const auto t = train_rows(field.steps(), es_fraction, es_rows);
        for (const auto& fs : reservoir::forecast(model, field.values(), t, {es_leads, es_batch}, workers())) {
            const SpaceTimeField out(fs.point, field.locations(), field.time(t), field.dt());
            save_field(out, fs::path(es_out) / ("forecast_lead" + std::to_string(fs.lead) + ".wcf"));
        }
    });

    auto* esn_tune = esn_cmd->add_subcommand("tune", "Grid search on a training/validation split");
    esn_tune->add_option("--input", es_input, "Residual field at the knots")->required();
    esn_tune->add_option("--grid", es_grid, "Grid JSON {param: [values]} (built-in grid when omitted)");
    esn_tune->add_option("--hyper", es_hyper, "Base hyper-parameters");
    esn_tune->add_option("--seed", es_seed, "Random seed")->required();
    esn_tune->add_option("--train-fraction", es_fraction, "Fraction of steps used for fitting; the rest validates");
    esn_tune->add_option("--lead", es_leads, "Leads averaged in the validation score")->delimiter(',');
    esn_tune->add_option("--out", es_out, "Best hyper-parameters (JSON)")->required();
    esn_tune->callback([&] {
        const auto y = load_field(es_input).values();
        const auto base = es_hyper.empty() ? reservoir::EsnHyperParams{} : reservoir::hyperparams_from_json(load_json(es_hyper));
        const auto grid_js = es_grid.empty() ? reservoir::default_search_grid() : load_json(es_grid);
        const auto grid = reservoir::expand_grid(grid_js, base, es_seed);
        const auto t = train_rows(y.rows(), es_fraction, 0);
        const auto res = reservoir::tune(grid, y.topRows(t), y.bottomRows(y.rows() - t), es_seed, es_leads, workers());
        auto out = text::open_output(es_out);
        out << reservoir::to_json(res.best).dump(2) << '\n';
        text::check_written(out, es_out);
        print_json({{"grid_points", grid.size()}, {"validation_mspe", res.best_mspe}});
    });

    // ------------------------------------------------------------ spde
    auto* spde_cmd = app.add_subcommand("spde", "SPDE spatial model");
    spde_cmd->require_subcommand(1);
    std::string sp_input, sp_locs, sp_knots, sp_out, sp_model, sp_targets;
    std::size_t sp_vertices = 1000, sp_snapshots = 50;
    int sp_order = 0, sp_alpha = 2;
    auto* spde_fit = spde_cmd->add_subcommand("fit", "Fit the SPDE parameters to snapshots at the knots");
    spde_fit->add_option("--input", sp_input, "Residual field at all locations")->required();
    spde_fit->add_option("--locations", sp_locs, "Location table id,x,y")->required();
    spde_fit->add_option("--knots", sp_knots, "Knots CSV from select-knots")->required();
    spde_fit->add_option("--mesh-vertices", sp_vertices, "Target mesh size");
    spde_fit->add_option("--basis-order", sp_order, "Fourier order of the non-stationary parameters");
    spde_fit->add_option("--alpha", sp_alpha, "Smoothness 1 or 2")->check(CLI::IsMember({1, 2}));
    spde_fit->add_option("--max-snapshots", sp_snapshots, "Snapshots used by the likelihood");
    spde_fit->add_option("--out", sp_out, "Output directory")->required();
    spde_fit->callback([&] {
        const auto locs = read_locations(sp_locs);
        const auto field = load_field(sp_input, sp_locs);
        const auto k = knots::read_knots(sp_knots, fs::path(sp_knots).replace_extension(".json"));
        const Matrix y = field.select_locations(k.indices).values();
        spde::MeshOptions mo;
        mo.target_vertices = sp_vertices;
        const auto mesh = spde::build_mesh(locs, mo);
        const auto s = static_cast<Eigen::Index>(std::min<std::size_t>(sp_snapshots, static_cast<std::size_t>(y.rows())));
        Matrix snaps(s, y.cols());
        for (Eigen::Index r = 0; r < s; ++r) snaps.row(r) = y.row(r * y.rows() / s);
        spde::FitOptions fo;
        fo.order = sp_order;
        fo.alpha = sp_alpha;
        const auto model = spde::fit_spde(mesh, locs.subset(k.indices), snaps, fo);
        const fs::path out(sp_out);
        spde::write_mesh(mesh, out / "vertices.csv", out / "triangles.csv");
        spde::write_spde(model, out / "model.wcs");
        const auto params = spde::params_json(model);
        auto pj = text::open_output(out / "params.json");
        pj << params.dump(2) << '\n';
        text::check_written(pj, out / "params.json");
        print_json(params);
    });
    auto* spde_int = spde_cmd->add_subcommand("interpolate", "Posterior-mean interpolation from knots to targets");
    spde_int->add_option("--model", sp_model, "SPDE model file (.wcs)")->required();
    spde_int->add_option("--input", sp_input, "Values at the knots (field with knot coordinates)")->required();
    spde_int->add_option("--targets", sp_targets, "Target location table id,x,y")->required();
    spde_int->add_option("--out", sp_out, "Output field")->required();
    spde_int->callback([&] {
        const auto model = spde::read_spde(sp_model);
        const auto f = load_field(sp_input);
        if (!f.locations().placed()) throw ArgumentError(sp_input + " carries no coordinates; write it with locations attached");
        const auto targets = read_locations(sp_targets);
        const Matrix pred = spde::interpolate(model, f.locations(), f.values(), targets);
        save_field(SpaceTimeField(pred, targets, f.t0(), f.dt()), sp_out);
    });

    // ------------------------------------------------------------ calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "Shrinkage-calibrated prediction intervals");
    std::string ca_truth, ca_fc, ca_model, ca_out;
    double ca_level = 0.95, ca_delta_max = 0.5, ca_delta_step = 0.05, ca_fit = 0.5;
    std::vector<double> ca_center;
    int ca_lead = 1;
    cal_cmd->add_option("--truth", ca_truth, "Observed residual field over the test window (with coordinates)")->required();
    cal_cmd->add_option("--forecast", ca_fc, "Forecast field aligned with --truth")->required();
    cal_cmd->add_option("--model", ca_model, "SPDE model file (.wcs)")->required();
    cal_cmd->add_option("--level", ca_level, "Nominal coverage")->check(CLI::Range(0.0, 1.0));
    cal_cmd->add_option("--center", ca_center, "Square centre x,y (default: centroid)")->delimiter(',')->expected(2);
    cal_cmd->add_option("--delta-max", ca_delta_max, "Largest square half-side");
    cal_cmd->add_option("--delta-step", ca_delta_step, "Half-side increment");
    cal_cmd->add_option("--lead", ca_lead, "Lead of the forecasts (for reporting)");
    cal_cmd->add_option("--fit-fraction", ca_fit, "Leading share of steps used to estimate the intervals");
    cal_cmd->add_option("--out", ca_out, "Output directory")->required();
    cal_cmd->callback([&] {
        const auto truth = load_field(ca_truth);
        const auto fc = load_field(ca_fc);
        if (truth.steps() != fc.steps() || truth.size() != fc.size()) throw ShapeError("--truth and --forecast differ in shape");
        if (!truth.locations().placed()) throw ArgumentError(ca_truth + " carries no coordinates");
        const auto model = spde::read_spde(ca_model);
        const Matrix r = truth.values() - fc.values();
        const auto n_fit = static_cast<Eigen::Index>(std::floor(ca_fit * static_cast<double>(r.rows())));
        if (n_fit < 2 || n_fit >= r.rows()) throw ArgumentError("--fit-fraction leaves too few steps");
        std::vector<Eigen::Index> origins;
        for (Eigen::Index w = 0; w < n_fit; ++w) origins.push_back(w);
        const auto fit = calibrate::summarize(ca_lead, origins, r.topRows(n_fit));
        const Matrix emp = calibrate::empirical_covariance(fit);
        const Matrix prior = spde::prior_covariance(model, truth.locations(), true);
        Matrix spde_cal(prior.rows(), prior.cols());
        for (Eigen::Index i = 0; i < prior.rows(); ++i) {
            for (Eigen::Index j = 0; j < prior.cols(); ++j) {
                const double d = fit.sd(i) * fit.sd(j);
                spde_cal(i, j) = d > 0.0 ? prior(i, j) / d : 0.0;
            }
        }
        std::vector<double> halves;
        for (int k = 1; k * ca_delta_step <= ca_delta_max + 1e-12; ++k) halves.push_back(k * ca_delta_step);
        const Point center = ca_center.size() == 2 ? Point{ca_center[0], ca_center[1]} : calibrate::centroid(truth.locations());
        calibrate::SelectOptions so;
        so.level = ca_level;
        const auto sel = calibrate::select_delta(fit, spde_cal, emp, truth.locations(), center, halves, so);
        calibrate::write_delta_diagnostics(sel, fs::path(ca_out) / "delta.csv");
        const Matrix eval = r.bottomRows(r.rows() - n_fit);
        Vector hw(eval.cols());
        const double z = calibrate::interval_z(ca_level);
        for (Eigen::Index i = 0; i < hw.size(); ++i) {
            hw(i) = z * fit.sd(i) * std::sqrt(std::max(0.0, sel.delta * spde_cal(i, i) + (1.0 - sel.delta) * emp(i, i)));
        }
        const Vector cov = calibrate::empirical_coverage(eval, hw);
        print_json({{"lead", ca_lead}, {"level", ca_level}, {"delta", sel.delta}, {"half_side", sel.half_side},
                    {"achieved_coverage", cov.mean()}});
    });

    // ------------------------------------------------------------ power
    auto* pw_cmd = app.add_subcommand("power", "Wind speed to power");
    pw_cmd->require_subcommand(1);
    std::string pw_input, pw_curve, pw_out, pw_fc, pw_truth;
    double pw_height = 80.0, pw_shear = 1.0 / 7.0, pw_price = 0.0;
    auto* pw_conv = pw_cmd->add_subcommand("convert", "Extrapolate 10 m speeds to hub height and apply a power curve");
    pw_conv->add_option("--input", pw_input, "10 m wind-speed field")->required();
    pw_conv->add_option("--curve", pw_curve, "Power curve CSV (built-in reference curve when omitted)");
    pw_conv->add_option("--hub-height", pw_height, "Hub height in metres")->check(CLI::PositiveNumber);
    pw_conv->add_option("--shear", pw_shear, "Shear exponent");
    pw_conv->add_option("--out", pw_out, "Output power field (kW)")->required();
    pw_conv->callback([&] {
        const auto f = load_field(pw_input);
        const auto curve = pw_curve.empty() ? power::reference_curve() : power::read_curve(pw_curve);
        const Matrix hub = power::extrapolate(f.values(), power::constant_shear(f.size(), pw_shear), pw_height);
        save_field(f.with_values(power::to_power(hub, curve)), pw_out);
    });
    auto* pw_score = pw_cmd->add_subcommand("score", "Absolute energy difference between two power panels");
    pw_score->add_option("--forecast", pw_fc, "Forecast power field (kW)")->required();
    pw_score->add_option("--truth", pw_truth, "Observed power field (kW)")->required();
    pw_score->add_option("--price", pw_price, "Price per MWh for a monetary equivalent");
    pw_score->callback([&] {
        const auto f = load_field(pw_fc);
        const auto t = load_field(pw_truth);
        const double kwh = power::energy_difference(f.values(), t.values(), f.dt());
        json j{{"energy_difference_kwh", kwh}};
        if (pw_price > 0.0) j["monetary"] = kwh / 1000.0 * pw_price;
        print_json(j);
    });

    // ------------------------------------------------------------ bench
    auto* bench_cmd = app.add_subcommand("bench", "Simulation benchmarks");
    bench_cmd->require_subcommand(1);
    std::string be_scheme = "chessboard", be_out = "bench_out", be_curve;
    std::size_t be_nsim = 20, be_n = 3200, be_nred = 100, be_vertices = 1000;
    std::uint64_t be_seed = 1;
    std::vector<int> be_leads{1, 2, 3};
    bool be_tune = false;
    int be_thin = 10;
    auto* be_sp = bench_cmd->add_subcommand("spatial", "Knot-selection comparison on bi-resolution fields");
    be_sp->add_option("--scheme", be_scheme, "chessboard or ray")->check(CLI::IsMember({"chessboard", "ray"}));
    be_sp->add_option("--nsim", be_nsim, "Replications");
    be_sp->add_option("--n", be_n, "Locations per replication");
    be_sp->add_option("--n-red", be_nred, "Knots");
    be_sp->add_option("--mesh-vertices", be_vertices, "Target mesh size");
    be_sp->add_option("--seed", be_seed, "Root seed");
    be_sp->add_option("--out", be_out, "Output directory");
    be_sp->callback([&] {
        simbench::SpatialBenchOptions o;
        o.field.scheme = simbench::scheme_from_string(be_scheme);
        o.field.n = be_n;
        o.n_red = be_nred;
        o.replications = be_nsim;
        o.mesh.target_vertices = be_vertices;
        o.seed = be_seed;
        o.threads = workers();
        const auto res = simbench::run_spatial_bench(o);
        pipeline::detail::write_bench(res, be_out);
        print_json(simbench::summary_json(res));
    });
    auto* be_lz = bench_cmd->add_subcommand("lorenz96", "Forecaster comparison on Lorenz-96");
    be_lz->add_option("--leads", be_leads, "Forecast leads, e.g. 3 for leads 1..3 or 1,2,3")->delimiter(',');
    be_lz->add_option("--nsim", be_nsim, "Replications");
    be_lz->add_option("--seed", be_seed, "Root seed");
    be_lz->add_option("--thin", be_thin, "Integrator steps per recorded time point");
    be_lz->add_flag("--tune", be_tune, "Pick reservoir settings on a separate tuning trajectory");
    be_lz->add_option("--curve", be_curve, "Power curve for the energy comparison");
    be_lz->add_option("--out", be_out, "Output directory");
    be_lz->callback([&] {
        simbench::LorenzBenchOptions o;
        // A single value n means leads 1..n.
        if (be_leads.size() == 1) {
            const int n = be_leads.front();
            be_leads.clear();
            for (int a = 1; a <= n; ++a) be_leads.push_back(a);
        }
        o.leads = be_leads;
        o.replications = be_nsim;
        o.seed = be_seed;
        o.system.thin = be_thin;
        o.tune = be_tune;
        o.curve = be_curve.empty() ? power::reference_curve() : power::read_curve(be_curve);
        o.threads = workers();
        const auto res = simbench::run_lorenz_bench(o);
        pipeline::detail::write_bench(res, be_out);
        print_json(simbench::summary_json(res));
    });

    // ------------------------------------------------------------ run / report / verify
    auto* run_cmd = app.add_subcommand("run", "Run the pipeline described by a config file");
    std::string ru_config;
    std::vector<std::string> ru_set;
    bool ru_no_env = false;
    run_cmd->add_option("--config", ru_config, "JSON config (built-in defaults when omitted)");
    run_cmd->add_option("--set", ru_set, "Override a field, e.g. --set knots.n_red=40 (repeatable)");
    run_cmd->add_flag("--ignore-env", ru_no_env, "Ignore WINDCAST_CFG_* environment overrides");
    run_cmd->callback([&] {
        auto cfg = pipeline::load_config(ru_config.empty() ? std::nullopt : std::optional<fs::path>(ru_config), ru_set, !ru_no_env);
        if (threads > 0) cfg.threads = threads;
        const auto res = pipeline::run_pipeline(cfg, &std::cerr);
        json j = json::object();
        for (const auto& s : res.stages) j[s.stage] = s.action;
        print_json({{"output_dir", cfg.output_dir.string()}, {"stages", j}});
    });

    auto* cfg_cmd = app.add_subcommand("config", "Print the effective configuration");
    cfg_cmd->add_option("--config", ru_config, "JSON config");
    cfg_cmd->add_option("--set", ru_set, "Override a field (repeatable)");
    cfg_cmd->callback([&] {
        const auto cfg = pipeline::load_config(ru_config.empty() ? std::nullopt : std::optional<fs::path>(ru_config), ru_set);
        print_json(cfg.raw);
    });

    auto* rep_cmd = app.add_subcommand("report", "Assemble tables and plot-ready CSVs from a run directory");
    std::string rp_run, rp_out;
    rep_cmd->add_option("--run", rp_run, "Run directory")->required();
    rep_cmd->add_option("--out", rp_out, "Report directory (default <run>/report)");
    rep_cmd->callback([&] {
        const auto res = pipeline::emit_report(rp_run, rp_out);
        print_json({{"written", res.written}, {"absent", res.absent}});
    });

    auto* ver_cmd = app.add_subcommand("verify", "Check run outputs against the manifest digests");
    ver_cmd->add_option("--run", rp_run, "Run directory")->required();
    int verify_status = 0;
    ver_cmd->callback([&] {
        const auto problems = pipeline::verify_manifest(rp_run);
        for (const auto& p : problems) std::cout << p << '\n';
        if (problems.empty()) std::cout << "manifest ok\n";
        verify_status = problems.empty() ? 0 : 4;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config_error;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const ArgumentError& e) {
        std::cerr << "argument error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return Exit::config_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return Exit::numerical_error;
    } catch (const GeometryError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return Exit::numerical_error;
    } catch (const IoError& e) {
        std::cerr << "I/O failure: " << e.what() << '\n';
        return Exit::io_error;
    } catch (const SchemaError& e) {
        std::cerr << "I/O failure: " << e.what() << '\n';
        return Exit::io_error;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O failure: " << e.what() << '\n';
        return Exit::io_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::numerical_error;
    }
    return verify_status;
}
