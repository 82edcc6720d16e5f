#pragma once

// Benchmark drivers: knot selection compared through SPDE interpolation error on bi-resolution
// fields, and temporal forecasters compared on Lorenz-96.

#include <Eigen/Dense>

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/parallel.hpp"
#include "windcast/core/random.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/knots.hpp"
#include "windcast/power.hpp"
#include "windcast/reservoir.hpp"
#include "windcast/simbench/baselines.hpp"
#include "windcast/simbench/simulate.hpp"
#include "windcast/spde/mesh.hpp"
#include "windcast/spde/model.hpp"

namespace windcast::simbench {

struct BenchRow {
    std::string method;
    std::uint64_t seed = 0;
    /// 0 for spatial rows.
    int lead = 0;
    double mspe = 0.0;
};

struct EnergyRow {
    std::string method;
    std::uint64_t seed = 0;
    int lead = 0;
    double energy = 0.0;
};

struct BenchResult {
    std::string name;
    std::vector<BenchRow> rows;
    std::vector<EnergyRow> energy;
    double seconds = 0.0;
    nlohmann::json settings;

    /// Median MSPE over seeds for one method and lead.
    double median_mspe(const std::string& method, int lead = 0) const {
        std::vector<double> v;
        for (const auto& r : rows) {
            if (r.method == method && r.lead == lead) v.push_back(r.mspe);
        }
        if (v.empty()) throw ArgumentError("no bench rows for method " + method + " at lead " + std::to_string(lead));
        return median(std::move(v));
    }

    std::vector<std::string> methods() const {
        std::vector<std::string> out;
        for (const auto& r : rows) {
            if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
        }
        return out;
    }

    std::vector<int> leads() const {
        std::vector<int> out;
        for (const auto& r : rows) {
            if (std::find(out.begin(), out.end(), r.lead) == out.end()) out.push_back(r.lead);
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

// ---------------------------------------------------------------- spatial

struct SpatialBenchOptions {
    BiResolutionSpec field{};
    std::size_t n_red = 100;
    std::size_t replications = 20;
    std::uint64_t seed = 1;
    std::vector<KnotMethod> methods{KnotMethod::sp, KnotMethod::grid, KnotMethod::rand};
    /// Fraction of locations held out for scoring.
    double test_fraction = 0.5;
    spde::MeshOptions mesh{};
    spde::FitOptions fit{};
    knots::SupportOptions support{};
    unsigned threads = worker_count();
};

/// Per replication: simulate a field, split locations, pick knots among the training
/// locations with each method, fit the SPDE to the knot values and score interpolation at the
/// held-out locations.
inline BenchResult run_spatial_bench(const SpatialBenchOptions& opt) {
    if (opt.replications < 1) throw ArgumentError("need at least one replication");
    if (!(opt.test_fraction > 0.0 && opt.test_fraction < 1.0)) throw ArgumentError("test fraction must lie in (0, 1)");
    opt.field.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t nm = opt.methods.size();
    std::vector<BenchRow> rows(opt.replications * nm);
    parallel_for(opt.replications, [&](std::size_t r) {
        const std::uint64_t seed = split_seed(opt.seed, r);
        const auto sample = simulate_biresolution_parts(opt.field, seed);
        const std::size_t n = sample.locations.size();
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(split_seed(seed, "split"));
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::llround(opt.test_fraction * static_cast<double>(n)));
        std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
        std::sort(test.begin(), test.end());
        std::sort(train.begin(), train.end());
        const auto train_locs = sample.locations.subset(train);
        const auto test_locs = sample.locations.subset(test);
        Vector truth(static_cast<Eigen::Index>(test.size()));
        for (std::size_t i = 0; i < test.size(); ++i) truth(static_cast<Eigen::Index>(i)) = sample.value(static_cast<Eigen::Index>(test[i]));

        const auto mesh = spde::build_mesh(sample.locations, opt.mesh);
        auto support = opt.support;
        support.threads = 1;
        for (std::size_t k = 0; k < nm; ++k) {
            const auto ks = select_knots(opt.methods[k], train_locs, opt.n_red, split_seed(seed, "knots"), support);
            std::vector<std::size_t> ids;
            for (auto i : ks.indices) ids.push_back(train[i]);
            const auto knot_locs = sample.locations.subset(ids);
            Matrix values(1, static_cast<Eigen::Index>(ids.size()));
            for (std::size_t i = 0; i < ids.size(); ++i) values(0, static_cast<Eigen::Index>(i)) = sample.value(static_cast<Eigen::Index>(ids[i]));
            const auto model = spde::fit_spde(mesh, knot_locs, values, opt.fit);
            const Matrix pred = spde::interpolate(model, knot_locs, values, test_locs);
            rows[r * nm + k] = {to_string(opt.methods[k]), r, 0, (pred.row(0).transpose() - truth).squaredNorm() / static_cast<double>(truth.size())};
        }
    }, opt.threads);
    BenchResult res;
    res.name = "spatial-" + to_string(opt.field.scheme);
    res.rows = std::move(rows);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.settings = {{"scheme", to_string(opt.field.scheme)},
                    {"n", opt.field.n},
                    {"n_red", opt.n_red},
                    {"replications", opt.replications},
                    {"seed", opt.seed},
                    {"test_fraction", opt.test_fraction},
                    {"mesh_vertices", opt.mesh.target_vertices},
                    {"basis_order", opt.fit.order},
                    {"alpha", opt.fit.alpha}};
    return res;
}

// ---------------------------------------------------------------- Lorenz-96

/// Reservoir settings for the Lorenz-96 comparison, sized for a desk machine.
inline reservoir::EsnHyperParams lorenz_default_esn() {
    reservoir::EsnHyperParams hp;
    hp.layers[0].n_h = 1000;
    hp.layers[0].n_reduced = 1000;
    hp.layers[0].nu = 0.9;
    hp.layers[0].eta_in = 0.1;
    hp.lambda = 0.01;
    hp.m = 1;
    hp.batch = 75;
    return hp;
}

/// Small grid searched on a dedicated tuning trajectory.
inline std::vector<reservoir::EsnHyperParams> lorenz_tuning_grid() {
    std::vector<reservoir::EsnHyperParams> grid;
    for (Eigen::Index nh : {500, 1000}) {
        for (double nu : {0.5, 0.9}) {
            for (double lambda : {1e-3, 1e-2, 1e-1}) {
                auto hp = lorenz_default_esn();
                hp.layers[0].n_h = hp.layers[0].n_reduced = nh;
                hp.layers[0].nu = nu;
                hp.lambda = lambda;
                grid.push_back(hp);
            }
        }
    }
    return grid;
}

struct LorenzBenchOptions {
    Lorenz96Spec system{};
    std::vector<int> leads{1, 2, 3};
    std::size_t replications = 20;
    std::uint64_t seed = 1;
    reservoir::EsnHyperParams esn = lorenz_default_esn();
    /// Replace `esn` by the best grid point on a separate tuning trajectory.
    bool tune = false;
    std::vector<reservoir::EsnHyperParams> grid = lorenz_tuning_grid();
    /// Readout refresh window for B-ESN.
    int batch = 75;
    /// Power curve for the energy comparison; speeds are 8 + 2 y clipped at zero.
    std::optional<power::PowerCurve> curve;
    int energy_lead = 2;
    unsigned threads = worker_count();
};

struct TuningReport {
    reservoir::EsnHyperParams chosen;
    double mspe = 0.0;
    std::uint64_t seed = 0;
};

/// Picks ESN hyper-parameters on a trajectory drawn from a seed no replication uses; the first
/// 600 rows of its training window train and the next 200 validate.
inline TuningReport tune_lorenz_esn(const LorenzBenchOptions& opt) {
    const std::uint64_t tseed = split_seed(opt.seed, "tuning");
    const auto field = simulate_lorenz96(opt.system, tseed);
    const Eigen::Index t_train = opt.system.train;
    const Eigen::Index t_fit = t_train * 3 / 4;
    const Matrix& y = field.values();
    const auto res = reservoir::tune(opt.grid, y.topRows(t_fit), y.middleRows(t_fit, t_train - t_fit), tseed, opt.leads,
                                     opt.threads);
    return {res.best, res.best_mspe, tseed};
}

inline Matrix lorenz_speed(const Matrix& y) { return (8.0 + 2.0 * y.array()).cwiseMax(0.0).matrix(); }

inline BenchResult run_lorenz_bench(const LorenzBenchOptions& opt_in) {
    auto opt = opt_in;
    opt.system.validate();
    if (opt.replications < 1) throw ArgumentError("need at least one replication");
    if (opt.batch < 1) throw ArgumentError("B-ESN batch window must be at least 1");
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json tuning;
    if (opt.tune) {
        const auto t = tune_lorenz_esn(opt);
        opt.esn = t.chosen;
        tuning = {{"validation_mspe", t.mspe}, {"tuning_seed", t.seed}};
    }
    if (opt.curve) opt.curve->validate();
    const bool want_energy = opt.curve && std::find(opt.leads.begin(), opt.leads.end(), opt.energy_lead) != opt.leads.end();

    const std::vector<std::string> names{"PER", "VAR", "ESN", "B-ESN"};
    const std::size_t nl = opt.leads.size();
    std::vector<BenchRow> rows(opt.replications * names.size() * nl);
    std::vector<EnergyRow> energy(want_energy ? opt.replications * names.size() : 0);
    parallel_for(opt.replications, [&](std::size_t r) {
        const std::uint64_t seed = split_seed(opt.seed, r);
        const auto field = simulate_lorenz96(opt.system, seed);
        const Matrix& y = field.values();
        const Eigen::Index t_train = opt.system.train;
        const Matrix truth = y.bottomRows(y.rows() - t_train);
        const auto model = reservoir::fit_esn(y.topRows(t_train), opt.esn, split_seed(seed, "esn"), 1);
        const std::vector<std::vector<ForecastSet>> sets{
            baseline_per(y, t_train, opt.leads), baseline_var1(y, t_train, opt.leads),
            reservoir::forecast(model, y, t_train, {opt.leads, 0}, 1),
            reservoir::forecast(model, y, t_train, {opt.leads, opt.batch}, 1)};
        for (std::size_t m = 0; m < names.size(); ++m) {
            for (std::size_t l = 0; l < nl; ++l) {
                rows[(r * names.size() + m) * nl + l] = {names[m], r, opt.leads[l], score_mspe(sets[m][l].point, truth).mean};
            }
            if (want_energy) {
                const auto li = static_cast<std::size_t>(std::find(opt.leads.begin(), opt.leads.end(), opt.energy_lead) - opt.leads.begin());
                const Matrix pf = power::to_power(lorenz_speed(sets[m][li].point), *opt.curve);
                const Matrix pt = power::to_power(lorenz_speed(truth), *opt.curve);
                energy[r * names.size() + m] = {names[m], r, opt.energy_lead, power::energy_difference(pf, pt)};
            }
        }
    }, opt.threads);

    BenchResult res;
    res.name = "lorenz96";
    res.rows = std::move(rows);
    res.energy = std::move(energy);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& l0 = opt.esn.layers.front();
    res.settings = {{"n", opt.system.n},
                    {"forcing", opt.system.forcing},
                    {"dt", opt.system.dt},
                    {"thin", opt.system.thin},
                    {"steps", opt.system.steps},
                    {"train", opt.system.train},
                    {"replications", opt.replications},
                    {"seed", opt.seed},
                    {"batch", opt.batch},
                    {"esn", {{"n_h", l0.n_h}, {"nu", l0.nu}, {"eta_in", l0.eta_in}, {"lambda", opt.esn.lambda}, {"m", opt.esn.m}, {"ensemble", opt.esn.ensemble}}}};
    if (!tuning.is_null()) res.settings["tuning"] = tuning;
    if (opt.curve) res.settings["curve"] = opt.curve->name;
    return res;
}

// ---------------------------------------------------------------- output

inline nlohmann::json summary_json(const BenchResult& res) {
    nlohmann::json js;
    js["bench"] = res.name;
    js["seconds"] = res.seconds;
    js["settings"] = res.settings;
    nlohmann::json med = nlohmann::json::object();
    for (const auto& m : res.methods()) {
        for (int lead : res.leads()) {
            std::vector<double> v;
            for (const auto& r : res.rows) {
                if (r.method == m && r.lead == lead) v.push_back(r.mspe);
            }
            nlohmann::json cell{{"median", median(v)}, {"iqr", quantile(v, 0.75) - quantile(v, 0.25)}, {"count", v.size()}};
            if (lead == 0) {
                med[m] = cell;
            } else {
                med[m][std::to_string(lead)] = cell;
            }
        }
    }
    js["mspe"] = med;
    if (!res.energy.empty()) {
        nlohmann::json e = nlohmann::json::object();
        std::map<std::string, std::vector<double>> by;
        for (const auto& r : res.energy) by[r.method].push_back(r.energy);
        for (const auto& [m, v] : by) e[m] = {{"median", median(v)}, {"lead", res.energy.front().lead}};
        js["energy_difference"] = e;
    }
    return js;
}

/// One row per (method, seed, lead): the boxplot-ready layout.
inline void write_bench_csv(const BenchResult& res, const std::filesystem::path& path) {
    auto out = text::open_output(path);
    out << "method,seed,lead,mspe\n";
    for (const auto& r : res.rows) out << r.method << ',' << r.seed << ',' << r.lead << ',' << text::format_double(r.mspe) << '\n';
    text::check_written(out, path);
}

inline void write_energy_csv(const BenchResult& res, const std::filesystem::path& path) {
    auto out = text::open_output(path);
    out << "method,seed,lead,energy_difference\n";
    for (const auto& r : res.energy) out << r.method << ',' << r.seed << ',' << r.lead << ',' << text::format_double(r.energy) << '\n';
    text::check_written(out, path);
}

}  // namespace windcast::simbench
