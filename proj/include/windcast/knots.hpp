#pragma once

// Representative-location selection by support points: minimize the energy
// distance between a small point set and the empirical location distribution,
// then snap the optimized points onto distinct original locations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/parallel.hpp"
#include "windcast/core/random.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"

namespace windcast::knots {

struct KnotSet {
    /// Optimized continuous coordinates, one per knot.
    std::vector<Point> continuous;
    /// Distinct indices into the parent location table.
    std::vector<std::size_t> indices;
    /// Energy distance of the snapped set to the full data.
    double energy = 0.0;
    /// Energy objective of the continuous iterate after each update (empty when subsampling).
    std::vector<double> history;
    std::size_t iterations = 0;
    bool converged = false;

    std::size_t size() const { return indices.size(); }
};

struct SupportOptions {
    std::size_t max_iter = 500;
    /// Stop once no coordinate moves by more than this.
    double tol = 1e-7;
    /// Data terms use a fresh random subsample of this size per iteration when n exceeds it.
    std::size_t subsample = 10000;
    double eps = 1e-9;
    /// Initial points are jittered by this fraction of the bounding-box diagonal.
    double jitter = 1e-3;
    unsigned threads = worker_count();
};

namespace detail {

inline double mean_pairwise(const std::vector<Point>& a, unsigned threads) {
    const std::size_t n = a.size();
    std::vector<double> rows(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) s += distance(a[i], a[j]);
        rows[i] = s;
    }, threads);
    const double total = 2.0 * std::accumulate(rows.begin(), rows.end(), 0.0);
    return total / (static_cast<double>(n) * static_cast<double>(n));
}

inline double mean_cross(const std::vector<Point>& a, const std::vector<Point>& b, unsigned threads) {
    std::vector<double> rows(a.size(), 0.0);
    parallel_for(a.size(), [&](std::size_t i) {
        double s = 0.0;
        for (const auto& q : b) s += distance(a[i], q);
        rows[i] = s;
    }, threads);
    return std::accumulate(rows.begin(), rows.end(), 0.0) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline double diameter(const std::vector<Point>& pts) {
    double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
    for (const auto& p : pts) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    return std::hypot(xmax - xmin, ymax - ymin);
}

}  // namespace detail

/// 2 E|X - S| - E|S - S'| - E|X - X'| with X the candidate and S the data.
inline double energy_distance(const std::vector<Point>& candidate, const std::vector<Point>& data,
                              unsigned threads = worker_count()) {
    if (candidate.empty() || data.empty()) throw ArgumentError("energy distance needs two non-empty point sets");
    return 2.0 * detail::mean_cross(candidate, data, threads) - detail::mean_pairwise(data, threads) -
           detail::mean_pairwise(candidate, threads);
}

inline double energy_distance(const std::vector<Point>& candidate, const LocationTable& data,
                              unsigned threads = worker_count()) {
    return energy_distance(candidate, data.coords(), threads);
}

/// Nearest data location per point (lowest index on ties); a location already taken
/// by an earlier point is skipped in favour of the nearest unused one.
inline std::vector<std::size_t> snap_to_data(const std::vector<Point>& points, const LocationTable& data) {
    if (points.empty()) throw ArgumentError("snap_to_data needs at least one point");
    if (points.size() > data.size()) throw ArgumentError("more points than data locations to snap to");
    std::vector<char> used(data.size(), 0);
    std::vector<std::size_t> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        std::size_t best = data.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < data.size(); ++j) {
            if (used[j]) continue;
            const double d = distance(p, data[j]);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        used[best] = 1;
        out.push_back(best);
    }
    return out;
}

/// Majorize-minimize iteration for support points, followed by snapping.
inline KnotSet support_points(const LocationTable& data, std::size_t n_red, std::uint64_t seed,
                              const SupportOptions& opt = {}) {
    const std::size_t N = data.size();
    if (n_red == 0) throw ArgumentError("n_red must be at least 1");
    if (n_red > N) {
        throw ArgumentError("n_red = " + std::to_string(n_red) + " exceeds the " + std::to_string(N) +
                            " available locations");
    }
    const auto& y = data.coords();
    Rng rng(split_seed(seed, "support-points"));

    // Seeded draw without replacement (partial Fisher-Yates), then a small jitter so no
    // point starts exactly on a datum.
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < n_red; ++k) std::swap(perm[k], perm[k + uniform_index(rng, N - k)]);
    const double diam = std::max(detail::diameter(y), 1e-300);
    std::vector<Point> x(n_red);
    for (std::size_t k = 0; k < n_red; ++k) {
        x[k] = {y[perm[k]].x + opt.jitter * diam * (uniform01(rng) - 0.5),
                y[perm[k]].y + opt.jitter * diam * (uniform01(rng) - 0.5)};
    }

    const bool sampled = N > opt.subsample;
    const double self_term = sampled ? 0.0 : detail::mean_pairwise(y, opt.threads);
    KnotSet out;
    std::vector<Point> next(n_red);
    std::vector<std::size_t> pick;
    for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
        const std::vector<Point>* target = &y;
        std::vector<Point> sample;
        if (sampled) {
            pick.resize(opt.subsample);
            for (auto& p : pick) p = uniform_index(rng, N);
            sample.reserve(opt.subsample);
            for (auto p : pick) sample.push_back(y[p]);
            target = &sample;
        }
        const auto& ys = *target;
        const double ratio = static_cast<double>(ys.size()) / static_cast<double>(n_red);
        parallel_for(n_red, [&](std::size_t i) {
            double q = 0.0, ax = 0.0, ay = 0.0;
            for (const auto& p : ys) {
                const double w = 1.0 / std::max(distance(x[i], p), opt.eps);
                q += w;
                ax += w * p.x;
                ay += w * p.y;
            }
            double rx = 0.0, ry = 0.0;
            for (std::size_t k = 0; k < n_red; ++k) {
                if (k == i) continue;
                const double w = 1.0 / std::max(distance(x[i], x[k]), opt.eps);
                rx += w * (x[i].x - x[k].x);
                ry += w * (x[i].y - x[k].y);
            }
            next[i] = {(ax + ratio * rx) / q, (ay + ratio * ry) / q};
        }, opt.threads);

        double moved = 0.0;
        for (std::size_t i = 0; i < n_red; ++i) {
            moved = std::max({moved, std::abs(next[i].x - x[i].x), std::abs(next[i].y - x[i].y)});
        }
        x.swap(next);
        out.iterations = iter + 1;
        if (!sampled) {
            out.history.push_back(2.0 * detail::mean_cross(x, y, opt.threads) - self_term -
                                  detail::mean_pairwise(x, opt.threads));
        }
        if (moved < opt.tol) {
            out.converged = true;
            break;
        }
    }

    out.continuous = x;
    out.indices = snap_to_data(x, data);
    std::vector<Point> snapped;
    snapped.reserve(n_red);
    for (auto id : out.indices) snapped.push_back(y[id]);
    out.energy = energy_distance(snapped, y, opt.threads);
    return out;
}

inline void write_knots(const KnotSet& knots, const LocationTable& data, const std::filesystem::path& csv_path,
                        const std::filesystem::path& json_path) {
    auto out = text::open_output(csv_path);
    out << "index,x_cont,y_cont,x_snap,y_snap\n";
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const auto& c = knots.continuous[k];
        const auto& s = data[knots.indices[k]];
        out << knots.indices[k] << ',' << text::format_double(c.x) << ',' << text::format_double(c.y) << ','
            << text::format_double(s.x) << ',' << text::format_double(s.y) << '\n';
    }
    text::check_written(out, csv_path);
    nlohmann::json side{{"n_red", knots.size()},
                        {"energy_distance", knots.energy},
                        {"iterations", knots.iterations},
                        {"converged", knots.converged}};
    auto js = text::open_output(json_path);
    js << side.dump(2) << '\n';
    text::check_written(js, json_path);
}

inline KnotSet read_knots(const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
    KnotSet k;
    auto in = text::open_input(csv_path);
    std::string line;
    if (!std::getline(in, line) || text::split(line).size() != 5) {
        throw SchemaError(csv_path.string() + ": expected header index,x_cont,y_cont,x_snap,y_snap");
    }
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        const auto id = cells.size() == 5 ? text::parse_int(cells[0]) : std::nullopt;
        const auto cx = cells.size() == 5 ? text::parse_double(cells[1]) : std::nullopt;
        const auto cy = cells.size() == 5 ? text::parse_double(cells[2]) : std::nullopt;
        if (!id || *id < 0 || !cx || !cy) throw SchemaError(csv_path.string() + ": malformed row " + std::to_string(row));
        k.indices.push_back(static_cast<std::size_t>(*id));
        k.continuous.push_back({*cx, *cy});
    }
    try {
        const auto side = nlohmann::json::parse(text::read_all(json_path));
        k.energy = side.at("energy_distance").get<double>();
        k.iterations = side.value("iterations", std::size_t{0});
        k.converged = side.value("converged", false);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(json_path.string() + ": " + e.what());
    }
    return k;
}

}  // namespace windcast::knots
