#pragma once

// Hyper-parameter JSON, search grids and the binary model container.
//
// Container layout (little-endian):
//   "WCESN001" | u64 json length | json header | per member: u64 seed, per layer:
//   sparse W, sparse W_in, f64 radius, f64 scale; per reducer: dense mean, dense loadings;
//   dense linear/quadratic standardizer vectors; dense readout.
// Sparse payload: u64 rows, u64 cols, u64 nnz, then nnz x (u64 row, u64 col, f64 value).
// Dense payload: u64 rows, u64 cols, then column-major f64 values.

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/random.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/reservoir.hpp"

namespace windcast::reservoir {

inline nlohmann::json to_json(const EsnHyperParams& hp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : hp.layers) {
        layers.push_back({{"n_h", l.n_h}, {"n_reduced", l.n_reduced}, {"nu", l.nu}, {"eta_w", l.eta_w},
                          {"eta_in", l.eta_in}, {"pi_w", l.pi_w}, {"pi_in", l.pi_in}});
    }
    return {{"layers", layers}, {"m", hp.m},         {"tau", hp.tau},       {"alpha", hp.alpha},
            {"lambda", hp.lambda}, {"batch", hp.batch}, {"ensemble", hp.ensemble}, {"burn_in", hp.burn_in}};
}

/// Missing keys keep their defaults; a flat object without "layers" configures a single layer.
inline EsnHyperParams hyperparams_from_json(const nlohmann::json& j) {
    EsnHyperParams hp;
    try {
        auto read_layer = [](const nlohmann::json& o, LayerParams l) {
            l.n_h = o.value("n_h", l.n_h);
            l.n_reduced = o.value("n_reduced", l.n_h);
            l.nu = o.value("nu", l.nu);
            l.eta_w = o.value("eta_w", l.eta_w);
            l.eta_in = o.value("eta_in", l.eta_in);
            l.pi_w = o.value("pi_w", l.pi_w);
            l.pi_in = o.value("pi_in", l.pi_in);
            return l;
        };
        if (j.contains("layers")) {
            hp.layers.clear();
            for (const auto& o : j.at("layers")) hp.layers.push_back(read_layer(o, LayerParams{}));
        } else {
            hp.layers = {read_layer(j, LayerParams{})};
        }
        hp.m = j.value("m", hp.m);
        hp.tau = j.value("tau", hp.tau);
        hp.alpha = j.value("alpha", hp.alpha);
        hp.lambda = j.value("lambda", hp.lambda);
        hp.batch = j.value("batch", hp.batch);
        hp.ensemble = j.value("ensemble", hp.ensemble);
        hp.burn_in = j.value("burn_in", hp.burn_in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid ESN hyper-parameters: ") + e.what());
    }
    hp.validate();
    return hp;
}

/// Default search grid (top layer).
inline nlohmann::json default_search_grid() {
    auto range = [](double lo, double hi, double step) {
        std::vector<double> v;
        for (int k = 0; lo + k * step <= hi + 1e-9; ++k) v.push_back(std::round((lo + k * step) * 1e6) / 1e6);
        return v;
    };
    const std::vector<double> widths{0.005, 0.01, 0.05, 0.1, 0.15};
    std::vector<int> n_h;
    for (int v = 1000; v <= 5000; v += 500) n_h.push_back(v);
    return {{"n_h", n_h},     {"m", {1, 2, 3, 4, 5}}, {"nu", range(0.1, 1.0, 0.1)},
            {"lambda", range(0.1, 0.3, 0.05)},        {"eta_w", widths},
            {"eta_in", widths}, {"pi_w", widths},     {"pi_in", widths},
            {"alpha", range(0.1, 1.0, 0.1)}};
}

/// Expands a grid object {param: [values...]} over `base`. With "samples": k the product is
/// sub-sampled uniformly without replacement (seeded); otherwise it is enumerated in full.
inline std::vector<EsnHyperParams> expand_grid(const nlohmann::json& grid, const EsnHyperParams& base,
                                               std::uint64_t seed) {
    static const std::vector<std::string> keys{"n_h", "m", "nu", "lambda", "eta_w", "eta_in", "pi_w", "pi_in", "alpha"};
    std::vector<std::pair<std::string, std::vector<double>>> axes;
    try {
        for (const auto& k : keys) {
            if (!grid.contains(k)) continue;
            auto vals = grid.at(k).get<std::vector<double>>();
            if (vals.empty()) throw ConfigError("grid axis '" + k + "' is empty");
            axes.emplace_back(k, std::move(vals));
        }
        for (const auto& [k, v] : grid.items()) {
            if (k != "samples" && std::find(keys.begin(), keys.end(), k) == keys.end()) {
                throw ConfigError("unknown grid axis '" + k + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid search grid: ") + e.what());
    }
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.second.size();
    std::vector<std::size_t> cells;
    const std::size_t samples = grid.value("samples", std::size_t{0});
    if (samples > 0 && samples < total) {
        Rng rng(split_seed(seed, "grid"));
        std::vector<std::size_t> chosen;
        while (chosen.size() < samples) {
            const std::size_t c = uniform_index(rng, total);
            if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
        }
        cells = std::move(chosen);
    } else {
        cells.resize(total);
        std::iota(cells.begin(), cells.end(), std::size_t{0});
    }
    std::vector<EsnHyperParams> out;
    for (auto cell : cells) {
        EsnHyperParams hp = base;
        auto& top = hp.layers.back();
        for (const auto& [k, vals] : axes) {
            const double v = vals[cell % vals.size()];
            cell /= vals.size();
            if (k == "n_h") {
                top.n_h = static_cast<Eigen::Index>(v);
                top.n_reduced = top.n_h;
            } else if (k == "m") {
                hp.m = static_cast<int>(v);
            } else if (k == "nu") {
                top.nu = v;
            } else if (k == "lambda") {
                hp.lambda = v;
            } else if (k == "eta_w") {
                top.eta_w = v;
            } else if (k == "eta_in") {
                top.eta_in = v;
            } else if (k == "pi_w") {
                top.pi_w = v;
            } else if (k == "pi_in") {
                top.pi_in = v;
            } else if (k == "alpha") {
                hp.alpha = v;
            }
        }
        hp.validate();
        out.push_back(std::move(hp));
    }
    return out;
}

namespace detail {

inline constexpr char esn_magic[8] = {'W', 'C', 'E', 'S', 'N', '0', '0', '1'};

class Writer {
public:
    void u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void dense(const Matrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.size(); ++k) f64(m.data()[k]);
    }
    void sparse(const SparseMatrix& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        u64(static_cast<std::uint64_t>(m.nonZeros()));
        for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
            for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
                u64(static_cast<std::uint64_t>(it.row()));
                u64(static_cast<std::uint64_t>(it.col()));
                f64(it.value());
            }
        }
    }
    std::string buf;
};

class Reader {
public:
    Reader(const std::string& b, std::string origin) : buf(b), where(std::move(origin)) {}
    void need(std::size_t n) {
        if (pos + n > buf.size()) throw SchemaError(where + ": truncated ESN model container");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(k)])) << (8 * k);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Matrix dense() {
        const auto r = static_cast<Eigen::Index>(u64());
        const auto c = static_cast<Eigen::Index>(u64());
        need(static_cast<std::size_t>(r * c) * 8);
        Matrix m(r, c);
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = f64();
        return m;
    }
    SparseMatrix sparse() {
        const auto r = static_cast<Eigen::Index>(u64());
        const auto c = static_cast<Eigen::Index>(u64());
        const auto nnz = u64();
        need(static_cast<std::size_t>(nnz) * 24);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(nnz);
        for (std::uint64_t k = 0; k < nnz; ++k) {
            const auto i = static_cast<Eigen::Index>(u64());
            const auto j = static_cast<Eigen::Index>(u64());
            if (i >= r || j >= c) throw SchemaError(where + ": sparse index out of range");
            trips.emplace_back(i, j, f64());
        }
        SparseMatrix m(r, c);
        m.setFromTriplets(trips.begin(), trips.end());
        m.makeCompressed();
        return m;
    }
    const std::string& buf;
    std::string where;
    std::size_t pos = 0;
};

}  // namespace detail

inline std::string encode_model(const EsnModel& model) {
    detail::Writer w;
    w.buf.append(detail::esn_magic, 8);
    nlohmann::json header{{"hyperparams", to_json(model.hp)},
                          {"seed", model.seed},
                          {"n_out", model.n_out},
                          {"members", model.members.size()}};
    const std::string js = header.dump();
    w.u64(js.size());
    w.buf += js;
    for (const auto& m : model.members) {
        w.u64(m.seed);
        for (const auto& l : m.layers) {
            w.sparse(l.w);
            w.sparse(l.w_in);
            w.f64(l.radius);
            w.f64(l.scale);
        }
        for (const auto& p : m.reducers) {
            w.dense(p.mean);
            w.dense(p.loadings);
        }
        w.dense(m.linear.mean);
        w.dense(m.linear.scale);
        w.dense(m.quadratic.mean);
        w.dense(m.quadratic.scale);
        w.dense(m.readout);
    }
    return std::move(w.buf);
}

inline EsnModel decode_model(const std::string& buf, const std::string& origin = "<model>") {
    if (buf.size() < 16 || buf.compare(0, 8, std::string(detail::esn_magic, 8)) != 0) {
        throw SchemaError(origin + ": not an ESN model container");
    }
    detail::Reader r(buf, origin);
    r.pos = 8;
    const auto len = r.u64();
    r.need(len);
    EsnModel model;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(r.pos, len));
        model.hp = hyperparams_from_json(header.at("hyperparams"));
        model.seed = header.at("seed").get<std::uint64_t>();
        model.n_out = header.at("n_out").get<Eigen::Index>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(origin + ": bad model header: " + e.what());
    }
    r.pos += len;
    const auto members = header.at("members").get<std::size_t>();
    for (std::size_t k = 0; k < members; ++k) {
        EsnMember m;
        m.seed = r.u64();
        for (int d = 0; d < model.hp.depth(); ++d) {
            Layer l;
            l.w = r.sparse();
            l.w_in = r.sparse();
            l.radius = r.f64();
            l.scale = r.f64();
            m.layers.push_back(std::move(l));
        }
        for (int d = 0; d + 1 < model.hp.depth(); ++d) {
            Pca p;
            p.mean = r.dense();
            p.loadings = r.dense();
            m.reducers.push_back(std::move(p));
        }
        m.linear.mean = r.dense();
        m.linear.scale = r.dense();
        m.quadratic.mean = r.dense();
        m.quadratic.scale = r.dense();
        m.readout = r.dense();
        model.members.push_back(std::move(m));
    }
    if (r.pos != buf.size()) throw SchemaError(origin + ": trailing bytes after ESN model");
    return model;
}

inline void write_model(const EsnModel& model, const std::filesystem::path& path) {
    auto out = text::open_output(path, true);
    const auto bytes = encode_model(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    text::check_written(out, path);
}

inline EsnModel read_model(const std::filesystem::path& path) {
    return decode_model(text::read_all(path), path.string());
}

}  // namespace windcast::reservoir
