#pragma once

// Tables and plot-ready CSVs assembled from a run directory. Missing stage outputs are listed
// in report.json rather than treated as errors.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"
#include "windcast/pipeline/manifest.hpp"

namespace windcast::pipeline {

struct ReportResult {
    std::vector<std::string> written;
    std::vector<std::string> absent;
};

namespace detail {

/// CSV rows (header included) split into cells; empty when the file is absent.
inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    if (!fs::exists(p)) return rows;
    auto in = text::open_input(p);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        std::vector<std::string> cells;
        for (auto c : text::split(line)) cells.emplace_back(c);
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline std::size_t column(const std::vector<std::string>& header, const std::string& name, const fs::path& where) {
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) return k;
    }
    throw SchemaError(where.string() + ": missing column " + name);
}

}  // namespace detail

inline ReportResult emit_report(const fs::path& run, const fs::path& out_dir_in = {}) {
    if (!fs::exists(run)) throw IoError("run directory " + run.string() + " does not exist");
    const fs::path out_dir = out_dir_in.empty() ? run / "report" : out_dir_in;
    fs::create_directories(out_dir);
    ReportResult res;
    auto note_absent = [&](const std::string& what) { res.absent.push_back(what); };

    // MSPE table: pipeline rows from the interpolated forecasts, bench rows from their summaries.
    {
        const auto path = out_dir / "mspe_table.csv";
        auto out = text::open_output(path);
        out << "source,model,lead,median,iqr\n";
        bool any = false;
        const auto p = run / "spde" / "mspe.csv";
        const auto rows = detail::read_csv(p);
        if (rows.empty()) {
            note_absent("spde/mspe.csv");
        } else {
            const auto& h = rows.front();
            const auto cm = detail::column(h, "model", p), cl = detail::column(h, "lead", p),
                       cmed = detail::column(h, "median", p), ci = detail::column(h, "iqr", p);
            for (std::size_t r = 1; r < rows.size(); ++r) {
                out << "pipeline," << rows[r][cm] << ',' << rows[r][cl] << ',' << rows[r][cmed] << ',' << rows[r][ci] << '\n';
                any = true;
            }
        }
        if (fs::exists(run / "bench")) {
            for (const auto& e : fs::directory_iterator(run / "bench")) {
                const auto name = e.path().filename().string();
                if (name.size() < 13 || name.substr(name.size() - 13) != "_summary.json") continue;
                const auto js = nlohmann::json::parse(text::read_all(e.path()));
                for (const auto& [model, cell] : js.at("mspe").items()) {
                    if (cell.contains("median")) {
                        out << js.at("bench").get<std::string>() << ',' << model << ",0," << text::format_double(cell.at("median").get<double>())
                            << ',' << text::format_double(cell.at("iqr").get<double>()) << '\n';
                    } else {
                        for (const auto& [lead, c] : cell.items()) {
                            out << js.at("bench").get<std::string>() << ',' << model << ',' << lead << ','
                                << text::format_double(c.at("median").get<double>()) << ','
                                << text::format_double(c.at("iqr").get<double>()) << '\n';
                        }
                    }
                    any = true;
                }
            }
        }
        text::check_written(out, path);
        if (any) res.written.push_back("mspe_table.csv");
    }

    // Coverage table: expected vs achieved per lead and level.
    {
        const auto p = run / "calibrate" / "coverage.csv";
        const auto rows = detail::read_csv(p);
        if (rows.empty()) {
            note_absent("calibrate/coverage.csv");
        } else {
            const auto& h = rows.front();
            const auto cl = detail::column(h, "lead", p), cv = detail::column(h, "variant", p),
                       ce = detail::column(h, "expected", p), ca = detail::column(h, "achieved_mean", p),
                       cd = detail::column(h, "delta", p);
            const auto path = out_dir / "coverage_table.csv";
            auto out = text::open_output(path);
            out << "lead,variant,delta,expected,achieved\n";
            for (std::size_t r = 1; r < rows.size(); ++r) {
                out << rows[r][cl] << ',' << rows[r][cv] << ',' << rows[r][cd] << ',' << rows[r][ce] << ',' << rows[r][ca] << '\n';
            }
            text::check_written(out, path);
            res.written.push_back("coverage_table.csv");
        }
    }

    // Energy table: one row per model (the shortest lead available).
    {
        const auto p = run / "power" / "energy.csv";
        const auto rows = detail::read_csv(p);
        if (rows.empty()) {
            note_absent("power/energy.csv");
        } else {
            const auto& h = rows.front();
            const auto cm = detail::column(h, "model", p), cl = detail::column(h, "lead", p),
                       ce = detail::column(h, "energy_difference_kwh", p);
            const auto path = out_dir / "energy_table.csv";
            auto out = text::open_output(path);
            out << "model,lead,energy_difference_kwh\n";
            std::vector<std::string> seen;
            for (std::size_t r = 1; r < rows.size(); ++r) {
                if (std::find(seen.begin(), seen.end(), rows[r][cm]) != seen.end()) continue;
                seen.push_back(rows[r][cm]);
                out << rows[r][cm] << ',' << rows[r][cl] << ',' << rows[r][ce] << '\n';
            }
            text::check_written(out, path);
            res.written.push_back("energy_table.csv");
        }
    }

    // Error map, copied as is.
    if (fs::exists(run / "spde" / "error_map.csv")) {
        fs::copy_file(run / "spde" / "error_map.csv", out_dir / "error_map.csv", fs::copy_options::overwrite_existing);
        res.written.push_back("error_map.csv");
    } else {
        note_absent("spde/error_map.csv");
    }

    // Boxplot CSVs: one per bench, columns (method, lead, seed, mspe).
    bool bench_found = false;
    if (fs::exists(run / "bench")) {
        for (const auto& e : fs::directory_iterator(run / "bench")) {
            const auto name = e.path().filename().string();
            if (e.path().extension() != ".csv" || name.rfind("sample_", 0) == 0 || name.find("_energy") != std::string::npos) continue;
            const auto rows = detail::read_csv(e.path());
            if (rows.empty()) continue;
            const auto& h = rows.front();
            const auto cm = detail::column(h, "method", e.path()), cl = detail::column(h, "lead", e.path()),
                       cs = detail::column(h, "seed", e.path()), cv = detail::column(h, "mspe", e.path());
            const auto out_name = "boxplot_" + name;
            auto out = text::open_output(out_dir / out_name);
            out << "method,lead,seed,mspe\n";
            for (std::size_t r = 1; r < rows.size(); ++r) out << rows[r][cm] << ',' << rows[r][cl] << ',' << rows[r][cs] << ',' << rows[r][cv] << '\n';
            text::check_written(out, out_dir / out_name);
            res.written.push_back(out_name);
            bench_found = true;
        }
    }
    if (!bench_found) note_absent("bench/*.csv");

    std::sort(res.written.begin(), res.written.end());
    const auto m = read_manifest(run);
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& s : m.stages) stages[s.stage] = s.status;
    nlohmann::json js{{"run", fs::absolute(run).string()},
                      {"written", res.written},
                      {"absent", res.absent},
                      {"stages", stages},
                      {"tampered", verify_manifest(run)}};
    auto out = text::open_output(out_dir / "report.json");
    out << js.dump(2) << '\n';
    text::check_written(out, out_dir / "report.json");
    return res;
}

}  // namespace windcast::pipeline
