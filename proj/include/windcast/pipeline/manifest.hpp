#pragma once

// Run manifest: one record per stage with the fingerprint of everything the stage consumed,
// the digest of every file it wrote, wall time and status. Fingerprints chain through the
// upstream output digests, so altering any intermediate is detectable.

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windcast/core/error.hpp"
#include "windcast/core/hash.hpp"
#include "windcast/core/text.hpp"

namespace windcast::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* manifest_name = "manifest.json";
inline constexpr const char* lock_name = ".lock";

struct StageRecord {
    std::string stage;
    std::string fingerprint;
    /// ok | cached | failed | not attempted
    std::string status;
    /// Relative output path -> sha256.
    std::map<std::string, std::string> outputs;
    double seconds = 0.0;
    std::string error;

    bool succeeded() const { return status == "ok" || status == "cached"; }
};

struct Manifest {
    std::vector<StageRecord> stages;

    const StageRecord* find(const std::string& stage) const {
        for (const auto& s : stages) {
            if (s.stage == stage) return &s;
        }
        return nullptr;
    }

    void put(StageRecord rec) {
        for (auto& s : stages) {
            if (s.stage == rec.stage) {
                s = std::move(rec);
                return;
            }
        }
        stages.push_back(std::move(rec));
    }
};

inline nlohmann::json to_json(const Manifest& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : m.stages) {
        arr.push_back({{"stage", s.stage},
                       {"fingerprint", s.fingerprint},
                       {"status", s.status},
                       {"outputs", s.outputs},
                       {"seconds", s.seconds},
                       {"error", s.error}});
    }
    return {{"format", "windcast-manifest-1"}, {"stages", arr}};
}

inline Manifest manifest_from_json(const nlohmann::json& j, const std::string& where) {
    Manifest m;
    try {
        if (j.at("format") != "windcast-manifest-1") throw SchemaError(where + ": unknown manifest format");
        for (const auto& s : j.at("stages")) {
            StageRecord r;
            r.stage = s.at("stage").get<std::string>();
            r.fingerprint = s.at("fingerprint").get<std::string>();
            r.status = s.at("status").get<std::string>();
            r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
            r.seconds = s.at("seconds").get<double>();
            r.error = s.at("error").get<std::string>();
            m.stages.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(where + ": malformed manifest: " + e.what());
    }
    return m;
}

inline Manifest read_manifest(const fs::path& run_dir) {
    const auto path = run_dir / manifest_name;
    if (!fs::exists(path)) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text::read_all(path));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return manifest_from_json(j, path.string());
}

/// Written through a temporary file and renamed so readers never see a partial manifest.
inline void write_manifest(const Manifest& m, const fs::path& run_dir) {
    const auto tmp = run_dir / (std::string(manifest_name) + ".tmp");
    {
        auto out = text::open_output(tmp);
        out << to_json(m).dump(2) << '\n';
        text::check_written(out, tmp);
    }
    std::error_code ec;
    fs::rename(tmp, run_dir / manifest_name, ec);
    if (ec) throw IoError("cannot replace manifest in " + run_dir.string() + ": " + ec.message());
}

/// Fingerprint of a stage: its config section plus the output digests of its upstream stages.
inline std::string fingerprint(const nlohmann::json& section, const std::vector<const StageRecord*>& upstream,
                               const std::map<std::string, std::string>& external_inputs = {}) {
    hash::Sha256 h;
    h.update(section.dump());
    for (const auto* u : upstream) {
        h.update("\n#" + u->stage);
        for (const auto& [path, digest] : u->outputs) h.update("\n" + path + "=" + digest);
    }
    for (const auto& [path, digest] : external_inputs) h.update("\n@" + path + "=" + digest);
    return h.hex();
}

/// Outputs recorded for a stage are all present with unchanged digests.
inline bool outputs_intact(const StageRecord& rec, const fs::path& run_dir) {
    for (const auto& [rel, digest] : rec.outputs) {
        const auto p = run_dir / rel;
        if (!fs::exists(p) || hash::sha256_file(p) != digest) return false;
    }
    return true;
}

/// Lists every output whose digest no longer matches the manifest, and every missing output.
inline std::vector<std::string> verify_manifest(const fs::path& run_dir) {
    const auto m = read_manifest(run_dir);
    std::vector<std::string> problems;
    for (const auto& s : m.stages) {
        if (!s.succeeded()) continue;
        for (const auto& [rel, digest] : s.outputs) {
            const auto p = run_dir / rel;
            if (!fs::exists(p)) {
                problems.push_back(s.stage + ": missing " + rel);
            } else if (hash::sha256_file(p) != digest) {
                problems.push_back(s.stage + ": digest mismatch for " + rel);
            }
        }
    }
    return problems;
}

/// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
public:
    explicit RunLock(const fs::path& run_dir) : path_(run_dir / lock_name) {
        fs::create_directories(run_dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) {
            if (errno == EEXIST) {
                throw IoError("run directory " + run_dir.string() + " is locked by another process (remove " +
                              path_.string() + " if it is stale)");
            }
            throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        }
        std::fclose(f);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

}  // namespace windcast::pipeline
