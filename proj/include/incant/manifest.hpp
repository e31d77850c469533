#pragma once
// Run manifests: every CLI operation records its command line, config hash,
// inputs, produced artifacts (with content hashes), duration, and final
// status, so a finished run can be audited without re-executing it.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "incant/errors.hpp"
#include "incant/hash.hpp"

namespace incant {

struct Artifact {
    std::string path;  // relative to the manifest's directory
    std::string sha256;
};

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::vector<std::string> inputs;
    std::vector<Artifact> artifacts;
    double duration_seconds = 0;
    std::string status;  // "ok" or "failed: <reason>"

    // Hashes `name` (which must already exist under `dir`) and records it.
    void add_artifact(const std::filesystem::path& dir, const std::string& name) {
        artifacts.push_back({name, sha256_file((dir / name).string())});
    }
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json arts = nlohmann::json::array();
    for (const auto& a : m.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
    return nlohmann::json{{"command", m.command},     {"config_hash", m.config_hash},
                          {"inputs", m.inputs},       {"artifacts", arts},
                          {"duration_seconds", m.duration_seconds}, {"status", m.status}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.inputs = j.at("inputs").get<std::vector<std::string>>();
        for (const auto& a : j.at("artifacts"))
            m.artifacts.push_back(
                {a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
        m.duration_seconds = j.at("duration_seconds").get<double>();
        m.status = j.at("status").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("manifest_from_json: ") + e.what());
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) throw input_error("write_manifest: cannot open " + path.string());
    out << manifest_to_json(m).dump(1) << '\n';
    if (!out) throw input_error("write_manifest: write failed for " + path.string());
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("read_manifest: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("read_manifest: bad JSON in " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

// Re-hashes each listed artifact relative to the manifest's directory and
// returns one problem string per missing or altered file (empty = verified).
inline std::vector<std::string> verify_manifest(const std::filesystem::path& manifest_path) {
    const RunManifest m = read_manifest(manifest_path);
    const auto dir = manifest_path.parent_path();
    std::vector<std::string> problems;
    for (const auto& a : m.artifacts) {
        const auto p = dir / a.path;
        if (!std::filesystem::exists(p)) {
            problems.push_back("missing: " + a.path);
            continue;
        }
        if (sha256_file(p.string()) != a.sha256) problems.push_back("hash mismatch: " + a.path);
    }
    return problems;
}

// Stopwatch for duration_seconds.
class WallTimer {
  public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace incant
