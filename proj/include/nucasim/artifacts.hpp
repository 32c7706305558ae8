#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "nucasim/config.hpp"

namespace nucasim {

/// Artifact sink: every data file gets a .meta.json sidecar recording the
/// fully resolved machine config, scenario parameters, and seed, while the
/// data files themselves stay byte-deterministic (no timestamps).
class ArtifactWriter {
public:
    ArtifactWriter() = default;
    ArtifactWriter(std::string out_dir, nlohmann::json meta)
        : dir_(std::move(out_dir)), meta_(std::move(meta)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    bool enabled() const { return !dir_.empty(); }

    void write_text(const std::string& name, const std::string& content) const {
        if (!enabled()) return;
        write_file(name, content);
        write_file(name + ".meta.json", meta_.dump(2) + "\n");
    }

    void write_json(const std::string& name, const nlohmann::json& j) const {
        write_text(name, j.dump(2) + "\n");
    }

    std::string path_of(const std::string& name) const {
        return (std::filesystem::path(dir_) / name).string();
    }

private:
    void write_file(const std::string& name, const std::string& content) const {
        std::ofstream out(std::filesystem::path(dir_) / name, std::ios::binary);
        if (!out) throw ConfigError("cannot write artifact: " + name);
        out << content;
    }

    std::string dir_;
    nlohmann::json meta_;
};

inline nlohmann::json make_meta(const MachineConfig& cfg, const std::string& scenario,
                                uint64_t seed, nlohmann::json params = {}) {
    return nlohmann::json{{"scenario", scenario},
                          {"seed", seed},
                          {"machine", cfg},
                          {"params", std::move(params)}};
}

}  // namespace nucasim
