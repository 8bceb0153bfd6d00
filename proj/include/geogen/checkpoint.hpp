#pragma once

#include "geogen/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace geogen {

// Binary container: "GGCK" magic, format version, a JSON metadata block and
// named double arrays. The metadata always carries the full config and its hash.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, std::vector<double>> tensors;

    // Entries whose names start with prefix, with the prefix stripped.
    std::map<std::string, std::vector<double>> group(const std::string& prefix) const;
    void put_group(const std::string& prefix, const std::map<std::string, std::vector<double>>& values);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Stamps meta with kind, config and config hash, then writes atomically.
void save_checkpoint(const std::filesystem::path& path, Checkpoint ckpt, const std::string& kind,
                     const PipelineConfig& config);
// Throws IoError if absent or truncated, ConfigError if the embedded config
// does not reproduce the stored hash or the kind differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& kind);
PipelineConfig checkpoint_config(const Checkpoint& ckpt);

}  // namespace geogen
