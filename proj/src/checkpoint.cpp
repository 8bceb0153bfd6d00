#include "geogen/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace geogen {

namespace {

constexpr char kMagic[4] = {'G', 'G', 'C', 'K'};

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint " + path.string());
    return v;
}

std::string take_string(std::istream& in, std::uint64_t n, const std::filesystem::path& path) {
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("truncated checkpoint " + path.string());
    return s;
}

}  // namespace

std::map<std::string, std::vector<double>> Checkpoint::group(const std::string& prefix) const {
    std::map<std::string, std::vector<double>> out;
    for (auto it = tensors.lower_bound(prefix); it != tensors.end() && it->first.starts_with(prefix); ++it) {
        out.emplace(it->first.substr(prefix.size()), it->second);
    }
    return out;
}

void Checkpoint::put_group(const std::string& prefix, const std::map<std::string, std::vector<double>>& values) {
    for (const auto& [name, v] : values) tensors[prefix + name] = v;
}

void save_checkpoint(const std::filesystem::path& path, Checkpoint ckpt, const std::string& kind,
                     const PipelineConfig& config) {
    ckpt.meta["kind"] = kind;
    ckpt.meta["config"] = config.to_json();
    ckpt.meta["config_hash"] = hash_hex(config.hash());
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic, 4);
        put(out, kCheckpointVersion);
        const std::string meta = ckpt.meta.dump();
        put(out, static_cast<std::uint64_t>(meta.size()));
        out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        put(out, static_cast<std::uint64_t>(ckpt.tensors.size()));
        for (const auto& [name, v] : ckpt.tensors) {
            put(out, static_cast<std::uint64_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put(out, static_cast<std::uint64_t>(v.size()));
            out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        }
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing checkpoint " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + " is not a checkpoint");
    const auto version = take<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) {
        throw ConfigError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto meta_len = take<std::uint64_t>(in, path);
    try {
        ckpt.meta = nlohmann::json::parse(take_string(in, meta_len, path));
    } catch (const nlohmann::json::parse_error&) {
        throw IoError(path.string() + ": corrupt checkpoint metadata");
    }
    const auto count = take<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name = take_string(in, take<std::uint64_t>(in, path), path);
        const auto n = take<std::uint64_t>(in, path);
        std::vector<double> v(n);
        if (n > 0 && !in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
            throw IoError("truncated checkpoint " + path.string());
        }
        ckpt.tensors.emplace(name, std::move(v));
    }
    if (ckpt.meta.value("kind", "") != kind) {
        throw ConfigError(path.string() + " holds a '" + ckpt.meta.value("kind", "") + "' checkpoint, expected '" + kind +
                          "'");
    }
    const auto config = checkpoint_config(ckpt);
    const std::string stored = ckpt.meta.value("config_hash", "");
    if (hash_hex(config.hash()) != stored) {
        throw ConfigError(path.string() + ": embedded config hashes to " + hash_hex(config.hash()) +
                          " but the checkpoint records " + stored);
    }
    return ckpt;
}

PipelineConfig checkpoint_config(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("config")) throw ConfigError("checkpoint carries no config");
    return PipelineConfig::from_json(ckpt.meta.at("config"));
}

}  // namespace geogen
