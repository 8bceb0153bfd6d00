#include "geogen/config.hpp"

#include "geogen/latent.hpp"
#include "geogen/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace geogen {

namespace {

using json = nlohmann::json;

template <class Self, class F>
void fields(Self& c, F&& f) {
    f("schema_version", c.schema_version);
    f("dataset_path", c.dataset_path);
    f("dataset_format", c.dataset_format);
    f("window_seconds", c.window_seconds);
    f("interval_seconds", c.interval_seconds);
    f("min_length", c.min_length);
    f("gamma", c.gamma);
    f("split_train", c.split_train);
    f("split_val", c.split_val);
    f("split_test", c.split_test);
    f("diffusion_steps", c.diffusion_steps);
    f("beta_start", c.beta_start);
    f("beta_end", c.beta_end);
    f("stage1_epochs", c.stage1_epochs);
    f("stage1_batch", c.stage1_batch);
    f("stage1_lr", c.stage1_lr);
    f("stage1_weight_decay", c.stage1_weight_decay);
    f("ema_rate", c.ema_rate);
    f("val_every", c.val_every);
    f("checkpoint_every", c.checkpoint_every);
    f("base_channels", c.base_channels);
    f("channel_multipliers", c.channel_multipliers);
    f("res_blocks", c.res_blocks);
    f("attention_level", c.attention_level);
    f("pool_kernels", c.pool_kernels);
    f("bias_embed_dim", c.bias_embed_dim);
    f("stage2_epochs", c.stage2_epochs);
    f("stage2_batch", c.stage2_batch);
    f("stage2_lr", c.stage2_lr);
    f("grad_clip", c.grad_clip);
    f("plateau_factor", c.plateau_factor);
    f("plateau_patience", c.plateau_patience);
    f("d_model", c.d_model);
    f("heads", c.heads);
    f("encoder_layers", c.encoder_layers);
    f("decoder_layers", c.decoder_layers);
    f("ff_dim", c.ff_dim);
    f("time_dim", c.time_dim);
    f("tau_s", c.tau_s);
    f("max_len", c.max_len);
    f("events_per_point", c.events_per_point);
    f("min_gap_seconds", c.min_gap_seconds);
    f("generate_count", c.generate_count);
    f("generate_batch", c.generate_batch);
    f("max_resamples", c.max_resamples);
    f("histogram_bins", c.histogram_bins);
    f("density_cell_deg", c.density_cell_deg);
    f("utility_hidden", c.utility_hidden);
    f("utility_epochs", c.utility_epochs);
    f("sweep_intervals", c.sweep_intervals);
    f("sweep_stage1_epochs", c.sweep_stage1_epochs);
    f("sweep_stage2_epochs", c.sweep_stage2_epochs);
    f("sweep_generate_count", c.sweep_generate_count);
    f("seed", c.seed);
}

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
    throw ConfigError("config key '" + key + "' must be " + expected);
}

void read_value(const std::string& key, const json& v, int& out) {
    if (!v.is_number_integer()) bad_type(key, "an integer");
    out = v.get<int>();
}
void read_value(const std::string& key, const json& v, std::uint64_t& out) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        bad_type(key, "a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}
void read_value(const std::string& key, const json& v, double& out) {
    if (!v.is_number()) bad_type(key, "a number");
    out = v.get<double>();
}
void read_value(const std::string& key, const json& v, std::string& out) {
    if (!v.is_string()) bad_type(key, "a string");
    out = v.get<std::string>();
}
template <class T>
void read_value(const std::string& key, const json& v, std::vector<T>& out) {
    if (!v.is_array()) bad_type(key, "an array");
    out.clear();
    for (const auto& e : v) {
        T x{};
        read_value(key, e, x);
        out.push_back(x);
    }
}

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key '" + key + "' " + what);
}

}  // namespace

nlohmann::ordered_json PipelineConfig::to_json() const {
    nlohmann::ordered_json j;
    fields(*this, [&](const char* key, const auto& v) { j[key] = v; });
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    PipelineConfig c;
    std::set<std::string> known;
    fields(c, [&](const char* key, auto& v) {
        known.insert(key);
        if (auto it = j.find(key); it != j.end()) read_value(key, *it, v);
    });
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    require(schema_version == kConfigSchemaVersion, "schema_version",
            "must be " + std::to_string(kConfigSchemaVersion) + " (got " + std::to_string(schema_version) + ")");
    try {
        parse_format(dataset_format);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config key 'dataset_format': " + std::string(e.what()));
    }
    require(window_seconds > 0, "window_seconds", "must be positive");
    require(interval_seconds > 0 && interval_seconds <= window_seconds, "interval_seconds", "must lie in (0, window]");
    require(min_length >= 1, "min_length", "must be at least 1");
    require(gamma >= 1, "gamma", "must be at least 1");
    require(split_train > 0 && split_val >= 0 && split_test > 0, "split_*", "must be positive (val may be 0)");
    require(std::abs(split_train + split_val + split_test - 1.0) < 1e-9, "split_*", "must sum to 1");
    require(diffusion_steps >= 2, "diffusion_steps", "must be at least 2");
    require(beta_start > 0 && beta_start < beta_end && beta_end < 1, "beta_start/beta_end", "must satisfy 0 < start < end < 1");
    require(stage1_epochs >= 1, "stage1_epochs", "must be at least 1");
    require(stage1_batch >= 1, "stage1_batch", "must be at least 1");
    require(stage1_lr > 0, "stage1_lr", "must be positive");
    require(stage1_weight_decay >= 0, "stage1_weight_decay", "must be non-negative");
    require(ema_rate > 0 && ema_rate < 1, "ema_rate", "must lie in (0, 1)");
    require(val_every >= 1, "val_every", "must be at least 1");
    require(checkpoint_every >= 1, "checkpoint_every", "must be at least 1");
    require(stage2_epochs >= 1, "stage2_epochs", "must be at least 1");
    require(stage2_batch >= 1, "stage2_batch", "must be at least 1");
    require(stage2_lr > 0, "stage2_lr", "must be positive");
    require(grad_clip > 0, "grad_clip", "must be positive");
    require(plateau_factor > 0 && plateau_factor < 1, "plateau_factor", "must lie in (0, 1)");
    require(plateau_patience >= 1, "plateau_patience", "must be at least 1");
    require(generate_count >= 1, "generate_count", "must be at least 1");
    require(generate_batch >= 1, "generate_batch", "must be at least 1");
    require(max_resamples >= 0, "max_resamples", "must be non-negative");
    require(histogram_bins >= 1, "histogram_bins", "must be at least 1");
    require(density_cell_deg > 0, "density_cell_deg", "must be positive");
    require(utility_hidden >= 1 && utility_epochs >= 1, "utility_*", "must be at least 1");
    for (double i : sweep_intervals) require(i > 0 && i <= window_seconds, "sweep_intervals", "entries must lie in (0, window]");
    require(sweep_stage1_epochs >= 1, "sweep_stage1_epochs", "must be at least 1");
    require(sweep_stage2_epochs >= 0 && sweep_generate_count >= 1, "sweep_stage2_epochs", "must be non-negative");
    require(latent_length() >= 2, "interval_seconds", "must leave at least two latent slots");
    try {
        denoiser().validate();
        coarse2fine().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid model configuration: ") + e.what());
    }
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(to_json().dump()); }

std::size_t PipelineConfig::latent_length() const { return geogen::latent_length(window_seconds, interval_seconds); }

DenoiserConfig PipelineConfig::denoiser() const {
    DenoiserConfig d;
    d.base_channels = base_channels;
    d.channel_multipliers = channel_multipliers;
    d.res_blocks_per_level = res_blocks;
    d.attention_level = attention_level;
    d.pool_kernels = pool_kernels;
    d.bias_embed_dim = bias_embed_dim;
    d.sequence_length = static_cast<std::int64_t>(latent_length());
    return d;
}

Coarse2FineConfig PipelineConfig::coarse2fine() const {
    Coarse2FineConfig c;
    c.d_model = d_model;
    c.heads = heads;
    c.encoder_layers = encoder_layers;
    c.decoder_layers = decoder_layers;
    c.ff_dim = ff_dim;
    c.time_dim = time_dim;
    c.tau_s = tau_s;
    c.max_len = max_len;
    c.events_per_point = events_per_point;
    c.min_gap_seconds = min_gap_seconds;
    return c;
}

DiffusionSchedule PipelineConfig::schedule() const { return make_linear_schedule(diffusion_steps, beta_start, beta_end); }

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto c = PipelineConfig::from_json(j);
    // Relative dataset paths are taken relative to the config file.
    if (!c.dataset_path.empty() && std::filesystem::path(c.dataset_path).is_relative()) {
        c.dataset_path = (path.parent_path() / c.dataset_path).lexically_normal().string();
    }
    return c;
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << config.to_json().dump(2) << '\n';
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace geogen
