#pragma once

#include "geogen/coarse2fine.hpp"
#include "geogen/data_model.hpp"
#include "geogen/diffusion.hpp"
#include "geogen/sasg_unet.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace geogen {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchemaVersion = 1;

// Flat typed key-value configuration. Defaults are the full-scale settings;
// unknown keys are rejected.
struct PipelineConfig {
    int schema_version = kConfigSchemaVersion;

    std::string dataset_path;
    std::string dataset_format = "foursquare";
    double window_seconds = kSecondsPerWeek;
    double interval_seconds = kSecondsPerHour;
    int min_length = 10;
    int gamma = 1;
    double split_train = 0.7;
    double split_val = 0.2;
    double split_test = 0.1;

    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int stage1_epochs = 500;
    int stage1_batch = 32;
    double stage1_lr = 2e-4;
    double stage1_weight_decay = 0.01;
    double ema_rate = 0.9;
    int val_every = 10;
    int checkpoint_every = 50;
    int base_channels = 128;
    std::vector<int> channel_multipliers{1, 2, 2, 2};
    int res_blocks = 2;
    int attention_level = -1;
    std::vector<int> pool_kernels{2, 4, 8};
    int bias_embed_dim = 32;

    int stage2_epochs = 100;
    int stage2_batch = 32;
    double stage2_lr = 1e-3;
    double grad_clip = 1.0;
    double plateau_factor = 0.5;
    int plateau_patience = 5;
    int d_model = 64;
    int heads = 4;
    int encoder_layers = 4;
    int decoder_layers = 2;
    int ff_dim = 128;
    int time_dim = 16;
    double tau_s = 0.25;
    int max_len = 75;
    int events_per_point = 6;
    double min_gap_seconds = 60.0;

    int generate_count = 100;
    int generate_batch = 32;
    int max_resamples = 5;

    int histogram_bins = 100;
    double density_cell_deg = 0.005;
    int utility_hidden = 64;
    int utility_epochs = 20;

    std::vector<double> sweep_intervals{7200, 10800, 14400, 21600, 28800, 43200};
    int sweep_stage1_epochs = 2;
    int sweep_stage2_epochs = 2;
    int sweep_generate_count = 20;

    std::uint64_t seed = 0;

    // Throws ConfigError naming the first offending key.
    void validate() const;

    nlohmann::ordered_json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    // FNV-1a of the canonical JSON dump.
    std::uint64_t hash() const;

    std::size_t latent_length() const;
    DenoiserConfig denoiser() const;
    Coarse2FineConfig coarse2fine() const;
    DiffusionSchedule schedule() const;
    SplitRatios split_ratios() const { return {split_train, split_val, split_test}; }
};

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);
std::string hash_hex(std::uint64_t h);

}  // namespace geogen
