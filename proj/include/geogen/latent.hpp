#pragma once

#include "geogen/data_model.hpp"
#include "geogen/nn/tensor.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace geogen {

struct LatentSlot {
    GeoPoint where;
    int count = 0;

    bool operator==(const LatentSlot&) const = default;
};

// A regular grid of L = floor(D / I) slots.
struct LatentMovementSequence {
    std::vector<LatentSlot> slots;
    double interval = 0.0;
    double duration = 0.0;

    std::size_t length() const { return slots.size(); }
    int total_count() const;
};

std::size_t latent_length(double duration, double interval);

// Slots are observed when count > 0; interior gaps are filled linearly and the
// leading/trailing runs by wrapping around the end of the window.
LatentMovementSequence reconstruct(const Trajectory& traj, const POICatalog& catalog, double interval);

GeoPoint interpolate_interior(const std::vector<LatentSlot>& slots, std::size_t i_p, std::size_t i_n, std::size_t i);
std::vector<LatentSlot> interpolate_circular(std::vector<LatentSlot> slots);

struct FilteredPoint {
    GeoPoint where;
    double t = 0.0;
    std::size_t slot = 0;
};

struct FilteredSequence {
    std::vector<FilteredPoint> points;
    std::size_t max_len = 75;

    std::size_t size() const { return points.size(); }
};

inline constexpr std::size_t kDefaultMaxFilteredLength = 75;

// Keeps slots with count >= gamma at their midpoint times (k + 0.5) * I.
FilteredSequence filter_sequence(const LatentMovementSequence& s, int gamma = 1,
                                 std::size_t max_len = kDefaultMaxFilteredLength);

inline constexpr int kLatentChannels = 3;  // lat, lon, intensity

struct NormStats {
    std::array<double, kLatentChannels> mean{};
    std::array<double, kLatentChannels> std{};

    bool operator==(const NormStats&) const = default;
};

// Per-channel mean and population standard deviation over every slot of the batch.
NormStats compute_norm_stats(const std::vector<LatentMovementSequence>& batch);

// (B, L, 3) z-scored tensor.
nn::Tensor normalize(const std::vector<LatentMovementSequence>& batch, const NormStats& stats);
// Exact inverse of normalize on raw values (no rounding or clamping).
nn::Tensor denormalize_values(const nn::Tensor& z, const NormStats& stats);
// Back to sequences: coordinates clamped to the valid range, intensity rounded
// to the nearest non-negative integer.
std::vector<LatentMovementSequence> denormalize(const nn::Tensor& z, const NormStats& stats, double interval,
                                                double duration);

struct LatentFile {
    std::vector<LatentMovementSequence> sequences;
    NormStats stats;
    double interval = 0.0;
    double duration = 0.0;
};

void write_latents(const std::filesystem::path& path, const LatentFile& file);
LatentFile read_latents(const std::filesystem::path& path);

}  // namespace geogen
