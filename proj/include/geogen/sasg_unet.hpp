#pragma once

#include "geogen/geo.hpp"
#include "geogen/latent.hpp"
#include "geogen/nn/module.hpp"

#include <optional>
#include <vector>

namespace geogen {

struct DenoiserConfig {
    int in_channels = 3;
    int base_channels = 128;
    std::vector<int> channel_multipliers{1, 2, 2, 2};
    int res_blocks_per_level = 2;
    int attention_level = -1;  // -1: the level whose length is nearest 16
    std::vector<int> pool_kernels{2, 4, 8};
    int bias_embed_dim = 32;
    std::int64_t sequence_length = 168;

    int levels() const { return static_cast<int>(channel_multipliers.size()); }
    int channels_at(int level) const { return base_channels * channel_multipliers.at(static_cast<std::size_t>(level)); }
    std::int64_t padded_length() const;
    int resolve_attention_level() const;
    // Throws std::invalid_argument describing the first violated constraint,
    // including lengths too short for the pooling branches at the deepest level.
    void validate() const;
};

// Direct conv plus, per pool kernel k, avgpool(k) -> conv -> nearest upsample,
// all summed with a residual path (1x1 conv when channel counts differ).
class HierarchicalConv1d : public nn::Module {
public:
    HierarchicalConv1d() = default;
    HierarchicalConv1d(std::int64_t in, std::int64_t out, std::vector<int> pool_kernels, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& x) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    std::vector<int> pool_kernels;
    nn::Conv1d direct;
    std::vector<nn::Conv1d> branches;
    std::optional<nn::Conv1d> shortcut;
};

// g = sigmoid(conv(relu(conv(h)))), same shape as h.
class IntensityGate : public nn::Module {
public:
    IntensityGate() = default;
    IntensityGate(std::int64_t channels, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& h) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    nn::Conv1d conv1, conv2;
};

// Denormalization and clamping used to turn noisy network inputs into degrees.
struct SpatialContext {
    NormStats stats;
    BoundingBox clamp_box;
};

// Haversine distance (km) between consecutive slots of a (B, 3, L) normalized
// tensor; the first slot of each row gets 0. Returns (B, L, 1), no gradient.
nn::Tensor consecutive_distances(const nn::Tensor& x_bcl, const SpatialContext& ctx);

// F_emb on distances followed by a projection to the skip width: (B, L, 1) -> (B, L, C).
// Distances enter as log1p(km) so city-scale and noise-scale values share a range.
class LocalSpatialBias : public nn::Module {
public:
    LocalSpatialBias() = default;
    LocalSpatialBias(std::int64_t embed_dim, std::int64_t channels, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& distances_km) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    nn::Linear fc1, fc2, proj;
};

class S2GAttention : public nn::Module {
public:
    S2GAttention() = default;
    S2GAttention(std::int64_t channels, std::int64_t embed_dim, Rng& rng);
    // h_enc (B, C, L), distances (B, L, 1); returns h_enc + h_att.
    nn::Tensor operator()(const nn::Tensor& h_enc, const nn::Tensor& distances_km);
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    const nn::Tensor& last_weights() const { return last_weights_; }

    IntensityGate gate;
    nn::Linear wq, wk;
    LocalSpatialBias bias;

private:
    nn::Tensor last_weights_;
};

// Sinusoidal embedding of integer steps: (B, dim).
nn::Tensor step_embedding(const std::vector<int>& steps, int dim);

class ResBlock : public nn::Module {
public:
    ResBlock() = default;
    ResBlock(std::int64_t in, std::int64_t out, std::int64_t temb_dim, const std::vector<int>& pools, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& x, const nn::Tensor& temb) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    nn::GroupNorm norm1, norm2;
    HierarchicalConv1d conv1, conv2;
    nn::Linear temb_proj;
    std::optional<nn::Conv1d> shortcut;
};

// Global self-attention over the length axis with a residual connection.
class SelfAttention1d : public nn::Module {
public:
    SelfAttention1d() = default;
    SelfAttention1d(std::int64_t channels, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& x);
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    nn::GroupNorm norm;
    nn::MultiHeadAttention attn;
};

class SasgUNet : public nn::Module {
public:
    SasgUNet(DenoiserConfig config, Rng& rng);

    // x (B, L, 3) normalized noisy sequences, one step per row. Output has x's shape.
    nn::Tensor operator()(const nn::Tensor& x, const std::vector<int>& steps);
    nn::Tensor operator()(const nn::Tensor& x, int step);

    void set_spatial_context(SpatialContext ctx) { context_ = std::move(ctx); }
    const std::optional<SpatialContext>& spatial_context() const { return context_; }
    const DenoiserConfig& config() const { return config_; }

    // Attention matrices from the most recent forward pass (S2G per level and the global block).
    std::vector<nn::Tensor> last_attention_weights() const;

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

private:
    struct Level {
        std::vector<ResBlock> down_blocks;
        std::optional<SelfAttention1d> down_attn;
        std::optional<nn::Conv1d> downsample;
        S2GAttention s2g;
        std::vector<ResBlock> up_blocks;
        std::optional<SelfAttention1d> up_attn;
        std::optional<nn::Conv1d> upsample_conv;
    };

    DenoiserConfig config_;
    std::optional<SpatialContext> context_;
    nn::Linear temb1, temb2;
    nn::Conv1d in_conv;
    std::vector<Level> levels_;
    ResBlock mid1, mid2;
    nn::GroupNorm out_norm;
    nn::Conv1d out_conv;
    int attention_level_used_ = -1;
};

}  // namespace geogen
