#include "geogen/sasg_unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geogen {

using nn::Tensor;

std::int64_t DenoiserConfig::padded_length() const {
    const std::int64_t unit = std::int64_t{1} << (levels() - 1);
    return (sequence_length + unit - 1) / unit * unit;
}

int DenoiserConfig::resolve_attention_level() const {
    if (attention_level >= 0) return attention_level;
    int best = 0;
    std::int64_t best_gap = -1;
    for (int l = 0; l < levels(); ++l) {
        const std::int64_t len = padded_length() >> l;
        const std::int64_t gap = std::abs(len - 16);
        if (best_gap < 0 || gap <= best_gap) {
            best = l;
            best_gap = gap;
        }
    }
    return best;
}

void DenoiserConfig::validate() const {
    if (in_channels != 3) throw std::invalid_argument("in_channels must be 3 (lat, lon, intensity)");
    if (base_channels <= 0) throw std::invalid_argument("base_channels must be positive");
    if (base_channels % 2 != 0) throw std::invalid_argument("base_channels must be even for the step embedding");
    if (channel_multipliers.empty()) throw std::invalid_argument("channel_multipliers must be non-empty");
    for (int m : channel_multipliers)
        if (m <= 0) throw std::invalid_argument("channel multipliers must be positive");
    if (res_blocks_per_level < 1) throw std::invalid_argument("res_blocks_per_level must be at least 1");
    if (pool_kernels.size() < 2) throw std::invalid_argument("pool_kernels needs at least two entries");
    for (int k : pool_kernels)
        if (k < 2) throw std::invalid_argument("pool kernels must be at least 2");
    if (bias_embed_dim <= 0) throw std::invalid_argument("bias_embed_dim must be positive");
    if (attention_level >= levels()) throw std::invalid_argument("attention_level beyond the number of levels");
    if (sequence_length < 2) throw std::invalid_argument("sequence_length must be at least 2");
    const std::int64_t deepest = padded_length() >> (levels() - 1);
    const int kmax = *std::max_element(pool_kernels.begin(), pool_kernels.end());
    if (deepest < kmax) {
        throw std::invalid_argument("deepest level length " + std::to_string(deepest) +
                                    " is shorter than the largest pool kernel " + std::to_string(kmax));
    }
}

HierarchicalConv1d::HierarchicalConv1d(std::int64_t in, std::int64_t out, std::vector<int> pools, Rng& rng)
    : pool_kernels(std::move(pools)), direct(in, out, 3, rng) {
    for (std::size_t i = 0; i < pool_kernels.size(); ++i) branches.emplace_back(in, out, 3, rng);
    if (in != out) shortcut.emplace(in, out, 1, rng);
}

Tensor HierarchicalConv1d::operator()(const Tensor& x) const {
    const auto L = x.dim(2);
    for (int k : pool_kernels) {
        if (L < k) {
            throw nn::ShapeError("hierarchical block input length " + std::to_string(L) + " below pool kernel " +
                                 std::to_string(k));
        }
    }
    Tensor y = direct(x);
    for (std::size_t i = 0; i < pool_kernels.size(); ++i) {
        const int k = pool_kernels[i];
        y = y + nn::upsample_nearest(branches[i](nn::avg_pool1d(x, k)), k, L);
    }
    return y + (shortcut ? (*shortcut)(x) : x);
}

void HierarchicalConv1d::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    direct.visit(nn::join_name(prefix, "direct"), fn);
    for (std::size_t i = 0; i < branches.size(); ++i)
        branches[i].visit(nn::join_name(prefix, "pool" + std::to_string(pool_kernels[i])), fn);
    if (shortcut) shortcut->visit(nn::join_name(prefix, "shortcut"), fn);
}

IntensityGate::IntensityGate(std::int64_t channels, Rng& rng) : conv1(channels, channels, 3, rng), conv2(channels, channels, 3, rng) {}

Tensor IntensityGate::operator()(const Tensor& h) const { return nn::sigmoid(conv2(nn::relu(conv1(h)))); }

void IntensityGate::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    conv1.visit(nn::join_name(prefix, "conv1"), fn);
    conv2.visit(nn::join_name(prefix, "conv2"), fn);
}

Tensor consecutive_distances(const Tensor& x_bcl, const SpatialContext& ctx) {
    if (x_bcl.ndim() != 3 || x_bcl.dim(1) != kLatentChannels) throw nn::ShapeError("expected (B, 3, L) input");
    const auto B = x_bcl.dim(0), L = x_bcl.dim(2);
    const auto& v = x_bcl.values();
    std::vector<double> d(static_cast<std::size_t>(B * L), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        GeoPoint prev;
        for (std::int64_t i = 0; i < L; ++i) {
            const double lat = v[(b * 3 + 0) * L + i] * ctx.stats.std[0] + ctx.stats.mean[0];
            const double lon = v[(b * 3 + 1) * L + i] * ctx.stats.std[1] + ctx.stats.mean[1];
            const GeoPoint p = ctx.clamp_box.clamp({lat, lon});
            if (i > 0) d[b * L + i] = haversine_km(p, prev);
            prev = p;
        }
    }
    return Tensor::from({B, L, 1}, std::move(d));
}

LocalSpatialBias::LocalSpatialBias(std::int64_t embed_dim, std::int64_t channels, Rng& rng)
    : fc1(1, embed_dim, rng), fc2(embed_dim, embed_dim, rng), proj(embed_dim, channels, rng) {}

Tensor LocalSpatialBias::operator()(const Tensor& distances_km) const {
    std::vector<double> z(distances_km.values());
    for (auto& d : z) d = std::log1p(std::max(0.0, d));
    const Tensor in = Tensor::from(distances_km.shape(), std::move(z));
    return proj(fc2(nn::silu(fc1(in))));
}

void LocalSpatialBias::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    fc1.visit(nn::join_name(prefix, "fc1"), fn);
    fc2.visit(nn::join_name(prefix, "fc2"), fn);
    proj.visit(nn::join_name(prefix, "proj"), fn);
}

S2GAttention::S2GAttention(std::int64_t channels, std::int64_t embed_dim, Rng& rng)
    : gate(channels, rng), wq(channels, channels, rng), wk(channels, channels, rng), bias(embed_dim, channels, rng) {}

Tensor S2GAttention::operator()(const Tensor& h_enc, const Tensor& distances_km) {
    if (distances_km.dim(0) != h_enc.dim(0) || distances_km.dim(1) != h_enc.dim(2)) {
        throw nn::ShapeError("spatial bias length does not match skip features");
    }
    const Tensor gated = nn::permute(gate(h_enc) * h_enc, {0, 2, 1});
    auto att = nn::scaled_dot_attention(wq(gated), wk(gated), bias(distances_km), Tensor());
    last_weights_ = att.weights;
    return h_enc + nn::permute(att.output, {0, 2, 1});
}

void S2GAttention::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    gate.visit(nn::join_name(prefix, "gate"), fn);
    wq.visit(nn::join_name(prefix, "wq"), fn);
    wk.visit(nn::join_name(prefix, "wk"), fn);
    bias.visit(nn::join_name(prefix, "bias"), fn);
}

Tensor step_embedding(const std::vector<int>& steps, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("step embedding dimension must be positive and even");
    const int half = dim / 2;
    std::vector<double> out(steps.size() * static_cast<std::size_t>(dim));
    for (std::size_t b = 0; b < steps.size(); ++b) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            out[b * dim + i] = std::sin(steps[b] * freq);
            out[b * dim + half + i] = std::cos(steps[b] * freq);
        }
    }
    return Tensor::from({static_cast<std::int64_t>(steps.size()), dim}, std::move(out));
}

ResBlock::ResBlock(std::int64_t in, std::int64_t out, std::int64_t temb_dim, const std::vector<int>& pools, Rng& rng)
    : norm1(in, nn::default_groups(in)),
      norm2(out, nn::default_groups(out)),
      conv1(in, out, pools, rng),
      conv2(out, out, pools, rng),
      temb_proj(temb_dim, out, rng) {
    if (in != out) shortcut.emplace(in, out, 1, rng);
}

Tensor ResBlock::operator()(const Tensor& x, const Tensor& temb) const {
    Tensor h = conv1(nn::silu(norm1(x)));
    const Tensor t = temb_proj(nn::silu(temb));
    h = h + nn::reshape(t, {t.dim(0), t.dim(1), 1});
    h = conv2(nn::silu(norm2(h)));
    return h + (shortcut ? (*shortcut)(x) : x);
}

void ResBlock::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    norm1.visit(nn::join_name(prefix, "norm1"), fn);
    norm2.visit(nn::join_name(prefix, "norm2"), fn);
    conv1.visit(nn::join_name(prefix, "conv1"), fn);
    conv2.visit(nn::join_name(prefix, "conv2"), fn);
    temb_proj.visit(nn::join_name(prefix, "temb"), fn);
    if (shortcut) shortcut->visit(nn::join_name(prefix, "shortcut"), fn);
}

SelfAttention1d::SelfAttention1d(std::int64_t channels, Rng& rng)
    : norm(channels, nn::default_groups(channels)), attn(channels, channels % 4 == 0 ? 4 : 1, rng) {}

Tensor SelfAttention1d::operator()(const Tensor& x) {
    const Tensor h = nn::permute(norm(x), {0, 2, 1});
    return x + nn::permute(attn(h, h, Tensor()), {0, 2, 1});
}

void SelfAttention1d::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    norm.visit(nn::join_name(prefix, "norm"), fn);
    attn.visit(nn::join_name(prefix, "attn"), fn);
}

SasgUNet::SasgUNet(DenoiserConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    const int base = config_.base_channels;
    const int temb_dim = 4 * base;
    attention_level_used_ = config_.resolve_attention_level();
    temb1 = nn::Linear(base, temb_dim, rng);
    temb2 = nn::Linear(temb_dim, temb_dim, rng);
    in_conv = nn::Conv1d(config_.in_channels, base, 3, rng);

    const int n_levels = config_.levels();
    levels_.resize(static_cast<std::size_t>(n_levels));
    std::int64_t ch = base;
    for (int l = 0; l < n_levels; ++l) {
        auto& lv = levels_[static_cast<std::size_t>(l)];
        const std::int64_t out = config_.channels_at(l);
        for (int r = 0; r < config_.res_blocks_per_level; ++r) {
            lv.down_blocks.emplace_back(r == 0 ? ch : out, out, temb_dim, config_.pool_kernels, rng);
        }
        ch = out;
        if (l == attention_level_used_) lv.down_attn.emplace(ch, rng);
        lv.s2g = S2GAttention(ch, config_.bias_embed_dim, rng);
        if (l + 1 < n_levels) lv.downsample.emplace(ch, ch, 3, rng, 2, 1);
    }
    mid1 = ResBlock(ch, ch, temb_dim, config_.pool_kernels, rng);
    mid2 = ResBlock(ch, ch, temb_dim, config_.pool_kernels, rng);
    for (int l = n_levels - 1; l >= 0; --l) {
        auto& lv = levels_[static_cast<std::size_t>(l)];
        const std::int64_t out = config_.channels_at(l);
        for (int r = 0; r < config_.res_blocks_per_level; ++r) {
            lv.up_blocks.emplace_back(r == 0 ? ch + out : out, out, temb_dim, config_.pool_kernels, rng);
        }
        ch = out;
        if (l == attention_level_used_) lv.up_attn.emplace(ch, rng);
        if (l > 0) lv.upsample_conv.emplace(ch, ch, 3, rng);
    }
    out_norm = nn::GroupNorm(ch, nn::default_groups(ch));
    out_conv = nn::Conv1d(ch, config_.in_channels, 3, rng);
}

Tensor SasgUNet::operator()(const Tensor& x, int step) {
    return (*this)(x, std::vector<int>(static_cast<std::size_t>(x.dim(0)), step));
}

Tensor SasgUNet::operator()(const Tensor& x, const std::vector<int>& steps) {
    if (!context_) throw std::logic_error("denoiser needs normalization statistics before the forward pass");
    if (x.ndim() != 3 || x.dim(2) != config_.in_channels) {
        throw nn::ShapeError("denoiser expects (B, L, 3), got " + nn::to_string(x.shape()));
    }
    const auto B = x.dim(0), L = x.dim(1);
    if (L != config_.sequence_length) {
        throw nn::ShapeError("denoiser built for length " + std::to_string(config_.sequence_length) + ", got " +
                             std::to_string(L));
    }
    if (static_cast<std::int64_t>(steps.size()) != B) throw nn::ShapeError("one diffusion step per batch row required");
    const std::int64_t Lp = config_.padded_length();
    if (Lp % (std::int64_t{1} << (config_.levels() - 1)) != 0) {
        throw nn::ShapeError("padded length not divisible by the downsampling factor");
    }

    Tensor xb = nn::permute(x, {0, 2, 1});
    if (Lp > L) xb = nn::pad_right(xb, Lp - L);
    const Tensor xb_const = xb.detach();

    const Tensor temb = temb2(nn::silu(temb1(step_embedding(steps, config_.base_channels))));
    Tensor h = in_conv(xb);
    std::vector<Tensor> skips;
    const int n_levels = config_.levels();
    for (int l = 0; l < n_levels; ++l) {
        auto& lv = levels_[static_cast<std::size_t>(l)];
        for (const auto& blk : lv.down_blocks) h = blk(h, temb);
        if (lv.down_attn) h = (*lv.down_attn)(h);
        skips.push_back(h);
        if (lv.downsample) h = (*lv.downsample)(h);
    }
    h = mid2(mid1(h, temb), temb);
    for (int l = n_levels - 1; l >= 0; --l) {
        auto& lv = levels_[static_cast<std::size_t>(l)];
        const Tensor& skip = skips[static_cast<std::size_t>(l)];
        const int factor = 1 << l;
        const Tensor x_level = factor > 1 ? nn::avg_pool1d(xb_const, factor) : xb_const;
        const Tensor refined = lv.s2g(skip, consecutive_distances(x_level, *context_));
        h = nn::concat({h, refined}, 1);
        for (const auto& blk : lv.up_blocks) h = blk(h, temb);
        if (lv.up_attn) h = (*lv.up_attn)(h);
        if (lv.upsample_conv) {
            const auto target = skips[static_cast<std::size_t>(l - 1)].dim(2);
            h = (*lv.upsample_conv)(nn::upsample_nearest(h, 2, target));
        }
    }
    Tensor out = out_conv(nn::silu(out_norm(h)));
    if (Lp > L) out = nn::slice(out, 2, 0, L);
    return nn::permute(out, {0, 2, 1});
}

std::vector<Tensor> SasgUNet::last_attention_weights() const {
    std::vector<Tensor> out;
    for (const auto& lv : levels_) {
        if (lv.s2g.last_weights().defined()) out.push_back(lv.s2g.last_weights());
        if (lv.down_attn && lv.down_attn->attn.last_weights().defined()) out.push_back(lv.down_attn->attn.last_weights());
        if (lv.up_attn && lv.up_attn->attn.last_weights().defined()) out.push_back(lv.up_attn->attn.last_weights());
    }
    return out;
}

void SasgUNet::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    temb1.visit(nn::join_name(prefix, "temb1"), fn);
    temb2.visit(nn::join_name(prefix, "temb2"), fn);
    in_conv.visit(nn::join_name(prefix, "in_conv"), fn);
    for (std::size_t l = 0; l < levels_.size(); ++l) {
        auto& lv = levels_[l];
        const std::string p = nn::join_name(prefix, "level" + std::to_string(l));
        for (std::size_t r = 0; r < lv.down_blocks.size(); ++r)
            lv.down_blocks[r].visit(nn::join_name(p, "down" + std::to_string(r)), fn);
        if (lv.down_attn) lv.down_attn->visit(nn::join_name(p, "down_attn"), fn);
        if (lv.downsample) lv.downsample->visit(nn::join_name(p, "downsample"), fn);
        lv.s2g.visit(nn::join_name(p, "s2g"), fn);
        for (std::size_t r = 0; r < lv.up_blocks.size(); ++r)
            lv.up_blocks[r].visit(nn::join_name(p, "up" + std::to_string(r)), fn);
        if (lv.up_attn) lv.up_attn->visit(nn::join_name(p, "up_attn"), fn);
        if (lv.upsample_conv) lv.upsample_conv->visit(nn::join_name(p, "upsample"), fn);
    }
    mid1.visit(nn::join_name(prefix, "mid1"), fn);
    mid2.visit(nn::join_name(prefix, "mid2"), fn);
    out_norm.visit(nn::join_name(prefix, "out_norm"), fn);
    out_conv.visit(nn::join_name(prefix, "out_conv"), fn);
}

}  // namespace geogen
