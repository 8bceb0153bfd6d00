#pragma once

#include "geogen/nn/ops.hpp"
#include "geogen/rng.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace geogen::nn {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

std::string join_name(const std::string& prefix, const std::string& name);

// Parameter containers enumerate their tensors explicitly through visit();
// nothing is registered by pointer, so modules stay freely movable.
class Module {
public:
    virtual ~Module() = default;
    virtual void visit(const std::string& prefix, const ParamVisitor& fn) = 0;

    std::vector<NamedTensor> named_parameters();
    std::vector<Tensor> parameters();
    std::size_t parameter_count();
    void zero_grad();

    // Copies values by name. Throws on missing names or shape mismatches.
    void load_values(const std::map<std::string, std::vector<double>>& values);
    std::map<std::string, std::vector<double>> values();
};

Tensor uniform_param(Shape shape, double bound, Rng& rng);

class Linear : public Module {
public:
    Linear() = default;
    Linear(std::int64_t in, std::int64_t out, Rng& rng, bool bias = true);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    Tensor weight;
    Tensor bias;
};

class Conv1d : public Module {
public:
    Conv1d() = default;
    Conv1d(std::int64_t in, std::int64_t out, int kernel, Rng& rng, int stride = 1, int padding = -1);
    Tensor operator()(const Tensor& x) const { return conv1d(x, weight, bias, stride, padding); }
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    Tensor weight;
    Tensor bias;
    int stride = 1;
    int padding = 0;
};

class GroupNorm : public Module {
public:
    GroupNorm() = default;
    GroupNorm(std::int64_t channels, int groups);
    Tensor operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    int groups = 1;
    Tensor gamma;
    Tensor beta;
};

// Up to 32 groups of at least 4 channels each (1 if none divide).
int default_groups(std::int64_t channels);

class LayerNorm : public Module {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::int64_t dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    Tensor gamma;
    Tensor beta;
};

// softmax(q k^T / sqrt(d_k) + mask) v over the last two axes.
// q (..., Tq, d_k), k (..., Tk, d_k), v (..., Tk, d_v); mask broadcasts to (..., Tq, Tk).
struct AttentionResult {
    Tensor output;
    Tensor weights;
};
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask);

// Additive masks: 0 where attention is allowed, a large negative value elsewhere.
inline constexpr double kMaskedScore = -1e30;
// (B, 1, 1, Tk) from per-sequence valid lengths.
Tensor key_padding_mask(const std::vector<std::int64_t>& lengths, std::int64_t max_len);
// (Tq, Tk) lower-triangular mask.
Tensor causal_mask(std::int64_t len);

class MultiHeadAttention : public Module {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::int64_t d_model, int heads, Rng& rng);
    // query (B, Tq, d), memory (B, Tk, d)
    Tensor operator()(const Tensor& query, const Tensor& memory, const Tensor& mask);
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    const Tensor& last_weights() const { return last_weights_; }

    int heads = 1;
    std::int64_t d_model = 0;
    Linear wq, wk, wv, wo;

private:
    Tensor last_weights_;
};

class FeedForward : public Module {
public:
    FeedForward() = default;
    FeedForward(std::int64_t d_model, std::int64_t hidden, Rng& rng);
    Tensor operator()(const Tensor& x) const { return fc2(relu(fc1(x))); }
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    Linear fc1, fc2;
};

// Pre-norm transformer blocks.
class TransformerEncoderLayer : public Module {
public:
    TransformerEncoderLayer() = default;
    TransformerEncoderLayer(std::int64_t d_model, int heads, std::int64_t ff_dim, Rng& rng);
    Tensor operator()(const Tensor& x, const Tensor& mask);
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    LayerNorm norm1, norm2;
    MultiHeadAttention attn;
    FeedForward ff;
};

class TransformerDecoderLayer : public Module {
public:
    TransformerDecoderLayer() = default;
    TransformerDecoderLayer(std::int64_t d_model, int heads, std::int64_t ff_dim, Rng& rng);
    Tensor operator()(const Tensor& x, const Tensor& memory, const Tensor& self_mask, const Tensor& memory_mask);
    void visit(const std::string& prefix, const ParamVisitor& fn) override;

    LayerNorm norm1, norm2, norm3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
};

}  // namespace geogen::nn
