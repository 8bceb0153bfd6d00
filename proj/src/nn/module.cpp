#include "geogen/nn/module.hpp"

#include <cmath>

namespace geogen::nn {

std::string join_name(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

std::vector<NamedTensor> Module::named_parameters() {
    std::vector<NamedTensor> out;
    visit("", [&](const std::string& name, Tensor& t) { out.push_back({name, t}); });
    return out;
}

std::vector<Tensor> Module::parameters() {
    std::vector<Tensor> out;
    visit("", [&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

std::size_t Module::parameter_count() {
    std::size_t n = 0;
    visit("", [&](const std::string&, Tensor& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

void Module::zero_grad() {
    visit("", [](const std::string&, Tensor& t) { t.zero_grad(); });
}

void Module::load_values(const std::map<std::string, std::vector<double>>& values) {
    visit("", [&](const std::string& name, Tensor& t) {
        auto it = values.find(name);
        if (it == values.end()) throw std::runtime_error("missing parameter '" + name + "'");
        if (static_cast<std::int64_t>(it->second.size()) != t.size()) {
            throw ShapeError("parameter '" + name + "' has " + std::to_string(it->second.size()) +
                             " values, expected " + std::to_string(t.size()));
        }
        std::copy(it->second.begin(), it->second.end(), t.data().begin());
    });
}

std::map<std::string, std::vector<double>> Module::values() {
    std::map<std::string, std::vector<double>> out;
    visit("", [&](const std::string& name, Tensor& t) { out[name] = t.values(); });
    return out;
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
    const auto n = static_cast<std::size_t>(numel(shape));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::int64_t in, std::int64_t out, Rng& rng, bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = uniform_param({out, in}, bound, rng);
    if (with_bias) bias = uniform_param({out}, bound, rng);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(join_name(prefix, "weight"), weight);
    if (bias.defined()) fn(join_name(prefix, "bias"), bias);
}

Conv1d::Conv1d(std::int64_t in, std::int64_t out, int kernel, Rng& rng, int stride_, int padding_)
    : stride(stride_), padding(padding_ < 0 ? kernel / 2 : padding_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel));
    weight = uniform_param({out, in, kernel}, bound, rng);
    bias = uniform_param({out}, bound, rng);
}

void Conv1d::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(join_name(prefix, "weight"), weight);
    fn(join_name(prefix, "bias"), bias);
}

GroupNorm::GroupNorm(std::int64_t channels, int groups_)
    : groups(groups_), gamma(Tensor::full({channels}, 1.0, true)), beta(Tensor::zeros({channels}, true)) {}

void GroupNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(join_name(prefix, "gamma"), gamma);
    fn(join_name(prefix, "beta"), beta);
}

int default_groups(std::int64_t channels) {
    // Up to 32 groups of at least 4 channels; one channel per group would
    // discard each channel's mean.
    for (int g : {32, 16, 8, 4, 2}) {
        if (channels % g == 0 && channels / g >= 4) return g;
    }
    return 1;
}

LayerNorm::LayerNorm(std::int64_t dim) : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)) {}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(join_name(prefix, "gamma"), gamma);
    fn(join_name(prefix, "beta"), beta);
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask) {
    const auto dk = q.dim(-1);
    if (dk == 0) throw ShapeError("attention key dimension is zero");
    Tensor scores = matmul(q, transpose(k, -1, -2)) * (1.0 / std::sqrt(static_cast<double>(dk)));
    if (mask.defined()) scores = scores + mask;
    Tensor weights = softmax(scores);
    return {matmul(weights, v), weights};
}

Tensor key_padding_mask(const std::vector<std::int64_t>& lengths, std::int64_t max_len) {
    const auto B = static_cast<std::int64_t>(lengths.size());
    std::vector<double> m(static_cast<std::size_t>(B * max_len), 0.0);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t t = lengths[b]; t < max_len; ++t) m[b * max_len + t] = kMaskedScore;
    return Tensor::from({B, 1, 1, max_len}, std::move(m));
}

Tensor causal_mask(std::int64_t len) {
    std::vector<double> m(static_cast<std::size_t>(len * len), 0.0);
    for (std::int64_t i = 0; i < len; ++i)
        for (std::int64_t j = i + 1; j < len; ++j) m[i * len + j] = kMaskedScore;
    return Tensor::from({len, len}, std::move(m));
}

MultiHeadAttention::MultiHeadAttention(std::int64_t d, int h, Rng& rng)
    : heads(h), d_model(d), wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng) {
    if (h < 1 || d % h != 0) throw std::invalid_argument("attention heads must divide model width");
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, const Tensor& mask) {
    const auto B = query.dim(0), Tq = query.dim(1), Tk = memory.dim(1);
    const std::int64_t dh = d_model / heads;
    auto split = [&](const Tensor& x, std::int64_t T) { return permute(reshape(x, {B, T, heads, dh}), {0, 2, 1, 3}); };
    auto att = scaled_dot_attention(split(wq(query), Tq), split(wk(memory), Tk), split(wv(memory), Tk), mask);
    last_weights_ = att.weights;
    Tensor merged = reshape(permute(att.output, {0, 2, 1, 3}), {B, Tq, d_model});
    return wo(merged);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
    wq.visit(join_name(prefix, "wq"), fn);
    wk.visit(join_name(prefix, "wk"), fn);
    wv.visit(join_name(prefix, "wv"), fn);
    wo.visit(join_name(prefix, "wo"), fn);
}

FeedForward::FeedForward(std::int64_t d, std::int64_t hidden, Rng& rng) : fc1(d, hidden, rng), fc2(hidden, d, rng) {}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& fn) {
    fc1.visit(join_name(prefix, "fc1"), fn);
    fc2.visit(join_name(prefix, "fc2"), fn);
}

TransformerEncoderLayer::TransformerEncoderLayer(std::int64_t d, int heads, std::int64_t ff_dim, Rng& rng)
    : norm1(d), norm2(d), attn(d, heads, rng), ff(d, ff_dim, rng) {}

Tensor TransformerEncoderLayer::operator()(const Tensor& x, const Tensor& mask) {
    Tensor h = norm1(x);
    Tensor y = x + attn(h, h, mask);
    return y + ff(norm2(y));
}

void TransformerEncoderLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm1.visit(join_name(prefix, "norm1"), fn);
    norm2.visit(join_name(prefix, "norm2"), fn);
    attn.visit(join_name(prefix, "attn"), fn);
    ff.visit(join_name(prefix, "ff"), fn);
}

TransformerDecoderLayer::TransformerDecoderLayer(std::int64_t d, int heads, std::int64_t ff_dim, Rng& rng)
    : norm1(d), norm2(d), norm3(d), self_attn(d, heads, rng), cross_attn(d, heads, rng), ff(d, ff_dim, rng) {}

Tensor TransformerDecoderLayer::operator()(const Tensor& x, const Tensor& memory, const Tensor& self_mask,
                                           const Tensor& memory_mask) {
    Tensor h = norm1(x);
    Tensor y = x + self_attn(h, h, self_mask);
    y = y + cross_attn(norm2(y), memory, memory_mask);
    return y + ff(norm3(y));
}

void TransformerDecoderLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm1.visit(join_name(prefix, "norm1"), fn);
    norm2.visit(join_name(prefix, "norm2"), fn);
    norm3.visit(join_name(prefix, "norm3"), fn);
    self_attn.visit(join_name(prefix, "self_attn"), fn);
    cross_attn.visit(join_name(prefix, "cross_attn"), fn);
    ff.visit(join_name(prefix, "ff"), fn);
}

}  // namespace geogen::nn
