#pragma once

#include "geogen/nn/tensor.hpp"

namespace geogen::nn {

// Elementwise binary ops broadcast with numpy semantics.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

// (..., m, k) x (k, n) or batched (..., m, k) x (..., k, n) with equal batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// x (..., in), weight (out, in), bias (out) or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor transpose(const Tensor& x, int a, int b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end);

Tensor softmax(const Tensor& x);  // over the last axis
Tensor log_softmax(const Tensor& x);

// x (B, Cin, L), weight (Cout, Cin, K), bias (Cout) or undefined.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1, int padding = 0);
// Non-overlapping windows; the trailing partial window averages what it covers.
Tensor avg_pool1d(const Tensor& x, int kernel);
// Repeats each position `factor` times, then crops or pads (edge) to out_len.
Tensor upsample_nearest(const Tensor& x, int factor, std::int64_t out_len);
// Zero padding on the right of the last axis.
Tensor pad_right(const Tensor& x, std::int64_t amount);

// x (B, C, L) normalized over (C/groups, L) per group.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Rows of table (V, d) selected by index -> (indices.size(), d).
Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices);

// Mean over entries with weight > 0 of -log_softmax(logits)[target]. logits (M, V).
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                     const std::vector<double>& weights);

}  // namespace geogen::nn
