#include "geogen/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geogen::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

bool wants_grad(const Node& n) { return n.requires_grad; }

int normalize_axis(int axis, int ndim) {
    if (axis < 0) axis += ndim;
    if (axis < 0 || axis >= ndim) throw ShapeError("axis out of range");
    return axis;
}

std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Flat index into an operand for every flat index of the broadcast output.
std::vector<std::int64_t> broadcast_index(const Shape& operand, const Shape& out) {
    const std::size_t n = out.size();
    Shape padded(n, 1);
    std::copy(operand.begin(), operand.end(), padded.begin() + static_cast<std::ptrdiff_t>(n - operand.size()));
    const auto src_strides = strides_of(padded);
    const auto total = numel(out);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
    std::vector<std::int64_t> counter(n, 0);
    std::int64_t src = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        idx[static_cast<std::size_t>(flat)] = src;
        for (int d = static_cast<int>(n) - 1; d >= 0; --d) {
            ++counter[d];
            if (padded[d] != 1) src += src_strides[d];
            if (counter[d] < out[d]) break;
            if (padded[d] != 1) src -= src_strides[d] * out[d];
            counter[d] = 0;
        }
    }
    return idx;
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
    const Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shape(a.shape(), b.shape());
    const auto total = static_cast<std::size_t>(numel(out_shape));
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    std::vector<std::int64_t> ia, ib;
    if (!same) {
        ia = broadcast_index(a.shape(), out_shape);
        ib = broadcast_index(b.shape(), out_shape);
    }
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double x = av[same ? i : static_cast<std::size_t>(ia[i])];
        const double y = bv[same ? i : static_cast<std::size_t>(ib[i])];
        switch (op) {
            case BinOp::Add: out[i] = x + y; break;
            case BinOp::Sub: out[i] = x - y; break;
            case BinOp::Mul: out[i] = x * y; break;
            case BinOp::Div: out[i] = x / y; break;
        }
    }
    return make_result(out_shape, std::move(out), {a, b},
                       [op, same, ia = std::move(ia), ib = std::move(ib)](Node& self) {
                           Node& na = *self.parents[0];
                           Node& nb = *self.parents[1];
                           const auto& g = self.grad;
                           const std::size_t total = g.size();
                           auto ja = [&](std::size_t i) { return same ? i : static_cast<std::size_t>(ia[i]); };
                           auto jb = [&](std::size_t i) { return same ? i : static_cast<std::size_t>(ib[i]); };
                           if (wants_grad(na)) {
                               auto& ga = na.grad_buffer();
                               for (std::size_t i = 0; i < total; ++i) {
                                   switch (op) {
                                       case BinOp::Add:
                                       case BinOp::Sub: ga[ja(i)] += g[i]; break;
                                       case BinOp::Mul: ga[ja(i)] += g[i] * nb.value[jb(i)]; break;
                                       case BinOp::Div: ga[ja(i)] += g[i] / nb.value[jb(i)]; break;
                                   }
                               }
                           }
                           if (wants_grad(nb)) {
                               auto& gb = nb.grad_buffer();
                               for (std::size_t i = 0; i < total; ++i) {
                                   const double y = nb.value[jb(i)];
                                   switch (op) {
                                       case BinOp::Add: gb[jb(i)] += g[i]; break;
                                       case BinOp::Sub: gb[jb(i)] -= g[i]; break;
                                       case BinOp::Mul: gb[jb(i)] += g[i] * na.value[ja(i)]; break;
                                       case BinOp::Div: gb[jb(i)] -= g[i] * na.value[ja(i)] / (y * y); break;
                                   }
                               }
                           }
                       });
}

// Unary elementwise op given f(x) and df/dx expressed through (x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
        Node& in = *self.parents[0];
        auto& gi = in.grad_buffer();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * df(in.value[i], self.value[i]);
    });
}

double softplus_value(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Div); }

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}
Tensor mul_scalar(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}
Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}
Tensor sigmoid(const Tensor& x) {
    return unary(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}
Tensor silu(const Tensor& x) {
    return unary(
        x, [](double v) { return v * sigmoid_value(v); },
        [](double v, double) {
            const double s = sigmoid_value(v);
            return s * (1.0 + v * (1.0 - s));
        });
}
Tensor softplus(const Tensor& x) {
    return unary(x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}
Tensor tanh(const Tensor& x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}
Tensor sin(const Tensor& x) {
    return unary(x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}
Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
Tensor log(const Tensor& x) {
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
Tensor sqrt(const Tensor& x) {
    return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}
Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
    const auto& v = x.values();
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    return make_result({}, {s}, {x}, [](Node& self) {
        Node& in = *self.parents[0];
        auto& gi = in.grad_buffer();
        for (auto& g : gi) g += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    const auto n = static_cast<double>(x.size());
    if (n == 0) throw ShapeError("mean of empty tensor");
    return mul_scalar(sum(x), 1.0 / n);
}

Tensor sum(const Tensor& x, int axis, bool keepdim) {
    const Shape& s = x.shape();
    axis = normalize_axis(axis, x.ndim());
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= s[i];
    const std::int64_t n = s[axis];
    Shape out_shape;
    for (int i = 0; i < x.ndim(); ++i) {
        if (i == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(s[i]);
        }
    }
    std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
    const auto& v = x.values();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t k = 0; k < n; ++k)
            for (std::int64_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * n + k) * inner + i];
    return make_result(out_shape, std::move(out), {x}, [outer, inner, n](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t k = 0; k < n; ++k)
                for (std::int64_t i = 0; i < inner; ++i) gi[(o * n + k) * inner + i] += self.grad[o * inner + i];
    });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
    const auto n = x.dim(axis);
    if (n == 0) throw ShapeError("mean over empty axis");
    return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) throw ShapeError("matmul needs rank >= 2 operands");
    const std::int64_t m = a.dim(-2), k = a.dim(-1);
    const std::int64_t k2 = b.dim(-2), n = b.dim(-1);
    if (k != k2) throw ShapeError("matmul inner dims differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    const std::int64_t batch = a.size() / (m * k);
    const bool shared_b = b.ndim() == 2;
    if (!shared_b) {
        if (b.ndim() != a.ndim() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
            throw ShapeError("matmul batch dims differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
        }
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(batch * m * n));
    if (shared_b) {
        MatMap(out.data(), batch * m, n).noalias() =
            ConstMatMap(a.values().data(), batch * m, k) * ConstMatMap(b.values().data(), k, n);
    } else {
        for (std::int64_t i = 0; i < batch; ++i) {
            MatMap(out.data() + i * m * n, m, n).noalias() =
                ConstMatMap(a.values().data() + i * m * k, m, k) * ConstMatMap(b.values().data() + i * k * n, k, n);
        }
    }
    return make_result(out_shape, std::move(out), {a, b}, [batch, m, k, n, shared_b](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        if (shared_b) {
            ConstMatMap g(self.grad.data(), batch * m, n);
            if (wants_grad(na))
                MatMap(na.grad_buffer().data(), batch * m, k).noalias() +=
                    g * ConstMatMap(nb.value.data(), k, n).transpose();
            if (wants_grad(nb))
                MatMap(nb.grad_buffer().data(), k, n).noalias() +=
                    ConstMatMap(na.value.data(), batch * m, k).transpose() * g;
            return;
        }
        for (std::int64_t i = 0; i < batch; ++i) {
            ConstMatMap g(self.grad.data() + i * m * n, m, n);
            if (wants_grad(na))
                MatMap(na.grad_buffer().data() + i * m * k, m, k).noalias() +=
                    g * ConstMatMap(nb.value.data() + i * k * n, k, n).transpose();
            if (wants_grad(nb))
                MatMap(nb.grad_buffer().data() + i * k * n, k, n).noalias() +=
                    ConstMatMap(na.value.data() + i * m * k, m, k).transpose() * g;
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.ndim() != 2) throw ShapeError("linear weight must be 2-D");
    const std::int64_t out_f = weight.dim(0), in_f = weight.dim(1);
    if (x.ndim() < 1 || x.dim(-1) != in_f) {
        throw ShapeError("linear input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
    }
    if (bias.defined() && bias.size() != out_f) throw ShapeError("linear bias size mismatch");
    const std::int64_t rows = x.size() / in_f;
    Shape out_shape = x.shape();
    out_shape.back() = out_f;
    std::vector<double> out(static_cast<std::size_t>(rows * out_f));
    MatMap y(out.data(), rows, out_f);
    y.noalias() = ConstMatMap(x.values().data(), rows, in_f) * ConstMatMap(weight.values().data(), out_f, in_f).transpose();
    if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), out_f);
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(out_shape, std::move(out), inputs, [rows, in_f, out_f](Node& self) {
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        ConstMatMap g(self.grad.data(), rows, out_f);
        if (wants_grad(nx))
            MatMap(nx.grad_buffer().data(), rows, in_f).noalias() += g * ConstMatMap(nw.value.data(), out_f, in_f);
        if (wants_grad(nw))
            MatMap(nw.grad_buffer().data(), out_f, in_f).noalias() +=
                g.transpose() * ConstMatMap(nx.value.data(), rows, in_f);
        if (self.parents.size() > 2 && wants_grad(*self.parents[2])) {
            Eigen::Map<Eigen::RowVectorXd>(self.parents[2]->grad_buffer().data(), out_f) += g.colwise().sum();
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape with more than one -1");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || x.size() % known != 0) throw ShapeError("reshape cannot infer dimension");
        shape[static_cast<std::size_t>(infer)] = x.size() / known;
    }
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    return make_result(std::move(shape), x.values(), {x}, [](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int n = x.ndim();
    if (static_cast<int>(axes.size()) != n) throw ShapeError("permute rank mismatch");
    const Shape& s = x.shape();
    const auto in_strides = strides_of(s);
    Shape out_shape(static_cast<std::size_t>(n));
    std::vector<std::int64_t> src_strides(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out_shape[i] = s[axes[i]];
        src_strides[i] = in_strides[axes[i]];
    }
    const auto total = x.size();
    std::vector<std::int64_t> map(static_cast<std::size_t>(total));
    std::vector<std::int64_t> counter(static_cast<std::size_t>(n), 0);
    std::int64_t src = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        map[flat] = src;
        for (int d = n - 1; d >= 0; --d) {
            ++counter[d];
            src += src_strides[d];
            if (counter[d] < out_shape[d]) break;
            src -= src_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(total));
    const auto& v = x.values();
    for (std::int64_t i = 0; i < total; ++i) out[i] = v[map[i]];
    return make_result(out_shape, std::move(out), {x}, [map = std::move(map)](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < map.size(); ++i) gi[map[i]] += self.grad[i];
    });
}

Tensor transpose(const Tensor& x, int a, int b) {
    std::vector<int> axes(static_cast<std::size_t>(x.ndim()));
    std::iota(axes.begin(), axes.end(), 0);
    a = normalize_axis(a, x.ndim());
    b = normalize_axis(b, x.ndim());
    std::swap(axes[a], axes[b]);
    return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const int n = parts[0].ndim();
    axis = normalize_axis(axis, n);
    Shape out_shape = parts[0].shape();
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.ndim() != n) throw ShapeError("concat rank mismatch");
        for (int i = 0; i < n; ++i) {
            if (i != axis && p.shape()[i] != out_shape[i]) throw ShapeError("concat shape mismatch");
        }
        out_shape[axis] += p.shape()[axis];
    }
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int i = axis + 1; i < n; ++i) inner *= out_shape[i];
    const std::int64_t total_axis = out_shape[axis];
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t len = p.shape()[axis];
        const auto& v = p.values();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(v.begin() + o * len * inner, len * inner, out.begin() + (o * total_axis + off) * inner);
        off += len;
    }
    return make_result(out_shape, std::move(out), parts, [outer, inner, total_axis, offsets, axis](Node& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            Node& np = *self.parents[p];
            if (!wants_grad(np)) continue;
            const std::int64_t len = np.shape[axis];
            auto& gp = np.grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t j = 0; j < len * inner; ++j)
                    gp[o * len * inner + j] += self.grad[(o * total_axis + offsets[p]) * inner + j];
        }
    });
}

Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end) {
    axis = normalize_axis(axis, x.ndim());
    const Shape& s = x.shape();
    if (begin < 0 || end > s[axis] || begin > end) throw ShapeError("slice out of range");
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= s[i];
    const std::int64_t n = s[axis], len = end - begin;
    std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
    const auto& v = x.values();
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(v.begin() + (o * n + begin) * inner, len * inner, out.begin() + o * len * inner);
    return make_result(out_shape, std::move(out), {x}, [outer, inner, n, len, begin](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t j = 0; j < len * inner; ++j) gi[(o * n + begin) * inner + j] += self.grad[o * len * inner + j];
    });
}

Tensor softmax(const Tensor& x) {
    const std::int64_t n = x.dim(-1);
    const std::int64_t rows = x.size() / n;
    std::vector<double> out(x.values().size());
    const auto& v = x.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = v.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double z = 0;
        for (std::int64_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::int64_t j = 0; j < n; ++j) o[j] /= z;
    }
    return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double dot = 0;
            for (std::int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
            for (std::int64_t j = 0; j < n; ++j) gi[r * n + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor log_softmax(const Tensor& x) {
    const std::int64_t n = x.dim(-1);
    const std::int64_t rows = x.size() / n;
    std::vector<double> out(x.values().size());
    const auto& v = x.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = v.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double z = 0;
        for (std::int64_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
        const double lse = mx + std::log(z);
        for (std::int64_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lse;
    }
    return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = self.value.data() + r * n;
            const double* g = self.grad.data() + r * n;
            double gs = 0;
            for (std::int64_t j = 0; j < n; ++j) gs += g[j];
            for (std::int64_t j = 0; j < n; ++j) gi[r * n + j] += g[j] - std::exp(y[j]) * gs;
        }
    });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    if (x.ndim() != 3 || weight.ndim() != 3) throw ShapeError("conv1d expects (B,C,L) input and (O,C,K) weight");
    const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    const std::int64_t O = weight.dim(0), K = weight.dim(2);
    if (weight.dim(1) != C) {
        throw ShapeError("conv1d channel mismatch: input " + to_string(x.shape()) + " weight " + to_string(weight.shape()));
    }
    if (stride < 1) throw ShapeError("conv1d stride must be positive");
    const std::int64_t Lo = (L + 2 * padding - K) / stride + 1;
    if (Lo <= 0) throw ShapeError("conv1d input too short");
    const std::int64_t CK = C * K;
    // cols[b] is (C*K, Lo)
    std::vector<double> cols(static_cast<std::size_t>(B * CK * Lo), 0.0);
    const auto& xv = x.values();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t k = 0; k < K; ++k) {
                double* row = cols.data() + ((b * C + c) * K + k) * Lo;
                const double* src = xv.data() + (b * C + c) * L;
                for (std::int64_t t = 0; t < Lo; ++t) {
                    const std::int64_t pos = t * stride + k - padding;
                    if (pos >= 0 && pos < L) row[t] = src[pos];
                }
            }
    std::vector<double> out(static_cast<std::size_t>(B * O * Lo));
    ConstMatMap w(weight.values().data(), O, CK);
    for (std::int64_t b = 0; b < B; ++b) {
        MatMap y(out.data() + b * O * Lo, O, Lo);
        y.noalias() = w * ConstMatMap(cols.data() + b * CK * Lo, CK, Lo);
        if (bias.defined()) y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.values().data(), O);
    }
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result({B, O, Lo}, std::move(out), inputs,
                       [B, C, L, O, K, Lo, CK, stride, padding, cols = std::move(cols)](Node& self) {
                           Node& nx = *self.parents[0];
                           Node& nw = *self.parents[1];
                           ConstMatMap w(nw.value.data(), O, CK);
                           std::vector<double> dcols;
                           if (wants_grad(nx)) dcols.assign(static_cast<std::size_t>(CK * Lo), 0.0);
                           for (std::int64_t b = 0; b < B; ++b) {
                               ConstMatMap g(self.grad.data() + b * O * Lo, O, Lo);
                               if (wants_grad(nw))
                                   MatMap(nw.grad_buffer().data(), O, CK).noalias() +=
                                       g * ConstMatMap(cols.data() + b * CK * Lo, CK, Lo).transpose();
                               if (self.parents.size() > 2 && wants_grad(*self.parents[2]))
                                   Eigen::Map<Eigen::VectorXd>(self.parents[2]->grad_buffer().data(), O) += g.rowwise().sum();
                               if (wants_grad(nx)) {
                                   MatMap dc(dcols.data(), CK, Lo);
                                   dc.noalias() = w.transpose() * g;
                                   auto& gx = nx.grad_buffer();
                                   for (std::int64_t c = 0; c < C; ++c)
                                       for (std::int64_t k = 0; k < K; ++k) {
                                           const double* row = dcols.data() + (c * K + k) * Lo;
                                           double* dst = gx.data() + (b * C + c) * L;
                                           for (std::int64_t t = 0; t < Lo; ++t) {
                                               const std::int64_t pos = t * stride + k - padding;
                                               if (pos >= 0 && pos < L) dst[pos] += row[t];
                                           }
                                       }
                               }
                           }
                       });
}

Tensor avg_pool1d(const Tensor& x, int kernel) {
    if (x.ndim() != 3) throw ShapeError("avg_pool1d expects (B,C,L)");
    if (kernel < 1) throw ShapeError("avg_pool1d kernel must be positive");
    const std::int64_t rows = x.dim(0) * x.dim(1), L = x.dim(2);
    const std::int64_t Lo = (L + kernel - 1) / kernel;
    std::vector<double> out(static_cast<std::size_t>(rows * Lo), 0.0);
    const auto& v = x.values();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t t = 0; t < Lo; ++t) {
            const std::int64_t lo = t * kernel, hi = std::min(L, lo + kernel);
            double s = 0;
            for (std::int64_t i = lo; i < hi; ++i) s += v[r * L + i];
            out[r * Lo + t] = s / static_cast<double>(hi - lo);
        }
    return make_result({x.dim(0), x.dim(1), Lo}, std::move(out), {x}, [rows, L, Lo, kernel](Node& self) {
        auto& gi = self.parents[0]->grad_buffer();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t t = 0; t < Lo; ++t) {
                const std::int64_t lo = t * kernel, hi = std::min(L, lo + kernel);
                const double g = self.grad[r * Lo + t] / static_cast<double>(hi - lo);
                for (std::int64_t i = lo; i < hi; ++i) gi[r * L + i] += g;
            }
    });
}

Tensor upsample_nearest(const Tensor& x, int factor, std::int64_t out_len) {
    if (x.ndim() != 3) throw ShapeError("upsample_nearest expects (B,C,L)");
    const std::int64_t rows = x.dim(0) * x.dim(1), L = x.dim(2);
    std::vector<std::int64_t> src(static_cast<std::size_t>(out_len));
    for (std::int64_t t = 0; t < out_len; ++t) src[t] = std::min<std::int64_t>(t / factor, L - 1);
    std::vector<double> out(static_cast<std::size_t>(rows * out_len));
    const auto& v = x.values();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t t = 0; t < out_len; ++t) out[r * out_len + t] = v[r * L + src[t]];
    return make_result({x.dim(0), x.dim(1), out_len}, std::move(out), {x},
                       [rows, L, out_len, src = std::move(src)](Node& self) {
                           auto& gi = self.parents[0]->grad_buffer();
                           for (std::int64_t r = 0; r < rows; ++r)
                               for (std::int64_t t = 0; t < out_len; ++t) gi[r * L + src[t]] += self.grad[r * out_len + t];
                       });
}

Tensor pad_right(const Tensor& x, std::int64_t amount) {
    if (amount == 0) return x;
    Shape zshape = x.shape();
    zshape.back() = amount;
    return concat({x, Tensor::zeros(zshape)}, -1);
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.ndim() != 3) throw ShapeError("group_norm expects (B,C,L)");
    const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (groups < 1 || C % groups != 0) throw ShapeError("group_norm groups must divide channels");
    const std::int64_t per = (C / groups) * L;
    const std::int64_t cpg = C / groups;
    const auto& v = x.values();
    std::vector<double> xhat(v.size()), inv_std(static_cast<std::size_t>(B * groups));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t g = 0; g < groups; ++g) {
            const double* p = v.data() + (b * C + g * cpg) * L;
            double mu = 0;
            for (std::int64_t i = 0; i < per; ++i) mu += p[i];
            mu /= static_cast<double>(per);
            double var = 0;
            for (std::int64_t i = 0; i < per; ++i) var += (p[i] - mu) * (p[i] - mu);
            var /= static_cast<double>(per);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[b * groups + g] = is;
            double* q = xhat.data() + (b * C + g * cpg) * L;
            for (std::int64_t i = 0; i < per; ++i) q[i] = (p[i] - mu) * is;
        }
    std::vector<double> out(v.size());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t t = 0; t < L; ++t) {
                const std::size_t i = static_cast<std::size_t>((b * C + c) * L + t);
                out[i] = xhat[i] * gamma.values()[c] + beta.values()[c];
            }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [B, C, L, groups, cpg, per, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           Node& nx = *self.parents[0];
                           Node& ng = *self.parents[1];
                           Node& nb = *self.parents[2];
                           const auto& g = self.grad;
                           if (wants_grad(ng) || wants_grad(nb)) {
                               auto* gg = wants_grad(ng) ? ng.grad_buffer().data() : nullptr;
                               auto* gb = wants_grad(nb) ? nb.grad_buffer().data() : nullptr;
                               for (std::int64_t b = 0; b < B; ++b)
                                   for (std::int64_t c = 0; c < C; ++c)
                                       for (std::int64_t t = 0; t < L; ++t) {
                                           const auto i = (b * C + c) * L + t;
                                           if (gg) gg[c] += g[i] * xhat[i];
                                           if (gb) gb[c] += g[i];
                                       }
                           }
                           if (!wants_grad(nx)) return;
                           auto& gx = nx.grad_buffer();
                           std::vector<double> dxhat(static_cast<std::size_t>(per));
                           for (std::int64_t b = 0; b < B; ++b)
                               for (std::int64_t grp = 0; grp < groups; ++grp) {
                                   const std::int64_t base = (b * C + grp * cpg) * L;
                                   double s1 = 0, s2 = 0;
                                   for (std::int64_t i = 0; i < per; ++i) {
                                       const std::int64_t c = grp * cpg + i / L;
                                       dxhat[i] = g[base + i] * ng.value[c];
                                       s1 += dxhat[i];
                                       s2 += dxhat[i] * xhat[base + i];
                                   }
                                   const double is = inv_std[b * groups + grp];
                                   const double n = static_cast<double>(per);
                                   for (std::int64_t i = 0; i < per; ++i)
                                       gx[base + i] += is * (dxhat[i] - s1 / n - xhat[base + i] * s2 / n);
                               }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::int64_t n = x.dim(-1);
    const std::int64_t rows = x.size() / n;
    if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm affine size mismatch");
    const auto& v = x.values();
    std::vector<double> xhat(v.size()), inv_std(static_cast<std::size_t>(rows)), out(v.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* p = v.data() + r * n;
        double mu = 0;
        for (std::int64_t i = 0; i < n; ++i) mu += p[i];
        mu /= static_cast<double>(n);
        double var = 0;
        for (std::int64_t i = 0; i < n; ++i) var += (p[i] - mu) * (p[i] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::int64_t i = 0; i < n; ++i) {
            xhat[r * n + i] = (p[i] - mu) * is;
            out[r * n + i] = xhat[r * n + i] * gamma.values()[i] + beta.values()[i];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           Node& nx = *self.parents[0];
                           Node& ng = *self.parents[1];
                           Node& nb = *self.parents[2];
                           const auto& g = self.grad;
                           auto* gg = wants_grad(ng) ? ng.grad_buffer().data() : nullptr;
                           auto* gb = wants_grad(nb) ? nb.grad_buffer().data() : nullptr;
                           auto* gx = wants_grad(nx) ? nx.grad_buffer().data() : nullptr;
                           std::vector<double> dxhat(static_cast<std::size_t>(n));
                           for (std::int64_t r = 0; r < rows; ++r) {
                               double s1 = 0, s2 = 0;
                               for (std::int64_t i = 0; i < n; ++i) {
                                   const auto k = r * n + i;
                                   if (gg) gg[i] += g[k] * xhat[k];
                                   if (gb) gb[i] += g[k];
                                   dxhat[i] = g[k] * ng.value[i];
                                   s1 += dxhat[i];
                                   s2 += dxhat[i] * xhat[k];
                               }
                               if (!gx) continue;
                               const double dn = static_cast<double>(n);
                               for (std::int64_t i = 0; i < n; ++i)
                                   gx[r * n + i] += inv_std[r] * (dxhat[i] - s1 / dn - xhat[r * n + i] * s2 / dn);
                           }
                       });
}

Tensor gather_rows(const Tensor& table, const std::vector<std::int64_t>& indices) {
    if (table.ndim() != 2) throw ShapeError("gather_rows expects a 2-D table");
    const std::int64_t V = table.dim(0), d = table.dim(1);
    std::vector<double> out(indices.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= V) throw ShapeError("gather_rows index out of range");
        std::copy_n(table.values().begin() + indices[i] * d, d, out.begin() + static_cast<std::ptrdiff_t>(i) * d);
    }
    return make_result({static_cast<std::int64_t>(indices.size()), d}, std::move(out), {table},
                       [indices, d](Node& self) {
                           auto& gt = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < indices.size(); ++i)
                               for (std::int64_t j = 0; j < d; ++j) gt[indices[i] * d + j] += self.grad[i * d + j];
                       });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets, const std::vector<double>& weights) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy expects (M, V) logits");
    const std::int64_t M = logits.dim(0), V = logits.dim(1);
    if (static_cast<std::int64_t>(targets.size()) != M || static_cast<std::int64_t>(weights.size()) != M) {
        throw ShapeError("cross_entropy target/weight count mismatch");
    }
    double wsum = 0;
    for (auto w : weights) wsum += w;
    if (wsum <= 0) throw ShapeError("cross_entropy with no weighted targets");
    const auto& v = logits.values();
    std::vector<double> probs(v.size());
    double loss = 0;
    for (std::int64_t r = 0; r < M; ++r) {
        const double* in = v.data() + r * V;
        const double mx = *std::max_element(in, in + V);
        double z = 0;
        for (std::int64_t j = 0; j < V; ++j) z += (probs[r * V + j] = std::exp(in[j] - mx));
        for (std::int64_t j = 0; j < V; ++j) probs[r * V + j] /= z;
        if (weights[r] > 0) {
            const auto t = targets[r];
            if (t < 0 || t >= V) throw ShapeError("cross_entropy target out of range");
            loss -= weights[r] * (in[t] - mx - std::log(z));
        }
    }
    loss /= wsum;
    return make_result({}, {loss}, {logits},
                       [M, V, wsum, targets, weights, probs = std::move(probs)](Node& self) {
                           auto& gl = self.parents[0]->grad_buffer();
                           const double g = self.grad[0];
                           for (std::int64_t r = 0; r < M; ++r) {
                               if (weights[r] <= 0) continue;
                               const double s = g * weights[r] / wsum;
                               for (std::int64_t j = 0; j < V; ++j) gl[r * V + j] += s * probs[r * V + j];
                               gl[r * V + targets[r]] -= s;
                           }
                       });
}

}  // namespace geogen::nn
