#include "doctest.h"
#include "support/gradcheck.hpp"

#include "geogen/nn/module.hpp"
#include "geogen/nn/optim.hpp"

#include <cmath>

using namespace geogen;
using namespace geogen::nn;
using geogen::testing::all_indices;
using geogen::testing::grad_check;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = rng.normal();
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum so every output element carries a distinct gradient.
Tensor probe(const Tensor& y) {
    std::vector<double> w(static_cast<std::size_t>(y.size()));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
    return sum(y * Tensor::from(y.shape(), w));
}

}  // namespace

TEST_CASE("broadcast arithmetic values and gradients") {
    Rng rng(1);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({3, 1}, rng);
    auto y = (a + b) * a / (b * b + 2.0) - b;
    CHECK(y.shape() == Shape{2, 3, 4});
    CHECK(y.at({1, 2, 3}) == doctest::Approx((a.at({1, 2, 3}) + b.at({2, 0})) * a.at({1, 2, 3}) /
                                                 (b.at({2, 0}) * b.at({2, 0}) + 2.0) -
                                             b.at({2, 0})));
    auto f = [&] { return probe((a + b) * a / (b * b + 2.0) - b); };
    CHECK(grad_check(a, f, all_indices(a)).max_rel_error < 1e-6);
    CHECK(grad_check(b, f, all_indices(b)).max_rel_error < 1e-6);
}

TEST_CASE("unary ops gradients") {
    Rng rng(2);
    auto x = random_tensor({5, 3}, rng);
    auto pos = Tensor::from({4}, {0.5, 1.5, 2.0, 3.0}, true);
    CHECK(grad_check(x, [&] { return probe(sigmoid(x) + silu(x) + softplus(x) + tanh(x) + sin(x) + exp(x) + square(x)); },
                     all_indices(x))
              .max_rel_error < 1e-6);
    CHECK(grad_check(pos, [&] { return probe(log(pos) + sqrt(pos)); }, all_indices(pos)).max_rel_error < 1e-6);
}

TEST_CASE("reductions, matmul, linear") {
    Rng rng(3);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto c = random_tensor({2, 4, 2}, rng);
    auto bias = random_tensor({5}, rng);
    auto w = random_tensor({5, 4}, rng);
    CHECK(grad_check(a, [&] { return probe(sum(a, 1)) + probe(mean(a, -1, true)); }, all_indices(a)).max_rel_error < 1e-6);
    CHECK(grad_check(a, [&] { return probe(matmul(a, b)); }, all_indices(a)).max_rel_error < 1e-6);
    CHECK(grad_check(b, [&] { return probe(matmul(a, b)); }, all_indices(b)).max_rel_error < 1e-6);
    CHECK(grad_check(c, [&] { return probe(matmul(a, c)); }, all_indices(c)).max_rel_error < 1e-6);
    CHECK(grad_check(w, [&] { return probe(linear(a, w, bias)); }, all_indices(w)).max_rel_error < 1e-6);
    CHECK(grad_check(bias, [&] { return probe(linear(a, w, bias)); }, all_indices(bias)).max_rel_error < 1e-6);
    CHECK(grad_check(a, [&] { return probe(linear(a, w, bias)); }, all_indices(a)).max_rel_error < 1e-6);

    auto m = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
    CHECK(m.item() == 11.0);
    CHECK_THROWS_AS(matmul(a, w), ShapeError);
}

TEST_CASE("shape ops") {
    Rng rng(4);
    auto x = random_tensor({2, 3, 4}, rng);
    auto y = random_tensor({2, 1, 4}, rng);
    auto p = permute(x, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    CHECK(p.at({3, 1, 2}) == x.at({1, 2, 3}));
    CHECK(grad_check(x, [&] { return probe(permute(x, {1, 2, 0})); }, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(x, [&] { return probe(concat({x, y, x}, 1)); }, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(y, [&] { return probe(concat({x, y}, 1)); }, all_indices(y)).max_rel_error < 1e-6);
    CHECK(grad_check(x, [&] { return probe(slice(x, 2, 1, 3)); }, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(x, [&] { return probe(reshape(x, {6, -1})); }, all_indices(x)).max_rel_error < 1e-6);
    auto table = random_tensor({5, 3}, rng);
    CHECK(grad_check(table, [&] { return probe(gather_rows(table, {4, 0, 4, 2})); }, all_indices(table)).max_rel_error <
          1e-6);
}

TEST_CASE("softmax rows sum to one and gradients match") {
    Rng rng(5);
    auto x = random_tensor({3, 7}, rng);
    auto s = softmax(x);
    for (int r = 0; r < 3; ++r) {
        double total = 0;
        for (int j = 0; j < 7; ++j) total += s.at({r, j});
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(grad_check(x, [&] { return probe(softmax(x)); }, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(x, [&] { return probe(log_softmax(x)); }, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(x, [&] { return cross_entropy(x, {1, 6, 0}, {1.0, 0.0, 2.0}); }, all_indices(x)).max_rel_error <
          1e-6);
}

TEST_CASE("cross entropy of a confident correct prediction is near zero") {
    auto logits = Tensor::from({2, 3}, {100, 0, 0, 0, 0, 100});
    CHECK(cross_entropy(logits, {0, 2}, {1, 1}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("conv1d matches direct evaluation and gradients") {
    Rng rng(6);
    auto x = random_tensor({2, 3, 9}, rng);
    auto w = random_tensor({4, 3, 3}, rng);
    auto b = random_tensor({4}, rng);
    auto y = conv1d(x, w, b, 2, 1);
    CHECK(y.shape() == Shape{2, 4, 5});
    // out[b,o,t] = bias[o] + sum_c sum_k w[o,c,k] x[b,c,2t+k-1]
    double expect = b.at({1});
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 3; ++k) {
            const int pos = 2 * 2 + k - 1;
            expect += w.at({1, c, k}) * x.at({1, c, pos});
        }
    CHECK(y.at({1, 1, 2}) == doctest::Approx(expect).epsilon(1e-12));
    auto f = [&] { return probe(conv1d(x, w, b, 2, 1)); };
    CHECK(grad_check(x, f, all_indices(x)).max_rel_error < 1e-6);
    CHECK(grad_check(w, f, all_indices(w)).max_rel_error < 1e-6);
    CHECK(grad_check(b, f, all_indices(b)).max_rel_error < 1e-6);
}

TEST_CASE("pooling and nearest upsampling") {
    auto x = Tensor::from({1, 1, 5}, {1, 3, 5, 7, 10}, true);
    auto p = avg_pool1d(x, 2);
    CHECK(p.values() == std::vector<double>{2, 6, 10});
    auto u = upsample_nearest(p, 2, 5);
    CHECK(u.values() == std::vector<double>{2, 2, 6, 6, 10});
    CHECK(grad_check(x, [&] { return probe(upsample_nearest(avg_pool1d(x, 2), 2, 5)); }, all_indices(x)).max_rel_error <
          1e-6);
    auto padded = pad_right(x, 3);
    CHECK(padded.shape() == Shape{1, 1, 8});
    CHECK(padded.at({0, 0, 7}) == 0.0);
}

TEST_CASE("normalization layers") {
    Rng rng(7);
    auto x = random_tensor({2, 4, 5}, rng);
    auto gamma = random_tensor({4}, rng);
    auto beta = random_tensor({4}, rng);
    auto f = [&] { return probe(group_norm(x, 2, gamma, beta)); };
    CHECK(grad_check(x, f, all_indices(x)).max_rel_error < 1e-5);
    CHECK(grad_check(gamma, f, all_indices(gamma)).max_rel_error < 1e-6);
    CHECK(grad_check(beta, f, all_indices(beta)).max_rel_error < 1e-6);

    auto g2 = random_tensor({5}, rng);
    auto b2 = random_tensor({5}, rng);
    auto h = [&] { return probe(layer_norm(x, g2, b2)); };
    CHECK(grad_check(x, h, all_indices(x)).max_rel_error < 1e-5);
    CHECK(grad_check(g2, h, all_indices(g2)).max_rel_error < 1e-6);

    NoGradGuard guard;
    auto ones = Tensor::full({5}, 1.0);
    auto zeros = Tensor::zeros({5});
    auto n = layer_norm(x, ones, zeros);
    double m = 0;
    for (int i = 0; i < 5; ++i) m += n.at({0, 0, i});
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("multi-head attention honours masks and gradients") {
    Rng rng(8);
    MultiHeadAttention mha(8, 2, rng);
    auto x = random_tensor({2, 4, 8}, rng, false);
    auto mask = key_padding_mask({4, 2}, 4) + causal_mask(4);
    auto y = mha(x, x, mask);
    CHECK(y.shape() == Shape{2, 4, 8});
    const auto& w = mha.last_weights();
    CHECK(w.shape() == Shape{2, 2, 4, 4});
    for (int b = 0; b < 2; ++b)
        for (int h = 0; h < 2; ++h)
            for (int q = 0; q < 4; ++q) {
                double total = 0;
                for (int k = 0; k < 4; ++k) {
                    total += w.at({b, h, q, k});
                    if (k > q) CHECK(w.at({b, h, q, k}) == 0.0);
                    if (b == 1 && k >= 2) CHECK(w.at({b, h, q, k}) == 0.0);
                }
                CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            }
    auto f = [&] { return probe(mha(x, x, mask)); };
    CHECK(grad_check(mha.wq.weight, f, all_indices(mha.wq.weight)).max_rel_error < 1e-5);
    CHECK(grad_check(mha.wv.weight, f, all_indices(mha.wv.weight)).max_rel_error < 1e-5);
}

TEST_CASE("Adam minimizes a quadratic and AdamW decays weights") {
    auto w = Tensor::from({2}, {3.0, -2.0}, true);
    Adam opt({w}, {.lr = 0.1});
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        auto loss = sum(square(w - Tensor::from({2}, {1.0, 0.5})));
        loss.backward();
        opt.step();
    }
    CHECK(w.at({0}) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(w.at({1}) == doctest::Approx(0.5).epsilon(1e-3));

    auto v = Tensor::from({1}, {1.0}, true);
    Adam decay({v}, {.lr = 0.1, .weight_decay = 0.5});
    v.mutable_grad()[0] = 0.0;
    decay.step();
    CHECK(v.at({0}) == doctest::Approx(0.95));
}

TEST_CASE("gradient clipping bounds the global norm") {
    auto a = Tensor::from({2}, {0, 0}, true);
    auto b = Tensor::from({1}, {0}, true);
    a.mutable_grad()[0] = 300;
    a.mutable_grad()[1] = 400;
    b.mutable_grad()[0] = 1200;
    const double before = clip_grad_norm({a, b}, 1.0);
    CHECK(before == doctest::Approx(1300.0));
    double sq = 0;
    for (double g : a.grad()) sq += g * g;
    for (double g : b.grad()) sq += g * g;
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.grad()[0] / a.grad()[1] == doctest::Approx(0.75));
}

TEST_CASE("plateau scheduler halves after exactly patience bad epochs") {
    auto w = Tensor::from({1}, {0.0}, true);
    Adam opt({w}, {.lr = 1e-3});
    ReduceLROnPlateau sched(0.5, 5);
    CHECK_FALSE(sched.step(1.0, opt));
    for (int i = 1; i <= 4; ++i) CHECK_FALSE(sched.step(1.0, opt));
    CHECK(sched.step(1.0, opt));
    CHECK(opt.lr() == doctest::Approx(5e-4));
    CHECK_FALSE(sched.step(0.5, opt));
}

TEST_CASE("memory accounting tracks live tensors") {
    reset_peak_memory();
    const auto before = memory_stats().current_bytes;
    {
        auto big = Tensor::zeros({1000});
        CHECK(memory_stats().current_bytes >= before + 8000);
    }
    CHECK(memory_stats().current_bytes == before);
    CHECK(memory_stats().peak_bytes >= before + 8000);
}
