#include "doctest.h"
#include "support/gradcheck.hpp"

#include "geogen/diffusion.hpp"
#include "geogen/sasg_unet.hpp"

#include <cmath>
#include <numbers>

using namespace geogen;
using nn::Tensor;
using geogen::testing::grad_check;

namespace {

Tensor randn(nn::Shape shape, Rng& rng) { return standard_normal(shape, rng); }

void set_identity(nn::Conv1d& conv) {
    auto w = conv.weight.data();
    std::fill(w.begin(), w.end(), 0.0);
    const auto out = conv.weight.dim(0), in = conv.weight.dim(1), k = conv.weight.dim(2);
    for (std::int64_t c = 0; c < std::min(out, in); ++c) w[(c * in + c) * k + k / 2] = 1.0;
    std::fill(conv.bias.data().begin(), conv.bias.data().end(), 0.0);
}

void set_zero(nn::Conv1d& conv) {
    std::fill(conv.weight.data().begin(), conv.weight.data().end(), 0.0);
    std::fill(conv.bias.data().begin(), conv.bias.data().end(), 0.0);
}

// Chord-length form: independent of the haversine expression.
double chord_distance_km(GeoPoint a, GeoPoint b) {
    const double r = std::numbers::pi / 180.0;
    auto xyz = [&](GeoPoint p) {
        return std::array<double, 3>{std::cos(p.lat * r) * std::cos(p.lon * r), std::cos(p.lat * r) * std::sin(p.lon * r),
                                     std::sin(p.lat * r)};
    };
    const auto u = xyz(a), v = xyz(b);
    const double chord = std::sqrt((u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]) + (u[2] - v[2]) * (u[2] - v[2]));
    return 2.0 * kEarthRadiusKm * std::asin(chord / 2.0);
}

SpatialContext nyc_context() {
    SpatialContext ctx;
    ctx.stats.mean = {40.73, -73.95, 1.0};
    ctx.stats.std = {0.05, 0.05, 1.0};
    BoundingBox box;
    box.extend({40.6, -74.1});
    box.extend({40.9, -73.8});
    ctx.clamp_box = box.expanded(1.0);
    return ctx;
}

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.base_channels = 8;
    c.channel_multipliers = {1, 2};
    c.res_blocks_per_level = 1;
    c.pool_kernels = {2, 4};
    c.bias_embed_dim = 8;
    c.sequence_length = 16;
    return c;
}

void check_rows_sum_to_one(const Tensor& w) {
    const auto T = w.dim(-1);
    const auto& v = w.values();
    for (std::size_t r = 0; r < v.size() / static_cast<std::size_t>(T); ++r) {
        double s = 0;
        for (std::int64_t j = 0; j < T; ++j) s += v[r * T + j];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

}  // namespace

TEST_CASE("haversine distances") {
    CHECK(haversine_km({0, 0}, {0, 90}) == doctest::Approx(10007.543).epsilon(1e-6));
    CHECK(haversine_km({0, 0}, {0, 90}) == doctest::Approx(2 * std::numbers::pi * kEarthRadiusKm / 4).epsilon(1e-12));
    const GeoPoint a{40.7128, -74.0060}, b{40.7589, -73.9851};
    CHECK(haversine_km(a, b) == doctest::Approx(chord_distance_km(a, b)).epsilon(1e-9));
    CHECK(haversine_km(a, b) == doctest::Approx(5.4).epsilon(0.02));
    CHECK(haversine_km(a, a) == 0.0);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const GeoPoint p{rng.uniform(-80, 80), rng.uniform(-179, 179)}, q{rng.uniform(-80, 80), rng.uniform(-179, 179)};
        CHECK(haversine_km(p, q) == doctest::Approx(chord_distance_km(p, q)).epsilon(1e-8));
    }
}

TEST_CASE("consecutive distances from normalized input") {
    auto ctx = nyc_context();
    // Two points in NYC plus a repeat; intensity channel is irrelevant.
    const GeoPoint p0{40.7128, -74.0060}, p1{40.7589, -73.9851};
    auto z = [&](double v, int c) { return (v - ctx.stats.mean[c]) / ctx.stats.std[c]; };
    Tensor x = Tensor::from({1, 3, 3}, {z(p0.lat, 0), z(p1.lat, 0), z(p1.lat, 0), z(p0.lon, 1), z(p1.lon, 1), z(p1.lon, 1), 0, 0, 0});
    auto d = consecutive_distances(x, ctx);
    CHECK(d.shape() == nn::Shape{1, 3, 1});
    CHECK(d.values()[0] == 0.0);
    CHECK(d.values()[1] == doctest::Approx(chord_distance_km(p0, p1)).epsilon(1e-9));
    CHECK(d.values()[2] == doctest::Approx(0.0));

    // Far-off noise is clamped to the box before measuring.
    Tensor far = Tensor::from({1, 3, 2}, {0.0, 1e4, 0.0, 0.0, 0.0, 0.0});
    auto df = consecutive_distances(far, ctx);
    CHECK(df.values()[1] == doctest::Approx(haversine_km({40.73, -73.95}, {41.9, -73.95})).epsilon(1e-9));
}

TEST_CASE("hierarchical block shapes and constants") {
    Rng rng(1);
    HierarchicalConv1d blk(4, 4, {2, 4, 8}, rng);
    for (std::int64_t L : {168, 1008}) {
        auto x = randn({2, 4, L}, rng);
        CHECK(blk(x).shape() == nn::Shape{2, 4, L});
    }
    HierarchicalConv1d widen(4, 6, {2, 4, 8}, rng);
    CHECK(widen(randn({1, 4, 168}, rng)).shape() == nn::Shape{1, 6, 168});

    set_identity(blk.direct);
    for (auto& b : blk.branches) set_identity(b);
    auto c = Tensor::full({1, 4, 20}, 0.0);
    for (std::int64_t ch = 0; ch < 4; ++ch)
        for (std::int64_t i = 0; i < 20; ++i) c.data()[ch * 20 + i] = 1.5 + ch;
    auto y = blk(c);
    for (std::int64_t ch = 0; ch < 4; ++ch)
        for (std::int64_t i = 0; i < 20; ++i) CHECK(y.at({0, ch, i}) == doctest::Approx(5 * (1.5 + ch)));

    CHECK_THROWS_AS(blk(randn({1, 4, 7}, rng)), nn::ShapeError);
}

TEST_CASE("hierarchical block single branch by hand") {
    Rng rng(3);
    HierarchicalConv1d blk(1, 1, {2}, rng);
    set_zero(blk.direct);
    set_identity(blk.branches[0]);
    // pool: [2, 6]; upsample: [2, 2, 6, 6]; plus the residual input.
    auto y = blk(Tensor::from({1, 1, 4}, {1, 3, 5, 7}));
    CHECK(y.values() == std::vector<double>{3, 5, 11, 13});
}

TEST_CASE("intensity gate") {
    Rng rng(4);
    IntensityGate gate(6, rng);
    auto h = randn({2, 6, 12}, rng) * 3.0;
    auto g = gate(h);
    CHECK(g.shape() == h.shape());
    for (double v : g.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    auto gated = g * h;
    for (std::size_t i = 0; i < h.values().size(); ++i) CHECK(std::abs(gated.values()[i]) <= std::abs(h.values()[i]));
    set_zero(gate.conv2);
    const auto closed = gate(h);
    for (double v : closed.values()) CHECK(v == 0.5);
}

TEST_CASE("s2g attention") {
    Rng rng(5);
    S2GAttention att(8, 4, rng);
    auto h = randn({2, 8, 10}, rng);
    auto d = Tensor::from({2, 10, 1}, std::vector<double>(20, 0.0));
    for (std::size_t i = 0; i < 20; ++i) d.data()[i] = 3.0 * rng.uniform();
    auto out = att(h, d);
    CHECK(out.shape() == h.shape());
    check_rows_sum_to_one(att.last_weights());

    // Equal distances give a constant V, so h_att is constant along the length.
    auto flat = Tensor::full({2, 10, 1}, 1.7);
    auto y = att(h, flat) - h;
    for (std::int64_t b = 0; b < 2; ++b)
        for (std::int64_t c = 0; c < 8; ++c)
            for (std::int64_t i = 1; i < 10; ++i) CHECK(y.at({b, c, i}) == doctest::Approx(y.at({b, c, 0})).epsilon(1e-12));

    CHECK_THROWS(att(h, Tensor::full({2, 9, 1}, 0.0)));
}

TEST_CASE("attention by hand on a length-3 toy") {
    auto q = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
    auto k = Tensor::from({3, 2}, {1, 0, 0, 1, 0, 0});
    auto v = Tensor::from({3, 1}, {1, 2, 3});
    auto r = nn::scaled_dot_attention(q, k, v, Tensor());
    const double s = 1 / std::sqrt(2.0);
    const double expected[3][3] = {{s, 0, 0}, {0, s, 0}, {s, s, 0}};
    for (int i = 0; i < 3; ++i) {
        double z = 0, num = 0;
        for (int j = 0; j < 3; ++j) z += std::exp(expected[i][j]);
        for (int j = 0; j < 3; ++j) num += std::exp(expected[i][j]) / z * (j + 1);
        CHECK(r.output.at({i, 0}) == doctest::Approx(num).epsilon(1e-12));
    }
}

TEST_CASE("config validation and attention level") {
    DenoiserConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.padded_length() == 168);
    CHECK(c.resolve_attention_level() == 3);  // 168 / 8 = 21
    c.sequence_length = 1008;
    CHECK(c.resolve_attention_level() == 3);  // 126 is nearest at the deepest level
    c.sequence_length = 170;
    CHECK(c.padded_length() == 176);
    c.sequence_length = 40;
    CHECK_THROWS(c.validate());  // deepest length 5 < 8
    DenoiserConfig bad;
    bad.pool_kernels = {2};
    CHECK_THROWS(bad.validate());
    bad = DenoiserConfig{};
    bad.channel_multipliers = {};
    CHECK_THROWS(bad.validate());
    bad = DenoiserConfig{};
    bad.in_channels = 4;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("denoiser forward shape, determinism and attention rows") {
    Rng rng(6);
    DenoiserConfig c;
    c.base_channels = 8;
    c.channel_multipliers = {1, 2, 2};
    c.res_blocks_per_level = 1;
    c.pool_kernels = {2, 4};
    c.bias_embed_dim = 8;
    c.sequence_length = 168;
    SasgUNet net(c, rng);
    auto x = randn({2, 168, 3}, rng);
    CHECK_THROWS_AS(net(x, 5), std::logic_error);
    net.set_spatial_context(nyc_context());
    auto y1 = net(x, std::vector<int>{3, 900});
    auto y2 = net(x, std::vector<int>{3, 900});
    CHECK(y1.shape() == x.shape());
    CHECK(y1.values() == y2.values());
    auto weights = net.last_attention_weights();
    CHECK(weights.size() == 3 + 2);
    for (const auto& w : weights) check_rows_sum_to_one(w);
    CHECK_THROWS_AS(net(randn({2, 160, 3}, rng), 1), nn::ShapeError);
    CHECK_THROWS_AS(net(x, std::vector<int>{1}), nn::ShapeError);

    DenoiserConfig padded = c;
    padded.sequence_length = 170;
    SasgUNet net2(padded, rng);
    net2.set_spatial_context(nyc_context());
    CHECK(net2(randn({1, 170, 3}, rng), 10).shape() == nn::Shape{1, 170, 3});
}

TEST_CASE("parameter count tracks the multipliers") {
    Rng rng(7);
    auto c = tiny_config();
    SasgUNet a(c, rng);
    c.channel_multipliers = {1, 2, 4};
    c.sequence_length = 32;
    SasgUNet b(c, rng);
    CHECK(a.parameter_count() > 0);
    CHECK(b.parameter_count() > a.parameter_count());
    c.channel_multipliers = {1, 2, 2};
    SasgUNet m(c, rng);
    CHECK(m.parameter_count() < b.parameter_count());
    CHECK(m.parameter_count() > a.parameter_count());
    MESSAGE("default-size denoiser parameters: " << SasgUNet(DenoiserConfig{}, rng).parameter_count());
}

TEST_CASE("denoiser loss gradient matches finite differences") {
    Rng rng(8);
    SasgUNet net(tiny_config(), rng);
    net.set_spatial_context(nyc_context());
    auto schedule = make_linear_schedule(100, 1e-3, 0.2);
    auto x0 = randn({2, 16, 3}, rng);
    auto eps = randn({2, 16, 3}, rng);
    const std::vector<int> steps{7, 63};
    auto xn = forward_sample(x0, steps, eps, schedule);
    auto loss = [&] { return training_loss(eps, net(xn, steps)); };
    int checked = 0;
    for (auto& [name, p] : net.named_parameters()) {
        const bool pick = name.find("in_conv.weight") != std::string::npos || name.find("s2g.wq.weight") != std::string::npos ||
                          name.find("s2g.bias.fc1.weight") != std::string::npos ||
                          name.find("down0.conv1.pool4.weight") != std::string::npos ||
                          name.find("temb1.weight") != std::string::npos || name.find("out_conv.bias") != std::string::npos ||
                          name.find("s2g.gate.conv1.weight") != std::string::npos ||
                          name.find("up_attn.attn.wq.weight") != std::string::npos;
        if (!pick) continue;
        std::vector<std::size_t> idx;
        for (int i = 0; i < 4; ++i) idx.push_back(rng.below(static_cast<std::uint64_t>(p.size())));
        auto r = grad_check(p, loss, idx);
        INFO(name);
        CHECK(r.max_rel_error < 1e-4);
        ++checked;
    }
    CHECK(checked >= 8);
}
