#include "doctest.h"

#include "geogen/latent.hpp"
#include "geogen/rng.hpp"

#include <cmath>
#include <filesystem>

using namespace geogen;

namespace {

POICatalog grid_catalog(int n, Rng& rng) {
    POICatalog cat;
    for (int i = 0; i < n; ++i) {
        cat.ids.push_back(std::to_string(i));
        cat.coords.push_back({40.6 + 0.3 * rng.uniform(), -74.1 + 0.3 * rng.uniform()});
        cat.category.push_back(0);
        cat.freq.push_back({});
    }
    cat.category_names = {""};
    return cat;
}

Trajectory random_trajectory(Rng& rng, int pois, double duration, int max_events) {
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_events)));
    std::vector<double> ts;
    for (int i = 0; i < n; ++i) ts.push_back(std::floor(rng.uniform() * duration));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    std::vector<CheckIn> cks;
    for (double t : ts) cks.push_back({static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(pois))), t});
    return Trajectory(std::move(cks), duration);
}

std::vector<LatentSlot> slots_with(std::size_t L, std::initializer_list<std::pair<std::size_t, GeoPoint>> obs) {
    std::vector<LatentSlot> s(L);
    for (const auto& [i, g] : obs) s[i] = {g, 1};
    return s;
}

}  // namespace

TEST_CASE("latent length") {
    CHECK(latent_length(kSecondsPerWeek, kSecondsPerHour) == 168);
    CHECK(latent_length(6 * kSecondsPerWeek, kSecondsPerHour) == 1008);
    CHECK(latent_length(7200.0, 3000.0) == 2);
}

TEST_CASE("slot means and no-op when fully occupied") {
    POICatalog cat;
    cat.coords = {{40.0, -74.0}, {40.2, -74.2}, {41.0, -73.0}};
    cat.ids = {"a", "b", "c"};
    Trajectory tr({{0, 10.0}, {1, 20.0}, {2, 3700.0}}, 7200.0);
    auto s = reconstruct(tr, cat, 3600.0);
    REQUIRE(s.length() == 2);
    CHECK(s.slots[0].where.lat == doctest::Approx(40.1));
    CHECK(s.slots[0].where.lon == doctest::Approx(-74.1));
    CHECK(s.slots[0].count == 2);
    CHECK(s.slots[1].where == GeoPoint{41.0, -73.0});
    CHECK(s.slots[1].count == 1);
    CHECK_THROWS(reconstruct(tr, cat, 5000.0));
}

TEST_CASE("interior interpolation") {
    auto s = slots_with(5, {{0, {0, 0}}, {3, {3, 3}}});
    auto g = interpolate_interior(s, 0, 3, 1);
    CHECK(g.lat == doctest::Approx(1.0));
    CHECK(g.lon == doctest::Approx(1.0));

    auto mid = interpolate_interior(s, 0, 3, 0);
    CHECK(mid == s[0].where);
    CHECK(interpolate_interior(s, 0, 3, 3) == s[3].where);

    auto ny = slots_with(5, {{0, {40.7, -74.0}}, {4, {40.8, -73.9}}});
    auto h = interpolate_interior(ny, 0, 4, 2);
    CHECK(h.lat == doctest::Approx(40.75).epsilon(1e-12));
    CHECK(h.lon == doctest::Approx(-73.95).epsilon(1e-12));

    auto sym = slots_with(7, {{1, {2.0, 8.0}}, {5, {4.0, -2.0}}});
    auto m = interpolate_interior(sym, 1, 5, 3);
    CHECK(m.lat == doctest::Approx(3.0));
    CHECK(m.lon == doctest::Approx(3.0));
    CHECK_THROWS(interpolate_interior(s, 2, 2, 2));
}

TEST_CASE("circular interpolation") {
    SUBCASE("wrapped gap") {
        const GeoPoint a{10.0, 20.0}, b{13.0, 26.0};
        auto s = interpolate_circular(slots_with(6, {{1, b}, {4, a}}));
        // index 5 is one wrapped step from 4 on a gap of 3, index 0 two steps.
        CHECK(s[5].where.lat == doctest::Approx(11.0));
        CHECK(s[5].where.lon == doctest::Approx(22.0));
        CHECK(s[0].where.lat == doctest::Approx(12.0));
        CHECK(s[0].where.lon == doctest::Approx(24.0));
        CHECK(s[1].where == b);
        CHECK(s[4].where == a);
        CHECK(s[2].count == 0);
    }
    SUBCASE("single observation is copied") {
        const GeoPoint p{1.5, 2.5};
        auto s = interpolate_circular(slots_with(5, {{2, p}}));
        for (std::size_t i : {0u, 1u, 3u, 4u}) CHECK(s[i].where == p);
    }
    SUBCASE("both ends observed is a no-op") {
        auto in = slots_with(4, {{0, {1, 1}}, {3, {2, 2}}});
        auto out = interpolate_circular(in);
        CHECK(out == in);
    }
    CHECK_THROWS(interpolate_circular(std::vector<LatentSlot>(4)));
}

TEST_CASE("reconstruction properties on random trajectories") {
    Rng rng(11);
    auto cat = grid_catalog(20, rng);
    for (int trial = 0; trial < 200; ++trial) {
        const double D = 86400.0 + 1234.0 * (trial % 3);
        auto tr = random_trajectory(rng, 20, D, 60);
        const double I = 3600.0;
        auto s = reconstruct(tr, cat, I);
        const std::size_t L = latent_length(D, I);
        REQUIRE(s.length() == L);
        int inside = 0;
        for (const auto& c : tr.checkins())
            if (c.t < L * I) ++inside;
        CHECK(s.total_count() == inside);
        // Observed slots keep their exact slot means.
        std::vector<double> lat(L, 0), lon(L, 0);
        std::vector<int> n(L, 0);
        for (const auto& c : tr.checkins()) {
            const auto k = static_cast<std::size_t>(c.t / I);
            if (k >= L) continue;
            lat[k] += cat.coords[c.poi].lat;
            lon[k] += cat.coords[c.poi].lon;
            ++n[k];
        }
        for (std::size_t k = 0; k < L; ++k) {
            CHECK(s.slots[k].count == n[k]);
            if (n[k] > 0) {
                CHECK(s.slots[k].where.lat == lat[k] / n[k]);
                CHECK(s.slots[k].where.lon == lon[k] / n[k]);
            }
            CHECK(is_valid(s.slots[k].where));
            CHECK(std::isfinite(s.slots[k].where.lat));
        }
    }
}

TEST_CASE("filter sequence") {
    LatentMovementSequence s;
    s.interval = 3600.0;
    s.duration = 4 * 3600.0;
    s.slots = {{{1, 1}, 0}, {{2, 2}, 2}, {{3, 3}, 0}, {{4, 4}, 1}};
    auto f = filter_sequence(s, 1, 75);
    REQUIRE(f.size() == 2);
    CHECK(f.points[0].t == 5400.0);
    CHECK(f.points[1].t == 12600.0);
    CHECK(f.points[0].where == GeoPoint{2, 2});
    for (const auto& p : f.points) CHECK(p.t == (static_cast<double>(p.slot) + 0.5) * s.interval);

    auto g2 = filter_sequence(s, 2, 75);
    CHECK(g2.size() == 1);

    LatentMovementSequence big;
    big.interval = 60.0;
    big.duration = 60.0 * 100;
    big.slots.assign(100, {{0, 0}, 1});
    auto capped = filter_sequence(big);
    CHECK(capped.size() == 75);
    CHECK(capped.points.back().slot == 74);

    for (auto& sl : s.slots) sl.count = 0;
    CHECK_THROWS(filter_sequence(s));
    CHECK_THROWS(filter_sequence(big, 0));
}

TEST_CASE("normalization by hand") {
    LatentMovementSequence a, b;
    a.interval = b.interval = 1;
    a.duration = b.duration = 2;
    a.slots = {{{1, 10}, 0}, {{3, 10}, 2}};
    b.slots = {{{5, 14}, 4}, {{7, 14}, 2}};
    auto st = compute_norm_stats({a, b});
    CHECK(st.mean[0] == doctest::Approx(4.0));
    CHECK(st.mean[1] == doctest::Approx(12.0));
    CHECK(st.mean[2] == doctest::Approx(2.0));
    CHECK(st.std[0] == doctest::Approx(std::sqrt(5.0)));
    CHECK(st.std[1] == doctest::Approx(2.0));
    CHECK(st.std[2] == doctest::Approx(std::sqrt(2.0)));
    auto z = normalize({a, b}, st);
    CHECK(z.shape() == nn::Shape{2, 2, 3});
    CHECK(z.at({0, 0, 0}) == doctest::Approx(-3.0 / std::sqrt(5.0)));
    CHECK(z.at({1, 1, 1}) == doctest::Approx(1.0));
    CHECK(z.at({1, 0, 2}) == doctest::Approx(2.0 / std::sqrt(2.0)));

    auto back = denormalize(z, st, 1, 2);
    CHECK(back[0].slots == a.slots);
    CHECK(back[1].slots == b.slots);

    a.slots[1].where.lon = 10;
    b.slots = {{{5, 10}, 4}, {{7, 10}, 2}};
    try {
        compute_norm_stats({a, b});
        FAIL("expected error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("lon") != std::string::npos);
    }
}

TEST_CASE("normalize round trip on random sequences") {
    Rng rng(5);
    auto cat = grid_catalog(30, rng);
    std::vector<LatentMovementSequence> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(reconstruct(random_trajectory(rng, 30, 86400.0, 40), cat, 3600.0));
    auto st = compute_norm_stats(batch);
    auto z = normalize(batch, st);
    auto raw = denormalize_values(z, st);
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t k = 0; k < 24; ++k) {
            CHECK(std::abs(raw.at({(long)b, (long)k, 0}) - batch[b].slots[k].where.lat) < 1e-6);
            CHECK(std::abs(raw.at({(long)b, (long)k, 1}) - batch[b].slots[k].where.lon) < 1e-6);
            CHECK(std::abs(raw.at({(long)b, (long)k, 2}) - batch[b].slots[k].count) < 1e-6);
        }
    auto seqs = denormalize(z, st, 3600.0, 86400.0);
    for (std::size_t b = 0; b < batch.size(); ++b) CHECK(seqs[b].slots == batch[b].slots);

    // Negative intensities round up to zero.
    auto shifted = nn::Tensor::from({1, 1, 3}, {0.0, 0.0, (-0.7 - st.mean[2]) / st.std[2]});
    CHECK(denormalize(shifted, st, 1, 1)[0].slots[0].count == 0);
}

TEST_CASE("latent file round trip") {
    Rng rng(9);
    auto cat = grid_catalog(10, rng);
    LatentFile f;
    f.interval = 3600.0;
    f.duration = 86400.0;
    for (int i = 0; i < 3; ++i) f.sequences.push_back(reconstruct(random_trajectory(rng, 10, 86400.0, 20), cat, 3600.0));
    f.stats = compute_norm_stats(f.sequences);
    auto path = std::filesystem::temp_directory_path() / "geogen_latent_rt" / "latent.csv";
    write_latents(path, f);
    auto g = read_latents(path);
    CHECK(g.interval == f.interval);
    CHECK(g.duration == f.duration);
    CHECK(g.stats == f.stats);
    REQUIRE(g.sequences.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(g.sequences[i].slots == f.sequences[i].slots);
}
