#include "doctest.h"

#include "geogen/evaluation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace geogen;

namespace {

POICatalog catalog_of(std::vector<GeoPoint> pts) {
    POICatalog cat;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        cat.ids.push_back(std::to_string(i));
        cat.coords.push_back(pts[i]);
        cat.category.push_back(0);
        cat.freq.push_back({});
    }
    cat.category_names = {""};
    return cat;
}

// Independent great-circle distance (atan2 form of the central angle).
double great_circle_km(GeoPoint a, GeoPoint b) {
    const double r = std::numbers::pi / 180;
    const double p1 = a.lat * r, p2 = b.lat * r, dl = (b.lon - a.lon) * r;
    const double y = std::hypot(std::cos(p2) * std::sin(dl), std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl));
    const double x = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
    return 6371.0 * std::atan2(y, x);
}

Histogram random_hist(Rng& rng, int bins) {
    Histogram h;
    for (int i = 0; i <= bins; ++i) h.edges.push_back(i);
    double z = 0;
    for (int i = 0; i < bins; ++i) {
        h.probs.push_back(rng.uniform() < 0.2 ? 0.0 : rng.uniform());
        z += h.probs.back();
    }
    if (z == 0) h.probs[0] = z = 1;
    for (auto& p : h.probs) p /= z;
    return h;
}

double brute_jsd(const Histogram& p, const Histogram& q) {
    double kp = 0, kq = 0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double m = (p.probs[i] + q.probs[i]) / 2;
        if (p.probs[i] > 0) kp += p.probs[i] * std::log(p.probs[i] / m) / std::log(2.0);
        if (q.probs[i] > 0) kq += q.probs[i] * std::log(q.probs[i] / m) / std::log(2.0);
    }
    return kp / 2 + kq / 2;
}

std::vector<std::vector<CheckIn>> random_trajs(Rng& rng, int count, int pois) {
    std::vector<std::vector<CheckIn>> out;
    for (int i = 0; i < count; ++i) {
        std::vector<CheckIn> t;
        double ts = 0;
        const int n = 1 + static_cast<int>(rng.below(12));
        for (int k = 0; k < n; ++k) {
            ts += 60 + std::floor(rng.uniform() * 7200);
            t.push_back({static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(pois))), ts});
        }
        out.push_back(t);
    }
    return out;
}

POICatalog random_catalog(Rng& rng, int n) {
    std::vector<GeoPoint> pts;
    for (int i = 0; i < n; ++i) pts.push_back({40.6 + 0.3 * rng.uniform(), -74.1 + 0.3 * rng.uniform()});
    return catalog_of(pts);
}

}  // namespace

TEST_CASE("distance metric") {
    const auto cat = catalog_of({{40.7128, -74.0060}, {40.7589, -73.9851}});
    const auto single = metric_distance({{0, 0.0}}, cat);
    CHECK(single.hops.empty());
    CHECK(single.total == 0.0);
    const auto same = metric_distance({{1, 0.0}, {1, 60.0}}, cat);
    CHECK(same.hops == std::vector<double>{0.0});
    const auto pair = metric_distance({{0, 0.0}, {1, 60.0}, {0, 120.0}}, cat);
    REQUIRE(pair.hops.size() == 2);
    CHECK(pair.hops[0] == doctest::Approx(great_circle_km(cat.coords[0], cat.coords[1])).epsilon(1e-6));
    CHECK(pair.hops[0] == doctest::Approx(5.4).epsilon(0.02));
    CHECK(pair.total == doctest::Approx(2 * pair.hops[0]));
    CHECK_THROWS_AS(metric_distance({{0, 0.0}, {7, 60.0}}, cat), DataError);
}

TEST_CASE("radius is half the largest pairwise distance") {
    const auto cat = catalog_of({{40.70, -74.00}, {40.75, -74.00}, {40.72, -73.93}});
    CHECK(metric_radius({{0, 0.0}}, cat) == 0.0);
    CHECK(metric_radius({{0, 0.0}, {1, 60.0}}, cat) ==
          doctest::Approx(great_circle_km(cat.coords[0], cat.coords[1]) / 2).epsilon(1e-6));
    const double longest = std::max({great_circle_km(cat.coords[0], cat.coords[1]), great_circle_km(cat.coords[0], cat.coords[2]),
                                     great_circle_km(cat.coords[1], cat.coords[2])});
    CHECK(metric_radius({{0, 0.0}, {1, 60.0}, {2, 120.0}}, cat) == doctest::Approx(longest / 2).epsilon(1e-6));
}

TEST_CASE("radius matches an all-pairs search on random trajectories") {
    Rng rng(1);
    const auto cat = random_catalog(rng, 30);
    for (const auto& t : random_trajs(rng, 50, 30)) {
        double best = 0;
        for (const auto& a : t)
            for (const auto& b : t) best = std::max(best, great_circle_km(cat.coords[a.poi], cat.coords[b.poi]));
        CHECK(metric_radius(t, cat) == doctest::Approx(best / 2).epsilon(1e-6));
    }
}

TEST_CASE("interval and length") {
    const std::vector<CheckIn> t{{0, 0.0}, {1, 60.0}, {0, 180.0}};
    CHECK(metric_interval(t) == std::vector<double>{60.0, 120.0});
    CHECK(metric_length(t) == 3);
    CHECK(metric_interval({{0, 5.0}}).empty());
    CHECK(metric_length({{0, 5.0}}) == 1);
    CHECK_THROWS_AS(metric_interval({{0, 60.0}, {1, 60.0}}), DataError);
    CHECK_THROWS_AS(metric_interval({{0, 60.0}, {1, 0.0}}), DataError);

    // Mean trajectory length of 17 on FS-NYC, used as a fixture size.
    std::vector<CheckIn> week;
    for (int i = 0; i < 17; ++i) week.push_back({0, 3600.0 * 9 * (i + 1)});
    const Trajectory traj(week, kSecondsPerWeek);
    CHECK(metric_length(traj.checkins()) == 17);
    CHECK(metric_interval(traj.checkins()).size() == 16);
}

TEST_CASE("histograms") {
    SUBCASE("identical values collapse to one bin") {
        const auto h = build_histogram({2.5, 2.5, 2.5}, 2.5, 2.5);
        CHECK(h.bins() == 1);
        CHECK(h.probs[0] == 1.0);
    }
    SUBCASE("uniform sample fills bins evenly") {
        Rng rng(2);
        std::vector<double> v(1000);
        for (auto& x : v) x = rng.uniform();
        v.push_back(0.0);
        v.push_back(1.0);
        const auto h = build_histogram(v, 0.0, 1.0, 10);
        REQUIRE(h.bins() == 10);
        for (double p : h.probs) CHECK(p == doctest::Approx(0.1).epsilon(0.3));
        CHECK(h.edges.front() == 0.0);
        CHECK(h.edges.back() == 1.0);
    }
    SUBCASE("probabilities always sum to one") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> v(1 + rng.below(200));
            for (auto& x : v) x = rng.normal() * 10;
            const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
            const auto h = build_histogram(v, *lo, *hi, 1 + static_cast<int>(rng.below(120)));
            double s = 0;
            for (double p : h.probs) {
                CHECK(p >= kProbabilityFloor * 0.5);
                s += p;
            }
            CHECK(std::abs(s - 1) < 1e-9);
            for (std::size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
        }
    }
    SUBCASE("length bins are integers") {
        const auto h = build_length_histogram({1, 2, 2, 4}, 4);
        REQUIRE(h.bins() == 4);
        CHECK(h.probs[1] == doctest::Approx(0.5));
        CHECK(h.probs[2] < 1e-9);
        CHECK(h.edges.front() == 0.5);
        CHECK_THROWS(build_length_histogram({5}, 4));
    }
    CHECK_THROWS(build_histogram({}, 0, 1));
    CHECK_THROWS(build_histogram({2.0}, 0, 1));
}

TEST_CASE("jsd worked values") {
    Histogram p{{0, 1, 2}, {0.5, 0.5}}, q{{0, 1, 2}, {0.9, 0.1}};
    CHECK(jsd(p, p) == 0.0);
    CHECK(jsd(p, q) == doctest::Approx(brute_jsd(p, q)).epsilon(1e-12));
    CHECK(jsd(p, q) == doctest::Approx(0.146793).epsilon(1e-5));
    Histogram a{{0, 1, 2}, {1.0, 0.0}}, b{{0, 1, 2}, {0.0, 1.0}};
    CHECK(jsd(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sample_jsd({0.0, 0.1, 0.2}, {5.0, 5.1}) == doctest::Approx(1.0).epsilon(1e-6));
    Histogram other{{0, 1, 3}, {0.5, 0.5}};
    CHECK_THROWS_AS(jsd(p, other), std::invalid_argument);
}

TEST_CASE("jsd is symmetric, bounded and matches a direct summation") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int bins = 1 + static_cast<int>(rng.below(30));
        const auto p = random_hist(rng, bins), q = random_hist(rng, bins);
        const double d = jsd(p, q);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(std::abs(d - jsd(q, p)) < 1e-12);
        CHECK(std::abs(d - brute_jsd(p, q)) < 1e-9);
        CHECK(jsd(p, p) == 0.0);
    }
}

TEST_CASE("fidelity report of a set against itself is zero") {
    Rng rng(5);
    const auto cat = random_catalog(rng, 20);
    const auto trajs = random_trajs(rng, 40, 20);
    const auto r = fidelity_report(trajs, trajs, cat);
    CHECK(r.jsd_distance == 0.0);
    CHECK(r.jsd_radius == 0.0);
    CHECK(r.jsd_interval == 0.0);
    CHECK(r.jsd_length == 0.0);
    CHECK(r.jsd_total_distance == 0.0);

    const auto other = random_trajs(rng, 40, 20);
    const auto a = fidelity_report(trajs, other, cat);
    const auto b = fidelity_report(trajs, other, cat);
    CHECK(a.jsd_distance == b.jsd_distance);
    CHECK(a.jsd_length == b.jsd_length);
    for (double v : {a.jsd_distance, a.jsd_radius, a.jsd_interval, a.jsd_length}) {
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
    const auto& cdf = a.real_cdf.at("length");
    CHECK(cdf.size() == 40);
    CHECK(cdf.back().cumulative == 1.0);
    for (std::size_t i = 1; i < cdf.size(); ++i) CHECK(cdf[i].value >= cdf[i - 1].value);
    CHECK_THROWS(fidelity_report({}, trajs, cat));
}

TEST_CASE("report files") {
    Rng rng(6);
    const auto cat = random_catalog(rng, 10);
    const auto trajs = random_trajs(rng, 10, 10);
    const auto dir = std::filesystem::temp_directory_path() / "geogen_eval_report";
    std::filesystem::remove_all(dir);
    write_fidelity_report(dir, fidelity_report(trajs, trajs, cat), {{"utility_rmse", 0.25}});
    std::ifstream in(dir / "fidelity.txt");
    std::string line, all;
    while (std::getline(in, line)) all += line + "\n";
    CHECK(all.find("jsd_distance=0\n") != std::string::npos);
    CHECK(all.find("utility_rmse=0.25\n") != std::string::npos);
    std::ifstream cdf(dir / "cdf_radius_synth.csv");
    std::getline(cdf, line);
    CHECK(line == "value,cumulative_probability");
    write_density_csv(dir / "density.csv", trajs, cat, 0.01);
    std::ifstream dens(dir / "density.csv");
    std::getline(dens, line);
    CHECK(line == "row,col,lat,lon,count");
    double total = 0, expected = 0;
    for (const auto& t : trajs) expected += static_cast<double>(t.size());
    while (std::getline(dens, line)) total += std::stod(line.substr(line.rfind(',') + 1));
    CHECK(total == expected);
    CHECK_THROWS_AS(write_density_csv(dir / "bad.csv", trajs, cat, 0.0), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("gru step matches a hand computation") {
    Rng rng(7);
    GRU gru(2, 3, rng);
    const nn::Tensor x = nn::Tensor::from({1, 2}, {0.3, -0.8});
    const nn::Tensor h = nn::Tensor::from({1, 3}, {0.1, 0.2, -0.5});
    const auto out = gru.step(x, h);
    auto lin = [](const nn::Linear& l, const std::vector<double>& v, int row) {
        double s = l.bias.values()[row];
        for (std::size_t k = 0; k < v.size(); ++k) s += l.weight.values()[row * v.size() + k] * v[k];
        return s;
    };
    const std::vector<double> xv{0.3, -0.8}, hv{0.1, 0.2, -0.5};
    auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
    for (int j = 0; j < 3; ++j) {
        const double z = sig(lin(gru.wx, xv, j) + lin(gru.wh, hv, j));
        const double r = sig(lin(gru.wx, xv, 3 + j) + lin(gru.wh, hv, 3 + j));
        const double n = std::tanh(lin(gru.wx, xv, 6 + j) + r * lin(gru.wh, hv, 6 + j));
        CHECK(out.at({0, j}) == doctest::Approx((1 - z) * n + z * hv[j]).epsilon(1e-12));
    }
}

TEST_CASE("utility benchmark") {
    SUBCASE("memorizing a constant location gives zero distance error") {
        const auto cat = catalog_of({{40.7, -74.0}, {40.8, -73.9}});
        std::vector<CheckIn> t;
        for (int i = 0; i < 6; ++i) t.push_back({1, 600.0 * (i + 1)});
        const std::vector<std::vector<CheckIn>> set(8, t);
        UtilityOptions opt;
        opt.epochs = 3;
        const auto r = utility_benchmark(set, set, cat, 1, opt);
        CHECK(r.ed_km < 1e-9);
        CHECK(r.test_predictions == 40);
    }
    SUBCASE("deterministic under a seed and learns the gap scale") {
        Rng rng(8);
        const auto cat = random_catalog(rng, 15);
        const auto train = random_trajs(rng, 60, 15), test = random_trajs(rng, 20, 15);
        UtilityOptions opt;
        opt.epochs = 4;
        const auto a = utility_benchmark(train, test, cat, 42, opt);
        const auto b = utility_benchmark(train, test, cat, 42, opt);
        CHECK(a.rmse == b.rmse);
        CHECK(a.ed_km == b.ed_km);
        CHECK(std::isfinite(a.rmse));
        CHECK(a.rmse < 1.0);
        CHECK(a.ed_km > 0.0);
    }
    SUBCASE("insufficient data") {
        const auto cat = catalog_of({{40.7, -74.0}});
        const std::vector<std::vector<CheckIn>> one{{{0, 60.0}}};
        CHECK_THROWS_AS(utility_benchmark(one, one, cat, 1), DataError);
    }
}
