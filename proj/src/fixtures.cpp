#include "geogen/fixtures.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>

namespace geogen {

namespace {

std::string iso8601(std::int64_t utc) {
    const std::time_t t = static_cast<std::time_t>(utc);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::size_t draw(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        if (u < probs[i]) return i;
        u -= probs[i];
    }
    return probs.size() - 1;
}

}  // namespace

const std::vector<FixtureVenue>& markov_venues() {
    static const std::vector<FixtureVenue> venues{
        {"v_home", {40.6720, -73.9778}, "Residence"},
        {"v_cafe", {40.6755, -73.9810}, "Coffee Shop"},
        {"v_office", {40.7527, -73.9772}, "Office"},
        {"v_gym", {40.7580, -73.9855}, "Gym"},
        {"v_park", {40.7829, -73.9654}, "Park"},
    };
    return venues;
}

std::vector<RawCheckIn> markov_checkins(const MarkovFixture& fixture, Rng& rng) {
    const auto& venues = markov_venues();
    const std::vector<double> probs_a{0.7, 0.3}, probs_b{0.58, 0.38, 0.04};
    std::vector<RawCheckIn> out;
    for (std::size_t u = 0; u < fixture.users; ++u) {
        // Users start at different hours so hour-of-day profiles are not degenerate.
        const std::int64_t origin = fixture.start_utc + static_cast<std::int64_t>(rng.below(24)) * 3600;
        bool state_a = rng.uniform() < 0.5;
        double t = 0;
        char user[16];
        std::snprintf(user, sizeof user, "u%04zu", u);
        while (t < fixture.window_seconds) {
            const std::size_t v = state_a ? draw(probs_a, rng) : 2 + draw(probs_b, rng);
            const auto& venue = venues[v];
            out.push_back({user, venue.id, venue.where, std::string(venue.category),
                           origin + static_cast<std::int64_t>(t)});
            const double mean_h = state_a ? fixture.dwell_hours_a : fixture.dwell_hours_b;
            // Whole seconds, at least one, so timestamps stay strictly increasing.
            t += std::max(1.0, std::floor(rng.exponential(1.0 / (mean_h * kSecondsPerHour))));
            if (rng.uniform() < fixture.switch_probability) state_a = !state_a;
        }
    }
    return out;
}

void write_raw_checkins(const std::filesystem::path& path, const std::vector<RawCheckIn>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(10);
    for (const auto& r : records) {
        out << r.user << '\t' << r.poi << '\t' << r.where.lat << '\t' << r.where.lon << '\t' << r.category.value_or("")
            << '\t' << iso8601(r.utc_seconds) << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::vector<CheckIn>> uniform_baseline(std::size_t count, std::size_t min_len, std::size_t max_len,
                                                   const POICatalog& catalog, double duration, Rng& rng) {
    if (min_len == 0 || max_len < min_len) throw std::invalid_argument("baseline length range is empty");
    if (catalog.size() == 0) throw std::invalid_argument("baseline needs a non-empty catalog");
    std::vector<std::vector<CheckIn>> out(count);
    for (auto& traj : out) {
        const std::size_t len = min_len + rng.below(max_len - min_len + 1);
        std::set<double> times;
        while (times.size() < len) times.insert(std::floor(rng.uniform() * duration));
        for (double t : times) traj.push_back({static_cast<std::int64_t>(rng.below(catalog.size())), t});
    }
    return out;
}

PipelineConfig desk_config() {
    PipelineConfig c;
    c.dataset_path = "checkins.tsv";
    c.min_length = 10;
    // 4-hour slots (L = 42); at 1 hour the small denoiser does not learn the sparse intensity channel in 50 epochs.
    c.interval_seconds = 4 * kSecondsPerHour;
    // 200 steps with the endpoints rescaled so the final signal level is still near zero.
    c.diffusion_steps = 200;
    c.beta_start = 5e-4;
    c.beta_end = 0.1;
    c.stage1_epochs = 50;
    c.stage1_batch = 8;
    c.stage1_lr = 1e-3;
    c.val_every = 10;
    c.checkpoint_every = 25;
    c.base_channels = 16;
    c.channel_multipliers = {1, 2};
    c.res_blocks = 1;
    c.pool_kernels = {2, 4};
    c.bias_embed_dim = 8;
    c.stage2_epochs = 30;
    c.stage2_batch = 4;
    c.stage2_lr = 2e-3;
    c.d_model = 32;
    c.heads = 4;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.ff_dim = 64;
    c.time_dim = 8;
    c.generate_count = 200;
    c.generate_batch = 50;
    c.utility_hidden = 16;
    c.utility_epochs = 5;
    c.sweep_intervals = {3600, 7200, 14400};
    c.sweep_stage1_epochs = 2;
    c.sweep_stage2_epochs = 0;
    c.sweep_generate_count = 10;
    return c;
}

}  // namespace geogen
