#pragma once

#include "geogen/config.hpp"
#include "geogen/data_model.hpp"
#include "geogen/rng.hpp"

#include <filesystem>
#include <vector>

namespace geogen {

// Scripted two-state mobility process over five NYC venues. State A visits
// venues 0/1 (Brooklyn), state B venues 2/3/4 (Midtown); each visit is one check-in followed by an
// exponential dwell, after which the state flips with a fixed probability.
struct MarkovFixture {
    std::size_t users = 200;
    std::int64_t start_utc = 1333324800;  // 2012-04-02T00:00:00Z
    double window_seconds = kSecondsPerWeek;
    double switch_probability = 0.2;
    double dwell_hours_a = 10.0;
    double dwell_hours_b = 1.5;
};

struct FixtureVenue {
    const char* id;
    GeoPoint where;
    const char* category;
};

const std::vector<FixtureVenue>& markov_venues();

// One week of check-ins per user, in the raw six-column TSV ingest reads.
std::vector<RawCheckIn> markov_checkins(const MarkovFixture& fixture, Rng& rng);
void write_raw_checkins(const std::filesystem::path& path, const std::vector<RawCheckIn>& records);

// Baseline generator: length uniform over [min_len, max_len], venues uniform
// over the catalog, timestamps uniform over the window.
std::vector<std::vector<CheckIn>> uniform_baseline(std::size_t count, std::size_t min_len, std::size_t max_len,
                                                   const POICatalog& catalog, double duration, Rng& rng);

// Reduced model sizes and epoch counts for running the whole pipeline on the
// Markov corpus on one CPU core.
PipelineConfig desk_config();

}  // namespace geogen
