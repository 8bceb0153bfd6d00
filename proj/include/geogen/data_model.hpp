#pragma once

#include "geogen/geo.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geogen {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset-level failures: empty corpora, inconsistent POIs, bad splits.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerWeek = 7 * kSecondsPerDay;
inline constexpr int kFreqBins = 24;

enum class DatasetFormat { Foursquare, Gowalla };
DatasetFormat parse_format(std::string_view name);

struct RawCheckIn {
    std::string user;
    std::string poi;
    GeoPoint where;
    std::optional<std::string> category;
    std::int64_t utc_seconds = 0;
};

struct ParseResult {
    std::vector<RawCheckIn> records;
    std::size_t skipped = 0;
};

// Rows: user_id, poi_id, lat, lon, category, ISO-8601 timestamp (tab separated).
ParseResult parse_checkins(const std::filesystem::path& path, DatasetFormat format);
ParseResult parse_checkins(std::istream& in, DatasetFormat format);

// Accepts "YYYY-MM-DDTHH:MM:SS" with optional fraction and "Z"/"+hh:mm" suffix;
// a space may replace the "T".
std::int64_t parse_iso8601_utc(std::string_view text);

struct CheckIn {
    std::int64_t poi = 0;
    double t = 0.0;  // seconds since the window start

    bool operator==(const CheckIn&) const = default;
};

// A user's check-ins over one window. Construction enforces: non-empty,
// strictly increasing timestamps, 0 <= t < duration, non-negative POI ids.
class Trajectory {
public:
    Trajectory(std::vector<CheckIn> checkins, double duration, std::int64_t origin_utc = 0);

    const std::vector<CheckIn>& checkins() const { return checkins_; }
    double duration() const { return duration_; }
    std::int64_t origin_utc() const { return origin_utc_; }
    std::size_t size() const { return checkins_.size(); }

    bool operator==(const Trajectory&) const = default;

private:
    std::vector<CheckIn> checkins_;
    double duration_;
    std::int64_t origin_utc_;
};

// External POI ids mapped to dense indices in order of first appearance.
struct PoiIndex {
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::int64_t> lookup;
    std::vector<GeoPoint> coords;
    std::vector<int> category;
    std::vector<std::string> category_names;  // index 0 is the reserved "none" entry

    std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
};

// Throws DataError listing every POI whose coordinates disagree across rows.
PoiIndex index_pois(const std::vector<RawCheckIn>& records);

struct POICatalog {
    std::vector<std::string> ids;
    std::vector<GeoPoint> coords;
    std::vector<int> category;
    std::vector<std::array<double, kFreqBins>> freq;
    std::vector<std::string> category_names;
    int category_count = 1;

    std::int64_t size() const { return static_cast<std::int64_t>(coords.size()); }
    void validate(const Trajectory& traj) const;
    BoundingBox bounds() const;
};

std::vector<Trajectory> build_trajectories(const std::vector<RawCheckIn>& records, const PoiIndex& index,
                                           double window_seconds, std::size_t min_len);

// Hour-of-day visit histograms (UTC) from the trajectories; unvisited POIs get a zero row.
POICatalog build_poi_catalog(const std::vector<Trajectory>& trajs, const PoiIndex& index);

struct SplitRatios {
    double train = 0.7;
    double val = 0.2;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<Trajectory> train;
    std::vector<Trajectory> val;
    std::vector<Trajectory> test;
    std::uint64_t seed = 0;
};

DatasetSplit split_dataset(const std::vector<Trajectory>& trajs, SplitRatios ratios, std::uint64_t seed);

// Trajectory files: header "traj_id poi_id lat lon timestamp_seconds" (tab
// separated) preceded by a "# duration=<seconds>" comment.
void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                        const POICatalog& catalog);
std::vector<Trajectory> read_trajectories(const std::filesystem::path& path);

void write_catalog(const std::filesystem::path& path, const POICatalog& catalog);
POICatalog read_catalog(const std::filesystem::path& path);

}  // namespace geogen
