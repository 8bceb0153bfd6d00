#pragma once

#include "geogen/data_model.hpp"
#include "geogen/geo.hpp"
#include "geogen/nn/module.hpp"
#include "geogen/rng.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace geogen {

struct DistanceMetric {
    std::vector<double> hops;  // km between consecutive check-ins
    double total = 0.0;
};

// Metrics take raw check-in lists so generated output can be scored without
// wrapping it in a Trajectory. POI ids index into the catalog.
DistanceMetric metric_distance(const std::vector<CheckIn>& checkins, const POICatalog& catalog);
double metric_radius(const std::vector<CheckIn>& checkins, const POICatalog& catalog);
// Throws DataError unless timestamps strictly increase.
std::vector<double> metric_interval(const std::vector<CheckIn>& checkins);
std::size_t metric_length(const std::vector<CheckIn>& checkins);

struct Histogram {
    std::vector<double> edges;  // B + 1, strictly increasing
    std::vector<double> probs;  // B

    std::size_t bins() const { return probs.size(); }
};

inline constexpr int kDefaultBins = 100;
inline constexpr double kProbabilityFloor = 1e-10;

// Equal-width bins over [lo, hi]; values at hi land in the last bin. lo == hi gives
// one bin holding everything. Each probability is floored then renormalized.
Histogram build_histogram(const std::vector<double>& values, double lo, double hi, int bins = kDefaultBins);
// Integer bins 1..max_value.
Histogram build_length_histogram(const std::vector<double>& lengths, int max_value);

// Base-2 Jensen-Shannon divergence; throws std::invalid_argument on mismatched edges.
double jsd(const Histogram& p, const Histogram& q);

// Shared-edge JSD of two samples: pooled range, B bins. Both empty gives 0, one empty gives 1.
double sample_jsd(const std::vector<double>& a, const std::vector<double>& b, int bins = kDefaultBins);
double length_jsd(const std::vector<double>& a, const std::vector<double>& b);

struct CdfPoint {
    double value;
    double cumulative;
};
std::vector<CdfPoint> empirical_cdf(std::vector<double> values);

struct MetricSamples {
    std::vector<double> hop_distance;
    std::vector<double> total_distance;
    std::vector<double> radius;
    std::vector<double> interval;
    std::vector<double> length;
};
MetricSamples collect_metrics(const std::vector<std::vector<CheckIn>>& trajectories, const POICatalog& catalog);

struct FidelityReport {
    double jsd_distance = 0.0;  // per-hop
    double jsd_total_distance = 0.0;
    double jsd_radius = 0.0;
    double jsd_interval = 0.0;
    double jsd_length = 0.0;
    std::map<std::string, std::vector<CdfPoint>> real_cdf, synth_cdf;  // keyed by metric name
};

FidelityReport fidelity_report(const std::vector<std::vector<CheckIn>>& real,
                               const std::vector<std::vector<CheckIn>>& synth, const POICatalog& catalog,
                               int bins = kDefaultBins);

std::vector<std::vector<CheckIn>> checkin_lists(const std::vector<Trajectory>& trajectories);

// Flat key=value file plus cdf_<metric>_<real|synth>.csv next to it.
void write_fidelity_report(const std::filesystem::path& dir, const FidelityReport& report,
                           const std::map<std::string, double>& extra = {});

// Raw check-in counts on a square lat/lon grid covering the catalog bounds.
void write_density_csv(const std::filesystem::path& path, const std::vector<std::vector<CheckIn>>& trajectories,
                       const POICatalog& catalog, double cell_deg = 0.005);

// Single-layer GRU.
class GRU : public nn::Module {
public:
    GRU() = default;
    GRU(std::int64_t input, std::int64_t hidden, Rng& rng);
    nn::Tensor step(const nn::Tensor& x, const nn::Tensor& h) const;  // (B, in), (B, H) -> (B, H)
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    std::int64_t hidden = 0;
    nn::Linear wx, wh;  // in -> 3H, H -> 3H (update, reset, candidate)
};

struct UtilityOptions {
    int hidden = 64;
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    double time_scale = 0.0;  // seconds; 0 uses the largest gap in the test set
};

struct UtilityResult {
    double rmse = 0.0;  // normalized gap
    double ed_km = 0.0;
    std::size_t test_predictions = 0;
};

// Trains a next check-in predictor on `train` and scores it on `test`.
UtilityResult utility_benchmark(const std::vector<std::vector<CheckIn>>& train,
                                const std::vector<std::vector<CheckIn>>& test, const POICatalog& catalog,
                                std::uint64_t seed, const UtilityOptions& options = {});

}  // namespace geogen
