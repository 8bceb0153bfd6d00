#include "geogen/evaluation.hpp"

#include "geogen/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace geogen {

using nn::Tensor;

namespace {

const GeoPoint& coord_of(const CheckIn& c, const POICatalog& catalog) {
    if (c.poi < 0 || c.poi >= catalog.size()) throw DataError("POI id " + std::to_string(c.poi) + " not in catalog");
    return catalog.coords[static_cast<std::size_t>(c.poi)];
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(12);
    return out;
}

}  // namespace

DistanceMetric metric_distance(const std::vector<CheckIn>& checkins, const POICatalog& catalog) {
    DistanceMetric m;
    for (std::size_t i = 1; i < checkins.size(); ++i) {
        m.hops.push_back(haversine_km(coord_of(checkins[i - 1], catalog), coord_of(checkins[i], catalog)));
        m.total += m.hops.back();
    }
    return m;
}

double metric_radius(const std::vector<CheckIn>& checkins, const POICatalog& catalog) {
    double best = 0.0;
    for (std::size_t i = 0; i < checkins.size(); ++i)
        for (std::size_t j = i + 1; j < checkins.size(); ++j)
            best = std::max(best, haversine_km(coord_of(checkins[i], catalog), coord_of(checkins[j], catalog)));
    return best / 2;
}

std::vector<double> metric_interval(const std::vector<CheckIn>& checkins) {
    std::vector<double> dt;
    for (std::size_t i = 1; i < checkins.size(); ++i) {
        const double d = checkins[i].t - checkins[i - 1].t;
        if (!(d > 0)) throw DataError("timestamps must strictly increase (position " + std::to_string(i) + ")");
        dt.push_back(d);
    }
    return dt;
}

std::size_t metric_length(const std::vector<CheckIn>& checkins) { return checkins.size(); }

namespace {

void floor_and_normalize(std::vector<double>& p) {
    double z = 0;
    for (auto& v : p) z += (v = std::max(v, kProbabilityFloor));
    for (auto& v : p) v /= z;
}

}  // namespace

Histogram build_histogram(const std::vector<double>& values, double lo, double hi, int bins) {
    if (values.empty()) throw std::invalid_argument("histogram of an empty sample");
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    if (!(hi >= lo)) throw std::invalid_argument("histogram range is inverted");
    Histogram h;
    if (hi == lo) {
        for (double v : values)
            if (v != lo) throw std::invalid_argument("value outside the histogram range");
        h.edges = {lo - 0.5, lo + 0.5};
        h.probs = {1.0};
        return h;
    }
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * i / bins;
    h.edges.back() = hi;
    h.probs.assign(static_cast<std::size_t>(bins), 0.0);
    for (double v : values) {
        if (v < lo || v > hi) throw std::invalid_argument("value outside the histogram range");
        const auto i = std::min<std::int64_t>(static_cast<std::int64_t>((v - lo) / (hi - lo) * bins), bins - 1);
        h.probs[static_cast<std::size_t>(i)] += 1.0 / static_cast<double>(values.size());
    }
    floor_and_normalize(h.probs);
    return h;
}

Histogram build_length_histogram(const std::vector<double>& lengths, int max_value) {
    if (lengths.empty()) throw std::invalid_argument("histogram of an empty sample");
    if (max_value < 1) throw std::invalid_argument("length histogram needs max >= 1");
    Histogram h;
    for (int i = 0; i <= max_value; ++i) h.edges.push_back(i + 0.5);
    h.probs.assign(static_cast<std::size_t>(max_value), 0.0);
    for (double v : lengths) {
        const auto k = std::llround(v);
        if (k < 1 || k > max_value) throw std::invalid_argument("length outside 1..max");
        h.probs[static_cast<std::size_t>(k - 1)] += 1.0 / static_cast<double>(lengths.size());
    }
    floor_and_normalize(h.probs);
    return h;
}

double jsd(const Histogram& p, const Histogram& q) {
    if (p.edges != q.edges || p.probs.size() != q.probs.size()) {
        throw std::invalid_argument("JSD requires histograms with identical bin edges");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double a = p.probs[i], b = q.probs[i], m = 0.5 * (a + b);
        if (a > 0) d += 0.5 * a * std::log2(a / m);
        if (b > 0) d += 0.5 * b * std::log2(b / m);
    }
    return std::clamp(d, 0.0, 1.0);
}

double sample_jsd(const std::vector<double>& a, const std::vector<double>& b, int bins) {
    if (a.empty() && b.empty()) return 0.0;
    if (a.empty() || b.empty()) return 1.0;
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*amin, *bmin), hi = std::max(*amax, *bmax);
    return jsd(build_histogram(a, lo, hi, bins), build_histogram(b, lo, hi, bins));
}

double length_jsd(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() && b.empty()) return 0.0;
    if (a.empty() || b.empty()) return 1.0;
    const double mx = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    const int top = std::max(1, static_cast<int>(std::llround(mx)));
    return jsd(build_length_histogram(a, top), build_length_histogram(b, top));
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<CdfPoint> out;
    out.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.push_back({values[i], static_cast<double>(i + 1) / static_cast<double>(values.size())});
    }
    return out;
}

MetricSamples collect_metrics(const std::vector<std::vector<CheckIn>>& trajectories, const POICatalog& catalog) {
    MetricSamples m;
    for (const auto& t : trajectories) {
        if (t.empty()) continue;
        auto d = metric_distance(t, catalog);
        m.hop_distance.insert(m.hop_distance.end(), d.hops.begin(), d.hops.end());
        m.total_distance.push_back(d.total);
        m.radius.push_back(metric_radius(t, catalog));
        const auto dt = metric_interval(t);
        m.interval.insert(m.interval.end(), dt.begin(), dt.end());
        m.length.push_back(static_cast<double>(metric_length(t)));
    }
    return m;
}

FidelityReport fidelity_report(const std::vector<std::vector<CheckIn>>& real,
                               const std::vector<std::vector<CheckIn>>& synth, const POICatalog& catalog, int bins) {
    if (real.empty() || synth.empty()) throw std::invalid_argument("fidelity report needs both sets non-empty");
    const auto r = collect_metrics(real, catalog);
    const auto s = collect_metrics(synth, catalog);
    FidelityReport rep;
    rep.jsd_distance = sample_jsd(r.hop_distance, s.hop_distance, bins);
    rep.jsd_total_distance = sample_jsd(r.total_distance, s.total_distance, bins);
    rep.jsd_radius = sample_jsd(r.radius, s.radius, bins);
    rep.jsd_interval = sample_jsd(r.interval, s.interval, bins);
    rep.jsd_length = length_jsd(r.length, s.length);
    auto fill = [](std::map<std::string, std::vector<CdfPoint>>& cdf, const MetricSamples& m) {
        cdf["distance"] = empirical_cdf(m.hop_distance);
        cdf["total_distance"] = empirical_cdf(m.total_distance);
        cdf["radius"] = empirical_cdf(m.radius);
        cdf["interval"] = empirical_cdf(m.interval);
        cdf["length"] = empirical_cdf(m.length);
    };
    fill(rep.real_cdf, r);
    fill(rep.synth_cdf, s);
    return rep;
}

std::vector<std::vector<CheckIn>> checkin_lists(const std::vector<Trajectory>& trajectories) {
    std::vector<std::vector<CheckIn>> out;
    out.reserve(trajectories.size());
    for (const auto& t : trajectories) out.push_back(t.checkins());
    return out;
}

void write_fidelity_report(const std::filesystem::path& dir, const FidelityReport& report,
                           const std::map<std::string, double>& extra) {
    std::filesystem::create_directories(dir);
    auto out = open_out(dir / "fidelity.txt");
    out << "jsd_distance=" << report.jsd_distance << "\n";
    out << "jsd_radius=" << report.jsd_radius << "\n";
    out << "jsd_interval=" << report.jsd_interval << "\n";
    out << "jsd_length=" << report.jsd_length << "\n";
    out << "jsd_total_distance=" << report.jsd_total_distance << "\n";
    for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
    for (const auto* side : {&report.real_cdf, &report.synth_cdf}) {
        const std::string tag = side == &report.real_cdf ? "real" : "synth";
        for (const auto& [name, points] : *side) {
            auto csv = open_out(dir / ("cdf_" + name + "_" + tag + ".csv"));
            csv << "value,cumulative_probability\n";
            for (const auto& p : points) csv << p.value << "," << p.cumulative << "\n";
        }
    }
}

void write_density_csv(const std::filesystem::path& path, const std::vector<std::vector<CheckIn>>& trajectories,
                       const POICatalog& catalog, double cell_deg) {
    if (!(cell_deg > 0)) throw std::invalid_argument("density cell size must be positive");
    const auto box = catalog.bounds();
    // Cells are anchored on multiples of cell_deg so real and synthetic grids line up.
    const double lat0 = std::floor(box.min_lat / cell_deg) * cell_deg;
    const double lon0 = std::floor(box.min_lon / cell_deg) * cell_deg;
    const int rows = std::max(1, static_cast<int>(std::floor((box.max_lat - lat0) / cell_deg)) + 1);
    const int cols = std::max(1, static_cast<int>(std::floor((box.max_lon - lon0) / cell_deg)) + 1);
    std::vector<long> grid(static_cast<std::size_t>(rows) * cols, 0);
    for (const auto& t : trajectories) {
        for (const auto& c : t) {
            const auto& g = coord_of(c, catalog);
            const int r = std::clamp(static_cast<int>(std::floor((g.lat - lat0) / cell_deg)), 0, rows - 1);
            const int k = std::clamp(static_cast<int>(std::floor((g.lon - lon0) / cell_deg)), 0, cols - 1);
            ++grid[static_cast<std::size_t>(r) * cols + k];
        }
    }
    auto out = open_out(path);
    out << "row,col,lat,lon,count\n";
    out << std::setprecision(10);
    for (int r = 0; r < rows; ++r)
        for (int k = 0; k < cols; ++k)
            out << r << "," << k << "," << lat0 + (r + 0.5) * cell_deg << "," << lon0 + (k + 0.5) * cell_deg << ","
                << grid[static_cast<std::size_t>(r) * cols + k] << "\n";
}

GRU::GRU(std::int64_t input, std::int64_t h, Rng& rng)
    : hidden(h), wx(input, 3 * h, rng), wh(h, 3 * h, rng) {}

Tensor GRU::step(const Tensor& x, const Tensor& h) const {
    const Tensor gx = wx(x), gh = wh(h);
    const Tensor z = nn::sigmoid(nn::slice(gx, 1, 0, hidden) + nn::slice(gh, 1, 0, hidden));
    const Tensor r = nn::sigmoid(nn::slice(gx, 1, hidden, 2 * hidden) + nn::slice(gh, 1, hidden, 2 * hidden));
    const Tensor n = nn::tanh(nn::slice(gx, 1, 2 * hidden, 3 * hidden) + r * nn::slice(gh, 1, 2 * hidden, 3 * hidden));
    return n + z * (h - n);
}

void GRU::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    wx.visit(nn::join_name(prefix, "wx"), fn);
    wh.visit(nn::join_name(prefix, "wh"), fn);
}

namespace {

// Per check-in features: planar km offsets from the catalog centroid over a
// spatial scale, and the gap to the previous check-in over the time scale.
struct FeatureSpace {
    LocalProjection proj;
    double lat0 = 0, lon0 = 0, space_scale = 1, time_scale = 1;

    std::array<double, 3> features(const std::vector<CheckIn>& traj, std::size_t i, const POICatalog& cat) const {
        const auto& g = coord_of(traj[i], cat);
        const double prev = i == 0 ? 0.0 : traj[i - 1].t;
        return {(g.lon - lon0) * proj.km_per_deg_lon() / space_scale, (g.lat - lat0) * proj.km_per_deg_lat() / space_scale,
                (traj[i].t - prev) / time_scale};
    }
};

struct SeqBatch {
    std::int64_t B = 0, T = 0;
    std::vector<std::vector<double>> inputs;  // per step, (B, 3)
    std::vector<double> targets;              // (B, T, 3) as coordinate deltas and gap
    std::vector<double> mask;                 // (B, T, 3)
};

SeqBatch make_seq_batch(const std::vector<const std::vector<CheckIn>*>& trajs, const FeatureSpace& fs,
                        const POICatalog& cat) {
    SeqBatch sb;
    sb.B = static_cast<std::int64_t>(trajs.size());
    for (const auto* t : trajs) sb.T = std::max<std::int64_t>(sb.T, static_cast<std::int64_t>(t->size()) - 1);
    sb.inputs.assign(static_cast<std::size_t>(sb.T), std::vector<double>(static_cast<std::size_t>(sb.B * 3), 0.0));
    sb.targets.assign(static_cast<std::size_t>(sb.B * sb.T * 3), 0.0);
    sb.mask.assign(sb.targets.size(), 0.0);
    for (std::int64_t b = 0; b < sb.B; ++b) {
        const auto& t = *trajs[b];
        for (std::size_t i = 0; i + 1 < t.size(); ++i) {
            const auto cur = fs.features(t, i, cat), next = fs.features(t, i + 1, cat);
            for (int k = 0; k < 3; ++k) {
                sb.inputs[i][b * 3 + k] = cur[k];
                const auto idx = (b * sb.T + static_cast<std::int64_t>(i)) * 3 + k;
                sb.targets[idx] = k < 2 ? next[k] - cur[k] : next[k];
                sb.mask[idx] = 1.0;
            }
        }
    }
    return sb;
}

// Coordinates are predicted as a displacement from the current check-in.
Tensor run_sequence(const GRU& gru, const nn::Linear& head, const SeqBatch& sb) {
    Tensor h = Tensor::zeros({sb.B, gru.hidden});
    std::vector<Tensor> outs;
    for (std::int64_t t = 0; t < sb.T; ++t) {
        h = gru.step(Tensor::from({sb.B, 3}, sb.inputs[t]), h);
        outs.push_back(nn::reshape(head(h), {sb.B, 1, 3}));
    }
    return nn::concat(outs, 1);
}

std::vector<const std::vector<CheckIn>*> usable(const std::vector<std::vector<CheckIn>>& trajs) {
    std::vector<const std::vector<CheckIn>*> out;
    for (const auto& t : trajs)
        if (t.size() >= 2) out.push_back(&t);
    return out;
}

}  // namespace

UtilityResult utility_benchmark(const std::vector<std::vector<CheckIn>>& train,
                                const std::vector<std::vector<CheckIn>>& test, const POICatalog& catalog,
                                std::uint64_t seed, const UtilityOptions& options) {
    const auto train_seqs = usable(train), test_seqs = usable(test);
    if (train_seqs.empty() || test_seqs.empty()) {
        throw DataError("utility benchmark needs trajectories with at least two check-ins in both sets");
    }
    if (catalog.size() == 0) throw DataError("utility benchmark needs a non-empty catalog");

    FeatureSpace fs;
    for (const auto& g : catalog.coords) fs.lat0 += g.lat, fs.lon0 += g.lon;
    fs.lat0 /= static_cast<double>(catalog.size());
    fs.lon0 /= static_cast<double>(catalog.size());
    fs.proj = LocalProjection{fs.lat0};
    double ss = 0;
    for (const auto& g : catalog.coords) {
        const double x = (g.lon - fs.lon0) * fs.proj.km_per_deg_lon(), y = (g.lat - fs.lat0) * fs.proj.km_per_deg_lat();
        ss += x * x + y * y;
    }
    fs.space_scale = std::sqrt(ss / static_cast<double>(catalog.size()));
    if (!(fs.space_scale > 0)) fs.space_scale = 1.0;
    fs.time_scale = options.time_scale;
    if (!(fs.time_scale > 0)) {
        for (const auto* t : test_seqs)
            for (double d : metric_interval(*t)) fs.time_scale = std::max(fs.time_scale, d);
    }

    Rng rng = Rng(seed).derive("utility");
    GRU gru(3, options.hidden, rng);
    nn::Linear head(options.hidden, 3, rng);
    for (auto& v : head.weight.data()) v = 0;
    for (auto& v : head.bias.data()) v = 0;
    std::vector<Tensor> params = gru.parameters();
    params.push_back(head.weight);
    params.push_back(head.bias);
    nn::AdamOptions opt;
    opt.lr = options.lr;
    nn::Adam adam(params, opt);

    std::vector<std::size_t> order(train_seqs.size());
    const auto bs = static_cast<std::size_t>(std::max(1, options.batch_size));
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::vector<const std::vector<CheckIn>*> chunk;
            for (std::size_t j = start; j < std::min(order.size(), start + bs); ++j) chunk.push_back(train_seqs[order[j]]);
            const auto sb = make_seq_batch(chunk, fs, catalog);
            const Tensor pred = run_sequence(gru, head, sb);
            const Tensor mask = Tensor::from({sb.B, sb.T, 3}, sb.mask);
            const double n = std::accumulate(sb.mask.begin(), sb.mask.end(), 0.0);
            const Tensor diff = pred - Tensor::from({sb.B, sb.T, 3}, sb.targets);
            Tensor loss = nn::sum(nn::square(diff) * mask) * (1.0 / n);
            adam.zero_grad();
            loss.backward();
            adam.step();
        }
    }

    nn::NoGradGuard guard;
    UtilityResult res;
    double sq = 0, ed = 0;
    for (std::size_t start = 0; start < test_seqs.size(); start += bs) {
        std::vector<const std::vector<CheckIn>*> chunk(test_seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                                       test_seqs.begin() + static_cast<std::ptrdiff_t>(std::min(test_seqs.size(), start + bs)));
        const auto sb = make_seq_batch(chunk, fs, catalog);
        const Tensor pred = run_sequence(gru, head, sb);
        const auto& p = pred.values();
        for (std::size_t i = 0; i < sb.mask.size(); i += 3) {
            if (sb.mask[i] == 0) continue;
            const double dt = p[i + 2] - sb.targets[i + 2];
            sq += dt * dt;
            ed += std::hypot(p[i] - sb.targets[i], p[i + 1] - sb.targets[i + 1]) * fs.space_scale;
            ++res.test_predictions;
        }
    }
    res.rmse = std::sqrt(sq / static_cast<double>(res.test_predictions));
    res.ed_km = ed / static_cast<double>(res.test_predictions);
    return res;
}

}  // namespace geogen
