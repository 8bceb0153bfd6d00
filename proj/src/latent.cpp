#include "geogen/latent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace geogen {

namespace {

const char* const kChannelNames[kLatentChannels] = {"lat", "lon", "intensity"};

std::vector<std::size_t> observed_indices(const std::vector<LatentSlot>& slots) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < slots.size(); ++i)
        if (slots[i].count > 0) out.push_back(i);
    return out;
}

GeoPoint lerp(const GeoPoint& a, const GeoPoint& b, double w) {
    return {a.lat + w * (b.lat - a.lat), a.lon + w * (b.lon - a.lon)};
}

}  // namespace

int LatentMovementSequence::total_count() const {
    int n = 0;
    for (const auto& s : slots) n += s.count;
    return n;
}

std::size_t latent_length(double duration, double interval) {
    if (!(interval > 0) || !(duration > 0)) throw std::invalid_argument("interval and duration must be positive");
    // Tolerate D/I landing a hair under an integer through floating error.
    return static_cast<std::size_t>(std::floor(duration / interval + 1e-9));
}

LatentMovementSequence reconstruct(const Trajectory& traj, const POICatalog& catalog, double interval) {
    if (traj.size() == 0) throw std::invalid_argument("cannot reconstruct an empty trajectory");
    const std::size_t L = latent_length(traj.duration(), interval);
    if (L < 2) throw std::invalid_argument("latent sequence needs at least two slots");
    catalog.validate(traj);

    std::vector<double> lat(L, 0.0), lon(L, 0.0);
    LatentMovementSequence out;
    out.interval = interval;
    out.duration = traj.duration();
    out.slots.assign(L, {});
    for (const auto& c : traj.checkins()) {
        const auto k = static_cast<std::size_t>(std::floor(c.t / interval));
        if (k >= L) continue;
        const auto& g = catalog.coords[static_cast<std::size_t>(c.poi)];
        lat[k] += g.lat;
        lon[k] += g.lon;
        ++out.slots[k].count;
    }
    for (std::size_t k = 0; k < L; ++k) {
        auto& s = out.slots[k];
        if (s.count > 0) s.where = {lat[k] / s.count, lon[k] / s.count};
    }
    const auto obs = observed_indices(out.slots);
    if (obs.empty()) throw std::invalid_argument("trajectory has no check-ins inside the latent grid");
    for (std::size_t j = 0; j + 1 < obs.size(); ++j)
        for (std::size_t i = obs[j] + 1; i < obs[j + 1]; ++i)
            out.slots[i].where = interpolate_interior(out.slots, obs[j], obs[j + 1], i);
    out.slots = interpolate_circular(std::move(out.slots));
    return out;
}

GeoPoint interpolate_interior(const std::vector<LatentSlot>& slots, std::size_t i_p, std::size_t i_n, std::size_t i) {
    if (i_n == i_p) throw std::invalid_argument("interpolation endpoints coincide");
    if (i_p >= slots.size() || i_n >= slots.size()) throw std::out_of_range("interpolation endpoint out of range");
    const double w = (static_cast<double>(i) - static_cast<double>(i_p)) /
                     (static_cast<double>(i_n) - static_cast<double>(i_p));
    return lerp(slots[i_p].where, slots[i_n].where, w);
}

std::vector<LatentSlot> interpolate_circular(std::vector<LatentSlot> slots) {
    const auto obs = observed_indices(slots);
    if (obs.empty()) throw std::invalid_argument("circular interpolation needs an observed slot");
    const std::size_t L = slots.size();
    const std::size_t first = obs.front();
    const std::size_t last = obs.back();
    const double gap = static_cast<double>(first + L - last);
    const GeoPoint a = slots[last].where;
    const GeoPoint b = slots[first].where;
    auto fill = [&](std::size_t i) {
        const double w = static_cast<double>((i + L - last) % L) / gap;
        slots[i].where = lerp(a, b, w);
    };
    for (std::size_t i = last + 1; i < L; ++i) fill(i);
    for (std::size_t i = 0; i < first; ++i) fill(i);
    return slots;
}

FilteredSequence filter_sequence(const LatentMovementSequence& s, int gamma, std::size_t max_len) {
    if (gamma < 1) throw std::invalid_argument("gamma must be at least 1");
    if (max_len == 0) throw std::invalid_argument("max_len must be positive");
    FilteredSequence out;
    out.max_len = max_len;
    for (std::size_t k = 0; k < s.slots.size() && out.points.size() < max_len; ++k) {
        if (s.slots[k].count >= gamma) {
            out.points.push_back({s.slots[k].where, (static_cast<double>(k) + 0.5) * s.interval, k});
        }
    }
    if (out.points.empty()) throw std::invalid_argument("no latent slot reaches the intensity threshold");
    return out;
}

NormStats compute_norm_stats(const std::vector<LatentMovementSequence>& batch) {
    if (batch.empty()) throw std::invalid_argument("cannot compute statistics of an empty batch");
    std::array<double, kLatentChannels> sum{}, sq{};
    double n = 0;
    for (const auto& s : batch) {
        for (const auto& slot : s.slots) {
            const double v[kLatentChannels] = {slot.where.lat, slot.where.lon, static_cast<double>(slot.count)};
            for (int c = 0; c < kLatentChannels; ++c) sum[c] += v[c];
            n += 1;
        }
    }
    NormStats st;
    for (int c = 0; c < kLatentChannels; ++c) st.mean[c] = sum[c] / n;
    for (const auto& s : batch) {
        for (const auto& slot : s.slots) {
            const double v[kLatentChannels] = {slot.where.lat, slot.where.lon, static_cast<double>(slot.count)};
            for (int c = 0; c < kLatentChannels; ++c) sq[c] += (v[c] - st.mean[c]) * (v[c] - st.mean[c]);
        }
    }
    for (int c = 0; c < kLatentChannels; ++c) {
        st.std[c] = std::sqrt(sq[c] / n);
        if (!(st.std[c] > 1e-12)) {
            throw std::invalid_argument(std::string("channel '") + kChannelNames[c] + "' has zero variance");
        }
    }
    return st;
}

nn::Tensor normalize(const std::vector<LatentMovementSequence>& batch, const NormStats& stats) {
    if (batch.empty()) throw std::invalid_argument("cannot normalize an empty batch");
    const std::size_t L = batch.front().length();
    std::vector<double> v;
    v.reserve(batch.size() * L * kLatentChannels);
    for (const auto& s : batch) {
        if (s.length() != L) throw std::invalid_argument("latent sequences in a batch must share a length");
        for (const auto& slot : s.slots) {
            v.push_back((slot.where.lat - stats.mean[0]) / stats.std[0]);
            v.push_back((slot.where.lon - stats.mean[1]) / stats.std[1]);
            v.push_back((slot.count - stats.mean[2]) / stats.std[2]);
        }
    }
    return nn::Tensor::from({static_cast<std::int64_t>(batch.size()), static_cast<std::int64_t>(L), kLatentChannels},
                            std::move(v));
}

nn::Tensor denormalize_values(const nn::Tensor& z, const NormStats& stats) {
    if (z.ndim() != 3 || z.dim(2) != kLatentChannels) throw nn::ShapeError("expected (B, L, 3) latent tensor");
    std::vector<double> v(z.values());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto c = i % kLatentChannels;
        v[i] = v[i] * stats.std[c] + stats.mean[c];
    }
    return nn::Tensor::from(z.shape(), std::move(v));
}

std::vector<LatentMovementSequence> denormalize(const nn::Tensor& z, const NormStats& stats, double interval,
                                                double duration) {
    const auto raw = denormalize_values(z, stats);
    const auto B = static_cast<std::size_t>(raw.dim(0));
    const auto L = static_cast<std::size_t>(raw.dim(1));
    const auto& v = raw.values();
    std::vector<LatentMovementSequence> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        out[b].interval = interval;
        out[b].duration = duration;
        out[b].slots.resize(L);
        for (std::size_t k = 0; k < L; ++k) {
            const double* p = &v[(b * L + k) * kLatentChannels];
            out[b].slots[k].where = {std::clamp(p[0], -90.0, 90.0), std::clamp(p[1], -180.0, 180.0)};
            out[b].slots[k].count = static_cast<int>(std::max(0.0, std::round(p[2])));
        }
    }
    return out;
}

void write_latents(const std::filesystem::path& path, const LatentFile& file) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    out << "# interval=" << file.interval << " duration=" << file.duration;
    for (int c = 0; c < kLatentChannels; ++c)
        out << ' ' << kChannelNames[c] << "_mean=" << file.stats.mean[c] << ' ' << kChannelNames[c]
            << "_std=" << file.stats.std[c];
    out << "\nseq,slot,lat,lon,intensity\n";
    for (std::size_t s = 0; s < file.sequences.size(); ++s) {
        const auto& seq = file.sequences[s];
        for (std::size_t k = 0; k < seq.slots.size(); ++k)
            out << s << ',' << k << ',' << seq.slots[k].where.lat << ',' << seq.slots[k].where.lon << ','
                << seq.slots[k].count << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

LatentFile read_latents(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    LatentFile file;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw IoError(path.string() + ": missing latent header");
    std::map<std::string, double> header;
    {
        std::istringstream hs(line.substr(2));
        std::string kv;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw IoError(path.string() + ": malformed header field " + kv);
            header[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        }
    }
    try {
        file.interval = header.at("interval");
        file.duration = header.at("duration");
        for (int c = 0; c < kLatentChannels; ++c) {
            file.stats.mean[c] = header.at(std::string(kChannelNames[c]) + "_mean");
            file.stats.std[c] = header.at(std::string(kChannelNames[c]) + "_std");
        }
    } catch (const std::out_of_range&) {
        throw IoError(path.string() + ": incomplete latent header");
    }
    std::getline(in, line);  // column names
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t s = 0, k = 0;
        double lat = 0, lon = 0;
        int count = 0;
        char c1, c2, c3, c4;
        if (!(ls >> s >> c1 >> k >> c2 >> lat >> c3 >> lon >> c4 >> count)) {
            throw IoError(path.string() + ": malformed latent row");
        }
        if (s >= file.sequences.size()) {
            file.sequences.resize(s + 1);
        }
        auto& seq = file.sequences[s];
        seq.interval = file.interval;
        seq.duration = file.duration;
        if (k != seq.slots.size()) throw IoError(path.string() + ": latent rows out of order");
        seq.slots.push_back({{lat, lon}, count});
    }
    return file;
}

}  // namespace geogen
