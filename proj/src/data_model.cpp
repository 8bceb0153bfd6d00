#include "geogen/data_model.hpp"

#include "geogen/rng.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace geogen {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if constexpr (std::is_floating_point_v<T>) {
        // std::from_chars for doubles is available in libstdc++ 11.
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
    } else {
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size();
    }
}

int parse_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) throw std::invalid_argument("timestamp too short");
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("timestamp has non-digit");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return in;
}

}  // namespace

DatasetFormat parse_format(std::string_view name) {
    if (name == "foursquare") return DatasetFormat::Foursquare;
    if (name == "gowalla") return DatasetFormat::Gowalla;
    throw std::invalid_argument("unknown dataset format '" + std::string(name) + "'");
}

std::int64_t parse_iso8601_utc(std::string_view text) {
    text = trim(text);
    using namespace std::chrono;
    const int y = parse_digits(text, 0, 4);
    if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':') {
        throw std::invalid_argument("malformed timestamp '" + std::string(text) + "'");
    }
    const int mo = parse_digits(text, 5, 2);
    const int d = parse_digits(text, 8, 2);
    const int h = parse_digits(text, 11, 2);
    const int mi = parse_digits(text, 14, 2);
    const int s = parse_digits(text, 17, 2);
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) throw std::invalid_argument("timestamp out of range");
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    std::int64_t offset = 0;
    if (pos < text.size()) {
        const char c = text[pos];
        if (c == 'Z' && pos + 1 == text.size()) {
            // UTC
        } else if ((c == '+' || c == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
            offset = (parse_digits(text, pos + 1, 2) * 3600 + parse_digits(text, pos + 4, 2) * 60) * (c == '+' ? 1 : -1);
        } else {
            throw std::invalid_argument("malformed timestamp suffix in '" + std::string(text) + "'");
        }
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s - offset;
}

ParseResult parse_checkins(std::istream& in, DatasetFormat format) {
    ParseResult result;
    std::string line;
    while (std::getline(in, line)) {
        const auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        const auto f = split_tabs(view);
        RawCheckIn rec;
        bool ok = f.size() == 6;
        if (ok) {
            rec.user = std::string(trim(f[0]));
            rec.poi = std::string(trim(f[1]));
            ok = !rec.user.empty() && !rec.poi.empty() && parse_number(f[2], rec.where.lat) &&
                 parse_number(f[3], rec.where.lon) && is_valid(rec.where);
        }
        if (ok) {
            const auto cat = trim(f[4]);
            if (!cat.empty()) rec.category = std::string(cat);
            // Gowalla carries no venue categories; an empty field is expected there.
            if (format == DatasetFormat::Gowalla && cat.empty()) rec.category.reset();
            try {
                rec.utc_seconds = parse_iso8601_utc(f[5]);
            } catch (const std::invalid_argument&) {
                ok = false;
            }
        }
        if (ok) {
            result.records.push_back(std::move(rec));
        } else {
            ++result.skipped;
        }
    }
    if (result.records.empty()) throw DataError("no valid check-in rows (" + std::to_string(result.skipped) + " skipped)");
    return result;
}

ParseResult parse_checkins(const std::filesystem::path& path, DatasetFormat format) {
    auto in = open_in(path);
    return parse_checkins(in, format);
}

Trajectory::Trajectory(std::vector<CheckIn> checkins, double duration, std::int64_t origin_utc)
    : checkins_(std::move(checkins)), duration_(duration), origin_utc_(origin_utc) {
    if (!(duration_ > 0)) throw std::invalid_argument("trajectory duration must be positive");
    if (checkins_.empty()) throw std::invalid_argument("trajectory must contain at least one check-in");
    for (std::size_t i = 0; i < checkins_.size(); ++i) {
        const auto& c = checkins_[i];
        if (c.poi < 0) throw std::invalid_argument("negative POI index in trajectory");
        if (!(c.t >= 0 && c.t < duration_)) throw std::invalid_argument("check-in time outside [0, duration)");
        if (i > 0 && !(c.t > checkins_[i - 1].t)) {
            throw std::invalid_argument("trajectory timestamps must be strictly increasing");
        }
    }
}

PoiIndex index_pois(const std::vector<RawCheckIn>& records) {
    PoiIndex index;
    index.category_names.push_back("");
    std::unordered_map<std::string, int> category_lookup;
    std::vector<std::string> conflicts;
    for (const auto& r : records) {
        auto [it, inserted] = index.lookup.try_emplace(r.poi, index.size());
        if (inserted) {
            index.ids.push_back(r.poi);
            index.coords.push_back(r.where);
            int cat = 0;
            if (r.category) {
                auto [cit, fresh] = category_lookup.try_emplace(*r.category, static_cast<int>(index.category_names.size()));
                if (fresh) index.category_names.push_back(*r.category);
                cat = cit->second;
            }
            index.category.push_back(cat);
            continue;
        }
        const auto& known = index.coords[static_cast<std::size_t>(it->second)];
        if (std::abs(known.lat - r.where.lat) > 1e-6 || std::abs(known.lon - r.where.lon) > 1e-6) {
            if (std::find(conflicts.begin(), conflicts.end(), r.poi) == conflicts.end()) conflicts.push_back(r.poi);
        }
    }
    if (!conflicts.empty()) {
        std::string msg = "POIs with conflicting coordinates:";
        for (const auto& c : conflicts) msg += " " + c;
        throw DataError(msg);
    }
    return index;
}

std::vector<Trajectory> build_trajectories(const std::vector<RawCheckIn>& records, const PoiIndex& index,
                                           double window_seconds, std::size_t min_len) {
    if (!(window_seconds > 0)) throw std::invalid_argument("window must be positive");
    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<const RawCheckIn*>> per_user;
    for (const auto& r : records) {
        auto [it, inserted] = per_user.try_emplace(r.user);
        if (inserted) user_order.push_back(r.user);
        it->second.push_back(&r);
    }
    const auto window = static_cast<std::int64_t>(std::llround(window_seconds));
    std::vector<Trajectory> out;
    for (const auto& user : user_order) {
        auto& recs = per_user[user];
        std::stable_sort(recs.begin(), recs.end(),
                         [](const RawCheckIn* a, const RawCheckIn* b) { return a->utc_seconds < b->utc_seconds; });
        const std::int64_t first = recs.front()->utc_seconds;
        std::size_t i = 0;
        while (i < recs.size()) {
            const std::int64_t k = (recs[i]->utc_seconds - first) / window;
            const std::int64_t start = first + k * window;
            std::vector<CheckIn> cks;
            for (; i < recs.size() && recs[i]->utc_seconds < start + window; ++i) {
                double t = static_cast<double>(recs[i]->utc_seconds - start);
                // Equal timestamps: the later one moves forward by one second.
                if (!cks.empty() && t <= cks.back().t) t = cks.back().t + 1.0;
                if (t >= window_seconds) continue;
                cks.push_back({index.lookup.at(recs[i]->poi), t});
            }
            if (cks.size() >= min_len && !cks.empty()) out.emplace_back(std::move(cks), window_seconds, start);
        }
    }
    return out;
}

POICatalog build_poi_catalog(const std::vector<Trajectory>& trajs, const PoiIndex& index) {
    if (trajs.empty()) throw DataError("cannot build a POI catalog from zero trajectories");
    POICatalog cat;
    cat.ids = index.ids;
    cat.coords = index.coords;
    cat.category = index.category;
    cat.category_names = index.category_names;
    cat.category_count = static_cast<int>(index.category_names.size());
    cat.freq.assign(index.ids.size(), {});
    std::vector<double> totals(index.ids.size(), 0.0);
    for (const auto& tr : trajs) {
        for (const auto& c : tr.checkins()) {
            if (c.poi >= index.size()) throw DataError("trajectory references unknown POI " + std::to_string(c.poi));
            const double abs_t = static_cast<double>(tr.origin_utc()) + c.t;
            double tod = std::fmod(abs_t, kSecondsPerDay);
            if (tod < 0) tod += kSecondsPerDay;
            const int hour = std::min(kFreqBins - 1, static_cast<int>(tod / kSecondsPerHour));
            cat.freq[static_cast<std::size_t>(c.poi)][hour] += 1.0;
            totals[static_cast<std::size_t>(c.poi)] += 1.0;
        }
    }
    for (std::size_t p = 0; p < totals.size(); ++p) {
        if (totals[p] > 0)
            for (auto& f : cat.freq[p]) f /= totals[p];
    }
    return cat;
}

void POICatalog::validate(const Trajectory& traj) const {
    for (const auto& c : traj.checkins()) {
        if (c.poi >= size()) throw DataError("trajectory references POI " + std::to_string(c.poi) + " outside catalog");
    }
}

BoundingBox POICatalog::bounds() const {
    BoundingBox box;
    for (const auto& p : coords) box.extend(p);
    return box;
}

DatasetSplit split_dataset(const std::vector<Trajectory>& trajs, SplitRatios ratios, std::uint64_t seed) {
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 ||
        ratios.test < 0) {
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    }
    if (trajs.size() < 3) throw DataError("need at least 3 trajectories to split, got " + std::to_string(trajs.size()));
    std::vector<std::size_t> order(trajs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).derive("split");
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    const auto n = static_cast<double>(trajs.size());
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
    const std::size_t n_train = trajs.size() - n_val - n_test;
    DatasetSplit split;
    split.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& t = trajs[order[i]];
        if (i < n_train) {
            split.train.push_back(t);
        } else if (i < n_train + n_val) {
            split.val.push_back(t);
        } else {
            split.test.push_back(t);
        }
    }
    return split;
}

void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                        const POICatalog& catalog) {
    auto out = open_out(path);
    const double duration = trajs.empty() ? 0.0 : trajs.front().duration();
    out << "# duration=" << duration << '\n';
    out << "traj_id\tpoi_id\tlat\tlon\ttimestamp_seconds\n";
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        catalog.validate(trajs[i]);
        for (const auto& c : trajs[i].checkins()) {
            const auto& g = catalog.coords[static_cast<std::size_t>(c.poi)];
            out << i << '\t' << c.poi << '\t' << g.lat << '\t' << g.lon << '\t' << c.t << '\n';
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    double duration = 0;
    std::map<std::int64_t, std::vector<CheckIn>> groups;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto view = trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            const auto pos = view.find("duration=");
            if (pos != std::string_view::npos && !parse_number(view.substr(pos + 9), duration)) {
                throw IoError(path.string() + ": bad duration header");
            }
            continue;
        }
        if (view.starts_with("traj_id")) continue;
        const auto f = split_tabs(view);
        std::int64_t id = 0, poi = 0;
        double t = 0;
        if (f.size() != 5 || !parse_number(f[0], id) || !parse_number(f[1], poi) || !parse_number(f[4], t)) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed trajectory row");
        }
        groups[id].push_back({poi, t});
    }
    if (!(duration > 0) && !groups.empty()) throw IoError(path.string() + ": missing duration header");
    std::vector<Trajectory> out;
    for (auto& [id, cks] : groups) out.emplace_back(std::move(cks), duration);
    return out;
}

void write_catalog(const std::filesystem::path& path, const POICatalog& catalog) {
    auto out = open_out(path);
    out << "# categories";
    for (std::size_t i = 1; i < catalog.category_names.size(); ++i) out << '\t' << catalog.category_names[i];
    out << '\n';
    out << "poi\texternal_id\tlat\tlon\tcategory";
    for (int h = 0; h < kFreqBins; ++h) out << "\tf" << h;
    out << '\n';
    for (std::int64_t p = 0; p < catalog.size(); ++p) {
        const auto i = static_cast<std::size_t>(p);
        out << p << '\t' << catalog.ids[i] << '\t' << catalog.coords[i].lat << '\t' << catalog.coords[i].lon << '\t'
            << catalog.category[i];
        for (double f : catalog.freq[i]) out << '\t' << f;
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

POICatalog read_catalog(const std::filesystem::path& path) {
    auto in = open_in(path);
    POICatalog cat;
    cat.category_names.push_back("");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.starts_with("# categories")) {
            auto f = split_tabs(line);
            for (std::size_t i = 1; i < f.size(); ++i) cat.category_names.emplace_back(f[i]);
            continue;
        }
        if (line.starts_with("poi\t") || line.front() == '#') continue;
        const auto f = split_tabs(trim(line));
        if (f.size() != static_cast<std::size_t>(5 + kFreqBins)) throw IoError(path.string() + ": malformed catalog row");
        std::int64_t idx = 0;
        GeoPoint g;
        int category = 0;
        std::array<double, kFreqBins> freq{};
        bool ok = parse_number(f[0], idx) && parse_number(f[2], g.lat) && parse_number(f[3], g.lon) &&
                  parse_number(f[4], category) && idx == cat.size();
        for (int h = 0; ok && h < kFreqBins; ++h) ok = parse_number(f[5 + h], freq[h]);
        if (!ok) throw IoError(path.string() + ": malformed catalog row");
        cat.ids.emplace_back(f[1]);
        cat.coords.push_back(g);
        cat.category.push_back(category);
        cat.freq.push_back(freq);
    }
    cat.category_count = static_cast<int>(cat.category_names.size());
    if (cat.size() == 0) throw IoError(path.string() + ": empty catalog");
    return cat;
}

}  // namespace geogen
