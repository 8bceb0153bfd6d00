#include "geogen/coarse2fine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace geogen {

using nn::Tensor;

void Coarse2FineConfig::validate() const {
    if (d_model <= 0 || heads <= 0 || d_model % heads != 0) throw std::invalid_argument("d_model must be a positive multiple of heads");
    if (encoder_layers < 1 || decoder_layers < 1) throw std::invalid_argument("need at least one encoder and decoder layer");
    if (ff_dim <= 0) throw std::invalid_argument("ff_dim must be positive");
    if (time_dim < 2) throw std::invalid_argument("time_dim must be at least 2");
    if (!(tau_s > 0)) throw std::invalid_argument("tau_s must be positive");
    if (max_len < 1 || events_per_point < 1) throw std::invalid_argument("event budgets must be positive");
    if (!(min_gap_seconds >= 0) || !(time_unit_seconds > 0)) throw std::invalid_argument("invalid time units");
}

std::size_t Coarse2FineConfig::max_events(std::size_t n_points) const {
    return std::min(static_cast<std::size_t>(max_len), static_cast<std::size_t>(events_per_point) * n_points);
}

std::array<double, 2> normalize_coord(const GeoPoint& g, const NormStats& stats) {
    return {(g.lat - stats.mean[0]) / stats.std[0], (g.lon - stats.mean[1]) / stats.std[1]};
}

Time2Vec::Time2Vec(int d) : dim(d) {
    if (d < 2) throw std::invalid_argument("Time2Vec needs at least two components");
    std::vector<double> wv(static_cast<std::size_t>(d)), bv(static_cast<std::size_t>(d), 0.0);
    wv[0] = 1.0;
    for (int k = 1; k < d; ++k) {
        wv[k] = 2.0 * std::numbers::pi * ((k + 1) / 2);
        bv[k] = k % 2 == 0 ? std::numbers::pi / 2 : 0.0;
    }
    w = Tensor::from({d}, std::move(wv), true);
    b = Tensor::from({d}, std::move(bv), true);
}

Tensor Time2Vec::operator()(const Tensor& t_scaled) const {
    nn::Shape s = t_scaled.shape();
    s.push_back(1);
    const Tensor z = nn::reshape(t_scaled, s) * w + b;
    const int axis = static_cast<int>(s.size()) - 1;
    return nn::concat({nn::slice(z, axis, 0, 1), nn::sin(nn::slice(z, axis, 1, dim))}, axis);
}

void Time2Vec::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    fn(nn::join_name(prefix, "w"), w);
    fn(nn::join_name(prefix, "b"), b);
}

Tensor spatial_attention_weights(const Tensor& l, const Tensor& poi_coords, double tau) {
    if (!(tau > 0)) throw std::invalid_argument("spatial attention temperature must be positive");
    if (l.dim(-1) != 2 || poi_coords.ndim() != 2 || poi_coords.dim(1) != 2) throw nn::ShapeError("expected 2-D coordinates");
    const auto P = poi_coords.dim(0);
    if (P == 0) throw std::invalid_argument("spatial attention over an empty catalog");
    const auto rows = l.size() / 2;
    const auto& lv = l.values();
    const auto& g = poi_coords.values();
    std::vector<double> out(static_cast<std::size_t>(rows * (P + 2)), 0.0);
    std::vector<double> logit(static_cast<std::size_t>(P));
    for (std::int64_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < P; ++j) {
            const double dx = lv[2 * r] - g[2 * j], dy = lv[2 * r + 1] - g[2 * j + 1];
            logit[j] = -std::sqrt(dx * dx + dy * dy) / tau;
            mx = std::max(mx, logit[j]);
        }
        double z = 0;
        for (std::int64_t j = 0; j < P; ++j) z += (out[r * (P + 2) + j] = std::exp(logit[j] - mx));
        for (std::int64_t j = 0; j < P; ++j) out[r * (P + 2) + j] /= z;
    }
    nn::Shape shape = l.shape();
    shape.back() = P + 2;
    return Tensor::from(shape, std::move(out));
}

namespace {

Tensor zero_special_columns(const Tensor& x) {
    nn::Shape s = x.shape();
    s.back() = 2;
    return nn::concat({x, Tensor::zeros(s)}, x.ndim() - 1);
}

// (B, S, 1) with 1/len on valid positions.
Tensor mean_mask(const std::vector<std::int64_t>& lengths, std::int64_t S) {
    const auto B = static_cast<std::int64_t>(lengths.size());
    std::vector<double> m(static_cast<std::size_t>(B * S), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        if (lengths[b] < 1 || lengths[b] > S) throw std::invalid_argument("sequence length outside [1, S]");
        for (std::int64_t i = 0; i < lengths[b]; ++i) m[b * S + i] = 1.0 / static_cast<double>(lengths[b]);
    }
    return Tensor::from({B, S, 1}, std::move(m));
}

double softplus_inverse(double y) { return y > 30 ? y : std::log(std::expm1(y)); }

}  // namespace

Tensor temporal_attention_weights(const Tensor& w, const Tensor& freq) {
    if (w.dim(-1) != freq.dim(1)) throw nn::ShapeError("query width does not match the frequency dimension");
    return zero_special_columns(nn::softmax(nn::matmul(w, nn::transpose(freq, 0, 1))));
}

FusionResult fuse_context(const Tensor& l_vec, const Tensor& t_vec, const Tensor& alpha_s, const Tensor& alpha_t,
                          const Tensor& codebook, const nn::Linear& w_f, const std::vector<std::int64_t>& lengths) {
    if (l_vec.dim(0) != t_vec.dim(0) || l_vec.dim(1) != t_vec.dim(1)) {
        throw nn::ShapeError("spatial and temporal sequences differ in length");
    }
    if (alpha_s.shape() != alpha_t.shape()) throw nn::ShapeError("attention rows differ in shape");
    const auto B = l_vec.dim(0), S = l_vec.dim(1);
    if (static_cast<std::int64_t>(lengths.size()) != B) throw nn::ShapeError("one length per sequence required");
    const Tensor m = mean_mask(lengths, S);
    const Tensor pooled = nn::concat({nn::sum(l_vec * m, 1), nn::sum(t_vec * m, 1)}, 1);
    FusionResult r;
    // Two-way softmax written as a sigmoid so the pair sums to exactly 1.
    const Tensor z = w_f(pooled);
    const Tensor b_s = nn::sigmoid(nn::slice(z, 1, 0, 1) - nn::slice(z, 1, 1, 2));
    r.beta = nn::concat({b_s, -b_s + 1.0}, 1);
    const Tensor bs = nn::reshape(nn::slice(r.beta, 1, 0, 1), {B, 1, 1});
    const Tensor bt = nn::reshape(nn::slice(r.beta, 1, 1, 2), {B, 1, 1});
    r.alpha = bs * alpha_s + bt * alpha_t;
    r.h_poi = nn::matmul(r.alpha, codebook);
    return r;
}

double exponential_gap(double lambda, double u) {
    if (!(lambda > 0)) throw std::invalid_argument("intensity must be positive");
    if (!(u > 0 && u < 1)) throw std::invalid_argument("u must lie in (0, 1)");
    return -std::log1p(-u) / lambda;
}

double sample_next_time(double lambda, double u, double t_prev, double unit_seconds, double min_gap_seconds) {
    return t_prev + std::max(exponential_gap(lambda, u) * unit_seconds, min_gap_seconds);
}

C2FBatch make_batch(const std::vector<TrainingPair>& pairs, const NormStats& stats, const Coarse2FineConfig& config,
                    std::int64_t bos, std::int64_t eos, std::int64_t pad_src, std::int64_t pad_tgt) {
    if (pairs.empty()) throw std::invalid_argument("empty training batch");
    C2FBatch batch;
    batch.B = static_cast<std::int64_t>(pairs.size());
    batch.duration = pairs.front().target.duration();
    std::vector<std::size_t> n_events;
    for (const auto& p : pairs) {
        if (p.source.size() == 0) throw std::invalid_argument("empty source sequence");
        if (p.target.duration() != batch.duration) throw std::invalid_argument("mixed trajectory durations in a batch");
        batch.S = std::max<std::int64_t>(batch.S, static_cast<std::int64_t>(p.source.size()));
        n_events.push_back(std::min(p.target.size(), config.max_events(p.source.size())));
        batch.T = std::max<std::int64_t>(batch.T, static_cast<std::int64_t>(n_events.back()) + 1);
    }
    batch.S += pad_src;
    batch.T += pad_tgt;
    const auto B = batch.B, S = batch.S, T = batch.T;
    batch.src_coords.assign(static_cast<std::size_t>(B * S * 2), 0.0);
    batch.src_times.assign(static_cast<std::size_t>(B * S), 0.0);
    batch.dec_pois.assign(static_cast<std::size_t>(B * T), eos);
    batch.dec_times.assign(static_cast<std::size_t>(B * T), 0.0);
    batch.tgt_pois.assign(static_cast<std::size_t>(B * T), eos);
    batch.tgt_gaps.assign(static_cast<std::size_t>(B * T), 0.0);
    batch.poi_mask.assign(static_cast<std::size_t>(B * T), 0.0);
    batch.time_mask.assign(static_cast<std::size_t>(B * T), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        const auto& src = pairs[b].source;
        batch.src_lengths.push_back(static_cast<std::int64_t>(src.size()));
        for (std::size_t i = 0; i < src.size(); ++i) {
            const auto c = normalize_coord(src.points[i].where, stats);
            batch.src_coords[(b * S + i) * 2] = c[0];
            batch.src_coords[(b * S + i) * 2 + 1] = c[1];
            batch.src_times[b * S + i] = src.points[i].t;
        }
        const auto& events = pairs[b].target.checkins();
        const auto n = static_cast<std::int64_t>(n_events[b]);
        batch.tgt_lengths.push_back(n + 1);
        batch.dec_pois[b * T] = bos;
        double prev = 0.0;
        for (std::int64_t k = 0; k < n; ++k) {
            const auto& e = events[static_cast<std::size_t>(k)];
            const double gap = e.t - prev;
            if (gap < 0 || (k > 0 && gap <= 0)) throw std::invalid_argument("non-positive inter-event gap in target");
            batch.dec_pois[b * T + k + 1] = e.poi;
            batch.dec_times[b * T + k + 1] = e.t;
            batch.tgt_pois[b * T + k] = e.poi;
            batch.tgt_gaps[b * T + k] = std::max(gap, config.min_gap_seconds) / config.time_unit_seconds;
            batch.poi_mask[b * T + k] = 1.0;
            batch.time_mask[b * T + k] = 1.0;
            prev = e.t;
        }
        batch.tgt_pois[b * T + n] = eos;
        batch.poi_mask[b * T + n] = 1.0;
    }
    return batch;
}

Coarse2FineNet::Coarse2FineNet(const POICatalog& catalog, const NormStats& stats, Coarse2FineConfig config, Rng& rng)
    : config_(std::move(config)), stats_(stats), num_pois_(catalog.size()) {
    config_.validate();
    if (num_pois_ == 0) throw std::invalid_argument("Coarse2FineNet needs a non-empty catalog");
    const int d = config_.d_model, td = config_.time_dim;
    const auto P = num_pois_;
    const auto C = static_cast<std::int64_t>(std::max(1, catalog.category_count));

    std::vector<double> coords, freq, cat(static_cast<std::size_t>(P * C), 0.0);
    for (std::int64_t j = 0; j < P; ++j) {
        const auto c = normalize_coord(catalog.coords[j], stats_);
        coords.insert(coords.end(), c.begin(), c.end());
        freq.insert(freq.end(), catalog.freq[j].begin(), catalog.freq[j].end());
        const int k = catalog.category.empty() ? 0 : catalog.category[j];
        if (k < 0 || k >= C) throw std::invalid_argument("POI category index outside the category table");
        cat[j * C + k] = 1.0;
    }
    poi_coords_ = Tensor::from({P, 2}, std::move(coords));
    poi_freq_ = Tensor::from({P, kFreqBins}, std::move(freq));
    poi_cat_ = Tensor::from({P, C}, std::move(cat));

    t2v = Time2Vec(td);
    spatial_embed = nn::Linear(2, td, rng);
    input_proj = nn::Linear(2 * td, d, rng);
    w_latlon = nn::Linear(2, d, rng);
    w_freq = nn::Linear(kFreqBins, d, rng, false);
    w_cat = nn::Linear(C, d, rng, false);
    special_tokens = nn::uniform_param({2, d}, 1.0, rng);
    w_t = nn::Linear(td, kFreqBins, rng, false);
    w_f = nn::Linear(2 * td, 2, rng);
    for (int i = 0; i < config_.encoder_layers; ++i) encoder.emplace_back(d, config_.heads, config_.ff_dim, rng);
    encoder_norm = nn::LayerNorm(d);
    dec_input = nn::Linear(d + td, d, rng);
    for (int i = 0; i < config_.decoder_layers; ++i) decoder.emplace_back(d, config_.heads, config_.ff_dim, rng);
    decoder_norm = nn::LayerNorm(d);
    w_poi = nn::Linear(d, P + 2, rng);
    w_time = nn::Linear(d, 1, rng);
    loss_scales = Tensor::full({3}, softplus_inverse(1.0), true);
}

Tensor Coarse2FineNet::codebook() const {
    const Tensor real = w_latlon(poi_coords_) + w_freq(poi_freq_) + w_cat(poi_cat_);
    return nn::concat({real, special_tokens}, 0);
}

Coarse2FineNet::Encoded Coarse2FineNet::encode(const std::vector<double>& coords, const std::vector<double>& times,
                                               const std::vector<std::int64_t>& lengths, std::int64_t S,
                                               double duration) {
    const auto B = static_cast<std::int64_t>(lengths.size());
    if (B == 0 || S == 0) throw std::invalid_argument("cannot encode an empty batch");
    if (!(duration > 0)) throw std::invalid_argument("duration must be positive");
    for (auto n : lengths)
        if (n < 1 || n > config_.max_len) throw std::invalid_argument("source length outside [1, max_len]");
    std::vector<double> scaled(times);
    for (auto& t : scaled) t /= duration;
    const Tensor l = Tensor::from({B, S, 2}, coords);
    const Tensor ts = Tensor::from({B, S}, std::move(scaled));
    const Tensor l_vec = spatial_embed(l);
    const Tensor t_vec = t2v(ts);
    const Tensor alpha_s = spatial_attention_weights(l, poi_coords_, config_.tau_s);
    const Tensor alpha_t = temporal_attention_weights(w_t(t_vec), poi_freq_);
    const Tensor E = codebook();
    auto fused = fuse_context(l_vec, t_vec, alpha_s, alpha_t, E, w_f, lengths);
    Tensor x = input_proj(nn::concat({l_vec, t_vec}, 2)) + fused.h_poi;
    const Tensor mask = nn::key_padding_mask(lengths, S);
    last_attention_ = {alpha_s, alpha_t, fused.alpha};
    for (auto& layer : encoder) {
        x = layer(x, mask);
        last_attention_.push_back(layer.attn.last_weights());
    }
    return Encoded{encoder_norm(x), lengths, fused.beta, fused.alpha};
}

Coarse2FineNet::Encoded Coarse2FineNet::encode(const C2FBatch& batch) {
    return encode(batch.src_coords, batch.src_times, batch.src_lengths, batch.S, batch.duration);
}

DecoderOutput Coarse2FineNet::decode(const Encoded& enc, const std::vector<std::int64_t>& pois,
                                     const std::vector<double>& times, const std::vector<std::int64_t>& prefix_lengths,
                                     std::int64_t T, double duration, const Tensor& E) {
    if (T > config_.max_len + 1) {
        throw std::invalid_argument("decoder prefix of " + std::to_string(T) + " exceeds the event budget");
    }
    const auto B = static_cast<std::int64_t>(prefix_lengths.size());
    if (static_cast<std::int64_t>(pois.size()) != B * T || static_cast<std::int64_t>(times.size()) != B * T) {
        throw nn::ShapeError("decoder prefix arrays do not match (B, T)");
    }
    for (std::int64_t b = 0; b < B; ++b)
        if (pois[b * T] != bos()) throw std::invalid_argument("decoder prefix must start with BOS");
    std::vector<double> scaled(times);
    for (auto& t : scaled) t /= duration;
    const Tensor emb = nn::reshape(nn::gather_rows(E, pois), {B, T, config_.d_model});
    Tensor x = dec_input(nn::concat({emb, t2v(Tensor::from({B, T}, std::move(scaled)))}, 2));
    const Tensor self_mask = nn::causal_mask(T) + nn::key_padding_mask(prefix_lengths, T);
    const Tensor mem_mask = nn::key_padding_mask(enc.lengths, enc.H.dim(1));
    for (auto& layer : decoder) {
        x = layer(x, enc.H, self_mask, mem_mask);
        last_attention_.push_back(layer.self_attn.last_weights());
        last_attention_.push_back(layer.cross_attn.last_weights());
    }
    const Tensor h = decoder_norm(x);
    return DecoderOutput{w_poi(h), nn::reshape(nn::softplus(w_time(h)), {B, T})};
}

DecoderOutput Coarse2FineNet::forward(const C2FBatch& batch) {
    const auto enc = encode(batch);
    return decode(enc, batch.dec_pois, batch.dec_times, batch.tgt_lengths, batch.T, batch.duration, codebook());
}

C2FLoss Coarse2FineNet::loss(const C2FBatch& batch) { return loss_from(batch, forward(batch)); }

C2FLoss Coarse2FineNet::loss_from(const C2FBatch& batch, const DecoderOutput& out) {
    const auto B = batch.B, T = batch.T, V = vocab(), P = num_pois_;
    C2FLoss r;
    r.poi = nn::cross_entropy(nn::reshape(out.logits, {B * T, V}), batch.tgt_pois, batch.poi_mask);

    double n_time = 0;
    for (double m : batch.time_mask) n_time += m;
    const Tensor tmask = Tensor::from({B, T}, batch.time_mask);
    if (n_time > 0) {
        const Tensor gaps = Tensor::from({B, T}, batch.tgt_gaps);
        const Tensor nll = -(nn::log(out.lambda) - out.lambda * gaps);
        r.time = nn::sum(nll * tmask) * (1.0 / n_time);

        // Expected coordinate under the POI distribution restricted to real POIs.
        const Tensor probs = nn::softmax(nn::slice(out.logits, 2, 0, P));
        const Tensor expected = nn::matmul(probs, poi_coords_);
        std::vector<double> truth(static_cast<std::size_t>(B * T * 2), 0.0);
        const auto& g = poi_coords_.values();
        const auto& lv = out.logits.values();
        double argmax_sum = 0;
        for (std::int64_t i = 0; i < B * T; ++i) {
            if (batch.time_mask[i] == 0) continue;
            const auto p = batch.tgt_pois[i];
            truth[2 * i] = g[2 * p];
            truth[2 * i + 1] = g[2 * p + 1];
            const double* row = lv.data() + i * V;
            const auto best = std::max_element(row, row + P) - row;
            argmax_sum += std::hypot(g[2 * best] - g[2 * p], g[2 * best + 1] - g[2 * p + 1]);
        }
        const Tensor diff = expected - Tensor::from({B, T, 2}, std::move(truth));
        const Tensor dist = nn::sqrt(nn::sum(nn::square(diff), 2) + 1e-12);
        r.spatial = nn::sum(dist * tmask) * (1.0 / n_time);
        r.spatial_argmax = argmax_sum / n_time;
    } else {
        r.time = Tensor::scalar(0.0);
        r.spatial = Tensor::scalar(0.0);
    }
    // Uncertainty-style weighting: lambda_k = softplus(s_k), with -log lambda_k
    // keeping the weights away from zero.
    const Tensor w = nn::softplus(loss_scales);
    const Tensor parts = nn::concat({nn::reshape(r.poi, {1}), nn::reshape(r.time, {1}), nn::reshape(r.spatial, {1})}, 0);
    r.total = nn::sum(w * parts) - nn::sum(nn::log(w));
    return r;
}

std::array<double, 3> Coarse2FineNet::loss_weights() const {
    std::array<double, 3> out{};
    for (int k = 0; k < 3; ++k) {
        const double s = loss_scales.values()[k];
        out[k] = s > 30 ? s : std::log1p(std::exp(s));
    }
    return out;
}

void Coarse2FineNet::init_time_bias(double mean_gap) {
    if (!(mean_gap > 0)) throw std::invalid_argument("mean gap must be positive");
    w_time.bias.data()[0] = softplus_inverse(1.0 / mean_gap);
}

std::vector<GeneratedTrajectory> Coarse2FineNet::generate(const std::vector<FilteredSequence>& sources,
                                                          double duration, const std::vector<Rng>& rngs,
                                                          const GenerateOptions& options) {
    nn::NoGradGuard guard;
    if (sources.size() != rngs.size()) throw std::invalid_argument("one rng stream per source sequence required");
    std::vector<GeneratedTrajectory> result(sources.size());
    if (sources.empty()) return result;
    const auto B = static_cast<std::int64_t>(sources.size());
    std::int64_t S = 0;
    for (const auto& s : sources) S = std::max<std::int64_t>(S, static_cast<std::int64_t>(s.size()));
    std::vector<double> coords(static_cast<std::size_t>(B * S * 2), 0.0), times(static_cast<std::size_t>(B * S), 0.0);
    std::vector<std::int64_t> lengths;
    std::vector<std::size_t> budget;
    for (std::int64_t b = 0; b < B; ++b) {
        const auto& src = sources[b];
        lengths.push_back(static_cast<std::int64_t>(src.size()));
        budget.push_back(options.max_events > 0 ? std::min<std::size_t>(options.max_events, config_.max_len)
                                                : config_.max_events(src.size()));
        for (std::size_t i = 0; i < src.size(); ++i) {
            const auto c = normalize_coord(src.points[i].where, stats_);
            coords[(b * S + i) * 2] = c[0];
            coords[(b * S + i) * 2 + 1] = c[1];
            times[b * S + i] = src.points[i].t;
        }
    }
    const Encoded full = encode(coords, times, lengths, S, duration);
    const Tensor E = codebook();
    const Tensor H_flat = nn::reshape(full.H, {B, S * config_.d_model});

    std::vector<Rng> streams(rngs);
    std::vector<std::vector<std::int64_t>> pref_pois(static_cast<std::size_t>(B), {bos()});
    std::vector<std::vector<double>> pref_times(static_cast<std::size_t>(B), {0.0});
    std::vector<std::int64_t> active;
    for (std::int64_t b = 0; b < B; ++b)
        if (budget[b] > 0) active.push_back(b);

    const auto V = vocab();
    std::vector<double> probs(static_cast<std::size_t>(V));
    while (!active.empty()) {
        const auto A = static_cast<std::int64_t>(active.size());
        const auto T = static_cast<std::int64_t>(pref_pois[active[0]].size());
        std::vector<std::int64_t> pois, sub_lengths;
        std::vector<double> ts;
        for (auto b : active) {
            pois.insert(pois.end(), pref_pois[b].begin(), pref_pois[b].end());
            ts.insert(ts.end(), pref_times[b].begin(), pref_times[b].end());
            sub_lengths.push_back(lengths[b]);
        }
        Encoded sub{nn::reshape(nn::gather_rows(H_flat, active), {A, S, config_.d_model}), sub_lengths, {}, {}};
        last_attention_.clear();
        const auto out = decode(sub, pois, ts, std::vector<std::int64_t>(static_cast<std::size_t>(A), T), T,
                                duration, E);
        const auto& lv = out.logits.values();
        const auto& lam = out.lambda.values();
        std::vector<std::int64_t> still;
        for (std::int64_t a = 0; a < A; ++a) {
            const auto b = active[a];
            auto& rng = streams[b];
            const double* row = lv.data() + (a * T + T - 1) * V;
            std::int64_t choice = 0;
            if (options.greedy) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::int64_t j = 0; j < V; ++j)
                    if (j != bos() && row[j] > best) best = row[j], choice = j;
            } else {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::int64_t j = 0; j < V; ++j)
                    if (j != bos()) mx = std::max(mx, row[j]);
                double z = 0;
                for (std::int64_t j = 0; j < V; ++j) z += (probs[j] = j == bos() ? 0.0 : std::exp(row[j] - mx));
                double u = rng.uniform() * z;
                choice = eos();
                for (std::int64_t j = 0; j < V; ++j) {
                    if (probs[j] == 0.0) continue;
                    if (u < probs[j]) {
                        choice = j;
                        break;
                    }
                    u -= probs[j];
                }
            }
            if (choice == eos()) continue;
            const double t_next = sample_next_time(lam[a * T + T - 1], rng.uniform_open(), pref_times[b].back(),
                                                   config_.time_unit_seconds, config_.min_gap_seconds);
            if (t_next >= duration) continue;
            result[b].checkins.push_back({choice, t_next});
            pref_pois[b].push_back(choice);
            pref_times[b].push_back(t_next);
            if (result[b].checkins.size() < budget[b]) still.push_back(b);
        }
        active = std::move(still);
    }
    return result;
}

void Coarse2FineNet::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
    t2v.visit(nn::join_name(prefix, "t2v"), fn);
    spatial_embed.visit(nn::join_name(prefix, "spatial_embed"), fn);
    input_proj.visit(nn::join_name(prefix, "input_proj"), fn);
    w_latlon.visit(nn::join_name(prefix, "w_latlon"), fn);
    w_freq.visit(nn::join_name(prefix, "w_freq"), fn);
    w_cat.visit(nn::join_name(prefix, "w_cat"), fn);
    fn(nn::join_name(prefix, "special_tokens"), special_tokens);
    w_t.visit(nn::join_name(prefix, "w_t"), fn);
    w_f.visit(nn::join_name(prefix, "w_f"), fn);
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].visit(nn::join_name(prefix, "enc" + std::to_string(i)), fn);
    encoder_norm.visit(nn::join_name(prefix, "enc_norm"), fn);
    dec_input.visit(nn::join_name(prefix, "dec_input"), fn);
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].visit(nn::join_name(prefix, "dec" + std::to_string(i)), fn);
    decoder_norm.visit(nn::join_name(prefix, "dec_norm"), fn);
    w_poi.visit(nn::join_name(prefix, "w_poi"), fn);
    w_time.visit(nn::join_name(prefix, "w_time"), fn);
    fn(nn::join_name(prefix, "loss_scales"), loss_scales);
}

}  // namespace geogen
