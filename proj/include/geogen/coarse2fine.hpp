#pragma once

#include "geogen/data_model.hpp"
#include "geogen/latent.hpp"
#include "geogen/nn/module.hpp"
#include "geogen/rng.hpp"

#include <vector>

namespace geogen {

struct Coarse2FineConfig {
    int d_model = 64;
    int heads = 4;
    int encoder_layers = 4;
    int decoder_layers = 2;
    int ff_dim = 128;
    int time_dim = 16;
    double tau_s = 0.25;
    int max_len = 75;          // cap on filtered points and generated events
    int events_per_point = 6;  // per latent point (6 per 60-minute slot)
    double min_gap_seconds = 60.0;
    double time_unit_seconds = 60.0;

    void validate() const;
    // min(max_len, events_per_point * n_points)
    std::size_t max_events(std::size_t n_points) const;
};

// component 0: w0 * t + b0; components k >= 1: sin(wk * t + bk), with t already
// scaled by 1 / D. Harmonics start at 2*pi*ceil(k/2) in sine/cosine pairs.
class Time2Vec : public nn::Module {
public:
    Time2Vec() = default;
    explicit Time2Vec(int dim);
    // t (...) scaled times -> (..., dim)
    nn::Tensor operator()(const nn::Tensor& t_scaled) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    int dim = 0;
    nn::Tensor w, b;
};

// Softmax of -||l - g_j|| / tau over real POIs (normalized coordinates), with two
// trailing zero columns for BOS and EOS. l (..., 2), poi_coords (P, 2) -> (..., P + 2).
nn::Tensor spatial_attention_weights(const nn::Tensor& l, const nn::Tensor& poi_coords, double tau);

// softmax_j(f_j . w) over real POIs plus two zero columns. w (..., F), freq (P, F).
nn::Tensor temporal_attention_weights(const nn::Tensor& w, const nn::Tensor& freq);

struct FusionResult {
    nn::Tensor h_poi;  // (B, S, d)
    nn::Tensor beta;   // (B, 2): spatial, temporal
    nn::Tensor alpha;  // (B, S, P + 2)
};

// beta = softmax(W_f [masked mean l_vec || masked mean t_vec]); alpha mixes the
// two attention rows; h_poi = alpha @ codebook.
FusionResult fuse_context(const nn::Tensor& l_vec, const nn::Tensor& t_vec, const nn::Tensor& alpha_s,
                          const nn::Tensor& alpha_t, const nn::Tensor& codebook, const nn::Linear& w_f,
                          const std::vector<std::int64_t>& lengths);

// Exponential gap in time units by inversion: -ln(1 - u) / lambda.
double exponential_gap(double lambda, double u);
// t_prev + max(gap * unit_seconds, min_gap_seconds); u must lie in (0, 1).
double sample_next_time(double lambda, double u, double t_prev, double unit_seconds = 60.0,
                        double min_gap_seconds = 60.0);

struct TrainingPair {
    FilteredSequence source;
    Trajectory target;
};

// Padded teacher-forcing batch. Decoder inputs start with BOS at t = 0; targets
// are the next POI (EOS after the last event) and the gap to it in time units,
// floored at the minimum gap.
struct C2FBatch {
    std::int64_t B = 0, S = 0, T = 0;
    std::vector<double> src_coords;  // (B, S, 2) normalized
    std::vector<double> src_times;   // (B, S) seconds
    std::vector<std::int64_t> src_lengths;
    std::vector<std::int64_t> dec_pois;  // (B, T)
    std::vector<double> dec_times;       // (B, T) seconds
    std::vector<std::int64_t> tgt_pois;  // (B, T)
    std::vector<double> tgt_gaps;        // (B, T) time units
    std::vector<double> poi_mask;        // 1 for real targets incl. EOS
    std::vector<double> time_mask;       // 1 for event targets
    std::vector<std::int64_t> tgt_lengths;
    double duration = 0.0;
};

C2FBatch make_batch(const std::vector<TrainingPair>& pairs, const NormStats& stats, const Coarse2FineConfig& config,
                    std::int64_t bos, std::int64_t eos, std::int64_t pad_src = 0, std::int64_t pad_tgt = 0);

struct DecoderOutput {
    nn::Tensor logits;  // (B, T, P + 2)
    nn::Tensor lambda;  // (B, T)
};

struct C2FLoss {
    nn::Tensor total;
    nn::Tensor poi;
    nn::Tensor time;
    nn::Tensor spatial;          // expected-coordinate form (trained)
    double spatial_argmax = 0.0;  // reporting form
};

struct GeneratedTrajectory {
    std::vector<CheckIn> checkins;
};

struct GenerateOptions {
    bool greedy = false;
    std::size_t max_events = 0;  // 0: derive from the number of latent points
};

class Coarse2FineNet : public nn::Module {
public:
    Coarse2FineNet(const POICatalog& catalog, const NormStats& stats, Coarse2FineConfig config, Rng& rng);

    std::int64_t num_pois() const { return num_pois_; }
    std::int64_t bos() const { return num_pois_; }
    std::int64_t eos() const { return num_pois_ + 1; }
    std::int64_t vocab() const { return num_pois_ + 2; }
    const Coarse2FineConfig& config() const { return config_; }
    const NormStats& stats() const { return stats_; }

    nn::Tensor codebook() const;

    struct Encoded {
        nn::Tensor H;  // (B, S, d)
        std::vector<std::int64_t> lengths;
        nn::Tensor beta;
        nn::Tensor alpha;
    };
    Encoded encode(const std::vector<double>& coords, const std::vector<double>& times,
                   const std::vector<std::int64_t>& lengths, std::int64_t S, double duration);
    Encoded encode(const C2FBatch& batch);

    // Decoder over a (B, T) prefix with causal masking. Throws if T exceeds max_len + 1.
    DecoderOutput decode(const Encoded& enc, const std::vector<std::int64_t>& pois, const std::vector<double>& times,
                         const std::vector<std::int64_t>& prefix_lengths, std::int64_t T, double duration,
                         const nn::Tensor& codebook);

    DecoderOutput forward(const C2FBatch& batch);
    C2FLoss loss(const C2FBatch& batch);
    C2FLoss loss_from(const C2FBatch& batch, const DecoderOutput& out);

    // One independent rng stream per sequence, so sampled events do not depend on the other sequences.
    std::vector<GeneratedTrajectory> generate(const std::vector<FilteredSequence>& sources, double duration,
                                              const std::vector<Rng>& rngs, const GenerateOptions& options = {});

    // Sets b_time so the initial intensity equals 1 / mean_gap (time units).
    void init_time_bias(double mean_gap);

    // Positive loss weights softplus(s_k).
    std::array<double, 3> loss_weights() const;

    const std::vector<nn::Tensor>& last_attention_weights() const { return last_attention_; }

    void visit(const std::string& prefix, const nn::ParamVisitor& fn) override;

    Time2Vec t2v;
    nn::Linear spatial_embed;   // 2 -> time_dim
    nn::Linear input_proj;      // 2 * time_dim -> d
    nn::Linear w_latlon, w_freq, w_cat;
    nn::Tensor special_tokens;  // (2, d): BOS, EOS
    nn::Linear w_t;             // time_dim -> 24
    nn::Linear w_f;             // 2 * time_dim -> 2
    std::vector<nn::TransformerEncoderLayer> encoder;
    nn::LayerNorm encoder_norm;
    nn::Linear dec_input;       // d + time_dim -> d
    std::vector<nn::TransformerDecoderLayer> decoder;
    nn::LayerNorm decoder_norm;
    nn::Linear w_poi;
    nn::Linear w_time;
    nn::Tensor loss_scales;     // (3): POI, time, spatial

private:
    Coarse2FineConfig config_;
    NormStats stats_;
    std::int64_t num_pois_ = 0;
    nn::Tensor poi_coords_;  // (P, 2) normalized
    nn::Tensor poi_freq_;    // (P, 24)
    nn::Tensor poi_cat_;     // (P, categories)
    std::vector<nn::Tensor> last_attention_;
};

// Normalized (lat, lon) for a point under the latent statistics.
std::array<double, 2> normalize_coord(const GeoPoint& g, const NormStats& stats);

}  // namespace geogen
