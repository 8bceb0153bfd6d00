#pragma once

#include "geogen/checkpoint.hpp"
#include "geogen/coarse2fine.hpp"
#include "geogen/config.hpp"
#include "geogen/diffusion.hpp"
#include "geogen/evaluation.hpp"
#include "geogen/nn/optim.hpp"
#include "geogen/sasg_unet.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace geogen {

// Non-finite losses and other training aborts.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Layout of a run directory.
struct RunPaths {
    explicit RunPaths(std::filesystem::path out);

    std::filesystem::path root;
    std::filesystem::path config;
    std::filesystem::path train, val, test, catalog, manifest;
    std::filesystem::path latent_train, latent_val;
    std::filesystem::path stage1_dir, stage1_latest, stage1_final, stage1_log;
    std::filesystem::path stage2_dir, stage2_model, stage2_log;
    std::filesystem::path synthetic, generate_summary;
    std::filesystem::path eval_dir;
    std::filesystem::path sweep_csv;

    std::filesystem::path stage1_epoch(int epoch) const;
};

struct IngestSummary {
    std::size_t records = 0;
    std::size_t skipped_rows = 0;
    std::size_t trajectories = 0;
    std::size_t pois = 0;
    std::size_t train = 0, val = 0, test = 0;
};

IngestSummary cmd_ingest(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

struct ReconstructSummary {
    std::size_t train = 0, val = 0;
    std::size_t length = 0;
};

ReconstructSummary cmd_reconstruct(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

// Spatial context used by the denoiser: latent statistics plus the catalog box
// widened by a small margin.
SpatialContext make_spatial_context(const NormStats& stats, const POICatalog& catalog);

// One stage-1 training run. Every epoch draws from its own named sub-stream, so
// a run restored from a checkpoint continues exactly as the uninterrupted run.
class Stage1Trainer {
public:
    Stage1Trainer(const PipelineConfig& config, const DenoiserConfig& denoiser,
                  std::vector<LatentMovementSequence> train, const NormStats& stats, SpatialContext context);

    double run_epoch(int epoch);  // 1-based; mean batch loss
    double validation_loss(const std::vector<LatentMovementSequence>& val);

    SasgUNet& model() { return model_; }
    const EmaState& ema() const { return ema_; }
    std::size_t train_size() const { return train_.size(); }

    Checkpoint to_checkpoint();
    void restore(const Checkpoint& ckpt);

private:
    PipelineConfig config_;
    DiffusionSchedule schedule_;
    std::vector<LatentMovementSequence> train_;
    NormStats stats_;
    SasgUNet model_;
    nn::Adam adam_;
    EmaState ema_;
};

struct Stage1Options {
    int stop_after_epoch = 0;  // 0 runs to the configured epoch count
};

struct Stage1Summary {
    int first_epoch = 1;  // first epoch trained by this invocation
    int last_epoch = 0;
    std::vector<double> train_loss;  // full history, index epoch - 1
    std::vector<std::pair<int, double>> val_loss;
};

Stage1Summary cmd_train_stage1(const PipelineConfig& config, const RunPaths& paths, std::ostream& log,
                               const Stage1Options& options = {});

// Filtered latent sequence paired with the trajectory it came from; trajectories
// whose filter step fails are left out.
std::vector<TrainingPair> make_training_pairs(const std::vector<Trajectory>& trajs, const POICatalog& catalog,
                                              const PipelineConfig& config);
// Mean target gap in time units, floored like the training targets.
double mean_training_gap(const std::vector<TrainingPair>& pairs, const PipelineConfig& config);

struct Stage2Epoch {
    int epoch = 0;
    double poi = 0.0, time = 0.0, spatial = 0.0, total = 0.0;
    double val_total = 0.0;
    double lr = 0.0;
};

class Stage2Trainer {
public:
    Stage2Trainer(const PipelineConfig& config, const POICatalog& catalog, const NormStats& stats,
                  std::vector<TrainingPair> train, std::vector<TrainingPair> val);

    Stage2Epoch run_epoch(int epoch);
    Coarse2FineNet& model() { return net_; }
    double lr() const { return adam_.lr(); }
    std::size_t train_size() const { return train_.size(); }

private:
    C2FLoss batch_loss(const std::vector<TrainingPair>& pairs);
    double evaluate(const std::vector<TrainingPair>& pairs);

    PipelineConfig config_;
    std::vector<TrainingPair> train_, val_;
    Coarse2FineNet net_;
    nn::Adam adam_;
    nn::ReduceLROnPlateau plateau_;
};

struct Stage2Summary {
    std::vector<Stage2Epoch> history;
    std::size_t pairs = 0;
};

Stage2Summary cmd_train_stage2(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

struct GenerateSummary {
    std::size_t requested = 0;
    std::size_t written = 0;
    std::size_t empty = 0;      // sequences for which stage 2 emitted no event
    std::size_t skipped = 0;    // latent samples that never passed the filter
    std::size_t resamples = 0;
};

// Stage-1 sampling with EMA weights, filtering with bounded resampling, then stage 2.
std::vector<std::vector<CheckIn>> generate_trajectories(SasgUNet& denoiser, Coarse2FineNet& c2f,
                                                        const PipelineConfig& config, const NormStats& stats,
                                                        std::size_t count, std::uint64_t seed,
                                                        GenerateSummary& summary);

GenerateSummary cmd_generate(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

struct EvaluateSummary {
    FidelityReport report;
    UtilityResult synthetic_utility;
    UtilityResult real_utility;
};

EvaluateSummary cmd_evaluate(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

struct SweepRow {
    double interval = 0.0;
    std::size_t length = 0;
    double jsd_distance = 0.0, jsd_radius = 0.0, jsd_interval = 0.0, jsd_length = 0.0;  // NaN when not run
    double s1_memory_gb = 0.0, s2_memory_gb = 0.0;
    double s1_throughput = 0.0, s2_throughput = 0.0;  // sequences per second
};

// Drops trailing levels, then the largest pool kernels, until the denoiser fits
// a sequence of the given length.
std::optional<DenoiserConfig> fit_denoiser(DenoiserConfig config, std::int64_t length);

struct ThroughputResult {
    double sequences_per_second = 0.0;
    std::size_t peak_bytes = 0;
};

// Trains for `epochs` epochs and times the last one.
ThroughputResult measure_stage1(Stage1Trainer& trainer, int epochs);

std::vector<SweepRow> cmd_sweep(const PipelineConfig& config, const RunPaths& paths, std::ostream& log);

// One row per metric, one column per interval.
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace geogen
