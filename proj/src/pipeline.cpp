#include "geogen/pipeline.hpp"

#include "geogen/latent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

namespace geogen {

namespace fs = std::filesystem;
using nn::Tensor;

namespace {

constexpr double kClampMarginDeg = 0.05;
constexpr double kBytesPerGb = 1024.0 * 1024.0 * 1024.0;

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

template <class T>
std::vector<T> pick(const std::vector<T>& items, const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t end) {
    std::vector<T> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(items[order[i]]);
    return out;
}

void require_file(const fs::path& path, const std::string& hint) {
    if (!fs::exists(path)) throw IoError("missing " + path.string() + " (" + hint + ")");
}

void check_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw TrainingError(what + " is not finite (" + std::to_string(v) + "); aborting");
}

nlohmann::json stats_json(const NormStats& s) {
    return {{"mean", std::vector<double>(s.mean.begin(), s.mean.end())},
            {"std", std::vector<double>(s.std.begin(), s.std.end())}};
}

NormStats stats_from_json(const nlohmann::json& j) {
    NormStats s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto sd = j.at("std").get<std::vector<double>>();
    if (mean.size() != kLatentChannels || sd.size() != kLatentChannels) throw ConfigError("malformed latent statistics");
    std::copy(mean.begin(), mean.end(), s.mean.begin());
    std::copy(sd.begin(), sd.end(), s.std.begin());
    return s;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<LatentMovementSequence> reconstruct_all(const std::vector<Trajectory>& trajs, const POICatalog& catalog,
                                                    double interval) {
    std::vector<LatentMovementSequence> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) out.push_back(reconstruct(t, catalog, interval));
    return out;
}

SasgUNet build_denoiser(const DenoiserConfig& d, std::uint64_t seed) {
    Rng rng = Rng(seed).derive("stage1-init");
    return SasgUNet(d, rng);
}

Coarse2FineNet build_c2f(const PipelineConfig& config, const POICatalog& catalog, const NormStats& stats) {
    Rng rng = Rng(config.seed).derive("stage2-init");
    return Coarse2FineNet(catalog, stats, config.coarse2fine(), rng);
}

}  // namespace

RunPaths::RunPaths(fs::path out) : root(std::move(out)) {
    config = root / "config.json";
    train = root / "data" / "train.tsv";
    val = root / "data" / "val.tsv";
    test = root / "data" / "test.tsv";
    catalog = root / "data" / "catalog.tsv";
    manifest = root / "data" / "manifest.json";
    latent_train = root / "latent" / "train.csv";
    latent_val = root / "latent" / "val.csv";
    stage1_dir = root / "stage1";
    stage1_latest = stage1_dir / "latest.ggck";
    stage1_final = stage1_dir / "final.ggck";
    stage1_log = stage1_dir / "log.csv";
    stage2_dir = root / "stage2";
    stage2_model = stage2_dir / "model.ggck";
    stage2_log = stage2_dir / "log.csv";
    synthetic = root / "synthetic.tsv";
    generate_summary = root / "generate_summary.json";
    eval_dir = root / "eval";
    sweep_csv = root / "sweep" / "sweep.csv";
}

fs::path RunPaths::stage1_epoch(int epoch) const {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ggck", epoch);
    return stage1_dir / name;
}

IngestSummary cmd_ingest(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    if (config.dataset_path.empty()) throw IoError("no dataset_path configured");
    const auto parsed = parse_checkins(config.dataset_path, parse_format(config.dataset_format));
    const auto index = index_pois(parsed.records);
    const auto trajs = build_trajectories(parsed.records, index, config.window_seconds,
                                          static_cast<std::size_t>(config.min_length));
    if (trajs.empty()) throw DataError("no trajectory reaches the minimum length of " + std::to_string(config.min_length));
    const auto catalog = build_poi_catalog(trajs, index);
    const auto split = split_dataset(trajs, config.split_ratios(), config.seed);

    write_catalog(paths.catalog, catalog);
    write_trajectories(paths.train, split.train, catalog);
    write_trajectories(paths.val, split.val, catalog);
    write_trajectories(paths.test, split.test, catalog);

    IngestSummary s;
    s.records = parsed.records.size();
    s.skipped_rows = parsed.skipped;
    s.trajectories = trajs.size();
    s.pois = static_cast<std::size_t>(catalog.size());
    s.train = split.train.size();
    s.val = split.val.size();
    s.test = split.test.size();

    nlohmann::ordered_json m;
    m["schema_version"] = kConfigSchemaVersion;
    m["config_hash"] = hash_hex(config.hash());
    m["dataset_path"] = config.dataset_path;
    m["records"] = s.records;
    m["skipped_rows"] = s.skipped_rows;
    m["trajectories"] = s.trajectories;
    m["pois"] = s.pois;
    m["split"] = {{"train", s.train}, {"val", s.val}, {"test", s.test}};
    m["seed"] = config.seed;
    write_json(paths.manifest, m);
    save_config(paths.config, config);

    log << "ingest: " << s.records << " check-ins (" << s.skipped_rows << " rows skipped), " << s.trajectories
        << " trajectories over " << s.pois << " POIs; split " << s.train << "/" << s.val << "/" << s.test << "\n";
    return s;
}

ReconstructSummary cmd_reconstruct(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    require_file(paths.train, "run ingest first");
    require_file(paths.catalog, "run ingest first");
    const auto catalog = read_catalog(paths.catalog);
    const auto train = reconstruct_all(read_trajectories(paths.train), catalog, config.interval_seconds);
    if (train.empty()) throw DataError("training split is empty");
    std::vector<LatentMovementSequence> val;
    if (fs::exists(paths.val)) val = reconstruct_all(read_trajectories(paths.val), catalog, config.interval_seconds);
    const auto stats = compute_norm_stats(train);
    write_latents(paths.latent_train, {train, stats, config.interval_seconds, config.window_seconds});
    write_latents(paths.latent_val, {val, stats, config.interval_seconds, config.window_seconds});
    log << "reconstruct: " << train.size() << " train / " << val.size() << " val sequences of length "
        << train.front().length() << "\n";
    return {train.size(), val.size(), train.front().length()};
}

SpatialContext make_spatial_context(const NormStats& stats, const POICatalog& catalog) {
    return SpatialContext{stats, catalog.bounds().expanded(kClampMarginDeg)};
}

Stage1Trainer::Stage1Trainer(const PipelineConfig& config, const DenoiserConfig& denoiser,
                             std::vector<LatentMovementSequence> train, const NormStats& stats, SpatialContext context)
    : config_(config),
      schedule_(config.schedule()),
      train_(std::move(train)),
      stats_(stats),
      model_(build_denoiser(denoiser, config.seed)),
      adam_(model_.parameters(), nn::AdamOptions{config.stage1_lr, 0.9, 0.999, 1e-8, config.stage1_weight_decay}),
      ema_(ema_init(model_, config.ema_rate)) {
    if (train_.empty()) throw DataError("stage 1 needs at least one training sequence");
    for (const auto& s : train_) {
        if (static_cast<std::int64_t>(s.length()) != denoiser.sequence_length) {
            throw ConfigError("latent length " + std::to_string(s.length()) + " does not match the denoiser length " +
                              std::to_string(denoiser.sequence_length) + "; rerun reconstruct");
        }
    }
    model_.set_spatial_context(std::move(context));
}

double Stage1Trainer::run_epoch(int epoch) {
    Rng rng = Rng(config_.seed).derive("stage1-epoch", static_cast<std::uint64_t>(epoch));
    const auto order = permutation(train_.size(), rng);
    const auto batch = static_cast<std::size_t>(config_.stage1_batch);
    double sum = 0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
        const auto chunk = pick(train_, order, b, std::min(order.size(), b + batch));
        const Tensor x0 = normalize(chunk, stats_);
        const auto steps = sample_steps(chunk.size(), schedule_, rng);
        const Tensor eps = standard_normal(x0.shape(), rng);
        Tensor loss = training_loss(eps, model_(forward_sample(x0, steps, eps, schedule_), steps));
        const double v = loss.item();
        check_finite(v, "stage-1 loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
        adam_.zero_grad();
        loss.backward();
        adam_.step();
        ema_update(ema_, model_);
        sum += v;
        ++batches;
    }
    return sum / batches;
}

double Stage1Trainer::validation_loss(const std::vector<LatentMovementSequence>& val) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    nn::NoGradGuard guard;
    Rng rng = Rng(config_.seed).derive("stage1-val");
    const auto batch = static_cast<std::size_t>(config_.stage1_batch);
    std::vector<std::size_t> order(val.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
        const auto chunk = pick(val, order, b, std::min(order.size(), b + batch));
        const Tensor x0 = normalize(chunk, stats_);
        const auto steps = sample_steps(chunk.size(), schedule_, rng);
        const Tensor eps = standard_normal(x0.shape(), rng);
        sum += training_loss(eps, model_(forward_sample(x0, steps, eps, schedule_), steps)).item() *
               static_cast<double>(chunk.size());
        n += chunk.size();
    }
    return sum / static_cast<double>(n);
}

Checkpoint Stage1Trainer::to_checkpoint() {
    Checkpoint ck;
    ck.put_group("model/", model_.values());
    ck.put_group("ema/", ema_.shadow);
    ck.put_group("adam/", adam_.state());
    ck.meta["stats"] = stats_json(stats_);
    ck.meta["interval"] = config_.interval_seconds;
    ck.meta["duration"] = config_.window_seconds;
    return ck;
}

void Stage1Trainer::restore(const Checkpoint& ckpt) {
    model_.load_values(ckpt.group("model/"));
    ema_.shadow = ckpt.group("ema/");
    adam_.load_state(ckpt.group("adam/"));
}

namespace {

void write_stage1_log(const fs::path& path, const Stage1Summary& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(10) << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < s.train_loss.size(); ++i) {
        const int epoch = static_cast<int>(i) + 1;
        out << epoch << "," << s.train_loss[i] << ",";
        for (const auto& [e, v] : s.val_loss)
            if (e == epoch) out << v;
        out << "\n";
    }
}

}  // namespace

Stage1Summary cmd_train_stage1(const PipelineConfig& config, const RunPaths& paths, std::ostream& log,
                               const Stage1Options& options) {
    require_file(paths.latent_train, "run reconstruct first");
    require_file(paths.catalog, "run ingest first");
    const auto latent = read_latents(paths.latent_train);
    std::vector<LatentMovementSequence> val;
    if (fs::exists(paths.latent_val)) val = read_latents(paths.latent_val).sequences;
    const auto catalog = read_catalog(paths.catalog);
    if (std::abs(latent.interval - config.interval_seconds) > 1e-9) {
        throw ConfigError("latents were built with interval " + std::to_string(latent.interval) +
                          " s but the config asks for " + std::to_string(config.interval_seconds) + " s");
    }

    Stage1Trainer trainer(config, config.denoiser(), latent.sequences, latent.stats,
                          make_spatial_context(latent.stats, catalog));
    Stage1Summary summary;
    if (fs::exists(paths.stage1_latest)) {
        const auto ck = load_checkpoint(paths.stage1_latest, "stage1");
        if (ck.meta.at("config_hash").get<std::string>() != hash_hex(config.hash())) {
            throw ConfigError(paths.stage1_latest.string() + " was written under config " +
                              ck.meta.at("config_hash").get<std::string>() + ", current config is " +
                              hash_hex(config.hash()) + "; use the original config or remove " +
                              paths.stage1_dir.string());
        }
        trainer.restore(ck);
        summary.train_loss = ck.meta.at("train_loss").get<std::vector<double>>();
        summary.val_loss = ck.meta.at("val_loss").get<std::vector<std::pair<int, double>>>();
        summary.first_epoch = ck.meta.at("epoch").get<int>() + 1;
        log << "stage1: resuming after epoch " << summary.first_epoch - 1 << "\n";
    }

    const int last = options.stop_after_epoch > 0 ? std::min(options.stop_after_epoch, config.stage1_epochs)
                                                  : config.stage1_epochs;
    auto save = [&](const fs::path& path, int epoch) {
        auto ck = trainer.to_checkpoint();
        ck.meta["epoch"] = epoch;
        ck.meta["train_loss"] = summary.train_loss;
        ck.meta["val_loss"] = summary.val_loss;
        save_checkpoint(path, std::move(ck), "stage1", config);
    };
    for (int epoch = summary.first_epoch; epoch <= last; ++epoch) {
        const double loss = trainer.run_epoch(epoch);
        summary.train_loss.push_back(loss);
        log << "stage1 epoch " << epoch << " loss " << loss;
        if (epoch % config.val_every == 0 || epoch == config.stage1_epochs) {
            const double v = trainer.validation_loss(val);
            if (std::isfinite(v)) {
                summary.val_loss.emplace_back(epoch, v);
                log << " val " << v;
            }
        }
        log << "\n";
        if (epoch % config.checkpoint_every == 0) save(paths.stage1_epoch(epoch), epoch);
        if (epoch % config.checkpoint_every == 0 || epoch == last) save(paths.stage1_latest, epoch);
    }
    summary.last_epoch = std::max(last, summary.first_epoch - 1);
    if (summary.last_epoch == config.stage1_epochs) save(paths.stage1_final, config.stage1_epochs);
    fs::create_directories(paths.stage1_dir);
    write_stage1_log(paths.stage1_log, summary);
    return summary;
}

std::vector<TrainingPair> make_training_pairs(const std::vector<Trajectory>& trajs, const POICatalog& catalog,
                                              const PipelineConfig& config) {
    std::vector<TrainingPair> pairs;
    for (const auto& t : trajs) {
        const auto latent = reconstruct(t, catalog, config.interval_seconds);
        try {
            pairs.push_back({filter_sequence(latent, config.gamma, static_cast<std::size_t>(config.max_len)), t});
        } catch (const std::invalid_argument&) {
        }
    }
    return pairs;
}

double mean_training_gap(const std::vector<TrainingPair>& pairs, const PipelineConfig& config) {
    const double unit = config.coarse2fine().time_unit_seconds;
    double sum = 0;
    std::size_t n = 0;
    for (const auto& p : pairs) {
        double prev = 0;
        const auto& cks = p.target.checkins();
        const std::size_t budget = config.coarse2fine().max_events(p.source.size());
        for (std::size_t i = 0; i < cks.size() && i < budget; ++i) {
            sum += std::max(cks[i].t - prev, config.min_gap_seconds) / unit;
            prev = cks[i].t;
            ++n;
        }
    }
    if (n == 0) throw DataError("no training events for stage 2");
    return sum / static_cast<double>(n);
}

Stage2Trainer::Stage2Trainer(const PipelineConfig& config, const POICatalog& catalog, const NormStats& stats,
                             std::vector<TrainingPair> train, std::vector<TrainingPair> val)
    : config_(config),
      train_(std::move(train)),
      val_(std::move(val)),
      net_(build_c2f(config, catalog, stats)),
      adam_(net_.parameters(), nn::AdamOptions{config.stage2_lr}),
      plateau_(config.plateau_factor, config.plateau_patience) {
    if (train_.empty()) throw DataError("stage 2 needs at least one training pair");
    net_.init_time_bias(mean_training_gap(train_, config_));
}

C2FLoss Stage2Trainer::batch_loss(const std::vector<TrainingPair>& pairs) {
    const auto batch = make_batch(pairs, net_.stats(), net_.config(), net_.bos(), net_.eos());
    return net_.loss(batch);
}

double Stage2Trainer::evaluate(const std::vector<TrainingPair>& pairs) {
    nn::NoGradGuard guard;
    const auto batch = static_cast<std::size_t>(config_.stage2_batch);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < pairs.size(); b += batch) {
        const std::vector<TrainingPair> chunk(pairs.begin() + static_cast<std::ptrdiff_t>(b),
                                              pairs.begin() + static_cast<std::ptrdiff_t>(std::min(pairs.size(), b + batch)));
        sum += batch_loss(chunk).total.item() * static_cast<double>(chunk.size());
        n += chunk.size();
    }
    return sum / static_cast<double>(n);
}

Stage2Epoch Stage2Trainer::run_epoch(int epoch) {
    Rng rng = Rng(config_.seed).derive("stage2-epoch", static_cast<std::uint64_t>(epoch));
    const auto order = permutation(train_.size(), rng);
    const auto batch = static_cast<std::size_t>(config_.stage2_batch);
    const auto params = net_.parameters();
    Stage2Epoch r;
    r.epoch = epoch;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
        auto l = batch_loss(pick(train_, order, b, std::min(order.size(), b + batch)));
        const double total = l.total.item();
        check_finite(total, "stage-2 loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
        adam_.zero_grad();
        l.total.backward();
        nn::clip_grad_norm(params, config_.grad_clip);
        adam_.step();
        r.poi += l.poi.item();
        r.time += l.time.item();
        r.spatial += l.spatial.item();
        r.total += total;
        ++batches;
    }
    r.poi /= batches;
    r.time /= batches;
    r.spatial /= batches;
    r.total /= batches;
    r.val_total = val_.empty() ? r.total : evaluate(val_);
    check_finite(r.val_total, "stage-2 validation loss at epoch " + std::to_string(epoch));
    plateau_.step(r.val_total, adam_);
    r.lr = adam_.lr();
    return r;
}

Stage2Summary cmd_train_stage2(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    require_file(paths.train, "run ingest first");
    require_file(paths.catalog, "run ingest first");
    const auto catalog = read_catalog(paths.catalog);
    const auto train_trajs = read_trajectories(paths.train);
    std::vector<Trajectory> val_trajs;
    if (fs::exists(paths.val)) val_trajs = read_trajectories(paths.val);
    const auto stats = compute_norm_stats(reconstruct_all(train_trajs, catalog, config.interval_seconds));
    auto train = make_training_pairs(train_trajs, catalog, config);
    auto val = make_training_pairs(val_trajs, catalog, config);
    Stage2Summary summary;
    summary.pairs = train.size();
    log << "stage2: " << train.size() << " training pairs, " << val.size() << " validation pairs\n";

    Stage2Trainer trainer(config, catalog, stats, std::move(train), std::move(val));
    fs::create_directories(paths.stage2_dir);
    std::ofstream csv(paths.stage2_log);
    if (!csv) throw IoError("cannot write " + paths.stage2_log.string());
    csv << std::setprecision(10) << "epoch,poi,time,spatial,total,val_total,lr\n";
    for (int epoch = 1; epoch <= config.stage2_epochs; ++epoch) {
        const auto r = trainer.run_epoch(epoch);
        summary.history.push_back(r);
        csv << r.epoch << "," << r.poi << "," << r.time << "," << r.spatial << "," << r.total << "," << r.val_total
            << "," << r.lr << "\n";
        log << "stage2 epoch " << epoch << " poi " << r.poi << " time " << r.time << " spatial " << r.spatial
            << " val " << r.val_total << " lr " << r.lr << "\n";
    }
    Checkpoint ck;
    ck.put_group("model/", trainer.model().values());
    ck.meta["stats"] = stats_json(stats);
    ck.meta["epoch"] = config.stage2_epochs;
    save_checkpoint(paths.stage2_model, std::move(ck), "stage2", config);
    return summary;
}

std::vector<std::vector<CheckIn>> generate_trajectories(SasgUNet& denoiser, Coarse2FineNet& c2f,
                                                        const PipelineConfig& config, const NormStats& stats,
                                                        std::size_t count, std::uint64_t seed,
                                                        GenerateSummary& summary) {
    const auto schedule = config.schedule();
    const auto L = static_cast<std::int64_t>(config.latent_length());
    const auto batch = static_cast<std::size_t>(config.generate_batch);
    const Rng root(seed);
    const Denoiser fn = [&](const Tensor& x, int n) { return denoiser(x, n); };
    summary.requested += count;

    auto sample_filtered = [&](std::size_t n, Rng& rng) {
        const Tensor z = sample(fn, {static_cast<std::int64_t>(n), L, kLatentChannels}, schedule, rng);
        std::vector<std::optional<FilteredSequence>> out;
        for (const auto& s : denormalize(z, stats, config.interval_seconds, config.window_seconds)) {
            try {
                out.emplace_back(filter_sequence(s, config.gamma, static_cast<std::size_t>(config.max_len)));
            } catch (const std::invalid_argument&) {
                out.emplace_back(std::nullopt);
            }
        }
        return out;
    };

    std::vector<FilteredSequence> sources;
    std::vector<Rng> streams;
    for (std::size_t b0 = 0, bi = 0; b0 < count; b0 += batch, ++bi) {
        const std::size_t n = std::min(batch, count - b0);
        Rng rng = root.derive("generate-latent", bi);
        auto got = sample_filtered(n, rng);
        for (int attempt = 1; attempt <= config.max_resamples; ++attempt) {
            std::vector<std::size_t> missing;
            for (std::size_t i = 0; i < got.size(); ++i)
                if (!got[i]) missing.push_back(i);
            if (missing.empty()) break;
            summary.resamples += missing.size();
            Rng retry = root.derive("generate-resample", bi * 1024 + static_cast<std::uint64_t>(attempt));
            auto redo = sample_filtered(missing.size(), retry);
            for (std::size_t k = 0; k < missing.size(); ++k) got[missing[k]] = std::move(redo[k]);
        }
        for (std::size_t i = 0; i < got.size(); ++i) {
            if (!got[i]) {
                ++summary.skipped;
                continue;
            }
            sources.push_back(std::move(*got[i]));
            streams.push_back(root.derive("c2f", b0 + i));
        }
    }

    std::vector<std::vector<CheckIn>> out;
    for (std::size_t b0 = 0; b0 < sources.size(); b0 += batch) {
        const std::size_t e = std::min(sources.size(), b0 + batch);
        const std::vector<FilteredSequence> src(sources.begin() + static_cast<std::ptrdiff_t>(b0),
                                                sources.begin() + static_cast<std::ptrdiff_t>(e));
        const std::vector<Rng> rngs(streams.begin() + static_cast<std::ptrdiff_t>(b0),
                                    streams.begin() + static_cast<std::ptrdiff_t>(e));
        for (auto& g : c2f.generate(src, config.window_seconds, rngs)) out.push_back(std::move(g.checkins));
    }
    return out;
}

GenerateSummary cmd_generate(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    require_file(paths.stage1_final, "run train-stage1 first");
    require_file(paths.stage2_model, "run train-stage2 first");
    require_file(paths.catalog, "run ingest first");
    const auto s1 = load_checkpoint(paths.stage1_final, "stage1");
    const auto s2 = load_checkpoint(paths.stage2_model, "stage2");
    const auto catalog = read_catalog(paths.catalog);
    // Architectures come from the configs embedded in the checkpoints.
    const auto c1 = checkpoint_config(s1);
    const auto c2 = checkpoint_config(s2);
    if (std::abs(c1.interval_seconds - c2.interval_seconds) > 1e-9 ||
        std::abs(c1.window_seconds - c2.window_seconds) > 1e-9) {
        throw ConfigError("stage-1 and stage-2 checkpoints disagree on interval or window");
    }
    const auto s1_stats = stats_from_json(s1.meta.at("stats"));
    SasgUNet denoiser = build_denoiser(c1.denoiser(), c1.seed);
    denoiser.load_values(s1.group("ema/"));
    denoiser.set_spatial_context(make_spatial_context(s1_stats, catalog));
    Coarse2FineNet c2f = build_c2f(c2, catalog, stats_from_json(s2.meta.at("stats")));
    c2f.load_values(s2.group("model/"));

    PipelineConfig run = c1;
    run.generate_count = config.generate_count;
    run.generate_batch = config.generate_batch;
    run.max_resamples = config.max_resamples;
    run.gamma = c2.gamma;
    run.max_len = c2.max_len;

    GenerateSummary summary;
    const auto generated = generate_trajectories(denoiser, c2f, run, s1_stats,
                                                 static_cast<std::size_t>(config.generate_count), config.seed, summary);
    std::vector<Trajectory> trajs;
    for (const auto& g : generated) {
        if (g.empty()) {
            ++summary.empty;
            continue;
        }
        trajs.emplace_back(g, c1.window_seconds);
    }
    summary.written = trajs.size();
    write_trajectories(paths.synthetic, trajs, catalog);

    nlohmann::ordered_json j;
    j["config_hash"] = hash_hex(config.hash());
    j["seed"] = config.seed;
    j["requested"] = summary.requested;
    j["written"] = summary.written;
    j["empty"] = summary.empty;
    j["skipped"] = summary.skipped;
    j["resamples"] = summary.resamples;
    write_json(paths.generate_summary, j);
    log << "generate: " << summary.written << " of " << summary.requested << " trajectories written (" << summary.skipped
        << " skipped after " << summary.resamples << " resamples, " << summary.empty << " empty)\n";
    return summary;
}

EvaluateSummary cmd_evaluate(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    require_file(paths.synthetic, "run generate first");
    require_file(paths.test, "run ingest first");
    require_file(paths.catalog, "run ingest first");
    const auto catalog = read_catalog(paths.catalog);
    const auto real = checkin_lists(read_trajectories(paths.test));
    const auto synth = checkin_lists(read_trajectories(paths.synthetic));
    std::vector<std::vector<CheckIn>> real_train;
    if (fs::exists(paths.train)) real_train = checkin_lists(read_trajectories(paths.train));

    EvaluateSummary s;
    s.report = fidelity_report(real, synth, catalog, config.histogram_bins);
    UtilityOptions uo;
    uo.hidden = config.utility_hidden;
    uo.epochs = config.utility_epochs;
    std::map<std::string, double> extra{{"real_trajectories", static_cast<double>(real.size())},
                                        {"synthetic_trajectories", static_cast<double>(synth.size())}};
    try {
        s.synthetic_utility = utility_benchmark(synth, real, catalog, config.seed, uo);
        extra["utility_synthetic_rmse"] = s.synthetic_utility.rmse;
        extra["utility_synthetic_ed_km"] = s.synthetic_utility.ed_km;
        if (!real_train.empty()) {
            s.real_utility = utility_benchmark(real_train, real, catalog, config.seed, uo);
            extra["utility_real_rmse"] = s.real_utility.rmse;
            extra["utility_real_ed_km"] = s.real_utility.ed_km;
        }
    } catch (const DataError& e) {
        log << "evaluate: utility benchmark skipped: " << e.what() << "\n";
    }
    write_fidelity_report(paths.eval_dir, s.report, extra);
    write_density_csv(paths.eval_dir / "density_real.csv", real, catalog, config.density_cell_deg);
    write_density_csv(paths.eval_dir / "density_synth.csv", synth, catalog, config.density_cell_deg);
    log << "evaluate: jsd distance " << s.report.jsd_distance << " radius " << s.report.jsd_radius << " interval "
        << s.report.jsd_interval << " length " << s.report.jsd_length << "\n";
    return s;
}

std::optional<DenoiserConfig> fit_denoiser(DenoiserConfig config, std::int64_t length) {
    config.sequence_length = length;
    auto valid = [&] {
        try {
            config.validate();
            return true;
        } catch (const std::invalid_argument&) {
            return false;
        }
    };
    while (!valid() && config.levels() > 1) {
        config.channel_multipliers.pop_back();
        if (config.attention_level >= config.levels()) config.attention_level = -1;
    }
    while (!valid() && config.pool_kernels.size() > 2) {
        config.pool_kernels.erase(std::max_element(config.pool_kernels.begin(), config.pool_kernels.end()));
    }
    if (!valid()) return std::nullopt;
    return config;
}

ThroughputResult measure_stage1(Stage1Trainer& trainer, int epochs) {
    if (epochs < 1) throw std::invalid_argument("throughput needs at least one epoch");
    for (int e = 1; e < epochs; ++e) trainer.run_epoch(e);
    nn::reset_peak_memory();
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run_epoch(epochs);
    const double secs = seconds_since(t0);
    return {static_cast<double>(trainer.train_size()) / secs, nn::memory_stats().peak_bytes};
}

std::vector<SweepRow> cmd_sweep(const PipelineConfig& config, const RunPaths& paths, std::ostream& log) {
    require_file(paths.train, "run ingest first");
    require_file(paths.catalog, "run ingest first");
    const auto catalog = read_catalog(paths.catalog);
    const auto train_trajs = read_trajectories(paths.train);
    std::vector<std::vector<CheckIn>> test;
    if (fs::exists(paths.test)) test = checkin_lists(read_trajectories(paths.test));
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<SweepRow> rows;
    for (double interval : config.sweep_intervals) {
        PipelineConfig c = config;
        c.interval_seconds = interval;
        c.stage1_epochs = config.sweep_stage1_epochs;
        c.stage2_epochs = std::max(1, config.sweep_stage2_epochs);
        SweepRow row;
        row.interval = interval;
        row.length = c.latent_length();
        row.jsd_distance = row.jsd_radius = row.jsd_interval = row.jsd_length = nan;
        row.s2_memory_gb = row.s2_throughput = nan;
        const auto denoiser = fit_denoiser(c.denoiser(), static_cast<std::int64_t>(row.length));
        if (!denoiser) {
            log << "sweep: interval " << interval << " s leaves " << row.length << " slots, too short for the denoiser\n";
            row.s1_memory_gb = row.s1_throughput = nan;
            rows.push_back(row);
            continue;
        }
        auto latents = reconstruct_all(train_trajs, catalog, interval);
        const auto stats = compute_norm_stats(latents);
        Stage1Trainer s1(c, *denoiser, std::move(latents), stats, make_spatial_context(stats, catalog));
        const auto m1 = measure_stage1(s1, config.sweep_stage1_epochs);
        row.s1_throughput = m1.sequences_per_second;
        row.s1_memory_gb = static_cast<double>(m1.peak_bytes) / kBytesPerGb;

        if (config.sweep_stage2_epochs > 0) {
            Stage2Trainer s2(c, catalog, stats, make_training_pairs(train_trajs, catalog, c), {});
            for (int e = 1; e < config.sweep_stage2_epochs; ++e) s2.run_epoch(e);
            nn::reset_peak_memory();
            const auto t0 = std::chrono::steady_clock::now();
            s2.run_epoch(config.sweep_stage2_epochs);
            row.s2_throughput = static_cast<double>(s2.train_size()) / seconds_since(t0);
            row.s2_memory_gb = static_cast<double>(nn::memory_stats().peak_bytes) / kBytesPerGb;
            if (!test.empty()) {
                SasgUNet& model = s1.model();
                model.load_values(s1.ema().shadow);
                GenerateSummary gs;
                const auto synth = generate_trajectories(model, s2.model(), c, stats,
                                                         static_cast<std::size_t>(config.sweep_generate_count),
                                                         config.seed, gs);
                const auto rep = fidelity_report(test, synth, catalog, config.histogram_bins);
                row.jsd_distance = rep.jsd_distance;
                row.jsd_radius = rep.jsd_radius;
                row.jsd_interval = rep.jsd_interval;
                row.jsd_length = rep.jsd_length;
            }
        }
        log << "sweep: interval " << interval << " s, L=" << row.length << ", stage-1 " << row.s1_throughput
            << " seq/s, peak " << row.s1_memory_gb << " GB\n";
        rows.push_back(row);
    }
    write_sweep_csv(paths.sweep_csv, rows);
    return rows;
}

void write_sweep_csv(const fs::path& path, const std::vector<SweepRow>& rows) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(6) << "Metric";
    for (const auto& r : rows) {
        const double h = r.interval / kSecondsPerHour;
        out << "," << h << (h == 1.0 ? " hour" : " hours");
    }
    out << "\n";
    auto line = [&](const char* name, double SweepRow::*field) {
        out << name;
        for (const auto& r : rows) {
            out << ",";
            if (std::isfinite(r.*field)) out << r.*field;
        }
        out << "\n";
    };
    line("Distance", &SweepRow::jsd_distance);
    line("Radius", &SweepRow::jsd_radius);
    line("Interval", &SweepRow::jsd_interval);
    line("Length", &SweepRow::jsd_length);
    line("S1 Memory (GB)", &SweepRow::s1_memory_gb);
    line("S2 Memory (GB)", &SweepRow::s2_memory_gb);
    line("S1 Throughput", &SweepRow::s1_throughput);
    line("S2 Throughput", &SweepRow::s2_throughput);
}

}  // namespace geogen
