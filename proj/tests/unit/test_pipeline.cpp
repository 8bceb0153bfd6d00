#include "doctest.h"

#include "geogen/cli.hpp"
#include "geogen/fixtures.hpp"
#include "geogen/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace geogen;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config() {
    PipelineConfig c = desk_config();
    c.interval_seconds = 4 * kSecondsPerHour;  // L = 42
    c.diffusion_steps = 20;
    c.beta_start = 1e-3;
    c.beta_end = 0.3;
    c.stage1_epochs = 4;
    c.stage1_batch = 8;
    c.val_every = 2;
    c.checkpoint_every = 2;
    c.base_channels = 8;
    c.bias_embed_dim = 4;
    c.stage2_epochs = 2;
    c.stage2_batch = 8;
    c.d_model = 16;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.ff_dim = 32;
    c.generate_count = 4;
    c.generate_batch = 2;
    c.utility_hidden = 4;
    c.utility_epochs = 1;
    c.sweep_intervals = {4 * kSecondsPerHour, 8 * kSecondsPerHour};
    c.sweep_stage1_epochs = 1;
    c.sweep_stage2_epochs = 0;
    c.seed = 5;
    return c;
}

// Scratch directory with a 30-user corpus and the tiny config next to it.
struct Workspace {
    fs::path dir;
    fs::path config_path;
    PipelineConfig config;

    explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("geogen-test-" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        MarkovFixture fx;
        fx.users = 30;
        Rng rng = Rng(1).derive("markov-fixture");
        write_raw_checkins(dir / "checkins.tsv", markov_checkins(fx, rng));
        config = tiny_config();
        config_path = dir / "config.json";
        save_config(config_path, config);
        config = load_config(config_path);
    }
    ~Workspace() { fs::remove_all(dir); }

    RunPaths run(const std::string& name = "run") const { return RunPaths(dir / name); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    return run_cli(args, out, err);
}

std::size_t checkin_count(const std::vector<Trajectory>& trajs) {
    std::size_t n = 0;
    for (const auto& t : trajs) n += t.size();
    return n;
}

}  // namespace

TEST_CASE("config round trip, hashing and validation") {
    const auto c = tiny_config();
    const auto back = PipelineConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(back.to_json() == c.to_json());
    CHECK(back.hash() == c.hash());

    auto d = c;
    d.stage1_lr *= 2;
    CHECK(d.hash() != c.hash());
    CHECK(hash_hex(c.hash()).size() == 16);

    SUBCASE("unknown key") {
        auto j = nlohmann::json::parse(c.to_json().dump());
        j["stage1_lr_typo"] = 1;
        CHECK_THROWS_AS(PipelineConfig::from_json(j), ConfigError);
    }
    SUBCASE("wrong type") {
        auto j = nlohmann::json::parse(c.to_json().dump());
        j["stage1_epochs"] = "many";
        CHECK_THROWS_AS(PipelineConfig::from_json(j), ConfigError);
        j["stage1_epochs"] = 2.5;
        CHECK_THROWS_AS(PipelineConfig::from_json(j), ConfigError);
    }
    SUBCASE("invalid values") {
        auto bad = c;
        bad.split_test = 0.3;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.beta_end = bad.beta_start / 2;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.ema_rate = 1.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.dataset_format = "brightkite";
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.pool_kernels = {2, 4, 64};  // kernel longer than the sequence
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SUBCASE("defaults validate") { CHECK_NOTHROW(PipelineConfig{}.validate()); }
}

TEST_CASE("config files") {
    const fs::path dir = fs::temp_directory_path() / "geogen-test-config";
    fs::remove_all(dir);
    save_config(dir / "c.json", tiny_config());
    const auto loaded = load_config(dir / "c.json");
    CHECK(fs::path(loaded.dataset_path) == (dir / "checkins.tsv").lexically_normal());

    CHECK_THROWS_AS(load_config(dir / "absent.json"), IoError);
    std::ofstream(dir / "broken.json") << "{\"seed\": ";
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip and integrity checks") {
    const fs::path dir = fs::temp_directory_path() / "geogen-test-checkpoint";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto config = tiny_config();
    Checkpoint ck;
    ck.put_group("model/", {{"w", {1.5, -2.25, 1e-300}}, {"b", {}}});
    ck.tensors["adam/step"] = {3};
    ck.meta["epoch"] = 7;
    save_checkpoint(dir / "a.ggck", ck, "stage1", config);

    const auto back = load_checkpoint(dir / "a.ggck", "stage1");
    CHECK(back.group("model/") == ck.group("model/"));
    CHECK(back.tensors.at("adam/step") == std::vector<double>{3});
    CHECK(back.meta.at("epoch") == 7);
    CHECK(back.meta.at("config_hash") == hash_hex(config.hash()));
    CHECK(checkpoint_config(back).hash() == config.hash());

    CHECK_THROWS_AS(load_checkpoint(dir / "a.ggck", "stage2"), ConfigError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ggck", "stage1"), IoError);

    SUBCASE("truncated") {
        const auto bytes = slurp(dir / "a.ggck");
        std::ofstream(dir / "t.ggck", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
        CHECK_THROWS_AS(load_checkpoint(dir / "t.ggck", "stage1"), IoError);
    }
    SUBCASE("config edited after saving") {
        auto bytes = slurp(dir / "a.ggck");
        const auto pos = bytes.find("\"stage1_epochs\":4");
        REQUIRE(pos != std::string::npos);
        bytes[pos + 16] = '5';
        std::ofstream(dir / "e.ggck", std::ios::binary) << bytes;
        CHECK_THROWS_AS(load_checkpoint(dir / "e.ggck", "stage1"), ConfigError);
    }
    fs::remove_all(dir);
}

TEST_CASE("ingest splits 7:2:1 and is reproducible") {
    Workspace ws("ingest");
    std::ostringstream log;
    const auto a = ws.run("a"), b = ws.run("b");
    const auto s = cmd_ingest(ws.config, a, log);
    cmd_ingest(ws.config, b, log);
    CHECK(s.trajectories == 30);
    CHECK(s.pois == 5);
    CHECK(s.train == 21);
    CHECK(s.val == 6);
    CHECK(s.test == 3);
    CHECK(s.train + s.val + s.test == s.trajectories);
    CHECK(slurp(a.manifest) == slurp(b.manifest));
    CHECK(slurp(a.train) == slurp(b.train));
    CHECK(checkin_count(read_trajectories(a.train)) + checkin_count(read_trajectories(a.val)) +
              checkin_count(read_trajectories(a.test)) ==
          s.records);

    auto other = ws.config;
    other.seed = 6;
    cmd_ingest(other, ws.run("c"), log);
    CHECK(slurp(a.train) != slurp(ws.run("c").train));
}

TEST_CASE("cli exit codes") {
    Workspace ws("cli");
    const std::string out = (ws.dir / "run").string();
    const std::string cfg = ws.config_path.string();

    CHECK(cli({"--help"}) == kExitOk);
    CHECK(cli({"ingest"}) == kExitInvalid);  // --out is required
    CHECK(cli({"frobnicate", "--out", out}) == kExitInvalid);

    SUBCASE("missing dataset") {
        auto c = ws.config;
        c.dataset_path = (ws.dir / "nowhere.tsv").string();
        save_config(ws.dir / "missing.json", c);
        CHECK(cli({"ingest", "--config", (ws.dir / "missing.json").string(), "--out", out}) == kExitMissing);
        CHECK(cli({"ingest", "--config", (ws.dir / "absent.json").string(), "--out", out}) == kExitMissing);
    }
    SUBCASE("invalid config") {
        std::ofstream(ws.dir / "bad.json") << "{\"stage1_epochs\": 0}";
        CHECK(cli({"ingest", "--config", (ws.dir / "bad.json").string(), "--out", out}) == kExitInvalid);
    }
    SUBCASE("unsupported device") {
        ::setenv("GEOGEN_DEVICE", "cuda:0", 1);
        CHECK(cli({"ingest", "--config", cfg, "--out", out}) == kExitInvalid);
        ::setenv("GEOGEN_DEVICE", "cpu", 1);
        CHECK(cli({"ingest", "--config", cfg, "--out", out}) == kExitOk);
        ::unsetenv("GEOGEN_DEVICE");
    }
    SUBCASE("later stages need earlier outputs") {
        CHECK(cli({"reconstruct", "--config", cfg, "--out", out}) == kExitMissing);
        CHECK(cli({"ingest", "--config", cfg, "--out", out}) == kExitOk);
        CHECK(cli({"generate", "--out", out}) == kExitMissing);  // reuses <out>/config.json
        CHECK(cli({"train-stage1", "--out", out}) == kExitMissing);
        CHECK(cli({"evaluate", "--out", out}) == kExitMissing);
    }
}

TEST_CASE("stage 1 resumes exactly and checkpoints on cadence") {
    Workspace ws("stage1");
    std::ostringstream log;
    const auto full = ws.run("full"), split = ws.run("split");
    for (const auto& p : {full, split}) {
        cmd_ingest(ws.config, p, log);
        cmd_reconstruct(ws.config, p, log);
    }
    const auto whole = cmd_train_stage1(ws.config, full, log);
    REQUIRE(whole.train_loss.size() == 4);
    CHECK(whole.train_loss.back() < whole.train_loss.front());
    CHECK(fs::exists(full.stage1_epoch(2)));
    CHECK(fs::exists(full.stage1_epoch(4)));
    CHECK_FALSE(fs::exists(full.stage1_epoch(1)));
    CHECK_FALSE(fs::exists(full.stage1_epoch(3)));
    CHECK(fs::exists(full.stage1_final));
    CHECK(whole.val_loss.size() == 2);

    const auto first = cmd_train_stage1(ws.config, split, log, Stage1Options{3});
    CHECK(first.last_epoch == 3);
    CHECK_FALSE(fs::exists(split.stage1_final));
    const auto rest = cmd_train_stage1(ws.config, split, log);
    CHECK(rest.first_epoch == 4);
    CHECK(rest.train_loss == whole.train_loss);
    CHECK(load_checkpoint(split.stage1_final, "stage1").tensors == load_checkpoint(full.stage1_final, "stage1").tensors);

    auto changed = ws.config;
    changed.stage1_lr *= 2;
    CHECK_THROWS_AS(cmd_train_stage1(changed, split, log), ConfigError);
}

TEST_CASE("generate is deterministic and evaluate scores the output") {
    Workspace ws("generate");
    std::ostringstream log;
    const auto p = ws.run();
    cmd_ingest(ws.config, p, log);
    cmd_reconstruct(ws.config, p, log);
    cmd_train_stage1(ws.config, p, log);
    const auto s2 = cmd_train_stage2(ws.config, p, log);
    CHECK(s2.history.size() == 2);

    const auto g1 = cmd_generate(ws.config, p, log);
    const auto first = slurp(p.synthetic);
    cmd_generate(ws.config, p, log);
    CHECK(slurp(p.synthetic) == first);
    CHECK(g1.requested == 4);
    CHECK(g1.written + g1.empty + g1.skipped == 4);

    auto other = ws.config;
    other.seed = 99;
    cmd_generate(other, p, log);
    CHECK(slurp(p.synthetic) != first);

    const auto e = cmd_evaluate(ws.config, p, log);
    CHECK(fs::exists(p.eval_dir / "fidelity.txt"));
    for (double v : {e.report.jsd_distance, e.report.jsd_radius, e.report.jsd_interval, e.report.jsd_length}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    SUBCASE("real against itself") {
        fs::copy_file(p.test, p.synthetic, fs::copy_options::overwrite_existing);
        const auto self = cmd_evaluate(ws.config, p, log);
        CHECK(self.report.jsd_distance == 0.0);
        CHECK(self.report.jsd_radius == 0.0);
        CHECK(self.report.jsd_interval == 0.0);
        CHECK(self.report.jsd_length == 0.0);
    }
    SUBCASE("density mass equals the check-in count") {
        std::ifstream in(p.eval_dir / "density_real.csv");
        std::string line;
        std::getline(in, line);
        CHECK(line == "row,col,lat,lon,count");
        double total = 0;
        while (std::getline(in, line)) total += std::stod(line.substr(line.rfind(',') + 1));
        CHECK(total == static_cast<double>(checkin_count(read_trajectories(p.test))));
    }
}

TEST_CASE("sweep writes one column per interval") {
    Workspace ws("sweep");
    std::ostringstream log;
    const auto p = ws.run();
    cmd_ingest(ws.config, p, log);
    const auto rows = cmd_sweep(ws.config, p, log);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].length == 42);
    CHECK(rows[1].length == 21);
    for (const auto& r : rows) {
        CHECK(r.s1_throughput > 0);
        CHECK(r.s1_memory_gb > 0);
        CHECK(std::isnan(r.jsd_length));
    }
    std::ifstream in(p.sweep_csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 9);
    CHECK(lines[0] == "Metric,4 hours,8 hours");
    CHECK(lines[1] == "Distance,,");
    CHECK(lines[7].rfind("S1 Throughput,", 0) == 0);
    CHECK(lines[8].rfind("S2 Throughput,", 0) == 0);
}

TEST_CASE("fit_denoiser shrinks the network to fit short sequences") {
    const DenoiserConfig base = PipelineConfig{}.denoiser();
    for (std::int64_t L : {168, 84, 56, 42, 28, 21, 14}) {
        const auto fit = fit_denoiser(base, L);
        REQUIRE(fit.has_value());
        CHECK(fit->sequence_length == L);
        CHECK_NOTHROW(fit->validate());
        CHECK(fit->levels() <= base.levels());
    }
    const auto same = fit_denoiser(base, 168);
    CHECK(same->channel_multipliers == base.channel_multipliers);
    CHECK(same->pool_kernels == base.pool_kernels);
    CHECK_FALSE(fit_denoiser(base, 1).has_value());
}
