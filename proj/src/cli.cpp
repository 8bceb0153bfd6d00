#include "geogen/cli.hpp"

#include "geogen/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <map>
#include <ostream>

namespace geogen {

namespace {

struct Command {
    const char* name;
    const char* help;
    std::function<void(const PipelineConfig&, const RunPaths&, std::ostream&)> run;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> list{
        {"ingest", "Parse the raw check-in file, build trajectories, the POI catalog and the 7:2:1 split",
         [](const auto& c, const auto& p, auto& log) { cmd_ingest(c, p, log); }},
        {"reconstruct", "Build latent movement sequences for the train and validation splits",
         [](const auto& c, const auto& p, auto& log) { cmd_reconstruct(c, p, log); }},
        {"train-stage1", "Train the diffusion denoiser (resumes from stage1/latest.ggck)",
         [](const auto& c, const auto& p, auto& log) { cmd_train_stage1(c, p, log); }},
        {"train-stage2", "Train the coarse-to-fine trajectory decoder",
         [](const auto& c, const auto& p, auto& log) { cmd_train_stage2(c, p, log); }},
        {"generate", "Sample synthetic trajectories from both trained stages",
         [](const auto& c, const auto& p, auto& log) { cmd_generate(c, p, log); }},
        {"evaluate", "Score synthetic trajectories against the test split",
         [](const auto& c, const auto& p, auto& log) { cmd_evaluate(c, p, log); }},
        {"sweep", "Interval sweep: throughput, memory and fidelity per coarse interval",
         [](const auto& c, const auto& p, auto& log) { cmd_sweep(c, p, log); }},
    };
    return list;
}

// Only the CPU backend exists; anything else is rejected rather than ignored.
void check_device() {
    const char* dev = std::getenv("GEOGEN_DEVICE");
    if (!dev || !*dev) return;
    std::string d(dev);
    std::transform(d.begin(), d.end(), d.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (d != "cpu" && d != "auto") throw ConfigError("GEOGEN_DEVICE=" + std::string(dev) + " is not available (cpu only)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-stage synthetic check-in trajectory generator", "geogen"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    std::map<CLI::App*, const Command*> subs;
    std::map<CLI::App*, CLI::Option*> seed_opts;
    for (const auto& cmd : commands()) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", config_path, "Config JSON (default: <out>/config.json if present)");
        seed_opts[sub] = sub->add_option("--seed", seed, "Root seed, overrides the config");
        sub->add_option("--out", out_dir, "Run directory")->required();
        subs[sub] = &cmd;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "geogen: " << e.what() << "\n";
        return kExitInvalid;
    }

    try {
        check_device();
        const RunPaths paths(out_dir);
        PipelineConfig config;
        if (!config_path.empty()) {
            config = load_config(config_path);
        } else if (std::filesystem::exists(paths.config)) {
            config = load_config(paths.config);
        }
        for (const auto& [sub, cmd] : subs) {
            if (!sub->parsed()) continue;
            if (seed_opts[sub]->count() > 0) config.seed = seed;
            config.validate();
            cmd->run(config, paths, out);
        }
        return kExitOk;
    } catch (const IoError& e) {
        err << "geogen: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::exception& e) {
        err << "geogen: " << e.what() << "\n";
        return kExitInvalid;
    }
}

}  // namespace geogen
