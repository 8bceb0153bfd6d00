// Writes the scripted Markov check-in corpus and a matching desk-scale config.
#include "geogen/fixtures.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Write the Markov fixture corpus and desk config", "geogen-fixture"};
    std::string out;
    std::size_t users = 200;
    std::uint64_t seed = 0;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--users", users, "Number of one-week trajectories");
    app.add_option("--seed", seed, "Fixture seed");
    CLI11_PARSE(app, argc, argv);
    try {
        geogen::MarkovFixture fx;
        fx.users = users;
        geogen::Rng rng = geogen::Rng(seed).derive("markov-fixture");
        const std::filesystem::path dir(out);
        geogen::write_raw_checkins(dir / "checkins.tsv", geogen::markov_checkins(fx, rng));
        geogen::save_config(dir / "desk.json", geogen::desk_config());
        std::cout << "wrote " << (dir / "checkins.tsv").string() << " and " << (dir / "desk.json").string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "geogen-fixture: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
