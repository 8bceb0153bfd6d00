#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace geogen {

// Seeded generator with portable uniform/normal/integer draws. Named
// sub-streams are derived from the root seed, so each consumer gets an
// independent, reproducible sequence regardless of call order elsewhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Uniform in [0, 1).
    double uniform();
    // Uniform in the open interval (0, 1).
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double exponential(double rate);
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    Rng derive(std::string_view name) const;
    Rng derive(std::string_view name, std::uint64_t index) const;

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace geogen
