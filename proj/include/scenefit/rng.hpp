#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace scenefit {

// Deterministic RNG used everywhere in the pipeline. Normal sampling is a
// hand-rolled Box-Muller on top of splitmix/xoshiro-style mixing so streams
// are reproducible across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    // inclusive range
    int uniform_int(int lo, int hi);
    double normal();
    double normal(double mean, double stddev);
    std::vector<double> normal_vec(size_t n);
    std::vector<double> uniform_vec(size_t n);

private:
    uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable stream derivation: hash(seed, tag) gives an independent child seed.
uint64_t derive_seed(uint64_t seed, std::string_view tag);
uint64_t derive_seed(uint64_t seed, uint64_t index);

}  // namespace scenefit
