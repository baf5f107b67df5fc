#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace jscc {

// splitmix64; used to derive independent seed streams from (seed, tags).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = mix64(seed ^ 0x243f6a8885a308d3ULL);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b));
    s = mix64(s ^ mix64(c));
    return s;
}

// Seeded random source. Each worker owns its own instance; no shared state.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }

    uint64_t next_u64() { return gen_(); }

    // Circularly-symmetric complex Gaussian noise with total per-symbol
    // variance noise_var: real and imaginary parts each carry noise_var/2.
    // Fills an interleaved (re, im, re, im, ...) buffer.
    void fill_complex_noise(double noise_var, std::span<double> interleaved) {
        const double sigma = std::sqrt(noise_var / 2.0);
        std::normal_distribution<double> d(0.0, sigma);
        for (double& v : interleaved) v = d(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

}  // namespace jscc
