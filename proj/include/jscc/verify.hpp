#pragma once

#include <cstdint>

#include "jscc/signal.hpp"

namespace jscc {

// Monte-Carlo and numeric-search checks of the closed-form channel results.
// Used by the `simulate --verify` CLI and by the test suite.

struct MrcTrial {
    LinkSet links;
    LinkSet::MrcWeights analytic;
    LinkSet::MrcWeights numeric;   // from golden-section search
    double weight_err = 0.0;       // max |analytic - numeric|
    double predicted_snr = 0.0;    // linear, from the closed form
    double empirical_snr = 0.0;    // linear, measured over `symbols`
};

// Draws a random finite-SNR link set (seeded), compares the analytic
// combiner weights against a numeric minimizer of the post-combining noise
// under the unbiasedness constraint, and measures the combined SNR.
MrcTrial verify_mrc_once(uint64_t seed, size_t symbols);

// Numeric-only variant (no Monte-Carlo) for fast mass comparison.
LinkSet::MrcWeights numeric_mrc_weights(const LinkSet& links);

struct AfNoiseTrial {
    LinkSet links;
    double predicted_var = 0.0;
    double empirical_var = 0.0;
    double rel_err = 0.0;
};

// Measures the variance of the relayed-branch aggregate noise
// y_rd - beta*alpha_rd*alpha_sr*x against the closed form.
AfNoiseTrial verify_af_noise_once(uint64_t seed, size_t symbols);

// Random finite-SNR link set in a given dB range.
LinkSet random_links(uint64_t seed, double lo_db = -5.0, double hi_db = 25.0);

}  // namespace jscc
