#include "jscc/verify.hpp"

#include <cmath>

#include "jscc/channel.hpp"
#include "jscc/rng.hpp"

namespace jscc {

LinkSet random_links(uint64_t seed, double lo_db, double hi_db) {
    Rng rng(derive_seed(seed, 0x6c696e6bULL));
    const SnrTriple t{rng.uniform(lo_db, hi_db), rng.uniform(lo_db, hi_db),
                      rng.uniform(lo_db, hi_db)};
    return LinkSet::from_snr(t);
}

namespace {

// Post-combining noise variance for weights (w1, w2) on the two branches.
double combined_noise_var(const LinkSet& links, double w1, double w2) {
    return w1 * w1 * links.sd.effective_noise_var() +
           w2 * w2 * links.effective_af_noise_var();
}

}  // namespace

LinkSet::MrcWeights numeric_mrc_weights(const LinkSet& links) {
    const double g1 = links.sd.alpha;
    const double g2 = links.af_relay_gain();
    if (g2 == 0.0) return {1.0 / g1, 0.0};
    if (g1 == 0.0) return {0.0, 1.0 / g2};

    // Unbiasedness pins w2 = (1 - w1 g1) / g2; search w1 by golden section.
    const auto noise_of = [&](double w1) {
        return combined_noise_var(links, w1, (1.0 - w1 * g1) / g2);
    };
    double a = -2.0 / g1, b = 3.0 / g1;  // generous bracket around [0, 1/g1]
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (noise_of(c) < noise_of(d))
            b = d;
        else
            a = c;
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    const double w1 = (a + b) / 2.0;
    return {w1, (1.0 - w1 * g1) / g2};
}

MrcTrial verify_mrc_once(uint64_t seed, size_t symbols) {
    MrcTrial t;
    t.links = random_links(seed);
    t.analytic = t.links.mrc_weights();
    t.numeric = numeric_mrc_weights(t.links);
    t.weight_err = std::max(std::abs(t.analytic.w_sd - t.numeric.w_sd),
                            std::abs(t.analytic.w_rd - t.numeric.w_rd));
    t.predicted_snr = t.links.mrc_output_snr();

    // Unit-power random word through both branches, AF at the relay.
    Rng src(derive_seed(seed, 0x737263ULL));
    ComplexSignal x(symbols);
    for (auto& s : x.symbols) s = {src.normal(), src.normal()};
    x = normalize_power(x);

    Rng n_sr(derive_seed(seed, 1)), n_sd(derive_seed(seed, 2)), n_rd(derive_seed(seed, 3));
    const ComplexSignal y_sr = awgn_link(x, t.links.sr, n_sr);
    const ComplexSignal y_sd = awgn_link(x, t.links.sd, n_sd);
    const ComplexSignal z = af_scale(y_sr, t.links.sr);
    const ComplexSignal y_rd = awgn_link(z, t.links.rd, n_rd);
    const ComplexSignal comb = mrc_combine(y_sd, y_rd, t.links);

    double err_power = 0.0;
    for (size_t i = 0; i < symbols; ++i) err_power += std::norm(comb.symbols[i] - x.symbols[i]);
    err_power /= static_cast<double>(symbols);
    t.empirical_snr = 1.0 / err_power;  // combined word is unbiased in x
    return t;
}

AfNoiseTrial verify_af_noise_once(uint64_t seed, size_t symbols) {
    AfNoiseTrial t;
    t.links = random_links(seed);
    t.predicted_var = t.links.effective_af_noise_var();

    Rng src(derive_seed(seed, 0x737263ULL));
    ComplexSignal x(symbols);
    for (auto& s : x.symbols) s = {src.normal(), src.normal()};
    x = normalize_power(x);

    Rng n_sr(derive_seed(seed, 1)), n_rd(derive_seed(seed, 3));
    const ComplexSignal y_sr = awgn_link(x, t.links.sr, n_sr);
    const ComplexSignal z = af_scale(y_sr, t.links.sr);
    const ComplexSignal y_rd = awgn_link(z, t.links.rd, n_rd);

    const double gain = t.links.af_relay_gain();
    double acc = 0.0;
    for (size_t i = 0; i < symbols; ++i)
        acc += std::norm(y_rd.symbols[i] - gain * x.symbols[i]);
    t.empirical_var = acc / static_cast<double>(symbols);
    t.rel_err = std::abs(t.empirical_var - t.predicted_var) / t.predicted_var;
    return t;
}

}  // namespace jscc
