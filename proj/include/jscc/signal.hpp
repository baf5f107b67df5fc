#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "jscc/error.hpp"

namespace jscc {

inline double snr_db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double snr_linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// A block of k complex channel symbols. Average power refers to
// (1/k) * sum |s_i|^2.
struct ComplexSignal {
    std::vector<std::complex<double>> symbols;

    ComplexSignal() = default;
    explicit ComplexSignal(std::vector<std::complex<double>> s) : symbols(std::move(s)) {}
    explicit ComplexSignal(size_t k) : symbols(k) {}

    size_t k() const { return symbols.size(); }

    double avg_power() const {
        double p = 0.0;
        for (const auto& s : symbols) p += std::norm(s);
        return symbols.empty() ? 0.0 : p / static_cast<double>(symbols.size());
    }
};

// One point-to-point link: real path gain alpha and complex noise variance.
// A link flagged noiseless models SNR = inf without overflowing downstream
// formulas (noise_var is treated as exactly 0).
struct LinkConfig {
    double alpha = 1.0;
    double noise_var = 1.0;
    bool noiseless = false;

    double effective_noise_var() const { return noiseless ? 0.0 : noise_var; }

    double snr_linear() const {
        if (noiseless) return std::numeric_limits<double>::infinity();
        return alpha * alpha / noise_var;
    }

    double snr_db() const { return snr_linear_to_db(snr_linear()); }

    // Unit noise variance convention: alpha is chosen so that alpha^2/N
    // matches the requested SNR with N = 1. SNR = inf maps to the
    // noiseless flag with alpha = 1.
    static LinkConfig from_snr_db(double db) {
        if (std::isinf(db) && db > 0) return LinkConfig{1.0, 1.0, true};
        if (!std::isfinite(db)) throw ConfigError("link SNR must be finite or +inf");
        return LinkConfig{std::sqrt(snr_db_to_linear(db)), 1.0, false};
    }

    void validate() const {
        if (alpha < 0.0 || !std::isfinite(alpha)) throw ConfigError("link gain alpha must be a finite non-negative real");
        if (!noiseless && !(noise_var > 0.0)) throw ConfigError("link noise variance must be positive");
    }
};

// The conditioning vector {SNR_sr, SNR_sd, SNR_rd} in dB. Only the S-R
// entry may be +inf (noiseless source-to-relay link).
struct SnrTriple {
    double sr_db = 0.0;
    double sd_db = 0.0;
    double rd_db = 0.0;

    void validate() const {
        if (!(std::isfinite(sr_db) || (std::isinf(sr_db) && sr_db > 0)))
            throw ConfigError("SNR_sr must be finite or +inf");
        if (!std::isfinite(sd_db)) throw ConfigError("SNR_sd must be finite");
        if (!std::isfinite(rd_db)) throw ConfigError("SNR_rd must be finite");
    }
};

// The three links of the relay channel. N_d is shared by the S-D and R-D
// receptions (both terminate at the destination front end).
struct LinkSet {
    LinkConfig sr;
    LinkConfig sd;
    LinkConfig rd;

    static LinkSet from_snr(const SnrTriple& t) {
        t.validate();
        return LinkSet{LinkConfig::from_snr_db(t.sr_db), LinkConfig::from_snr_db(t.sd_db),
                       LinkConfig::from_snr_db(t.rd_db)};
    }

    SnrTriple snr_triple_db() const { return SnrTriple{sr.snr_db(), sd.snr_db(), rd.snr_db()}; }

    void validate() const {
        sr.validate();
        sd.validate();
        rd.validate();
    }

    // AF amplification factor: beta = (alpha_sr^2 + N_r)^(-1/2), which makes
    // the expected relay transmit power equal to 1.
    double af_beta() const {
        const double denom = sr.alpha * sr.alpha + sr.effective_noise_var();
        if (!(denom > 0.0)) throw ConfigError("AF beta undefined: alpha_sr^2 + N_r must be positive");
        return 1.0 / std::sqrt(denom);
    }

    // Amplitude multiplying the unit-power source word on the relayed
    // branch after AF: beta * alpha_rd * alpha_sr.
    double af_relay_gain() const { return af_beta() * rd.alpha * sr.alpha; }

    // Variance of the aggregate noise on the relayed branch:
    // N_d + N_r * alpha_rd^2 / (alpha_sr^2 + N_r).
    double effective_af_noise_var() const {
        const double nr = sr.effective_noise_var();
        return rd.effective_noise_var() + nr * rd.alpha * rd.alpha / (sr.alpha * sr.alpha + nr);
    }

    struct MrcWeights {
        double w_sd = 0.0;
        double w_rd = 0.0;
    };

    // MRC combiner for the AF branches: z_tilde = w_sd*y_sd + w_rd*y_rd.
    // Equals the closed form
    //   ((beta^2 a_rd^2 N_r + N_d) a_sd y_sd + N_d beta a_rd a_sr y_rd)
    //   / (N_d beta^2 a_rd^2 a_sr^2 + a_sd^2 (beta^2 a_rd^2 N_r + N_d))
    // and stays well defined in the noiseless limits via per-branch
    // variances. Unbiased: w_sd*a_sd + w_rd*g_rd = 1.
    MrcWeights mrc_weights() const {
        const double g1 = sd.alpha;
        const double n1 = sd.effective_noise_var();
        const double g2 = af_relay_gain();
        const double n2 = effective_af_noise_var();
        if (g1 == 0.0 && g2 == 0.0)
            throw ConfigError("MRC undefined: both branch gains are zero");
        // Noiseless branch dominates with infinite weight; resolve exactly.
        if (n1 == 0.0 && g1 > 0.0) return MrcWeights{1.0 / g1, 0.0};
        if (n2 == 0.0 && g2 > 0.0) return MrcWeights{0.0, 1.0 / g2};
        const double q1 = (g1 > 0.0) ? g1 / n1 : 0.0;
        const double q2 = (g2 > 0.0) ? g2 / n2 : 0.0;
        const double denom = g1 * q1 + g2 * q2;
        if (!(denom > 0.0)) throw ConfigError("MRC undefined: zero combining denominator");
        return MrcWeights{q1 / denom, q2 / denom};
    }

    // Post-combining SNR of the MRC output (unit-power z).
    double mrc_output_snr() const {
        const MrcWeights w = mrc_weights();
        const double nvar = w.w_sd * w.w_sd * sd.effective_noise_var() +
                            w.w_rd * w.w_rd * effective_af_noise_var();
        if (nvar == 0.0) return std::numeric_limits<double>::infinity();
        return 1.0 / nvar;
    }
};

}  // namespace jscc
