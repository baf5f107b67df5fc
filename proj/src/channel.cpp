#include "jscc/channel.hpp"

#include <cmath>

namespace jscc {

ComplexSignal normalize_power(const ComplexSignal& x) {
    const double p = x.avg_power();
    if (x.k() == 0 || p == 0.0) throw DomainError("normalize_power: degenerate all-zero signal");
    const double scale = 1.0 / std::sqrt(p);
    ComplexSignal out(x.k());
    for (size_t i = 0; i < x.k(); ++i) out.symbols[i] = x.symbols[i] * scale;
    return out;
}

ComplexSignal awgn_link(const ComplexSignal& x, const LinkConfig& link, Rng& rng) {
    link.validate();
    ComplexSignal y(x.k());
    if (link.noiseless) {
        for (size_t i = 0; i < x.k(); ++i) y.symbols[i] = link.alpha * x.symbols[i];
        return y;
    }
    const double sigma = std::sqrt(link.noise_var / 2.0);
    std::normal_distribution<double> d(0.0, sigma);
    for (size_t i = 0; i < x.k(); ++i) {
        const double nr = d(rng.engine());
        const double ni = d(rng.engine());
        y.symbols[i] = link.alpha * x.symbols[i] + std::complex<double>(nr, ni);
    }
    return y;
}

ComplexSignal af_scale(const ComplexSignal& y_sr, const LinkConfig& link_sr) {
    LinkSet tmp;
    tmp.sr = link_sr;
    const double beta = tmp.af_beta();
    ComplexSignal z(y_sr.k());
    for (size_t i = 0; i < y_sr.k(); ++i) z.symbols[i] = beta * y_sr.symbols[i];
    return z;
}

ComplexSignal mrc_combine(const ComplexSignal& y_sd, const ComplexSignal& y_rd,
                          const LinkSet& links) {
    if (y_sd.k() != y_rd.k()) throw ConfigError("mrc_combine: branch length mismatch");
    const LinkSet::MrcWeights w = links.mrc_weights();
    ComplexSignal z(y_sd.k());
    for (size_t i = 0; i < z.k(); ++i)
        z.symbols[i] = w.w_sd * y_sd.symbols[i] + w.w_rd * y_rd.symbols[i];
    return z;
}

double effective_af_noise_var(const LinkSet& links) { return links.effective_af_noise_var(); }

void awgn_link_interleaved(std::span<const double> x, const LinkConfig& link, Rng& rng,
                           std::span<double> y) {
    link.validate();
    if (x.size() != y.size() || x.size() % 2 != 0)
        throw ConfigError("awgn_link_interleaved: buffers must be equal even-length");
    if (link.noiseless) {
        for (size_t i = 0; i < x.size(); ++i) y[i] = link.alpha * x[i];
        return;
    }
    const double sigma = std::sqrt(link.noise_var / 2.0);
    std::normal_distribution<double> d(0.0, sigma);
    for (size_t i = 0; i < x.size(); ++i) y[i] = link.alpha * x[i] + d(rng.engine());
}

}  // namespace jscc
