#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jscc/autograd.hpp"
#include "jscc/rng.hpp"
#include "jscc/signal.hpp"

namespace jscc {
namespace nn {

// Ordered, named collection of trainable parameters. Construction order is
// fixed by the model topology, which makes seeded initialization and
// checkpoint layout reproducible.
class ParamSet {
  public:
    explicit ParamSet(uint64_t seed) : rng_(seed) {}

    ag::Var add(const std::string& name, std::vector<size_t> shape,
                const std::function<double(Rng&)>& gen);
    ag::Var add_const(const std::string& name, std::vector<size_t> shape, double value);
    // Diagonal init for square (C,C) parameters.
    ag::Var add_diag(const std::string& name, size_t c, double diag, double off);

    std::vector<std::pair<std::string, ag::Var>>& items() { return items_; }
    const std::vector<std::pair<std::string, ag::Var>>& items() const { return items_; }
    size_t total_params() const;
    ag::Var* find(const std::string& name);
    void zero_grads();

  private:
    std::vector<std::pair<std::string, ag::Var>> items_;
    Rng rng_;
};

// Uniform init with Var(w) = 1/fan_in. ReLU-gain init (2/fan_in) overdrives
// this architecture: each inverse-GDN stage multiplies by sqrt(1 + 0.1*x^2),
// which compounds superlinearly once activations drift past ~1.5 and leaves
// the decoder's output sigmoid saturated (hence gradient-dead) at init.
inline std::function<double(Rng&)> fan_in_uniform(size_t fan_in) {
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    return [bound](Rng& r) { return r.uniform(-bound, bound); };
}

struct Conv2d {
    ag::Var w, b;
    size_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamSet& ps, const std::string& name, size_t in_c, size_t out_c, size_t ksize,
           size_t stride_, size_t pad_);
    ag::Var forward(const ag::Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

struct Dense {
    ag::Var w, b;

    Dense() = default;
    Dense(ParamSet& ps, const std::string& name, size_t in_dim, size_t out_dim);
    ag::Var forward(const ag::Var& x) const { return ag::dense(x, w, b); }
};

// Generalized divisive normalization with non-negative reparameterization:
// beta = beta_raw^2, gamma = gamma_raw^2 elementwise, and
//   y = x / sqrt(beta_c + sum_j gamma_cj x_j^2 + eps)   (inverse: multiply).
struct Gdn {
    static constexpr double kEpsFloor = 1e-6;
    ag::Var beta_raw, gamma_raw;
    bool inverse = false;
    size_t channels = 0;

    Gdn() = default;
    Gdn(ParamSet& ps, const std::string& name, size_t channels_, bool inverse_);
    ag::Var forward(const ag::Var& x) const;
};

struct PRelu {
    ag::Var slope;

    PRelu() = default;
    PRelu(ParamSet& ps, const std::string& name, size_t channels);
    ag::Var forward(const ag::Var& x) const { return ag::prelu(x, slope); }
};

// Channel-attention gating conditioned on the SNR triple: global average
// pool, concat the three SNRs (dB/10, with +inf clamped), two-layer MLP,
// sigmoid gates in (0,1) applied per channel. With the module disabled the
// input passes through unchanged (ablation switch).
struct CaModule {
    Dense fc1, fc2;
    bool enabled = true;
    double snr_clamp_db = 40.0;
    size_t channels = 0;

    CaModule() = default;
    CaModule(ParamSet& ps, const std::string& name, size_t channels_, bool enabled_,
             double snr_clamp_db_);
    ag::Var forward(const ag::Var& x, const SnrTriple& snr) const;
    // The gate vector alone, for probing.
    ag::Var gates(const ag::Var& x, const SnrTriple& snr) const;
};

// conv-GDN-PReLU-conv-GDN with a residual connection (switchable).
struct ResBlock {
    Conv2d conv1, conv2;
    Gdn gdn1, gdn2;
    PRelu act;
    bool residual = true;

    ResBlock() = default;
    ResBlock(ParamSet& ps, const std::string& name, size_t channels, bool inverse_gdn,
             bool residual_);
    ag::Var forward(const ag::Var& x) const;
};

}  // namespace nn
}  // namespace jscc
