#pragma once

#include <span>

#include "jscc/rng.hpp"
#include "jscc/signal.hpp"

namespace jscc {

// Relay channel primitives over complex symbol blocks. All functions are
// pure given the caller-owned Rng; callers that need reproducibility seed
// one Rng per stream.

// Rescale so the block's average power is exactly 1. Throws DomainError on
// an all-zero block.
ComplexSignal normalize_power(const ComplexSignal& x);

// y = alpha * x + n, with n circularly-symmetric complex Gaussian of
// per-symbol variance link.noise_var (each real component noise_var/2).
// A noiseless link returns alpha * x unchanged.
ComplexSignal awgn_link(const ComplexSignal& x, const LinkConfig& link, Rng& rng);

// AF relay processing: z_r = beta * y_sr with beta = (alpha_sr^2+N_r)^(-1/2).
ComplexSignal af_scale(const ComplexSignal& y_sr, const LinkConfig& link_sr);

// MRC combination of the direct observation y_sd and the relayed
// observation y_rd into an unbiased estimate of the unit-power word z.
ComplexSignal mrc_combine(const ComplexSignal& y_sd, const ComplexSignal& y_rd,
                          const LinkSet& links);

double effective_af_noise_var(const LinkSet& links);

// Interleaved-real mirror of awgn_link used by the differentiable pipeline;
// data is (re, im, re, im, ...) and must match the complex path exactly
// under the same Rng state.
void awgn_link_interleaved(std::span<const double> x, const LinkConfig& link, Rng& rng,
                           std::span<double> y);

}  // namespace jscc
