#pragma once

#include <cstdint>
#include <optional>

#include "jscc/models.hpp"
#include "jscc/signal.hpp"

namespace jscc {

// Config-level description of a cooperation protocol instance.
struct ProtocolSpec {
    Protocol kind = Protocol::kNoncoop;
    std::optional<double> lambda;  // relay distortion weight, df only
    size_t k = 384;                // complex channel uses per period

    double lambda_value() const { return lambda.value_or(0.0); }
    void validate() const;

    nlohmann::json to_json() const;
    static ProtocolSpec from_json(const nlohmann::json& j);
};

// Complex channel uses consumed by one round: the source broadcast period
// and the relay transmission period.
struct ChannelUsage {
    size_t period1 = 0;
    size_t period2 = 0;
    size_t total() const { return period1 + period2; }
};

struct ForwardResult {
    ag::Var loss;         // training objective
    ag::Var loss_dest;    // destination reconstruction distortion
    ag::Var loss_relay;   // relay-side distortion; defined only for df
    ag::Var recon;        // destination reconstruction (B,C,H,W)
    ag::Var relay_recon;  // relay image estimate; defined only for df
    ChannelUsage usage;

    // Reconstruction clipped to the pixel range, for metric evaluation.
    Tensor recon_eval() const;
};

// One half-duplex round over a batch of images in [0,1], shape (B,C,H,W).
// Channel noise is drawn deterministically from `seed`, one stream per
// (reception, batch element); passing the same seed replays identical noise.
// Every transmitted codeword is power-normalized per row. The non-cooperative
// protocol ignores links.sr / links.rd and conditions on (sd, sd, sd).
ForwardResult forward_protocol(const ModelBundle& bundle, const ag::Var& images,
                               const LinkSet& links, uint64_t seed);

// Direct-link round without a relay (builds the degenerate link set).
ForwardResult forward_noncoop(const ModelBundle& bundle, const ag::Var& images,
                              const LinkConfig& sd, uint64_t seed);

// One reception: y = alpha x + n over interleaved-real rows (B, 2k), noise
// stream derived per row as derive_seed(seed, tag, row).
ag::Var receive(const ag::Var& x, const LinkConfig& link, uint64_t seed, uint64_t tag);

Tensor clamp01(Tensor t);

}  // namespace jscc
