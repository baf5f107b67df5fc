#include "jscc/protocols.hpp"

#include <algorithm>
#include <span>

#include "jscc/json_util.hpp"
#include "jscc/rng.hpp"

namespace jscc {

using nlohmann::json;

namespace {
// Noise stream tags, one per reception point.
constexpr uint64_t kTagRelayRx = 1;
constexpr uint64_t kTagDirectRx = 2;
constexpr uint64_t kTagRelayTx = 3;
}  // namespace

void ProtocolSpec::validate() const {
    if (k == 0) throw ConfigError("protocol k must be positive");
    if (kind == Protocol::kDf) {
        if (!lambda) throw ConfigError("df protocol requires lambda");
        if (!(*lambda >= 0.0) || !std::isfinite(*lambda))
            throw ConfigError("lambda must be a finite non-negative real");
    } else if (lambda) {
        throw ConfigError("lambda is only meaningful for the df protocol");
    }
}

json ProtocolSpec::to_json() const {
    json j{{"kind", protocol_name(kind)}, {"k", k}};
    if (lambda) j["lambda"] = *lambda;
    return j;
}

ProtocolSpec ProtocolSpec::from_json(const json& j) {
    check_keys(j, {"kind", "lambda", "k"}, "protocol");
    ProtocolSpec s;
    s.kind = protocol_from_name(j.at("kind").get<std::string>());
    if (j.contains("lambda")) s.lambda = j.at("lambda").get<double>();
    s.k = json_get<size_t>(j, "k", s.k);
    s.validate();
    return s;
}

Tensor clamp01(Tensor t) {
    for (auto& v : t.vec()) v = std::clamp(v, 0.0, 1.0);
    return t;
}

Tensor ForwardResult::recon_eval() const { return clamp01(recon.value()); }

ag::Var receive(const ag::Var& x, const LinkConfig& link, uint64_t seed, uint64_t tag) {
    link.validate();
    if (link.noiseless) return link.alpha == 1.0 ? x : ag::mul_scalar(x, link.alpha);
    const auto& sh = x.value().shape();
    if (sh.size() != 2) throw DomainError("receive expects (B, 2k) rows, got " + x.value().shape_str());
    const size_t batch = sh[0], m = sh[1];
    Tensor noise({batch, m});
    for (size_t b = 0; b < batch; ++b) {
        Rng rng(derive_seed(seed, tag, b));
        rng.fill_complex_noise(link.noise_var, std::span<double>(noise.data() + b * m, m));
    }
    return ag::axpy(x, ag::constant(std::move(noise)), link.alpha, 1.0);
}

namespace {

ForwardResult finish_single_loss(const ag::Var& images, ag::Var recon, ChannelUsage usage) {
    ForwardResult r;
    r.recon = std::move(recon);
    r.loss_dest = ag::mse(images, r.recon);
    r.loss = r.loss_dest;
    r.usage = usage;
    return r;
}

}  // namespace

ForwardResult forward_protocol(const ModelBundle& bundle, const ag::Var& images,
                               const LinkSet& links, uint64_t seed) {
    const EncoderConfig& cfg = bundle.config();
    const size_t k = cfg.k();
    const double kd = static_cast<double>(k);

    if (bundle.protocol() == Protocol::kNoncoop) {
        links.sd.validate();
        const double sd_db = links.sd.snr_db();
        const SnrTriple snr{sd_db, sd_db, sd_db};
        ag::Var x = bundle.encoder().forward(images, snr);
        ag::Var y_sd = receive(x, links.sd, seed, kTagDirectRx);
        ag::Var recon = bundle.decoder().forward(bundle.to_feature(y_sd), snr);
        return finish_single_loss(images, std::move(recon), ChannelUsage{k, 0});
    }

    links.validate();
    const SnrTriple snr = links.snr_triple_db();
    const ChannelUsage usage{k, k};

    ag::Var x = bundle.encoder().forward(images, snr);
    ag::Var y_sr = receive(x, links.sr, seed, kTagRelayRx);
    ag::Var y_sd = receive(x, links.sd, seed, kTagDirectRx);

    switch (bundle.protocol()) {
        case Protocol::kAf: {
            // The deterministic AF gain keeps expected power at 1; the row
            // normalization then pins the realized power of every codeword.
            ag::Var z = ag::mul_scalar(y_sr, links.af_beta());
            z = ag::power_normalize_rows(z, kd);
            ag::Var y_rd = receive(z, links.rd, seed, kTagRelayTx);
            const LinkSet::MrcWeights w = links.mrc_weights();
            ag::Var comb = ag::axpy(y_sd, y_rd, w.w_sd, w.w_rd);
            ag::Var recon = bundle.decoder().forward(bundle.to_feature(comb), snr);
            return finish_single_loss(images, std::move(recon), usage);
        }
        case Protocol::kPf: {
            ag::Var z = bundle.relay_pf().forward(bundle.to_feature(y_sr), snr);
            ag::Var y_rd = receive(z, links.rd, seed, kTagRelayTx);
            ag::Var joint = ag::concat_channels(bundle.to_feature(y_sd), bundle.to_feature(y_rd));
            ag::Var recon = bundle.decoder().forward(joint, snr);
            return finish_single_loss(images, std::move(recon), usage);
        }
        case Protocol::kDf: {
            auto [s_r, z] = bundle.relay_df().forward(bundle.to_feature(y_sr), snr);
            ag::Var y_rd = receive(z, links.rd, seed, kTagRelayTx);
            ag::Var joint = ag::concat_channels(bundle.to_feature(y_sd), bundle.to_feature(y_rd));
            ForwardResult r;
            r.recon = bundle.decoder().forward(joint, snr);
            r.relay_recon = s_r;
            r.loss_dest = ag::mse(images, r.recon);
            r.loss_relay = ag::mse(images, r.relay_recon);
            r.loss = ag::axpy(r.loss_dest, r.loss_relay, 1.0, bundle.lambda());
            r.usage = usage;
            return r;
        }
        case Protocol::kNoncoop: break;
    }
    throw DomainError("bad protocol enum value");
}

ForwardResult forward_noncoop(const ModelBundle& bundle, const ag::Var& images,
                              const LinkConfig& sd, uint64_t seed) {
    if (bundle.protocol() != Protocol::kNoncoop)
        throw DomainError("forward_noncoop requires a noncoop bundle");
    LinkSet links;
    links.sd = sd;
    links.sr = sd;
    links.rd = sd;
    return forward_protocol(bundle, images, links, seed);
}

}  // namespace jscc
