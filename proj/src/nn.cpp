#include "jscc/nn.hpp"

#include <algorithm>
#include <cmath>

#include "jscc/error.hpp"

namespace jscc {
namespace nn {

ag::Var ParamSet::add(const std::string& name, std::vector<size_t> shape,
                      const std::function<double(Rng&)>& gen) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = gen(rng_);
    ag::Var p(std::move(t), /*requires_grad=*/true);
    items_.emplace_back(name, p);
    return p;
}

ag::Var ParamSet::add_const(const std::string& name, std::vector<size_t> shape, double value) {
    ag::Var p(Tensor(std::move(shape), value), /*requires_grad=*/true);
    items_.emplace_back(name, p);
    return p;
}

ag::Var ParamSet::add_diag(const std::string& name, size_t c, double diag, double off) {
    Tensor t({c, c});
    for (size_t i = 0; i < c; ++i)
        for (size_t j = 0; j < c; ++j) t.at2(i, j) = (i == j) ? diag : off;
    ag::Var p(std::move(t), /*requires_grad=*/true);
    items_.emplace_back(name, p);
    return p;
}

size_t ParamSet::total_params() const {
    size_t n = 0;
    for (const auto& [name, v] : items_) n += v.value().size();
    return n;
}

ag::Var* ParamSet::find(const std::string& name) {
    for (auto& [n, v] : items_)
        if (n == name) return &v;
    return nullptr;
}

void ParamSet::zero_grads() {
    for (auto& [n, v] : items_) v.zero_grad();
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, size_t in_c, size_t out_c, size_t ksize,
               size_t stride_, size_t pad_)
    : stride(stride_), pad(pad_) {
    w = ps.add(name + ".w", {out_c, in_c, ksize, ksize}, fan_in_uniform(in_c * ksize * ksize));
    b = ps.add_const(name + ".b", {out_c}, 0.0);
}

Dense::Dense(ParamSet& ps, const std::string& name, size_t in_dim, size_t out_dim) {
    w = ps.add(name + ".w", {out_dim, in_dim}, fan_in_uniform(in_dim));
    b = ps.add_const(name + ".b", {out_dim}, 0.0);
}

Gdn::Gdn(ParamSet& ps, const std::string& name, size_t channels_, bool inverse_)
    : inverse(inverse_), channels(channels_) {
    // beta starts at 1, gamma near 0.1 on the diagonal (stored as square roots).
    beta_raw = ps.add_const(name + ".beta_raw", {channels}, 1.0);
    gamma_raw = ps.add_diag(name + ".gamma_raw", channels, std::sqrt(0.1), 0.0);
}

ag::Var Gdn::forward(const ag::Var& x) const {
    ag::Var gamma = ag::mul(gamma_raw, gamma_raw);
    ag::Var beta = ag::mul(beta_raw, beta_raw);
    ag::Var x2 = ag::mul(x, x);
    // 1x1 convolution mixes channels: denom_c = beta_c + sum_j gamma_cj x_j^2.
    ag::Var denom = ag::conv2d(x2, ag::reshape(gamma, {channels, channels, 1, 1}), beta, 1, 0);
    ag::Var factor = ag::pow_shift(denom, inverse ? 0.5 : -0.5, kEpsFloor);
    return ag::mul(x, factor);
}

PRelu::PRelu(ParamSet& ps, const std::string& name, size_t channels) {
    slope = ps.add_const(name + ".slope", {channels}, 0.25);
}

CaModule::CaModule(ParamSet& ps, const std::string& name, size_t channels_, bool enabled_,
                   double snr_clamp_db_)
    : enabled(enabled_), snr_clamp_db(snr_clamp_db_), channels(channels_) {
    if (!enabled) return;
    const size_t hidden = std::max<size_t>(channels / 4, 4);
    fc1 = Dense(ps, name + ".fc1", channels + 3, hidden);
    fc2 = Dense(ps, name + ".fc2", hidden, channels);
}

ag::Var CaModule::gates(const ag::Var& x, const SnrTriple& snr) const {
    if (!enabled) throw DomainError("channel attention disabled");
    const auto& sh = x.value().shape();
    const size_t batch = sh[0];
    const double clamped[3] = {std::min(snr.sr_db, snr_clamp_db), std::min(snr.sd_db, snr_clamp_db),
                               std::min(snr.rd_db, snr_clamp_db)};
    Tensor cond({batch, 3});
    for (size_t b = 0; b < batch; ++b)
        for (size_t j = 0; j < 3; ++j) cond.at2(b, j) = clamped[j] / 10.0;
    ag::Var pooled = ag::global_avg_pool(x);
    ag::Var h = ag::concat_cols(pooled, ag::constant(std::move(cond)));
    h = ag::relu(fc1.forward(h));
    return ag::sigmoid(fc2.forward(h));
}

ag::Var CaModule::forward(const ag::Var& x, const SnrTriple& snr) const {
    if (!enabled) return x;
    return ag::scale_channels(x, gates(x, snr));
}

ResBlock::ResBlock(ParamSet& ps, const std::string& name, size_t channels, bool inverse_gdn,
                   bool residual_)
    : residual(residual_) {
    conv1 = Conv2d(ps, name + ".conv1", channels, channels, 3, 1, 1);
    conv2 = Conv2d(ps, name + ".conv2", channels, channels, 3, 1, 1);
    gdn1 = Gdn(ps, name + ".gdn1", channels, inverse_gdn);
    gdn2 = Gdn(ps, name + ".gdn2", channels, inverse_gdn);
    act = PRelu(ps, name + ".act", channels);
}

ag::Var ResBlock::forward(const ag::Var& x) const {
    ag::Var h = gdn1.forward(conv1.forward(x));
    h = act.forward(h);
    h = gdn2.forward(conv2.forward(h));
    return residual ? ag::add(x, h) : h;
}

}  // namespace nn
}  // namespace jscc
