#include "jscc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "jscc/json_util.hpp"

namespace jscc {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr_init > 0.0) || !std::isfinite(lr_init)) throw ConfigError("lr_init must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0, 1]");
    if (plateau_patience <= 0) throw ConfigError("plateau_patience must be positive");
    if (early_stop_patience <= 0) throw ConfigError("early_stop_patience must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(std::isfinite(snr_sr_db) || (std::isinf(snr_sr_db) && snr_sr_db > 0)))
        throw ConfigError("snr_sr_db must be finite or +inf");
    if (!std::isfinite(gamma_fixed_db)) throw ConfigError("gamma_fixed_db must be finite");
    if (!std::isfinite(gamma_lo_db) || !std::isfinite(gamma_hi_db) || gamma_lo_db > gamma_hi_db)
        throw ConfigError("gamma range must be finite with lo <= hi");
    if (!std::isfinite(val_gamma_db)) throw ConfigError("val_gamma_db must be finite");
}

json TrainConfig::to_json() const {
    return json{{"lr_init", lr_init},
                {"lr_decay", lr_decay},
                {"plateau_patience", plateau_patience},
                {"early_stop_patience", early_stop_patience},
                {"max_epochs", max_epochs},
                {"batch_size", batch_size},
                {"snr_sr_db", json_put_db(snr_sr_db)},
                {"gamma_mode", gamma_mode == GammaMode::kFixed ? "fixed" : "uniform"},
                {"gamma_fixed_db", gamma_fixed_db},
                {"gamma_lo_db", gamma_lo_db},
                {"gamma_hi_db", gamma_hi_db},
                {"val_gamma_db", val_gamma_db},
                {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    check_keys(j,
               {"lr_init", "lr_decay", "plateau_patience", "early_stop_patience", "max_epochs",
                "batch_size", "snr_sr_db", "gamma_mode", "gamma_fixed_db", "gamma_lo_db",
                "gamma_hi_db", "val_gamma_db", "seed"},
               "train");
    TrainConfig c;
    c.lr_init = json_get(j, "lr_init", c.lr_init);
    c.lr_decay = json_get(j, "lr_decay", c.lr_decay);
    c.plateau_patience = json_get(j, "plateau_patience", c.plateau_patience);
    c.early_stop_patience = json_get(j, "early_stop_patience", c.early_stop_patience);
    c.max_epochs = json_get(j, "max_epochs", c.max_epochs);
    c.batch_size = json_get(j, "batch_size", c.batch_size);
    c.snr_sr_db = json_get_db(j, "snr_sr_db", c.snr_sr_db);
    const std::string mode = json_get<std::string>(j, "gamma_mode", "uniform");
    if (mode == "fixed")
        c.gamma_mode = GammaMode::kFixed;
    else if (mode == "uniform")
        c.gamma_mode = GammaMode::kUniform;
    else
        throw ConfigError("gamma_mode must be \"fixed\" or \"uniform\"");
    c.gamma_fixed_db = json_get(j, "gamma_fixed_db", c.gamma_fixed_db);
    c.gamma_lo_db = json_get(j, "gamma_lo_db", c.gamma_lo_db);
    c.gamma_hi_db = json_get(j, "gamma_hi_db", c.gamma_hi_db);
    c.val_gamma_db = json_get(j, "val_gamma_db", c.val_gamma_db);
    c.seed = json_get(j, "seed", c.seed);
    c.validate();
    return c;
}

double sample_gamma(const TrainConfig& cfg, Rng& rng) {
    if (cfg.gamma_mode == GammaMode::kFixed) return cfg.gamma_fixed_db;
    return rng.uniform(cfg.gamma_lo_db, cfg.gamma_hi_db);
}

PlateauSchedule::PlateauSchedule(double lr_init, double decay, int patience, int early_stop)
    : lr_(lr_init), decay_(decay), patience_(patience), early_stop_(early_stop) {}

PlateauSchedule::Decision PlateauSchedule::on_validation(double val_loss) {
    Decision d;
    if (val_loss < best_) {
        best_ = val_loss;
        bad_streak_ = 0;
        since_improve_ = 0;
        d.improved = true;
    } else {
        ++bad_streak_;
        ++since_improve_;
        if (since_improve_ >= early_stop_) {
            d.stop = true;
        } else if (bad_streak_ >= patience_) {
            lr_ *= decay_;
            bad_streak_ = 0;
            d.dropped = true;
        }
    }
    d.lr = lr_;
    return d;
}

json PlateauSchedule::state() const {
    return json{{"lr", lr_},
                {"best", std::isinf(best_) ? json("inf") : json(best_)},
                {"bad_streak", bad_streak_},
                {"since_improve", since_improve_}};
}

void PlateauSchedule::restore(const json& j) {
    lr_ = j.at("lr").get<double>();
    best_ = j.at("best").is_string() ? std::numeric_limits<double>::infinity()
                                     : j.at("best").get<double>();
    bad_streak_ = j.at("bad_streak").get<int>();
    since_improve_ = j.at("since_improve").get<int>();
}

Adam::Adam(const nn::ParamSet& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, var] : params.items()) {
        m_.emplace_back(var.value().shape(), 0.0);
        v_.emplace_back(var.value().shape(), 0.0);
    }
}

void Adam::step(nn::ParamSet& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    size_t i = 0;
    for (auto& [name, var] : params.items()) {
        Tensor& p = var.value_mut();
        const Tensor& g = var.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        ++i;
        const bool has_grad = g.size() == p.size();
        for (size_t j = 0; j < p.size(); ++j) {
            const double gj = has_grad ? g[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

NamedTensors Adam::state_tensors(const nn::ParamSet& params) const {
    NamedTensors out;
    size_t i = 0;
    for (const auto& [name, var] : params.items()) {
        out.emplace_back("opt.m." + name, m_[i]);
        out.emplace_back("opt.v." + name, v_[i]);
        ++i;
    }
    return out;
}

void Adam::restore(const nn::ParamSet& params, const NamedTensors& tensors, int t) {
    if (tensors.size() != 2 * params.items().size())
        throw ConfigError("optimizer state tensor count does not match the model");
    size_t i = 0;
    for (const auto& [name, var] : params.items()) {
        const auto& [mn, mt] = tensors[2 * i];
        const auto& [vn, vt] = tensors[2 * i + 1];
        if (mn != "opt.m." + name || vn != "opt.v." + name ||
            mt.shape() != var.value().shape() || vt.shape() != var.value().shape())
            throw ConfigError("optimizer state does not match parameter \"" + name + "\"");
        m_[i] = mt;
        v_[i] = vt;
        ++i;
    }
    t_ = t;
}

json EpochRecord::to_json() const {
    return json{{"epoch", epoch},
                {"lr", lr},
                {"train_loss", train_loss},
                {"val_loss", val_loss},
                {"wall_time_s", wall_time_s}};
}

namespace {

double validation_loss(ModelBundle& bundle, const ImageDataset& val_set, const TrainConfig& cfg) {
    const double gamma = cfg.validation_gamma();
    const LinkSet links = LinkSet::from_snr(SnrTriple{cfg.snr_sr_db, gamma, gamma});
    double sum = 0.0;
    size_t done = 0, batch_idx = 0;
    while (done < val_set.size()) {
        const size_t b = std::min(cfg.batch_size, val_set.size() - done);
        std::vector<size_t> idx(b);
        std::iota(idx.begin(), idx.end(), done);
        // Seed depends only on the batch index: every epoch sees the same
        // validation noise, so plateau decisions compare like with like.
        const uint64_t seed = derive_seed(cfg.seed, 0x76616cULL, batch_idx);
        const auto fwd =
            forward_protocol(bundle, ag::constant(val_set.batch(idx)), links, seed);
        sum += fwd.loss.value().item() * static_cast<double>(b);
        done += b;
        ++batch_idx;
    }
    return sum / static_cast<double>(val_set.size());
}

}  // namespace

TrainResult train(ModelBundle& bundle, const ImageDataset& train_set,
                  const ImageDataset& val_set, const TrainConfig& cfg, const TrainHooks& hooks,
                  const json* resume_state, const NamedTensors* resume_opt) {
    cfg.validate();
    if (train_set.size() == 0 || val_set.size() == 0)
        throw ConfigError("training requires non-empty train and validation sets");

    PlateauSchedule sched(cfg.lr_init, cfg.lr_decay, cfg.plateau_patience,
                          cfg.early_stop_patience);
    Adam opt(bundle.params());
    int start_epoch = 1;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();

    if (resume_state && !resume_state->empty()) {
        start_epoch = resume_state->at("epoch").get<int>() + 1;
        sched.restore(resume_state->at("schedule"));
        best_epoch = json_get(*resume_state, "best_epoch", 0);
        best_val = sched.best();
        if (resume_opt)
            opt.restore(bundle.params(), *resume_opt,
                        resume_state->at("optimizer").at("t").get<int>());
    }

    TrainResult res;
    std::vector<Tensor> best_params;
    const size_t n = train_set.size();

    for (int epoch = start_epoch; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr_used = sched.lr();

        std::vector<size_t> perm(n);
        std::iota(perm.begin(), perm.end(), size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
        std::shuffle(perm.begin(), perm.end(), shuffle_rng.engine());
        Rng gamma_rng(derive_seed(cfg.seed, 0x67616d41ULL, static_cast<uint64_t>(epoch)));

        double loss_sum = 0.0;
        for (size_t step = 0, done = 0; done < n; ++step) {
            const size_t b = std::min(cfg.batch_size, n - done);
            std::vector<size_t> idx(perm.begin() + static_cast<long>(done),
                                    perm.begin() + static_cast<long>(done + b));
            done += b;

            const double gamma = sample_gamma(cfg, gamma_rng);
            const LinkSet links = LinkSet::from_snr(SnrTriple{cfg.snr_sr_db, gamma, gamma});
            const uint64_t fseed =
                derive_seed(cfg.seed, 0x747261696eULL, static_cast<uint64_t>(epoch), step);

            const auto fwd =
                forward_protocol(bundle, ag::constant(train_set.batch(idx)), links, fseed);
            const double l = fwd.loss.value().item();
            if (!std::isfinite(l))
                throw DomainError("non-finite training loss at epoch " + std::to_string(epoch) +
                                  " step " + std::to_string(step));
            loss_sum += l * static_cast<double>(b);

            bundle.params().zero_grads();
            fwd.loss.backward();
            opt.step(bundle.params(), lr_used);
        }

        const double val = validation_loss(bundle, val_set, cfg);
        if (!std::isfinite(val))
            throw DomainError("non-finite validation loss at epoch " + std::to_string(epoch));
        const auto dec = sched.on_validation(val);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_used;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.val_loss = val;
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (dec.improved) {
            best_epoch = epoch;
            best_val = val;
            best_params.clear();
            for (const auto& [name, var] : bundle.params().items())
                best_params.push_back(var.value());
        }
        if (hooks.save) {
            json state{{"epoch", epoch},
                       {"best_epoch", best_epoch},
                       {"schedule", sched.state()},
                       {"optimizer", {{"t", opt.steps()}}},
                       {"train_config", cfg.to_json()}};
            hooks.save(state, opt.state_tensors(bundle.params()), dec.improved);
        }
        if (dec.stop) {
            res.early_stopped = true;
            break;
        }
    }

    // Leave the bundle at its best-validation weights (from this call; a
    // resumed run whose optimum predates the resume keeps its final weights,
    // the on-disk best checkpoint still holds the optimum).
    if (!best_params.empty()) {
        size_t i = 0;
        for (auto& [name, var] : bundle.params().items()) var.value_mut() = best_params[i++];
    }
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    return res;
}

}  // namespace jscc
