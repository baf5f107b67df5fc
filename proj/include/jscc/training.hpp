#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jscc/dataset.hpp"
#include "jscc/models.hpp"
#include "jscc/protocols.hpp"

namespace jscc {

enum class GammaMode { kFixed, kUniform };

struct TrainConfig {
    double lr_init = 1e-4;
    double lr_decay = 0.8;
    int plateau_patience = 4;
    int early_stop_patience = 12;
    int max_epochs = 400;
    size_t batch_size = 64;

    // Source-relay link quality during training; may be +inf.
    double snr_sr_db = 12.0;
    // gamma is the common destination link quality (both S-D and R-D).
    GammaMode gamma_mode = GammaMode::kUniform;
    double gamma_fixed_db = 4.0;
    double gamma_lo_db = 2.0;
    double gamma_hi_db = 8.0;
    // Validation runs at one fixed gamma so plateau decisions compare
    // like with like across epochs.
    double val_gamma_db = 5.0;

    uint64_t seed = 1;

    double validation_gamma() const {
        return gamma_mode == GammaMode::kFixed ? gamma_fixed_db : val_gamma_db;
    }
    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    bool operator==(const TrainConfig&) const = default;
};

// Per-batch draw of the destination link SNR.
double sample_gamma(const TrainConfig& cfg, Rng& rng);

// Reduce-on-plateau with early stopping. An epoch improves when its
// validation loss is strictly below the best seen so far; `patience`
// non-improving epochs in a row drop the LR (and reset that counter), and
// `early_stop` non-improving epochs in a row stop training.
class PlateauSchedule {
  public:
    PlateauSchedule(double lr_init, double decay, int patience, int early_stop);

    struct Decision {
        double lr;
        bool improved = false;
        bool dropped = false;
        bool stop = false;
    };
    Decision on_validation(double val_loss);

    double lr() const { return lr_; }
    double best() const { return best_; }

    nlohmann::json state() const;
    void restore(const nlohmann::json& j);

  private:
    double lr_, decay_;
    int patience_, early_stop_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_streak_ = 0;      // epochs since last improvement or LR drop
    int since_improve_ = 0;   // epochs since last improvement
};

// Adam with bias correction; moment buffers align with ParamSet order.
class Adam {
  public:
    explicit Adam(const nn::ParamSet& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(nn::ParamSet& params, double lr);
    int steps() const { return t_; }

    NamedTensors state_tensors(const nn::ParamSet& params) const;
    void restore(const nn::ParamSet& params, const NamedTensors& tensors, int t);

  private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_time_s = 0.0;
    nlohmann::json to_json() const;
};

struct TrainHooks {
    // Called after every epoch (e.g. to append a JSONL log line).
    std::function<void(const EpochRecord&)> on_epoch;
    // Called with current training state after every epoch; is_best marks a
    // new validation optimum. Used to persist checkpoints.
    std::function<void(const nlohmann::json& state, const NamedTensors& opt, bool is_best)> save;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val = 0.0;
    bool early_stopped = false;
};

// Optimizes the bundle in place; on return the parameters hold the
// best-validation weights. Aborts with DomainError on a non-finite loss.
// `resume_state`/`resume_opt` continue a run saved by TrainHooks::save.
TrainResult train(ModelBundle& bundle, const ImageDataset& train_set,
                  const ImageDataset& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {},
                  const nlohmann::json* resume_state = nullptr,
                  const NamedTensors* resume_opt = nullptr);

}  // namespace jscc
