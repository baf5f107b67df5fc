#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jscc/dataset.hpp"
#include "jscc/models.hpp"

#include "json.hpp"

namespace jscc {

// Exact reconstructions would give infinite PSNR; they are reported as this
// cap so records stay finite and serializable.
inline constexpr double kPsnrCapDb = 100.0;

double mse_mean(const Tensor& a, const Tensor& b);
// Peak signal 1.0 (images live in [0,1]).
double psnr_db(const Tensor& a, const Tensor& b);
// Per image of a (B,C,H,W) batch.
std::vector<double> psnr_per_image(const Tensor& a, const Tensor& b);

// Single-scale structural similarity with the standard 11x11 Gaussian
// window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1; channels are
// treated as independent planes and averaged.
double ssim(const Tensor& a, const Tensor& b);
std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b);

struct EvalRecord {
    std::string model_id;
    std::string protocol;
    double snr_sr_db = 0.0;
    double gamma_db = 0.0;
    std::optional<double> lambda;
    size_t n_images = 0;
    double psnr = 0.0;   // dB, per-image mean
    double ssim_val = 0.0;
    uint64_t seed = 0;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
    static EvalRecord from_json(const nlohmann::json& j);
};

void write_records_jsonl(const std::vector<EvalRecord>& records, const std::string& path);
std::vector<EvalRecord> read_records_jsonl(const std::string& path);

struct SweepConfig {
    double snr_sr_db = 12.0;
    std::vector<double> gammas_db{0.0, 2.0, 4.0, 6.0, 8.0};
    size_t batch_size = 64;
    uint64_t seed = 1;
    // When set, records whose gamma falls outside this closed range are
    // flagged (the model is being queried outside its trained conditions).
    std::optional<std::pair<double, double>> trained_gamma_range;
};

// Evaluates the bundle over the set at every gamma. Fully deterministic in
// (bundle, images, cfg): reruns produce byte-identical records.
std::vector<EvalRecord> sweep(const ModelBundle& bundle, const ImageDataset& images,
                              const SweepConfig& cfg);

}  // namespace jscc
