#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jscc/nn.hpp"

#include "json.hpp"

namespace jscc {

enum class Protocol { kAf, kDf, kPf, kNoncoop };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& s);

// Geometry and width of the convolutional codecs. The number of channel uses
// per transmission period k follows from the bandwidth ratio, and the code
// tensor depth c_out follows from k and the downsampled feature map size.
struct EncoderConfig {
    size_t image_c = 3, image_h = 32, image_w = 32;
    double bandwidth_ratio = 0.125;
    size_t c_feat = 256;
    size_t n_resblocks = 2;
    size_t n_downsample = 2;
    bool ca_enabled = true;
    bool residual = true;
    double snr_clamp_db = 40.0;

    size_t source_dims() const { return image_c * image_h * image_w; }
    size_t k() const;       // complex channel uses per period
    size_t feat_h() const { return image_h >> n_downsample; }
    size_t feat_w() const { return image_w >> n_downsample; }
    size_t c_out() const;  // 2k / (feat_h * feat_w)
    void validate() const;

    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

class SourceEncoder {
  public:
    SourceEncoder() = default;
    SourceEncoder(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg);
    // (B, C, H, W) image in [0,1] -> (B, 2k) with per-row sum of squares k
    // (unit average complex symbol power).
    ag::Var forward(const ag::Var& img, const SnrTriple& snr) const;

  private:
    struct Stage {
        nn::Conv2d down;
        nn::Gdn gdn;
        nn::PRelu act;
        std::vector<nn::ResBlock> blocks;
        nn::CaModule ca;
    };
    std::vector<Stage> stages_;
    nn::Conv2d proj_;
    EncoderConfig cfg_;
};

class DestDecoder {
  public:
    DestDecoder() = default;
    // in_codes = 1 for a single reception, 2 for stacked direct+relay codes.
    DestDecoder(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg,
                size_t in_codes);
    // (B, in_codes*c_out, fh, fw) -> (B, C, H, W), sigmoid range (0,1).
    ag::Var forward(const ag::Var& feat, const SnrTriple& snr) const;
    size_t in_codes() const { return in_codes_; }

  private:
    struct Stage {
        std::vector<nn::ResBlock> blocks;
        nn::CaModule ca;
        nn::Conv2d up;
        nn::Gdn gdn;
        nn::PRelu act;
    };
    nn::Conv2d head_;
    nn::Gdn head_gdn_;
    nn::PRelu head_act_;
    std::vector<Stage> stages_;
    nn::Conv2d out_;
    size_t in_codes_ = 1;
    EncoderConfig cfg_;
};

// Decode-and-forward relay: full decode to an image estimate, then re-encode.
class RelayDF {
  public:
    RelayDF() = default;
    RelayDF(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg);
    // Returns {relay image estimate (B,C,H,W), retransmit codeword (B,2k)}.
    std::pair<ag::Var, ag::Var> forward(const ag::Var& y_sr_feat, const SnrTriple& snr) const;

  private:
    DestDecoder decode_;
    SourceEncoder encode_;
};

// Process-and-forward relay: transforms the received codes directly in the
// low-resolution code domain, without reconstructing the image.
class RelayPF {
  public:
    RelayPF() = default;
    RelayPF(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg);
    ag::Var forward(const ag::Var& y_sr_feat, const SnrTriple& snr) const;

  private:
    nn::Conv2d head_;
    nn::PRelu head_act_;
    std::vector<nn::ResBlock> blocks_;
    nn::CaModule ca_;
    nn::Conv2d out_;
    EncoderConfig cfg_;
};

// All networks one protocol needs, with their shared parameter registry.
class ModelBundle {
  public:
    static ModelBundle build(Protocol protocol, const EncoderConfig& cfg, uint64_t seed,
                             double lambda = 0.0);

    Protocol protocol() const { return protocol_; }
    const EncoderConfig& config() const { return cfg_; }
    double lambda() const { return lambda_; }
    uint64_t seed() const { return seed_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    const SourceEncoder& encoder() const { return encoder_; }
    const DestDecoder& decoder() const { return decoder_; }
    const RelayDF& relay_df() const;
    const RelayPF& relay_pf() const;

    size_t relay_param_count() const;  // 0 for AF / NONCOOP
    std::string model_id() const;

    // Reshape a (B, 2k) code block to the (B, c_out, fh, fw) feature layout.
    ag::Var to_feature(const ag::Var& code) const;

  private:
    ModelBundle() : params_(0) {}

    Protocol protocol_ = Protocol::kNoncoop;
    EncoderConfig cfg_;
    double lambda_ = 0.0;
    uint64_t seed_ = 0;
    nn::ParamSet params_;
    SourceEncoder encoder_;
    DestDecoder decoder_;
    std::optional<RelayDF> relay_df_;
    std::optional<RelayPF> relay_pf_;
    size_t relay_params_ = 0;
};

// Extra named tensors stored alongside the model (optimizer moments etc).
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Checkpoint archive: magic, little-endian JSON header (protocol, config,
// seed, tensor directory, caller-supplied training state), raw doubles.
void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const nlohmann::json& train_state, const NamedTensors& extra = {});
// Rebuilds the bundle from the stored config and overwrites its parameters.
ModelBundle load_checkpoint(const std::string& path, nlohmann::json* train_state_out = nullptr,
                            NamedTensors* extra_out = nullptr);
// Loads only the header's training state (e.g. to inspect a run).
nlohmann::json read_checkpoint_state(const std::string& path);
// Header summary with the tensor directory reduced to a count.
nlohmann::json read_checkpoint_info(const std::string& path);
// Restores parameters into an existing bundle; protocol and config must match
// exactly, otherwise throws ConfigError naming the differing field.
void load_checkpoint_into(const std::string& path, ModelBundle& bundle,
                          nlohmann::json* train_state_out = nullptr,
                          NamedTensors* extra_out = nullptr);

}  // namespace jscc
