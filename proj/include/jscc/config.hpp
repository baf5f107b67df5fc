#pragma once

#include <string>

#include "jscc/dataset.hpp"
#include "jscc/protocols.hpp"
#include "jscc/training.hpp"

namespace jscc {

// Where the images come from. "cifar10" expects the six binary batch files
// under `root` (or $JSCC_DATA_ROOT when root is empty); "synthetic" builds
// seeded stand-in sets with the same geometry.
struct DataConfig {
    std::string kind = "synthetic";
    std::string root;
    size_t synthetic_n = 6000;
    size_t synthetic_test_n = 512;
    size_t val_count = 0;     // 0 = default (5000 for cifar10, 10% synthetic)
    size_t train_subset = 0;  // 0 = all, otherwise first N after the split
    size_t test_subset = 0;

    size_t resolved_val_count() const;
    void validate() const;
    nlohmann::json to_json() const;
    static DataConfig from_json(const nlohmann::json& j);
};

struct LoadedData {
    ImageDataset train, val, test;
};

// Loads/synthesizes and splits deterministically under `seed`. Synthetic
// stand-ins are generated at the given image geometry; a real dataset must
// already match it.
LoadedData load_data(const DataConfig& cfg, uint64_t seed, size_t image_c = 3,
                     size_t image_h = 32, size_t image_w = 32);

// Resolves the dataset root: explicit config value, else $JSCC_DATA_ROOT.
std::string resolve_data_root(const DataConfig& cfg);

struct RunConfig {
    std::string run_name;  // empty = "<protocol>[-l<lambda>]-s<seed>"
    std::string output_dir = "runs";
    uint64_t seed = 1;
    ProtocolSpec protocol;
    EncoderConfig encoder;
    TrainConfig train;
    DataConfig data;

    std::string resolved_run_name() const;
    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

// Applies a "dotted.path=value" override onto a config JSON document; the
// value is parsed as JSON when possible and as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& spec);

}  // namespace jscc
