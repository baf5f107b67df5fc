#include "jscc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "jscc/json_util.hpp"

namespace jscc {

using nlohmann::json;

size_t DataConfig::resolved_val_count() const {
    if (val_count > 0) return val_count;
    if (kind == "cifar10") return 5000;
    return std::max<size_t>(synthetic_n / 10, 1);
}

void DataConfig::validate() const {
    if (kind != "cifar10" && kind != "synthetic")
        throw ConfigError("data.kind must be \"cifar10\" or \"synthetic\"");
    if (kind == "synthetic" && synthetic_n < 2)
        throw ConfigError("data.synthetic_n must be at least 2");
    if (kind == "synthetic" && resolved_val_count() >= synthetic_n)
        throw ConfigError("data.val_count must be smaller than the synthetic pool");
}

json DataConfig::to_json() const {
    return json{{"kind", kind},
                {"root", root},
                {"synthetic_n", synthetic_n},
                {"synthetic_test_n", synthetic_test_n},
                {"val_count", val_count},
                {"train_subset", train_subset},
                {"test_subset", test_subset}};
}

DataConfig DataConfig::from_json(const json& j) {
    check_keys(j,
               {"kind", "root", "synthetic_n", "synthetic_test_n", "val_count", "train_subset",
                "test_subset"},
               "data");
    DataConfig c;
    c.kind = json_get<std::string>(j, "kind", c.kind);
    c.root = json_get<std::string>(j, "root", c.root);
    c.synthetic_n = json_get(j, "synthetic_n", c.synthetic_n);
    c.synthetic_test_n = json_get(j, "synthetic_test_n", c.synthetic_test_n);
    c.val_count = json_get(j, "val_count", c.val_count);
    c.train_subset = json_get(j, "train_subset", c.train_subset);
    c.test_subset = json_get(j, "test_subset", c.test_subset);
    c.validate();
    return c;
}

std::string resolve_data_root(const DataConfig& cfg) {
    if (!cfg.root.empty()) return cfg.root;
    if (const char* env = std::getenv("JSCC_DATA_ROOT"); env && *env) return env;
    throw ConfigError("dataset root not set: provide data.root or $JSCC_DATA_ROOT");
}

LoadedData load_data(const DataConfig& cfg, uint64_t seed, size_t image_c, size_t image_h,
                     size_t image_w) {
    cfg.validate();
    LoadedData out;
    if (cfg.kind == "cifar10") {
        const CifarPair pair = load_cifar10(resolve_data_root(cfg));
        if (pair.train.channels() != image_c || pair.train.height() != image_h ||
            pair.train.width() != image_w)
            throw ConfigError("cifar10 images are 3x32x32 but the model expects " +
                              std::to_string(image_c) + "x" + std::to_string(image_h) + "x" +
                              std::to_string(image_w));
        auto [tr, val] = split_train_val(pair.train, cfg.resolved_val_count(), seed);
        out.train = std::move(tr);
        out.val = std::move(val);
        out.test = pair.test;
    } else {
        const ImageDataset pool = synthetic_images(cfg.synthetic_n, derive_seed(seed, 0x7472ULL),
                                                   image_c, image_h, image_w);
        auto [tr, val] = split_train_val(pool, cfg.resolved_val_count(), seed);
        out.train = std::move(tr);
        out.val = std::move(val);
        out.test = synthetic_images(cfg.synthetic_test_n, derive_seed(seed, 0x7465ULL), image_c,
                                    image_h, image_w);
    }
    if (cfg.train_subset > 0 && cfg.train_subset < out.train.size())
        out.train = out.train.take(cfg.train_subset);
    if (cfg.test_subset > 0 && cfg.test_subset < out.test.size())
        out.test = out.test.take(cfg.test_subset);
    return out;
}

std::string RunConfig::resolved_run_name() const {
    if (!run_name.empty()) return run_name;
    std::ostringstream os;
    os << protocol_name(protocol.kind);
    if (protocol.kind == Protocol::kDf) os << "-l" << protocol.lambda_value();
    os << "-s" << seed;
    return os.str();
}

void RunConfig::validate() const {
    protocol.validate();
    encoder.validate();
    train.validate();
    data.validate();
    if (protocol.k != encoder.k())
        throw ConfigError("protocol.k (" + std::to_string(protocol.k) +
                          ") disagrees with the encoder bandwidth (k = " +
                          std::to_string(encoder.k()) + ")");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json RunConfig::to_json() const {
    return json{{"run_name", run_name}, {"output_dir", output_dir},
                {"seed", seed},         {"protocol", protocol.to_json()},
                {"encoder", encoder.to_json()},
                {"train", train.to_json()},
                {"data", data.to_json()}};
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"run_name", "output_dir", "seed", "protocol", "encoder", "train", "data"},
               "config");
    RunConfig c;
    c.run_name = json_get<std::string>(j, "run_name", "");
    c.output_dir = json_get<std::string>(j, "output_dir", c.output_dir);
    c.seed = json_get(j, "seed", c.seed);
    c.encoder = j.contains("encoder") ? EncoderConfig::from_json(j.at("encoder")) : EncoderConfig{};
    json pj = j.contains("protocol") ? j.at("protocol") : json{{"kind", "noncoop"}};
    if (!pj.contains("k")) pj["k"] = c.encoder.k();
    c.protocol = ProtocolSpec::from_json(pj);
    json tj = j.contains("train") ? j.at("train") : json::object();
    if (!tj.contains("seed")) tj["seed"] = c.seed;
    c.train = TrainConfig::from_json(tj);
    c.data = j.contains("data") ? DataConfig::from_json(j.at("data")) : DataConfig{};
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": invalid JSON");
    try {
        return from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void apply_override(json& doc, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like path.to.key=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // unquoted strings pass through

    json* cur = &doc;
    size_t pos = 0;
    while (true) {
        const size_t dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw ConfigError("bad override path: " + path);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

}  // namespace jscc
