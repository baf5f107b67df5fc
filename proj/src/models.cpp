#include "jscc/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "jscc/json_util.hpp"

namespace jscc {

using nlohmann::json;

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::kAf: return "af";
        case Protocol::kDf: return "df";
        case Protocol::kPf: return "pf";
        case Protocol::kNoncoop: return "noncoop";
    }
    throw DomainError("bad protocol enum value");
}

Protocol protocol_from_name(const std::string& s) {
    if (s == "af") return Protocol::kAf;
    if (s == "df") return Protocol::kDf;
    if (s == "pf") return Protocol::kPf;
    if (s == "noncoop") return Protocol::kNoncoop;
    throw ConfigError("unknown protocol \"" + s + "\" (expected af, df, pf or noncoop)");
}

size_t EncoderConfig::k() const {
    const double kf = bandwidth_ratio * static_cast<double>(source_dims());
    return static_cast<size_t>(std::llround(kf));
}

size_t EncoderConfig::c_out() const { return 2 * k() / (feat_h() * feat_w()); }

void EncoderConfig::validate() const {
    if (image_c == 0 || image_h == 0 || image_w == 0)
        throw ConfigError("image dimensions must be positive");
    if (!(bandwidth_ratio > 0.0) || !std::isfinite(bandwidth_ratio))
        throw ConfigError("bandwidth_ratio must be positive and finite");
    if (c_feat == 0) throw ConfigError("c_feat must be positive");
    if (n_downsample == 0 || n_downsample > 4)
        throw ConfigError("n_downsample must be in 1..4");
    if ((image_h >> n_downsample) << n_downsample != image_h ||
        (image_w >> n_downsample) << n_downsample != image_w)
        throw ConfigError("image height/width must be divisible by 2^n_downsample");
    const double kf = bandwidth_ratio * static_cast<double>(source_dims());
    if (std::abs(kf - std::llround(kf)) > 1e-9)
        throw ConfigError("bandwidth_ratio * image size must give an integer symbol count");
    const size_t fhw = feat_h() * feat_w();
    if ((2 * k()) % fhw != 0)
        throw ConfigError("2k must be divisible by the feature map size " + std::to_string(fhw));
    if (c_out() == 0) throw ConfigError("derived code depth is zero; raise bandwidth_ratio");
    if (!(snr_clamp_db > 0.0) || !std::isfinite(snr_clamp_db))
        throw ConfigError("snr_clamp_db must be positive and finite");
}

json EncoderConfig::to_json() const {
    return json{{"image", {image_c, image_h, image_w}},
                {"bandwidth_ratio", bandwidth_ratio},
                {"c_feat", c_feat},
                {"n_resblocks", n_resblocks},
                {"n_downsample", n_downsample},
                {"ca_enabled", ca_enabled},
                {"residual", residual},
                {"snr_clamp_db", snr_clamp_db}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
    check_keys(j,
               {"image", "bandwidth_ratio", "c_feat", "n_resblocks", "n_downsample", "ca_enabled",
                "residual", "snr_clamp_db"},
               "encoder");
    EncoderConfig c;
    if (j.contains("image")) {
        const auto& im = j.at("image");
        if (!im.is_array() || im.size() != 3) throw ConfigError("encoder.image: expected [C,H,W]");
        c.image_c = im[0].get<size_t>();
        c.image_h = im[1].get<size_t>();
        c.image_w = im[2].get<size_t>();
    }
    c.bandwidth_ratio = json_get(j, "bandwidth_ratio", c.bandwidth_ratio);
    c.c_feat = json_get(j, "c_feat", c.c_feat);
    c.n_resblocks = json_get(j, "n_resblocks", c.n_resblocks);
    c.n_downsample = json_get(j, "n_downsample", c.n_downsample);
    c.ca_enabled = json_get(j, "ca_enabled", c.ca_enabled);
    c.residual = json_get(j, "residual", c.residual);
    c.snr_clamp_db = json_get(j, "snr_clamp_db", c.snr_clamp_db);
    c.validate();
    return c;
}

SourceEncoder::SourceEncoder(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg)
    : cfg_(cfg) {
    size_t in_c = cfg.image_c;
    for (size_t d = 0; d < cfg.n_downsample; ++d) {
        Stage st;
        const std::string base = prefix + ".s" + std::to_string(d);
        st.down = nn::Conv2d(ps, base + ".down", in_c, cfg.c_feat, 5, 2, 2);
        st.gdn = nn::Gdn(ps, base + ".gdn", cfg.c_feat, /*inverse=*/false);
        st.act = nn::PRelu(ps, base + ".act", cfg.c_feat);
        for (size_t r = 0; r < cfg.n_resblocks; ++r)
            st.blocks.emplace_back(ps, base + ".res" + std::to_string(r), cfg.c_feat,
                                   /*inverse_gdn=*/false, cfg.residual);
        st.ca = nn::CaModule(ps, base + ".ca", cfg.c_feat, cfg.ca_enabled, cfg.snr_clamp_db);
        stages_.push_back(std::move(st));
        in_c = cfg.c_feat;
    }
    proj_ = nn::Conv2d(ps, prefix + ".proj", cfg.c_feat, cfg.c_out(), 3, 1, 1);
}

ag::Var SourceEncoder::forward(const ag::Var& img, const SnrTriple& snr) const {
    ag::Var x = img;
    for (const auto& st : stages_) {
        x = st.act.forward(st.gdn.forward(st.down.forward(x)));
        for (const auto& blk : st.blocks) x = blk.forward(x);
        x = st.ca.forward(x, snr);
    }
    x = proj_.forward(x);
    const size_t batch = x.value().dim(0);
    x = ag::reshape(x, {batch, 2 * cfg_.k()});
    return ag::power_normalize_rows(x, static_cast<double>(cfg_.k()));
}

DestDecoder::DestDecoder(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg,
                         size_t in_codes)
    : in_codes_(in_codes), cfg_(cfg) {
    head_ = nn::Conv2d(ps, prefix + ".head", in_codes * cfg.c_out(), cfg.c_feat, 3, 1, 1);
    head_gdn_ = nn::Gdn(ps, prefix + ".head_gdn", cfg.c_feat, /*inverse=*/true);
    head_act_ = nn::PRelu(ps, prefix + ".head_act", cfg.c_feat);
    for (size_t d = 0; d < cfg.n_downsample; ++d) {
        Stage st;
        const std::string base = prefix + ".s" + std::to_string(d);
        for (size_t r = 0; r < cfg.n_resblocks; ++r)
            st.blocks.emplace_back(ps, base + ".res" + std::to_string(r), cfg.c_feat,
                                   /*inverse_gdn=*/true, cfg.residual);
        st.ca = nn::CaModule(ps, base + ".ca", cfg.c_feat, cfg.ca_enabled, cfg.snr_clamp_db);
        st.up = nn::Conv2d(ps, base + ".up", cfg.c_feat, 4 * cfg.c_feat, 3, 1, 1);
        st.gdn = nn::Gdn(ps, base + ".gdn", cfg.c_feat, /*inverse=*/true);
        st.act = nn::PRelu(ps, base + ".act", cfg.c_feat);
        stages_.push_back(std::move(st));
    }
    out_ = nn::Conv2d(ps, prefix + ".out", cfg.c_feat, cfg.image_c, 3, 1, 1);
}

ag::Var DestDecoder::forward(const ag::Var& feat, const SnrTriple& snr) const {
    ag::Var x = head_act_.forward(head_gdn_.forward(head_.forward(feat)));
    for (const auto& st : stages_) {
        for (const auto& blk : st.blocks) x = blk.forward(x);
        x = st.ca.forward(x, snr);
        x = ag::pixel_shuffle(st.up.forward(x), 2);
        x = st.act.forward(st.gdn.forward(x));
    }
    return ag::sigmoid(out_.forward(x));
}

RelayDF::RelayDF(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg)
    : decode_(ps, prefix + ".g", cfg, 1), encode_(ps, prefix + ".f", cfg) {}

std::pair<ag::Var, ag::Var> RelayDF::forward(const ag::Var& y_sr_feat,
                                             const SnrTriple& snr) const {
    ag::Var s_r = decode_.forward(y_sr_feat, snr);
    ag::Var z = encode_.forward(s_r, snr);
    return {s_r, z};
}

RelayPF::RelayPF(nn::ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg)
    : cfg_(cfg) {
    head_ = nn::Conv2d(ps, prefix + ".head", cfg.c_out(), cfg.c_feat, 3, 1, 1);
    head_act_ = nn::PRelu(ps, prefix + ".head_act", cfg.c_feat);
    for (size_t r = 0; r < cfg.n_resblocks; ++r)
        blocks_.emplace_back(ps, prefix + ".res" + std::to_string(r), cfg.c_feat,
                             /*inverse_gdn=*/false, cfg.residual);
    ca_ = nn::CaModule(ps, prefix + ".ca", cfg.c_feat, cfg.ca_enabled, cfg.snr_clamp_db);
    out_ = nn::Conv2d(ps, prefix + ".out", cfg.c_feat, cfg.c_out(), 3, 1, 1);
}

ag::Var RelayPF::forward(const ag::Var& y_sr_feat, const SnrTriple& snr) const {
    ag::Var x = head_act_.forward(head_.forward(y_sr_feat));
    for (const auto& blk : blocks_) x = blk.forward(x);
    x = ca_.forward(x, snr);
    x = out_.forward(x);
    const size_t batch = x.value().dim(0);
    x = ag::reshape(x, {batch, 2 * cfg_.k()});
    return ag::power_normalize_rows(x, static_cast<double>(cfg_.k()));
}

ModelBundle ModelBundle::build(Protocol protocol, const EncoderConfig& cfg, uint64_t seed,
                               double lambda) {
    cfg.validate();
    if (protocol == Protocol::kDf) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ConfigError("lambda must be a finite non-negative real");
    } else if (lambda != 0.0) {
        throw ConfigError("lambda is only meaningful for the df protocol");
    }

    ModelBundle b;
    b.protocol_ = protocol;
    b.cfg_ = cfg;
    b.lambda_ = lambda;
    b.seed_ = seed;
    b.params_ = nn::ParamSet(derive_seed(seed, 0x6d6f64656cULL));

    b.encoder_ = SourceEncoder(b.params_, "enc", cfg);
    const size_t before_relay = b.params_.total_params();
    if (protocol == Protocol::kDf) b.relay_df_.emplace(b.params_, "relay", cfg);
    if (protocol == Protocol::kPf) b.relay_pf_.emplace(b.params_, "relay", cfg);
    b.relay_params_ = b.params_.total_params() - before_relay;

    const size_t in_codes = (protocol == Protocol::kDf || protocol == Protocol::kPf) ? 2 : 1;
    b.decoder_ = DestDecoder(b.params_, "dec", cfg, in_codes);
    return b;
}

const RelayDF& ModelBundle::relay_df() const {
    if (!relay_df_) throw DomainError("bundle has no decode-and-forward relay");
    return *relay_df_;
}

const RelayPF& ModelBundle::relay_pf() const {
    if (!relay_pf_) throw DomainError("bundle has no process-and-forward relay");
    return *relay_pf_;
}

size_t ModelBundle::relay_param_count() const { return relay_params_; }

std::string ModelBundle::model_id() const {
    std::ostringstream os;
    os << protocol_name(protocol_);
    if (protocol_ == Protocol::kDf) os << "-l" << lambda_;
    os << "-cf" << cfg_.c_feat << "-s" << seed_;
    return os.str();
}

ag::Var ModelBundle::to_feature(const ag::Var& code) const {
    const size_t batch = code.value().dim(0);
    return ag::reshape(code, {batch, cfg_.c_out(), cfg_.feat_h(), cfg_.feat_w()});
}

namespace {

constexpr char kMagic[8] = {'J', 'S', 'C', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

json read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw ConfigError(path + ": not a checkpoint file");
    const uint64_t hlen = read_u64(is);
    if (!is || hlen > (1ULL << 30)) throw ConfigError(path + ": corrupt checkpoint header");
    std::string hstr(hlen, '\0');
    is.read(hstr.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw ConfigError(path + ": truncated checkpoint header");
    json h = json::parse(hstr, nullptr, false);
    if (h.is_discarded()) throw ConfigError(path + ": checkpoint header is not valid JSON");
    if (json_get<int>(h, "format_version", -1) != 1)
        throw ConfigError(path + ": unsupported checkpoint format version");
    return h;
}

void fill_params_from_archive(std::istream& is, const json& header, const std::string& path,
                              nn::ParamSet& params, NamedTensors* extra_out) {
    const auto& dir = header.at("tensors");
    const size_t param_count = json_get<size_t>(header, "param_count", dir.size());
    if (param_count != params.items().size() || dir.size() < param_count)
        throw ConfigError(path + ": checkpoint holds " + std::to_string(param_count) +
                          " model tensors, model has " + std::to_string(params.items().size()));
    size_t i = 0;
    for (auto& [name, var] : params.items()) {
        const auto& e = dir.at(i++);
        if (e.at("name").get<std::string>() != name)
            throw ConfigError(path + ": tensor #" + std::to_string(i - 1) + " is \"" +
                              e.at("name").get<std::string>() + "\", model expects \"" + name +
                              "\"");
        const auto shape = e.at("shape").get<std::vector<size_t>>();
        if (shape != var.value().shape())
            throw ConfigError(path + ": shape mismatch for tensor \"" + name + "\"");
        Tensor& t = var.value_mut();
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw ConfigError(path + ": truncated tensor payload at \"" + name + "\"");
    }
    if (extra_out) {
        extra_out->clear();
        for (size_t e = param_count; e < dir.size(); ++e) {
            const auto& entry = dir.at(e);
            Tensor t(entry.at("shape").get<std::vector<size_t>>());
            is.read(reinterpret_cast<char*>(t.data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
            if (!is)
                throw ConfigError(path + ": truncated tensor payload at \"" +
                                  entry.at("name").get<std::string>() + "\"");
            extra_out->emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle, const json& train_state,
                     const NamedTensors& extra) {
    json dir = json::array();
    size_t offset = 0;
    const auto push_entry = [&](const std::string& name, const Tensor& t) {
        dir.push_back(
            json{{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
        offset += t.size();
    };
    for (const auto& [name, var] : bundle.params().items()) push_entry(name, var.value());
    for (const auto& [name, t] : extra) push_entry(name, t);
    json header{{"format_version", 1},
                {"protocol", protocol_name(bundle.protocol())},
                {"lambda", bundle.lambda()},
                {"seed", bundle.seed()},
                {"encoder", bundle.config().to_json()},
                {"model_id", bundle.model_id()},
                {"param_count", bundle.params().items().size()},
                {"tensors", std::move(dir)},
                {"train_state", train_state}};
    const std::string hstr = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open checkpoint file for writing: " + path);
    os.write(kMagic, 8);
    write_u64(os, hstr.size());
    os.write(hstr.data(), static_cast<std::streamsize>(hstr.size()));
    const auto write_tensor = [&os](const Tensor& t) {
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    for (const auto& [name, var] : bundle.params().items()) write_tensor(var.value());
    for (const auto& [name, t] : extra) write_tensor(t);
    os.flush();
    if (!os) throw Error("failed writing checkpoint: " + path);
}

ModelBundle load_checkpoint(const std::string& path, json* train_state_out,
                            NamedTensors* extra_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);
    const json header = read_header(is, path);
    ModelBundle bundle = ModelBundle::build(
        protocol_from_name(header.at("protocol").get<std::string>()),
        EncoderConfig::from_json(header.at("encoder")), header.at("seed").get<uint64_t>(),
        json_get(header, "lambda", 0.0));
    fill_params_from_archive(is, header, path, bundle.params(), extra_out);
    if (train_state_out) *train_state_out = json_get(header, "train_state", json::object());
    return bundle;
}

json read_checkpoint_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);
    const json header = read_header(is, path);
    return json_get(header, "train_state", json::object());
}

json read_checkpoint_info(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);
    json header = read_header(is, path);
    // In the header "param_count" delimits the model tensors inside the
    // directory; the summary reports scalar totals instead.
    const size_t model_tensors = json_get<size_t>(header, "param_count", 0);
    size_t count = 0, doubles = 0, scalars = 0;
    if (header.contains("tensors")) {
        count = header["tensors"].size();
        for (size_t i = 0; i < count; ++i) {
            const size_t n = header["tensors"][i].at("count").get<size_t>();
            doubles += n;
            if (i < model_tensors) scalars += n;
        }
        header.erase("tensors");
    }
    header["param_count"] = scalars;
    header["tensor_count"] = count;
    header["tensor_doubles"] = doubles;
    return header;
}

void load_checkpoint_into(const std::string& path, ModelBundle& bundle, json* train_state_out,
                          NamedTensors* extra_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);
    const json header = read_header(is, path);

    const std::string stored_proto = header.at("protocol").get<std::string>();
    if (stored_proto != protocol_name(bundle.protocol()))
        throw ConfigError(path + ": checkpoint protocol \"" + stored_proto +
                          "\" does not match run protocol \"" + protocol_name(bundle.protocol()) +
                          "\"");
    const double stored_lambda = json_get(header, "lambda", 0.0);
    if (stored_lambda != bundle.lambda())
        throw ConfigError(path + ": checkpoint lambda " + std::to_string(stored_lambda) +
                          " does not match run lambda " + std::to_string(bundle.lambda()));
    const EncoderConfig stored_cfg = EncoderConfig::from_json(header.at("encoder"));
    if (!(stored_cfg == bundle.config())) {
        const json a = stored_cfg.to_json();
        const json b = bundle.config().to_json();
        for (const auto& [key, value] : a.items())
            if (b.at(key) != value)
                throw ConfigError(path + ": checkpoint encoder." + key + " = " + value.dump() +
                                  " does not match run value " + b.at(key).dump());
        throw ConfigError(path + ": checkpoint encoder config does not match run config");
    }
    fill_params_from_archive(is, header, path, bundle.params(), extra_out);
    if (train_state_out) *train_state_out = json_get(header, "train_state", json::object());
}

}  // namespace jscc
