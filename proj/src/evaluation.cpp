#include "jscc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "jscc/json_util.hpp"
#include "jscc/protocols.hpp"

namespace jscc {

using nlohmann::json;

double mse_mean(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DomainError("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (a.size() == 0) throw DomainError("mse: empty tensors");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

namespace {
double psnr_from_mse(double mse) {
    if (mse <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, -10.0 * std::log10(mse));
}
}  // namespace

double psnr_db(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse_mean(a, b)); }

std::vector<double> psnr_per_image(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) || a.rank() != 4) throw DomainError("psnr_per_image expects matching (B,C,H,W)");
    const size_t batch = a.dim(0), stride = a.size() / batch;
    std::vector<double> out(batch);
    for (size_t i = 0; i < batch; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < stride; ++j) {
            const double d = a[i * stride + j] - b[i * stride + j];
            s += d * d;
        }
        out[i] = psnr_from_mse(s / static_cast<double>(stride));
    }
    return out;
}

namespace {

// 11-tap Gaussian, sigma 1.5, normalized.
const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double x = i - 5.0;
            v[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += v[i];
        }
        for (auto& t : v) t /= sum;
        return v;
    }();
    return w;
}

// Valid-region separable Gaussian filter of one (H,W) plane.
void gauss_valid(const double* img, size_t h, size_t w, std::vector<double>& tmp,
                 std::vector<double>& out) {
    const auto& win = ssim_window();
    const size_t oh = h - 10, ow = w - 10;
    tmp.assign(h * ow, 0.0);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (size_t t = 0; t < 11; ++t) s += win[t] * img[y * w + x + t];
            tmp[y * ow + x] = s;
        }
    out.assign(oh * ow, 0.0);
    for (size_t y = 0; y < oh; ++y)
        for (size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (size_t t = 0; t < 11; ++t) s += win[t] * tmp[(y + t) * ow + x];
            out[y * ow + x] = s;
        }
}

double ssim_plane(const double* a, const double* b, size_t h, size_t w) {
    if (h < 11 || w < 11) throw DomainError("ssim needs images of at least 11x11");
    constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    const size_t n = h * w;
    std::vector<double> a2(n), b2(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
        a2[i] = a[i] * a[i];
        b2[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    std::vector<double> tmp, mu_a, mu_b, s_a2, s_b2, s_ab;
    gauss_valid(a, h, w, tmp, mu_a);
    gauss_valid(b, h, w, tmp, mu_b);
    gauss_valid(a2.data(), h, w, tmp, s_a2);
    gauss_valid(b2.data(), h, w, tmp, s_b2);
    gauss_valid(ab.data(), h, w, tmp, s_ab);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = s_a2[i] - ma * ma;
        const double vb = s_b2[i] - mb * mb;
        const double cov = s_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    return acc / static_cast<double>(mu_a.size());
}

}  // namespace

std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) || a.rank() != 4) throw DomainError("ssim expects matching (B,C,H,W)");
    const size_t batch = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    std::vector<double> out(batch, 0.0);
    for (size_t i = 0; i < batch; ++i) {
        double s = 0.0;
        for (size_t ch = 0; ch < c; ++ch) {
            const size_t off = (i * c + ch) * h * w;
            s += ssim_plane(a.data() + off, b.data() + off, h, w);
        }
        out[i] = s / static_cast<double>(c);
    }
    return out;
}

double ssim(const Tensor& a, const Tensor& b) {
    const auto per = ssim_per_image(a, b);
    return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

json EvalRecord::to_json() const {
    json j{{"model_id", model_id}, {"protocol", protocol},
           {"snr_sr_db", json_put_db(snr_sr_db)}, {"gamma_db", gamma_db},
           {"n_images", n_images}, {"psnr_db", psnr},
           {"ssim", ssim_val},     {"seed", seed},
           {"flags", flags}};
    if (lambda) j["lambda"] = *lambda;
    return j;
}

EvalRecord EvalRecord::from_json(const json& j) {
    check_keys(j,
               {"model_id", "protocol", "snr_sr_db", "gamma_db", "lambda", "n_images", "psnr_db",
                "ssim", "seed", "flags"},
               "record");
    EvalRecord r;
    r.model_id = json_get<std::string>(j, "model_id", "");
    r.protocol = j.at("protocol").get<std::string>();
    r.snr_sr_db = json_get_db(j, "snr_sr_db", 0.0);
    r.gamma_db = j.at("gamma_db").get<double>();
    if (j.contains("lambda")) r.lambda = j.at("lambda").get<double>();
    r.n_images = json_get<size_t>(j, "n_images", 0);
    r.psnr = j.at("psnr_db").get<double>();
    r.ssim_val = j.at("ssim").get<double>();
    r.seed = json_get<uint64_t>(j, "seed", 0);
    r.flags = json_get(j, "flags", std::vector<std::string>{});
    return r;
}

void write_records_jsonl(const std::vector<EvalRecord>& records, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open records file for writing: " + path);
    for (const auto& r : records) os << r.to_json().dump() << "\n";
    os.flush();
    if (!os) throw Error("failed writing records: " + path);
}

std::vector<EvalRecord> read_records_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open records file: " + path);
    std::vector<EvalRecord> out;
    std::string line;
    size_t ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ConfigError(path + ":" + std::to_string(ln) + ": invalid JSON record");
        try {
            out.push_back(EvalRecord::from_json(j));
        } catch (const json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(ln) + ": " + e.what());
        }
    }
    return out;
}

std::vector<EvalRecord> sweep(const ModelBundle& bundle, const ImageDataset& images,
                              const SweepConfig& cfg) {
    if (images.size() == 0) throw ConfigError("sweep requires a non-empty image set");
    if (cfg.batch_size == 0) throw ConfigError("sweep batch_size must be positive");
    std::vector<EvalRecord> records;
    records.reserve(cfg.gammas_db.size());

    for (size_t gi = 0; gi < cfg.gammas_db.size(); ++gi) {
        const double gamma = cfg.gammas_db[gi];
        const LinkSet links = LinkSet::from_snr(SnrTriple{cfg.snr_sr_db, gamma, gamma});
        double psnr_sum = 0.0, ssim_sum = 0.0;
        size_t done = 0, batch_idx = 0;
        while (done < images.size()) {
            const size_t b = std::min(cfg.batch_size, images.size() - done);
            std::vector<size_t> idx(b);
            std::iota(idx.begin(), idx.end(), done);
            const Tensor batch = images.batch(idx);
            const uint64_t seed = derive_seed(cfg.seed, 0x6576616cULL, gi, batch_idx);
            const auto fwd = forward_protocol(bundle, ag::constant(batch), links, seed);
            const Tensor recon = fwd.recon_eval();
            for (double v : psnr_per_image(batch, recon)) psnr_sum += v;
            for (double v : ssim_per_image(batch, recon)) ssim_sum += v;
            done += b;
            ++batch_idx;
        }

        EvalRecord r;
        r.model_id = bundle.model_id();
        r.protocol = protocol_name(bundle.protocol());
        r.snr_sr_db = cfg.snr_sr_db;
        r.gamma_db = gamma;
        if (bundle.protocol() == Protocol::kDf) r.lambda = bundle.lambda();
        r.n_images = images.size();
        r.psnr = psnr_sum / static_cast<double>(images.size());
        r.ssim_val = ssim_sum / static_cast<double>(images.size());
        r.seed = cfg.seed;
        if (cfg.trained_gamma_range &&
            (gamma < cfg.trained_gamma_range->first || gamma > cfg.trained_gamma_range->second))
            r.flags.push_back("gamma-outside-trained-range");
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace jscc
