#include "jscc/separation.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "jscc/json_util.hpp"
#include "jscc/signal.hpp"

namespace jscc {

namespace fs = std::filesystem;
using nlohmann::json;

long long separation_bit_budget(double gamma_db, size_t k) {
    if (!std::isfinite(gamma_db)) throw ConfigError("separation budget needs a finite gamma");
    const double capacity = std::log2(1.0 + snr_db_to_linear(gamma_db));
    return static_cast<long long>(std::floor(2.0 * static_cast<double>(k) * capacity));
}

void write_ppm(const std::string& path, const Tensor& image) {
    const Tensor img = image.rank() == 4 ? image : image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
    if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 3)
        throw DomainError("write_ppm expects one 3-channel image, got " + image.shape_str());
    const size_t h = img.dim(2), w = img.dim(3);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at4(0, c, y, x), 0.0, 1.0);
                os.put(static_cast<char>(std::lround(v * 255.0)));
            }
    if (!os) throw Error("failed writing " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path);
    std::string magic;
    size_t w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w == 0 || h == 0)
        throw Error(path + ": unsupported PPM (need P6, maxval 255)");
    is.get();  // single whitespace after header
    std::vector<unsigned char> buf(w * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw Error(path + ": truncated PPM payload");
    Tensor t({1, 3, h, w});
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t c = 0; c < 3; ++c)
                t.at4(0, c, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
    return t;
}

ExternalCodec::ExternalCodec(std::string command, std::string name)
    : command_(std::move(command)), name_(std::move(name)) {}

void ExternalCodec::require_available() {
    if (probed_ == -1) {
        const int rc = std::system((command_ + " probe >/dev/null 2>&1").c_str());
        probed_ = (rc == 0) ? 1 : 0;
    }
    if (probed_ != 1)
        throw CodecUnavailable("codec helper not available: " + command_ +
                               " (probe failed; is the codec installed?)");
}

std::vector<CodecImage> ExternalCodec::transcode(const std::vector<Tensor>& images,
                                                 const std::vector<int>& quality) {
    require_available();
    if (images.size() != quality.size())
        throw DomainError("transcode: images and quality lists differ in length");

    char tmpl[] = "/tmp/jscc-codec-XXXXXX";
    const char* dir = mkdtemp(tmpl);
    if (!dir) throw Error("cannot create codec scratch directory");
    const fs::path root(dir);

    std::vector<CodecImage> out(images.size());
    try {
        json tasks = json::array();
        for (size_t i = 0; i < images.size(); ++i) {
            const std::string in = (root / ("in" + std::to_string(i) + ".ppm")).string();
            const std::string bin = (root / ("c" + std::to_string(i) + ".bin")).string();
            const std::string dec = (root / ("out" + std::to_string(i) + ".ppm")).string();
            write_ppm(in, images[i]);
            tasks.push_back(json{{"quality", quality[i]}, {"in", in}, {"bin", bin}, {"out", dec}});
        }
        const std::string req = (root / "request.json").string();
        {
            std::ofstream os(req, std::ios::trunc);
            os << json{{"tasks", tasks}}.dump();
        }
        const std::string log = (root / "codec.log").string();
        const int rc = std::system((command_ + " batch " + req + " >" + log + " 2>&1").c_str());
        if (rc != 0) {
            std::ifstream lf(log);
            std::string tail((std::istreambuf_iterator<char>(lf)),
                             std::istreambuf_iterator<char>());
            if (tail.size() > 500) tail = tail.substr(tail.size() - 500);
            throw Error("codec batch failed (exit " + std::to_string(rc) + "): " + tail);
        }
        for (size_t i = 0; i < images.size(); ++i) {
            const fs::path bin = root / ("c" + std::to_string(i) + ".bin");
            const fs::path dec = root / ("out" + std::to_string(i) + ".ppm");
            if (!fs::exists(bin) || !fs::exists(dec))
                throw Error("codec did not produce outputs for image " + std::to_string(i));
            out[i].bits = static_cast<size_t>(fs::file_size(bin)) * 8;
            out[i].quality = quality[i];
            out[i].decoded = read_ppm(dec.string());
        }
    } catch (...) {
        fs::remove_all(root);
        throw;
    }
    fs::remove_all(root);
    return out;
}

SeparationResult separation_baseline(const ImageDataset& images, double gamma_db, size_t k,
                                     CodecClient& codec, uint64_t seed) {
    if (images.size() == 0) throw ConfigError("separation baseline needs images");
    codec.require_available();
    const long long budget = separation_bit_budget(gamma_db, k);
    const int q_min = codec.quality_min(), q_max = codec.quality_max();

    const size_t n = images.size();
    std::vector<Tensor> originals(n);
    for (size_t i = 0; i < n; ++i) originals[i] = images.image(i);

    SeparationResult res;
    res.budget_bits = budget;
    res.images.resize(n);

    // Largest quality whose bitstream fits: bracket with [q_min, q_max],
    // then bisect. lo always holds a fitting encode once one exists.
    std::vector<int> lo(n, q_min), hi(n, q_max + 1);
    std::vector<bool> done(n, false);

    {  // minimum quality round: decides overflow
        auto r = codec.transcode(originals, std::vector<int>(n, q_min));
        for (size_t i = 0; i < n; ++i) {
            res.images[i] = r[i];
            if (static_cast<long long>(r[i].bits) > budget) {
                res.images[i].overflow = true;
                done[i] = true;  // keep the minimum-quality reconstruction
            }
        }
    }
    {  // maximum quality round
        std::vector<Tensor> pend;
        std::vector<size_t> who;
        for (size_t i = 0; i < n; ++i)
            if (!done[i]) {
                pend.push_back(originals[i]);
                who.push_back(i);
            }
        if (!pend.empty()) {
            auto r = codec.transcode(pend, std::vector<int>(pend.size(), q_max));
            for (size_t j = 0; j < who.size(); ++j) {
                const size_t i = who[j];
                if (static_cast<long long>(r[j].bits) <= budget) {
                    res.images[i] = r[j];
                    done[i] = true;
                } else {
                    hi[i] = q_max;
                }
            }
        }
    }
    while (true) {
        std::vector<Tensor> pend;
        std::vector<size_t> who;
        std::vector<int> mid;
        for (size_t i = 0; i < n; ++i) {
            if (done[i] || hi[i] - lo[i] <= 1) continue;
            pend.push_back(originals[i]);
            who.push_back(i);
            mid.push_back(lo[i] + (hi[i] - lo[i]) / 2);
        }
        if (pend.empty()) break;
        auto r = codec.transcode(pend, mid);
        for (size_t j = 0; j < who.size(); ++j) {
            const size_t i = who[j];
            if (static_cast<long long>(r[j].bits) <= budget) {
                lo[i] = mid[j];
                res.images[i] = r[j];
            } else {
                hi[i] = mid[j];
            }
        }
    }

    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (res.images[i].overflow) ++res.overflow_count;
        psnr_sum += psnr_db(originals[i], res.images[i].decoded);
        ssim_sum += ssim(originals[i], res.images[i].decoded);
    }
    res.fitted_count = n - res.overflow_count;

    EvalRecord rec;
    rec.model_id = "separation+" + codec.name();
    rec.protocol = "separation";
    rec.snr_sr_db = gamma_db;
    rec.gamma_db = gamma_db;
    rec.n_images = n;
    rec.psnr = psnr_sum / static_cast<double>(n);
    rec.ssim_val = ssim_sum / static_cast<double>(n);
    rec.seed = seed;
    if (res.overflow_count > 0)
        rec.flags.push_back("overflow=" + std::to_string(res.overflow_count));
    res.record = std::move(rec);
    return res;
}

}  // namespace jscc
