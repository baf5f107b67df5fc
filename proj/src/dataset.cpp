#include "jscc/dataset.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "jscc/error.hpp"
#include "jscc/json_util.hpp"
#include "jscc/rng.hpp"

namespace jscc {

namespace fs = std::filesystem;

ImageDataset ImageDataset::from_pixels(size_t c, size_t h, size_t w,
                                       std::vector<uint8_t> pixels) {
    if (c == 0 || h == 0 || w == 0) throw ConfigError("dataset dimensions must be positive");
    if (pixels.size() % (c * h * w) != 0)
        throw ConfigError("dataset byte count is not a multiple of the image size");
    ImageDataset d;
    d.c_ = c;
    d.h_ = h;
    d.w_ = w;
    d.n_ = pixels.size() / (c * h * w);
    d.pixels_ = std::move(pixels);
    return d;
}

Tensor ImageDataset::batch(const std::vector<size_t>& idx) const {
    Tensor t({idx.size(), c_, h_, w_});
    double* out = t.data();
    const size_t stride = image_bytes();
    for (size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= n_) throw DomainError("dataset index out of range");
        const uint8_t* src = pixels_.data() + idx[b] * stride;
        for (size_t j = 0; j < stride; ++j) out[b * stride + j] = src[j] / 255.0;
    }
    return t;
}

Tensor ImageDataset::all() const {
    std::vector<size_t> idx(n_);
    std::iota(idx.begin(), idx.end(), size_t{0});
    return batch(idx);
}

ImageDataset ImageDataset::subset(const std::vector<size_t>& idx) const {
    std::vector<uint8_t> px(idx.size() * image_bytes());
    for (size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= n_) throw DomainError("dataset index out of range");
        std::memcpy(px.data() + b * image_bytes(), raw(idx[b]), image_bytes());
    }
    return from_pixels(c_, h_, w_, std::move(px));
}

ImageDataset ImageDataset::take(size_t n) const {
    if (n > n_) throw DomainError("take: dataset has only " + std::to_string(n_) + " images");
    std::vector<uint8_t> px(pixels_.begin(), pixels_.begin() + n * image_bytes());
    return from_pixels(c_, h_, w_, std::move(px));
}

void ImageDataset::append(const ImageDataset& other) {
    if (n_ == 0) {
        *this = other;
        return;
    }
    if (other.c_ != c_ || other.h_ != h_ || other.w_ != w_)
        throw ConfigError("cannot append datasets with different geometry");
    pixels_.insert(pixels_.end(), other.pixels_.begin(), other.pixels_.end());
    n_ += other.n_;
}

namespace {
constexpr size_t kCifarRecord = 1 + 3 * 32 * 32;
constexpr size_t kCifarPerFile = 10000;
}  // namespace

ImageDataset load_cifar_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw ConfigError("cannot open dataset file: " + path);
    const auto bytes = static_cast<size_t>(is.tellg());
    if (bytes != kCifarRecord * kCifarPerFile)
        throw ConfigError(path + ": expected " + std::to_string(kCifarRecord * kCifarPerFile) +
                          " bytes, found " + std::to_string(bytes));
    is.seekg(0);
    std::vector<uint8_t> buf(bytes);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw ConfigError(path + ": short read");

    std::vector<uint8_t> px(kCifarPerFile * (kCifarRecord - 1));
    for (size_t r = 0; r < kCifarPerFile; ++r) {
        const uint8_t label = buf[r * kCifarRecord];
        if (label > 9) throw ConfigError(path + ": record " + std::to_string(r) +
                                         " has label " + std::to_string(label) +
                                         "; not a CIFAR-10 batch file");
        std::memcpy(px.data() + r * (kCifarRecord - 1), buf.data() + r * kCifarRecord + 1,
                    kCifarRecord - 1);
    }
    return ImageDataset::from_pixels(3, 32, 32, std::move(px));
}

std::string sha256_bytes(const void* data, size_t len) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    if (EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open file for hashing: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("SHA-256 context allocation failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<size_t>(is.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    EVP_DigestFinal_ex(ctx, md, &md_len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

CifarPair load_cifar10(const std::string& root) {
    const std::vector<std::string> train_files = {"data_batch_1.bin", "data_batch_2.bin",
                                                  "data_batch_3.bin", "data_batch_4.bin",
                                                  "data_batch_5.bin"};
    const std::string test_file = "test_batch.bin";

    const fs::path manifest = fs::path(root) / "checksums.json";
    if (fs::exists(manifest)) {
        std::ifstream is(manifest);
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw ConfigError(manifest.string() + ": invalid JSON");
        for (const auto& [fname, digest] : j.items()) {
            const std::string got = sha256_file((fs::path(root) / fname).string());
            if (got != digest.get<std::string>())
                throw ConfigError(fname + ": SHA-256 mismatch (expected " +
                                  digest.get<std::string>() + ", got " + got +
                                  "); dataset refused");
        }
    }

    CifarPair pair;
    for (const auto& f : train_files) pair.train.append(load_cifar_bin((fs::path(root) / f).string()));
    pair.test = load_cifar_bin((fs::path(root) / test_file).string());
    if (pair.train.size() != 50000 || pair.test.size() != 10000)
        throw ConfigError("CIFAR-10 layout violated: need 50000 train / 10000 test images");
    return pair;
}

namespace {

std::vector<uint8_t> gunzip_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open archive: " + path);
    std::vector<uint8_t> comp((std::istreambuf_iterator<char>(is)),
                              std::istreambuf_iterator<char>());
    z_stream strm{};
    if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK) throw Error("zlib init failed");
    std::vector<uint8_t> out;
    out.reserve(comp.size() * 4);
    std::vector<uint8_t> chunk(1 << 16);
    strm.next_in = comp.data();
    strm.avail_in = static_cast<uInt>(comp.size());
    int rc = Z_OK;
    do {
        strm.next_out = chunk.data();
        strm.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw ConfigError(path + ": not a valid gzip stream");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - strm.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&strm);
    return out;
}

size_t octal_field(const uint8_t* p, size_t n) {
    size_t v = 0;
    for (size_t i = 0; i < n && p[i] >= '0' && p[i] <= '7'; ++i) v = v * 8 + (p[i] - '0');
    return v;
}

}  // namespace

void extract_cifar_targz(const std::string& tgz_path, const std::string& dest_root) {
    const std::vector<uint8_t> tar = gunzip_file(tgz_path);
    fs::create_directories(dest_root);
    size_t extracted = 0;
    for (size_t off = 0; off + 512 <= tar.size();) {
        const uint8_t* hdr = tar.data() + off;
        if (hdr[0] == 0) break;  // end-of-archive zero blocks
        std::string name(reinterpret_cast<const char*>(hdr), strnlen(reinterpret_cast<const char*>(hdr), 100));
        const size_t fsize = octal_field(hdr + 124, 12);
        const char type = static_cast<char>(hdr[156]);
        off += 512;
        if (type == '0' || type == 0) {
            const std::string base = fs::path(name).filename().string();
            if (base.size() > 4 && base.substr(base.size() - 4) == ".bin") {
                if (off + fsize > tar.size()) throw ConfigError(tgz_path + ": truncated archive");
                std::ofstream os(fs::path(dest_root) / base, std::ios::binary | std::ios::trunc);
                os.write(reinterpret_cast<const char*>(tar.data() + off),
                         static_cast<std::streamsize>(fsize));
                ++extracted;
            }
        }
        off += (fsize + 511) / 512 * 512;
    }
    if (extracted < 6)
        throw ConfigError(tgz_path + ": archive does not contain the six CIFAR-10 .bin files");
}

std::pair<ImageDataset, ImageDataset> split_train_val(const ImageDataset& full, size_t val_count,
                                                      uint64_t seed) {
    if (val_count >= full.size())
        throw ConfigError("validation split larger than the dataset");
    std::vector<size_t> perm(full.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    Rng rng(derive_seed(seed, 0x73706c6974ULL));
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<size_t> val_idx(perm.begin(), perm.begin() + static_cast<long>(val_count));
    std::vector<size_t> train_idx(perm.begin() + static_cast<long>(val_count), perm.end());
    // Keep original order inside each side so subsets are stable.
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {full.subset(train_idx), full.subset(val_idx)};
}

ImageDataset synthetic_images(size_t n, uint64_t seed, size_t c, size_t h, size_t w) {
    std::vector<uint8_t> px(n * c * h * w);
    for (size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x73796e74ULL, i));
        // Per-channel linear gradient plus a few smooth bumps.
        std::vector<double> gx(c), gy(c), bias(c);
        for (size_t ch = 0; ch < c; ++ch) {
            gx[ch] = rng.uniform(-0.5, 0.5);
            gy[ch] = rng.uniform(-0.5, 0.5);
            bias[ch] = rng.uniform(0.2, 0.8);
        }
        const int nblobs = 3 + static_cast<int>(rng.next_u64() % 4);
        struct Blob {
            double cx, cy, r2, amp[8];
        };
        std::vector<Blob> blobs(nblobs);
        for (auto& bl : blobs) {
            bl.cx = rng.uniform(0.0, static_cast<double>(w));
            bl.cy = rng.uniform(0.0, static_cast<double>(h));
            const double r = rng.uniform(2.0, static_cast<double>(std::min(h, w)) / 2.0);
            bl.r2 = r * r;
            for (size_t ch = 0; ch < c && ch < 8; ++ch) bl.amp[ch] = rng.uniform(-0.6, 0.6);
        }
        for (size_t ch = 0; ch < c; ++ch)
            for (size_t y = 0; y < h; ++y)
                for (size_t x = 0; x < w; ++x) {
                    double v = bias[ch] + gx[ch] * (static_cast<double>(x) / w - 0.5) +
                               gy[ch] * (static_cast<double>(y) / h - 0.5);
                    for (const auto& bl : blobs) {
                        const double dx = static_cast<double>(x) - bl.cx;
                        const double dy = static_cast<double>(y) - bl.cy;
                        v += bl.amp[ch % 8] * std::exp(-(dx * dx + dy * dy) / bl.r2);
                    }
                    v = std::clamp(v, 0.0, 1.0);
                    px[((i * c + ch) * h + y) * w + x] = static_cast<uint8_t>(std::lround(v * 255.0));
                }
    }
    return ImageDataset::from_pixels(c, h, w, std::move(px));
}

}  // namespace jscc
