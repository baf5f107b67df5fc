#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jscc/tensor.hpp"

namespace jscc {

// Fixed-geometry image collection stored as uint8 CHW planes; batches are
// materialized on demand as doubles in [0,1].
class ImageDataset {
  public:
    ImageDataset() = default;

    static ImageDataset from_pixels(size_t c, size_t h, size_t w, std::vector<uint8_t> pixels);

    size_t size() const { return n_; }
    size_t channels() const { return c_; }
    size_t height() const { return h_; }
    size_t width() const { return w_; }
    size_t image_bytes() const { return c_ * h_ * w_; }

    const uint8_t* raw(size_t i) const { return pixels_.data() + i * image_bytes(); }

    Tensor batch(const std::vector<size_t>& idx) const;  // (B,C,H,W)
    Tensor image(size_t i) const { return batch({i}); }
    Tensor all() const;

    ImageDataset subset(const std::vector<size_t>& idx) const;
    ImageDataset take(size_t n) const;  // first n images
    void append(const ImageDataset& other);

  private:
    size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<uint8_t> pixels_;
};

struct CifarPair {
    ImageDataset train;
    ImageDataset test;
};

// One CIFAR-10 binary batch file: 10000 records of 1 label byte followed by
// 3072 pixel bytes (channel planes). Size and label range are enforced.
ImageDataset load_cifar_bin(const std::string& path);

// Full canonical layout under `root`: data_batch_1..5.bin and test_batch.bin.
// When root/checksums.json exists, every listed file must match its SHA-256
// digest; a mismatch refuses the dataset.
CifarPair load_cifar10(const std::string& root);

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, size_t len);

// Extracts the six CIFAR-10 .bin members from a gzipped ustar archive.
void extract_cifar_targz(const std::string& tgz_path, const std::string& dest_root);

// Deterministic carve-out: {remaining train, validation} split by a seeded
// permutation of the full set.
std::pair<ImageDataset, ImageDataset> split_train_val(const ImageDataset& full, size_t val_count,
                                                      uint64_t seed);

// Seeded stand-in with the same geometry as CIFAR: smooth color fields with
// a few blobs, so reconstruction quality is meaningful. Image i depends only
// on (seed, i).
ImageDataset synthetic_images(size_t n, uint64_t seed, size_t c = 3, size_t h = 32, size_t w = 32);

}  // namespace jscc
