#pragma once

#include <string>
#include <vector>

#include "jscc/dataset.hpp"
#include "jscc/evaluation.hpp"

namespace jscc {

// Capacity-based bit budget for one image: floor(2k log2(1 + SNR)) bits over
// the 2k complex channel uses of a full round at destination link SNR gamma.
long long separation_bit_budget(double gamma_db, size_t k);

// One source-coded transmission attempt.
struct CodecImage {
    size_t bits = 0;       // bitstream length actually produced
    int quality = 0;       // codec quality that produced it
    bool overflow = false; // even the lowest quality exceeded the budget
    Tensor decoded;        // (1,C,H,W) in [0,1]
};

// Interface to an image codec that can compress a batch at per-image quality
// settings and decode the results.
class CodecClient {
  public:
    virtual ~CodecClient() = default;
    virtual std::string name() const = 0;
    // Throws CodecUnavailable when the codec cannot run.
    virtual void require_available() = 0;
    virtual int quality_min() const { return 0; }
    virtual int quality_max() const { return 100; }
    // images[i] is (1,C,H,W) or (C,H,W); returns bitstream bits and decodes.
    virtual std::vector<CodecImage> transcode(const std::vector<Tensor>& images,
                                              const std::vector<int>& quality) = 0;
};

// Drives an external codec process in batch mode. The helper command is
// invoked as:
//   <cmd> probe
//   <cmd> batch <request.json>
// with request {"tasks": [{"quality": q, "in": ppm, "bin": file, "out": ppm}]}.
// PPM P6 files carry the pixels in both directions.
class ExternalCodec : public CodecClient {
  public:
    explicit ExternalCodec(std::string command, std::string name = "external");
    std::string name() const override { return name_; }
    void require_available() override;
    std::vector<CodecImage> transcode(const std::vector<Tensor>& images,
                                      const std::vector<int>& quality) override;

  private:
    std::string command_, name_;
    int probed_ = -1;  // -1 unknown, 0 unavailable, 1 available
};

struct SeparationResult {
    EvalRecord record;        // protocol "separation+<codec>"
    long long budget_bits = 0;
    size_t overflow_count = 0;
    size_t fitted_count = 0;
    std::vector<CodecImage> images;
};

// Digital baseline: each image gets the capacity budget of a full round and
// is source-coded to the highest quality that fits (binary search). Images
// that cannot fit even at minimum quality are flagged as overflow and scored
// with the minimum-quality reconstruction.
SeparationResult separation_baseline(const ImageDataset& images, double gamma_db, size_t k,
                                     CodecClient& codec, uint64_t seed = 0);

// PPM P6 interchange helpers (pixel range [0,1] <-> 8-bit).
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

}  // namespace jscc
