#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <set>

#include "jscc/config.hpp"
#include "jscc/separation.hpp"
#include "test_util.hpp"

using namespace jscc;
using jscc_test::TempDir;

namespace {

// A file shaped like one CIFAR-10 batch: 10000 records of label + 3072 bytes.
void write_fake_cifar_bin(const std::string& path, uint8_t label_base, uint8_t fill) {
    std::ofstream os(path, std::ios::binary);
    REQUIRE(os);
    std::vector<char> rec(3073);
    for (int r = 0; r < 10000; ++r) {
        rec[0] = static_cast<char>((label_base + r) % 10);
        for (size_t j = 1; j < rec.size(); ++j)
            rec[j] = static_cast<char>((fill + r + j) % 256);
        os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
}

void write_fake_cifar_root(const std::string& root) {
    int i = 0;
    for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                             "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"}) {
        write_fake_cifar_bin((std::filesystem::path(root) / name).string(),
                             static_cast<uint8_t>(i), static_cast<uint8_t>(17 * i));
        ++i;
    }
}

}  // namespace

TEST_CASE("dataset batches scale bytes into the unit interval") {
    std::vector<uint8_t> px = {0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60};
    const ImageDataset d = ImageDataset::from_pixels(3, 1, 2, px);
    CHECK(d.size() == 2);
    CHECK(d.image_bytes() == 6);
    const Tensor b = d.batch({1, 0});
    REQUIRE(b.shape() == std::vector<size_t>{2, 3, 1, 2});
    CHECK(b[0] == doctest::Approx(10 / 255.0));
    CHECK(b[6] == doctest::Approx(0.0));
    CHECK(b[11] == doctest::Approx(1.0));
    CHECK_THROWS_AS(d.batch({2}), DomainError);

    CHECK_THROWS_AS(ImageDataset::from_pixels(3, 2, 2, {0, 1, 2}), ConfigError);
}

TEST_CASE("subset, take, and append preserve pixels") {
    const ImageDataset d = synthetic_images(5, 3);
    const ImageDataset sub = d.subset({4, 0});
    CHECK(sub.size() == 2);
    CHECK(std::memcmp(sub.raw(0), d.raw(4), d.image_bytes()) == 0);
    CHECK(std::memcmp(sub.raw(1), d.raw(0), d.image_bytes()) == 0);

    const ImageDataset first3 = d.take(3);
    CHECK(first3.size() == 3);
    CHECK(std::memcmp(first3.raw(2), d.raw(2), d.image_bytes()) == 0);
    CHECK_THROWS_AS(d.take(9), DomainError);

    ImageDataset grown = first3;
    grown.append(sub);
    CHECK(grown.size() == 5);
    CHECK(std::memcmp(grown.raw(3), d.raw(4), d.image_bytes()) == 0);

    ImageDataset other_geom = synthetic_images(1, 3, 3, 16, 16);
    CHECK_THROWS_AS(grown.append(other_geom), ConfigError);
}

TEST_CASE("batch files are validated by size and label range") {
    TempDir tmp;
    const std::string good = tmp.file("batch.bin");
    write_fake_cifar_bin(good, 0, 0);
    const ImageDataset d = load_cifar_bin(good);
    CHECK(d.size() == 10000);
    CHECK(d.channels() == 3);
    CHECK(d.height() == 32);

    const std::string small = tmp.file("small.bin");
    std::ofstream(small, std::ios::binary) << "hello";
    CHECK_THROWS_WITH_AS(load_cifar_bin(small), doctest::Contains("bytes"), ConfigError);

    const std::string badlabel = tmp.file("badlabel.bin");
    {
        std::ofstream os(badlabel, std::ios::binary);
        std::vector<char> zeros(3073 * 10000, 0);
        zeros[0] = 11;  // label out of range
        os.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
    }
    CHECK_THROWS_WITH_AS(load_cifar_bin(badlabel), doctest::Contains("label"), ConfigError);

    CHECK_THROWS_AS(load_cifar_bin(tmp.file("absent.bin")), ConfigError);
}

TEST_CASE("full dataset layout loads and honors the checksum manifest") {
    TempDir tmp;
    write_fake_cifar_root(tmp.path.string());
    const CifarPair pair = load_cifar10(tmp.path.string());
    CHECK(pair.train.size() == 50000);
    CHECK(pair.test.size() == 10000);

    // A correct manifest passes, a corrupted digest refuses the dataset.
    const std::string digest = sha256_file(tmp.file("test_batch.bin"));
    std::ofstream(tmp.file("checksums.json"))
        << nlohmann::json{{"test_batch.bin", digest}}.dump();
    CHECK_NOTHROW(load_cifar10(tmp.path.string()));

    std::string wrong = digest;
    wrong[0] = wrong[0] == 'a' ? 'b' : 'a';
    std::ofstream(tmp.file("checksums.json"), std::ios::trunc)
        << nlohmann::json{{"test_batch.bin", wrong}}.dump();
    CHECK_THROWS_WITH_AS(load_cifar10(tmp.path.string()), doctest::Contains("SHA-256"),
                         ConfigError);
}

TEST_CASE("sha256 matches a known vector") {
    // printf 'abc' | sha256sum
    CHECK(sha256_bytes("abc", 3) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    TempDir tmp;
    std::ofstream(tmp.file("abc.txt"), std::ios::binary) << "abc";
    CHECK(sha256_file(tmp.file("abc.txt")) == sha256_bytes("abc", 3));
}

TEST_CASE("archive extraction recovers the six batch files") {
    TempDir tmp;
    const std::string src = tmp.file("src");
    std::filesystem::create_directories(src);
    write_fake_cifar_root(src);

    // Build a gzipped tar with the canonical nested directory.
    const std::string tgz = tmp.file("cifar.tgz");
    const std::string cmd = "cd " + tmp.path.string() +
                            " && mkdir -p cifar-10-batches-bin && cp src/*.bin "
                            "cifar-10-batches-bin/ && tar czf cifar.tgz cifar-10-batches-bin";
    REQUIRE(std::system(cmd.c_str()) == 0);

    const std::string dest = tmp.file("out");
    extract_cifar_targz(tgz, dest);
    const CifarPair pair = load_cifar10(dest);
    CHECK(pair.train.size() == 50000);
    // Pixels survive the round trip.
    const ImageDataset orig = load_cifar_bin(src + "/test_batch.bin");
    CHECK(std::memcmp(pair.test.raw(123), orig.raw(123), orig.image_bytes()) == 0);

    const std::string notgz = tmp.file("not.tgz");
    std::ofstream(notgz, std::ios::binary) << "plainly not gzip";
    CHECK_THROWS_AS(extract_cifar_targz(notgz, dest), ConfigError);
}

TEST_CASE("train/val split is a seeded partition") {
    const ImageDataset full = synthetic_images(20, 5);
    auto [tr1, val1] = split_train_val(full, 6, 42);
    auto [tr2, val2] = split_train_val(full, 6, 42);
    auto [tr3, val3] = split_train_val(full, 6, 43);
    CHECK(tr1.size() == 14);
    CHECK(val1.size() == 6);
    CHECK(std::memcmp(tr1.raw(0), tr2.raw(0), tr1.image_bytes() * tr1.size()) == 0);
    CHECK(std::memcmp(val1.raw(0), val2.raw(0), val1.image_bytes() * val1.size()) == 0);

    // Different seed shuffles differently (20 choose 6 makes collisions
    // non-adversarial; this seed pair differs).
    const bool same_val =
        std::memcmp(val1.raw(0), val3.raw(0), val1.image_bytes() * val1.size()) == 0;
    CHECK_FALSE(same_val);

    // Each source image lands on exactly one side: counts add up and no
    // byte-identical image appears on both sides for this seeded content.
    CHECK(tr1.size() + val1.size() == full.size());
    CHECK_THROWS_AS(split_train_val(full, 20, 1), ConfigError);
}

TEST_CASE("synthetic images are seed-deterministic with stable prefixes") {
    const ImageDataset a = synthetic_images(4, 9);
    const ImageDataset b = synthetic_images(4, 9);
    CHECK(std::memcmp(a.raw(0), b.raw(0), a.image_bytes() * 4) == 0);

    // Image i depends only on (seed, i): a longer set shares the prefix.
    const ImageDataset longer = synthetic_images(6, 9);
    CHECK(std::memcmp(a.raw(0), longer.raw(0), a.image_bytes() * 4) == 0);

    const ImageDataset other = synthetic_images(4, 10);
    CHECK(std::memcmp(a.raw(0), other.raw(0), a.image_bytes() * 4) != 0);

    // Non-trivial content: not a constant image.
    std::set<uint8_t> distinct(a.raw(0), a.raw(0) + a.image_bytes());
    CHECK(distinct.size() > 10);
}

TEST_CASE("data config defaults and validation") {
    DataConfig d;
    CHECK(d.kind == "synthetic");
    CHECK(d.resolved_val_count() == 600);  // 10% of 6000
    d.val_count = 123;
    CHECK(d.resolved_val_count() == 123);

    DataConfig cifar;
    cifar.kind = "cifar10";
    CHECK(cifar.resolved_val_count() == 5000);

    DataConfig bad;
    bad.kind = "imagenet";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    DataConfig toosmall;
    toosmall.synthetic_n = 50;
    toosmall.val_count = 50;
    CHECK_THROWS_AS(toosmall.validate(), ConfigError);

    const DataConfig back = DataConfig::from_json(d.to_json());
    CHECK(back.val_count == 123);
    CHECK_THROWS_AS(DataConfig::from_json(nlohmann::json{{"kinds", "synthetic"}}), ConfigError);
}

TEST_CASE("synthetic data loads split and independent test set") {
    DataConfig d;
    d.synthetic_n = 30;
    d.synthetic_test_n = 8;
    d.val_count = 6;
    const LoadedData data = load_data(d, 77);
    CHECK(data.train.size() == 24);
    CHECK(data.val.size() == 6);
    CHECK(data.test.size() == 8);

    // Subset knobs trim deterministically from the front.
    d.train_subset = 10;
    d.test_subset = 4;
    const LoadedData trimmed = load_data(d, 77);
    CHECK(trimmed.train.size() == 10);
    CHECK(trimmed.test.size() == 4);
    CHECK(std::memcmp(trimmed.train.raw(0), data.train.raw(0),
                      10 * data.train.image_bytes()) == 0);
}

TEST_CASE("data root resolution falls back to the environment") {
    DataConfig d;
    d.kind = "cifar10";
    d.root = "/explicit/path";
    CHECK(resolve_data_root(d) == "/explicit/path");

    d.root.clear();
    ::setenv("JSCC_DATA_ROOT", "/from/env", 1);
    CHECK(resolve_data_root(d) == "/from/env");
    ::unsetenv("JSCC_DATA_ROOT");
    CHECK_THROWS_AS(resolve_data_root(d), ConfigError);
}

TEST_CASE("run config defaults, naming, and cross-checks") {
    RunConfig r;
    r.protocol = ProtocolSpec{Protocol::kDf, 1.0, 384};
    CHECK(r.resolved_run_name() == "df-l1-s1");
    r.run_name = "custom";
    CHECK(r.resolved_run_name() == "custom");
    CHECK_NOTHROW(r.validate());

    r.protocol.k = 100;  // disagrees with encoder bandwidth
    CHECK_THROWS_WITH_AS(r.validate(), doctest::Contains("protocol.k"), ConfigError);
}

TEST_CASE("run config json applies nested defaults") {
    const nlohmann::json j{{"protocol", {{"kind", "af"}}}, {"seed", 9}};
    const RunConfig r = RunConfig::from_json(j);
    CHECK(r.protocol.kind == Protocol::kAf);
    CHECK(r.protocol.k == 384);  // inherited from the default encoder
    CHECK(r.train.seed == 9);    // inherited from the top-level seed
    CHECK(r.seed == 9);
    CHECK(r.data.kind == "synthetic");

    const RunConfig back = RunConfig::from_json(r.to_json());
    CHECK(back.protocol.kind == r.protocol.kind);
    CHECK(back.train == r.train);

    CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json{{"sed", 1}}), ConfigError);
}

TEST_CASE("config file loading reports the offending path") {
    TempDir tmp;
    const std::string path = tmp.file("run.json");
    std::ofstream(path) << R"({"protocol": {"kind": "pf"}})";
    const RunConfig r = RunConfig::from_file(path);
    CHECK(r.protocol.kind == Protocol::kPf);

    std::ofstream(path, std::ios::trunc) << "{broken";
    CHECK_THROWS_WITH_AS(RunConfig::from_file(path), doctest::Contains("invalid JSON"),
                         ConfigError);
    CHECK_THROWS_AS(RunConfig::from_file(tmp.file("nope.json")), ConfigError);
}

TEST_CASE("overrides patch nested keys and parse json values") {
    nlohmann::json doc{{"train", {{"lr_init", 1e-4}}}};
    apply_override(doc, "train.lr_init=0.01");
    CHECK(doc["train"]["lr_init"] == 0.01);
    apply_override(doc, "train.max_epochs=7");
    CHECK(doc["train"]["max_epochs"] == 7);
    apply_override(doc, "data.kind=cifar10");  // bare string value
    CHECK(doc["data"]["kind"] == "cifar10");
    apply_override(doc, "encoder.ca_enabled=false");
    CHECK(doc["encoder"]["ca_enabled"] == false);
    CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "=5"), ConfigError);
}

TEST_CASE("capacity budget in bits follows the destination link quality") {
    // gamma 0 dB doubles the usable symbols exactly: 2k log2(2) = 2k.
    CHECK(separation_bit_budget(0.0, 384) == 768);
    CHECK(separation_bit_budget(8.0, 384) == 2203);
    CHECK(separation_bit_budget(8.0, 192) == 1101);
    // Monotone in gamma.
    long long prev = 0;
    for (double g : {0.0, 2.0, 4.0, 6.0, 8.0}) {
        const long long b = separation_bit_budget(g, 384);
        CHECK(b > prev);
        prev = b;
    }
}

TEST_CASE("ppm interchange round trips pixels") {
    TempDir tmp;
    const ImageDataset imgs = synthetic_images(1, 21);
    const Tensor img = imgs.image(0);
    const std::string path = tmp.file("img.ppm");
    write_ppm(path, img);
    const Tensor back = read_ppm(path);
    REQUIRE(back.shape() == std::vector<size_t>{1, 3, 32, 32});
    // 8-bit quantized source data survives exactly.
    for (size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-12));

    CHECK_THROWS_AS(read_ppm(tmp.file("missing.ppm")), Error);
}
