#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "jscc/evaluation.hpp"
#include "jscc/plots.hpp"
#include "jscc/protocols.hpp"
#include "test_util.hpp"

using namespace jscc;
using jscc_test::rand_tensor;
using jscc_test::TempDir;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("mean squared error") {
    const Tensor a = Tensor::from_data({4}, {0.0, 0.5, 1.0, 0.25});
    const Tensor b = Tensor::from_data({4}, {0.1, 0.5, 0.8, 0.25});
    CHECK(mse_mean(a, b) == doctest::Approx((0.01 + 0.04) / 4.0));
    CHECK(mse_mean(a, a) == 0.0);
    CHECK_THROWS_AS(mse_mean(a, Tensor({5}, 0.0)), DomainError);
}

TEST_CASE("psnr hits 20 dB at mse 0.01 and caps on exact matches") {
    const Tensor zeros({1, 3, 4, 4}, 0.0);
    const Tensor tenth({1, 3, 4, 4}, 0.1);
    CHECK(psnr_db(zeros, tenth) == doctest::Approx(20.0));
    CHECK(psnr_db(zeros, zeros) == kPsnrCapDb);

    const Tensor half({1, 3, 4, 4}, 0.5);
    CHECK(psnr_db(zeros, half) == doctest::Approx(-10.0 * std::log10(0.25)));
}

TEST_CASE("per-image psnr treats batch elements independently") {
    Tensor a({2, 1, 4, 4}, 0.5);
    Tensor b = a;
    for (size_t j = 0; j < 16; ++j) b[16 + j] += 0.1;  // second image shifted
    const auto p = psnr_per_image(a, b);
    REQUIRE(p.size() == 2);
    CHECK(p[0] == kPsnrCapDb);
    CHECK(p[1] == doctest::Approx(20.0));
    CHECK_THROWS_AS(psnr_per_image(Tensor({4}, 0.0), Tensor({4}, 0.0)), DomainError);
}

TEST_CASE("ssim is 1 for identical images and degrades with noise") {
    const ImageDataset imgs = synthetic_images(2, 3);
    const Tensor a = imgs.all();
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(4);
    Tensor mild = a, heavy = a;
    for (size_t i = 0; i < a.size(); ++i) {
        mild[i] = std::clamp(mild[i] + 0.02 * rng.normal(), 0.0, 1.0);
        heavy[i] = std::clamp(heavy[i] + 0.3 * rng.normal(), 0.0, 1.0);
    }
    const double s_mild = ssim(a, mild);
    const double s_heavy = ssim(a, heavy);
    CHECK(s_mild > s_heavy);
    CHECK(s_mild > 0.8);
    CHECK(s_heavy < 0.6);
    CHECK(s_heavy >= -1.0);
    CHECK(ssim(a, mild) == ssim(mild, a));

    const auto per = ssim_per_image(a, mild);
    REQUIRE(per.size() == 2);
    CHECK((per[0] + per[1]) / 2.0 == doctest::Approx(s_mild));
}

TEST_CASE("ssim needs at least one full filter window") {
    const Tensor tiny({1, 1, 8, 8}, 0.5);
    CHECK_THROWS_AS(ssim(tiny, tiny), DomainError);
    const Tensor ok({1, 1, 11, 11}, 0.5);
    CHECK_NOTHROW(ssim(ok, ok));
}

TEST_CASE("eval records round trip through json") {
    EvalRecord r;
    r.model_id = "df-l1-cf8-s3";
    r.protocol = "df";
    r.snr_sr_db = 12.0;
    r.gamma_db = 4.0;
    r.lambda = 1.0;
    r.n_images = 512;
    r.psnr = 28.25;
    r.ssim_val = 0.91;
    r.seed = 7;
    r.flags = {"gamma-outside-trained-range"};

    const EvalRecord back = EvalRecord::from_json(r.to_json());
    CHECK(back.model_id == r.model_id);
    CHECK(back.protocol == r.protocol);
    CHECK(back.snr_sr_db == r.snr_sr_db);
    CHECK(back.gamma_db == r.gamma_db);
    CHECK(back.lambda == r.lambda);
    CHECK(back.n_images == r.n_images);
    CHECK(back.psnr == r.psnr);
    CHECK(back.ssim_val == r.ssim_val);
    CHECK(back.seed == r.seed);
    CHECK(back.flags == r.flags);

    EvalRecord nolambda;
    nolambda.protocol = "af";
    nolambda.snr_sr_db = std::numeric_limits<double>::infinity();
    nolambda.gamma_db = 2.0;
    const nlohmann::json j = nolambda.to_json();
    CHECK_FALSE(j.contains("lambda"));
    CHECK(j["snr_sr_db"] == "inf");
    const EvalRecord back2 = EvalRecord::from_json(j);
    CHECK_FALSE(back2.lambda.has_value());
    CHECK(std::isinf(back2.snr_sr_db));

    CHECK_THROWS_AS(EvalRecord::from_json(nlohmann::json{{"protocol", "af"}, {"gamma_db", 1.0},
                                                         {"psnrdb", 1.0}}),
                    ConfigError);
}

TEST_CASE("records file round trips and is byte-stable") {
    TempDir tmp;
    std::vector<EvalRecord> recs(2);
    recs[0].model_id = "af-cf8-s1";
    recs[0].protocol = "af";
    recs[0].gamma_db = 0.0;
    recs[0].psnr = 24.125;
    recs[0].ssim_val = 0.875;
    recs[1].model_id = "noncoop-cf8-s1";
    recs[1].protocol = "noncoop";
    recs[1].gamma_db = 8.0;
    recs[1].psnr = 26.5;
    recs[1].ssim_val = 0.9;
    recs[1].lambda = std::nullopt;

    const std::string p1 = tmp.file("a.jsonl"), p2 = tmp.file("b.jsonl");
    write_records_jsonl(recs, p1);
    write_records_jsonl(recs, p2);
    CHECK(slurp(p1) == slurp(p2));

    const auto back = read_records_jsonl(p1);
    REQUIRE(back.size() == 2);
    CHECK(back[0].model_id == "af-cf8-s1");
    CHECK(back[1].gamma_db == 8.0);

    std::ofstream(tmp.file("bad.jsonl")) << "{not json\n";
    CHECK_THROWS_AS(read_records_jsonl(tmp.file("bad.jsonl")), ConfigError);
    CHECK_THROWS_AS(read_records_jsonl(tmp.file("missing.jsonl")), ConfigError);
}

TEST_CASE("sweep produces one deterministic record per gamma") {
    EncoderConfig cfg;
    cfg.image_h = 16;
    cfg.image_w = 16;
    cfg.c_feat = 4;
    cfg.n_resblocks = 1;
    ModelBundle m = ModelBundle::build(Protocol::kNoncoop, cfg, 21);
    const ImageDataset imgs = synthetic_images(6, 11, 3, 16, 16);

    SweepConfig sc;
    sc.gammas_db = {0.0, 8.0};
    sc.batch_size = 4;
    sc.seed = 2;
    sc.trained_gamma_range = {{2.0, 8.0}};

    const auto recs = sweep(m, imgs, sc);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].gamma_db == 0.0);
    CHECK(recs[1].gamma_db == 8.0);
    CHECK(recs[0].protocol == "noncoop");
    CHECK(recs[0].model_id == m.model_id());
    CHECK(recs[0].n_images == 6);
    CHECK(recs[0].seed == 2);
    CHECK_FALSE(recs[0].lambda.has_value());
    CHECK(recs[0].flags == std::vector<std::string>{"gamma-outside-trained-range"});
    CHECK(recs[1].flags.empty());
    for (const auto& r : recs) {
        CHECK(std::isfinite(r.psnr));
        CHECK(r.ssim_val > -1.0);
        CHECK(r.ssim_val <= 1.0);
    }

    // Bit-identical on a rerun.
    const auto again = sweep(m, imgs, sc);
    for (size_t i = 0; i < recs.size(); ++i)
        CHECK(recs[i].to_json().dump() == again[i].to_json().dump());

    // An untrained model carries no ordering guarantee across gammas (input
    // scale grows with gamma), so only pin a sane PSNR band here; the trained
    // monotonicity property is covered by the acceptance gate.
    for (const auto& r : recs) {
        CHECK(r.psnr > 0.0);
        CHECK(r.psnr < 60.0);
    }
}

TEST_CASE("sweep records carry the relay weighting for decode-and-forward") {
    EncoderConfig cfg;
    cfg.image_h = 16;
    cfg.image_w = 16;
    cfg.c_feat = 4;
    cfg.n_resblocks = 1;
    ModelBundle m = ModelBundle::build(Protocol::kDf, cfg, 22, 0.5);
    const ImageDataset imgs = synthetic_images(4, 12, 3, 16, 16);
    SweepConfig sc;
    sc.gammas_db = {4.0};
    sc.batch_size = 4;
    const auto recs = sweep(m, imgs, sc);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].lambda.has_value());
    CHECK(*recs[0].lambda == 0.5);
    CHECK(recs[0].protocol == "df");
}

TEST_CASE("plot writers emit byte-stable tsv and svg") {
    TempDir tmp;
    std::vector<EvalRecord> recs;
    for (double g : {0.0, 4.0, 8.0}) {
        EvalRecord a;
        a.model_id = "af-cf8-s1";
        a.protocol = "af";
        a.snr_sr_db = 12.0;
        a.gamma_db = g;
        a.psnr = 20.0 + g;
        a.ssim_val = 0.8 + g / 100.0;
        recs.push_back(a);
        EvalRecord d = a;
        d.model_id = "df-l1-cf8-s1";
        d.protocol = "df";
        d.lambda = 1.0;
        d.psnr = 21.0 + g;
        recs.push_back(d);
    }

    const std::string tsv1 = tmp.file("r1.tsv"), tsv2 = tmp.file("r2.tsv");
    write_records_tsv(recs, tsv1);
    write_records_tsv(recs, tsv2);
    const std::string t = slurp(tsv1);
    CHECK(t == slurp(tsv2));
    CHECK(t.find("gamma_db") != std::string::npos);
    CHECK(t.find("af-cf8-s1") != std::string::npos);
    CHECK(std::count(t.begin(), t.end(), '\n') == 7);  // header + 6 rows

    const std::string tab1 = tmp.file("p1.tsv"), tab2 = tmp.file("p2.tsv");
    write_metric_table(recs, "psnr", tab1);
    write_metric_table(recs, "psnr", tab2);
    const std::string tab = slurp(tab1);
    CHECK(tab == slurp(tab2));
    CHECK(std::count(tab.begin(), tab.end(), '\n') == 4);  // header + 3 gammas
    CHECK(tab.find("28") != std::string::npos);            // af at gamma 8

    const std::string svg1 = tmp.file("p1.svg"), svg2 = tmp.file("p2.svg");
    write_metric_svg(recs, "psnr", svg1);
    write_metric_svg(recs, "ssim", svg2);
    const std::string s = slurp(svg1);
    CHECK(s.rfind("<svg", 0) == 0);
    CHECK(s.find("</svg>") != std::string::npos);
    CHECK(s.find("polyline") != std::string::npos);
    const std::string again = tmp.file("p3.svg");
    write_metric_svg(recs, "psnr", again);
    CHECK(s == slurp(again));

    CHECK_THROWS_AS(write_metric_table(recs, "latency", tmp.file("x.tsv")), ConfigError);
    CHECK_THROWS_AS(write_metric_svg({}, "psnr", tmp.file("y.svg")), ConfigError);
}

TEST_CASE("sweep rejects degenerate inputs") {
    EncoderConfig cfg;
    cfg.image_h = 16;
    cfg.image_w = 16;
    cfg.c_feat = 4;
    cfg.n_resblocks = 1;
    ModelBundle m = ModelBundle::build(Protocol::kNoncoop, cfg, 23);
    SweepConfig sc;
    CHECK_THROWS_AS(sweep(m, ImageDataset{}, sc), ConfigError);
    sc.batch_size = 0;
    CHECK_THROWS_AS(sweep(m, synthetic_images(2, 13, 3, 16, 16), sc), ConfigError);
}
