#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "jscc/evaluation.hpp"
#include "test_util.hpp"

#include "json.hpp"

using jscc_test::TempDir;

namespace {

#ifndef JSCC_CLI_PATH
#error "JSCC_CLI_PATH must point at the built binary"
#endif

struct RunOutcome {
    int code = -1;
    std::string output;
};

RunOutcome run_cli(const TempDir& tmp, const std::string& args) {
    static int counter = 0;
    const std::string log = tmp.file("cli_out_" + std::to_string(counter++) + ".log");
    const std::string cmd =
        std::string(JSCC_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    RunOutcome out;
    out.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream is(log, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    out.output = os.str();
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

size_t line_count(const std::string& s) {
    return static_cast<size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small run: 16x16 synthetic images through the thinnest usable network.
void write_tiny_config(const std::string& path) {
    const nlohmann::json j{
        {"seed", 3},
        {"protocol", {{"kind", "noncoop"}}},
        {"encoder",
         {{"image", {3, 16, 16}}, {"c_feat", 4}, {"n_resblocks", 1}}},
        {"train", {{"max_epochs", 2}, {"batch_size", 8}, {"lr_init", 0.001}}},
        {"data",
         {{"kind", "synthetic"}, {"synthetic_n", 24}, {"synthetic_test_n", 8},
          {"val_count", 8}}}};
    std::ofstream os(path);
    os << j.dump(2);
}

}  // namespace

TEST_CASE("usage errors exit with the configuration code") {
    TempDir tmp;
    CHECK(run_cli(tmp, "").code == 1);
    CHECK(run_cli(tmp, "frobnicate").code == 1);
    CHECK(run_cli(tmp, "eval").code == 1);  // missing required --checkpoint
    CHECK(run_cli(tmp, "train --config " + tmp.file("absent.json")).code == 1);
    CHECK(run_cli(tmp, "simulate --verify nonsense").code == 1);
    CHECK(run_cli(tmp, "--help").code == 0);
}

TEST_CASE("channel verification subcommands pass their own checks") {
    TempDir tmp;
    const RunOutcome mrc = run_cli(tmp, "simulate --verify mrc --trials 4 --symbols 20000");
    CHECK(mrc.code == 0);
    CHECK(mrc.output.find("PASS") != std::string::npos);

    const RunOutcome af =
        run_cli(tmp, "simulate --verify af-noise --trials 4 --symbols 50000 --seed 2");
    CHECK(af.code == 0);
    CHECK(af.output.find("PASS") != std::string::npos);
}

TEST_CASE("invalid configuration values are rejected before training") {
    TempDir tmp;
    write_tiny_config(tmp.file("cfg.json"));
    const RunOutcome r = run_cli(tmp, "train --config " + tmp.file("cfg.json") +
                                          " --out " + tmp.file("runs") +
                                          " --set train.lr_init=-1");
    CHECK(r.code == 1);
    CHECK(r.output.find("lr_init") != std::string::npos);
}

TEST_CASE("train, evaluate, plot, and inspect runs as a pipeline") {
    TempDir tmp;
    write_tiny_config(tmp.file("cfg.json"));
    const std::string runs = tmp.file("runs");
    const std::string rundir = runs + "/t1";

    const RunOutcome tr = run_cli(tmp, "train --config " + tmp.file("cfg.json") + " --out " +
                                           runs + " --run-name t1");
    CHECK(tr.code == 0);
    CHECK(tr.output.find("epoch") != std::string::npos);
    CHECK(std::filesystem::exists(rundir + "/resolved_config.json"));
    CHECK(std::filesystem::exists(rundir + "/latest.ckpt"));
    CHECK(std::filesystem::exists(rundir + "/best.ckpt"));
    CHECK(std::filesystem::exists(rundir + "/result.json"));
    CHECK(line_count(slurp(rundir + "/epochs.jsonl")) == 2);

    // A second run into the same directory is refused.
    const RunOutcome again = run_cli(tmp, "train --config " + tmp.file("cfg.json") + " --out " +
                                              runs + " --run-name t1");
    CHECK(again.code == 1);
    CHECK(again.output.find("--resume") != std::string::npos);

    // Resuming a completed run restores state and exits cleanly.
    const RunOutcome res = run_cli(tmp, "train --resume --run-name t1 --out " + runs);
    CHECK(res.code == 0);
    CHECK(res.output.find("resuming after epoch 2") != std::string::npos);
    // Resume must not be combined with a fresh config.
    CHECK(run_cli(tmp, "train --resume --run-name t1 --out " + runs + " --config " +
                           tmp.file("cfg.json"))
              .code == 1);
    CHECK(run_cli(tmp, "train --resume --out " + runs).code == 1);  // no run name

    // Evaluation writes one record per gamma, deterministically.
    const std::string ckpt = rundir + "/best.ckpt";
    const std::string rec1 = tmp.file("rec1.jsonl"), rec2 = tmp.file("rec2.jsonl");
    const std::string eval_args = "eval --checkpoint " + ckpt +
                                  " --gammas 2,6 --batch-size 4 --synthetic-n 8 --seed 2 --out ";
    CHECK(run_cli(tmp, eval_args + rec1).code == 0);
    CHECK(run_cli(tmp, eval_args + rec2).code == 0);
    CHECK(slurp(rec1) == slurp(rec2));

    const auto records = jscc::read_records_jsonl(rec1);
    REQUIRE(records.size() == 2);
    CHECK(records[0].gamma_db == 2.0);
    CHECK(records[1].gamma_db == 6.0);
    CHECK(records[0].protocol == "noncoop");
    CHECK(records[0].n_images == 8);
    CHECK(records[0].flags.empty());  // 2 dB sits inside the trained range

    // Querying below the trained range flags the record.
    const std::string rec3 = tmp.file("rec3.jsonl");
    CHECK(run_cli(tmp, "eval --checkpoint " + ckpt +
                           " --gammas 0 --batch-size 4 --synthetic-n 4 --out " + rec3)
              .code == 0);
    const auto flagged = jscc::read_records_jsonl(rec3);
    REQUIRE(flagged.size() == 1);
    CHECK(flagged[0].flags ==
          std::vector<std::string>{"gamma-outside-trained-range"});

    // Plot renders the full artifact set.
    const std::string plots = tmp.file("plots");
    const RunOutcome pl = run_cli(tmp, "plot --records " + rec1 + " --out-dir " + plots);
    CHECK(pl.code == 0);
    for (const char* f :
         {"records.tsv", "psnr_table.tsv", "ssim_table.tsv", "psnr.svg", "ssim.svg"})
        CHECK(std::filesystem::exists(plots + "/" + f));

    const RunOutcome info = run_cli(tmp, "info --checkpoint " + ckpt);
    CHECK(info.code == 0);
    CHECK(info.output.find("\"protocol\"") != std::string::npos);
    CHECK(info.output.find("\"param_count\"") != std::string::npos);

    // A structurally broken records file is a configuration error.
    std::ofstream(tmp.file("garbage.jsonl")) << "{}\n";
    CHECK(run_cli(tmp, "plot --records " + tmp.file("garbage.jsonl")).code == 1);
}

TEST_CASE("a missing checkpoint is a configuration error") {
    TempDir tmp;
    const RunOutcome r = run_cli(tmp, "eval --checkpoint " + tmp.file("none.ckpt"));
    CHECK(r.code == 1);
}

TEST_CASE("an unusable codec helper aborts the digital baseline distinctly") {
    TempDir tmp;
    write_tiny_config(tmp.file("cfg.json"));
    const std::string runs = tmp.file("runs");
    REQUIRE(run_cli(tmp, "train --config " + tmp.file("cfg.json") + " --out " + runs +
                             " --run-name c1")
                .code == 0);
    const RunOutcome r =
        run_cli(tmp, "eval --checkpoint " + runs + "/c1/best.ckpt" +
                         " --gammas 2 --batch-size 2 --synthetic-n 2 --separation "
                         "--codec-cmd /bin/false --out " +
                         tmp.file("sep.jsonl"));
    CHECK(r.code == 3);
}
