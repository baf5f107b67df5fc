#include "jscc/cli.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "CLI11.hpp"
#include "httplib.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "jscc/config.hpp"
#include "jscc/evaluation.hpp"
#include "jscc/json_util.hpp"
#include "jscc/plots.hpp"
#include "jscc/separation.hpp"
#include "jscc/verify.hpp"

namespace jscc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string data_root;
    std::string out_dir;
    std::string run_name;
    bool resume = false;
};

json load_config_doc(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path + ": invalid JSON");
    return j;
}

int cmd_train(const TrainArgs& a) {
    RunConfig cfg;
    fs::path rundir;
    json resume_state;
    NamedTensors resume_opt;

    if (a.resume) {
        if (!a.config_path.empty())
            throw ConfigError("--resume continues from the run directory; drop --config");
        if (a.run_name.empty()) throw ConfigError("--resume requires --run-name");
        rundir = fs::path(a.out_dir.empty() ? "runs" : a.out_dir) / a.run_name;
        const fs::path saved = rundir / "resolved_config.json";
        if (!fs::exists(saved))
            throw ConfigError(rundir.string() + ": no resolved_config.json; nothing to resume");
        cfg = RunConfig::from_file(saved.string());
    } else {
        json doc = a.config_path.empty() ? json::object() : load_config_doc(a.config_path);
        for (const auto& o : a.overrides) apply_override(doc, o);
        if (!a.data_root.empty()) doc["data"]["root"] = a.data_root;
        if (!a.out_dir.empty()) doc["output_dir"] = a.out_dir;
        if (!a.run_name.empty()) doc["run_name"] = a.run_name;
        cfg = RunConfig::from_json(doc);
        rundir = fs::path(cfg.output_dir) / cfg.resolved_run_name();
        if (fs::exists(rundir / "resolved_config.json"))
            throw ConfigError(rundir.string() +
                              ": run directory already holds a run (use --resume, a different "
                              "--run-name, or remove it)");
        fs::create_directories(rundir);
        std::ofstream os(rundir / "resolved_config.json", std::ios::trunc);
        os << cfg.to_json().dump(2) << "\n";
    }

    const LoadedData data = load_data(cfg.data, cfg.seed, cfg.encoder.image_c,
                                      cfg.encoder.image_h, cfg.encoder.image_w);
    std::cout << "data: " << cfg.data.kind << " train=" << data.train.size()
              << " val=" << data.val.size() << " test=" << data.test.size() << "\n";

    ModelBundle bundle = ModelBundle::build(cfg.protocol.kind, cfg.encoder, cfg.seed,
                                            cfg.protocol.lambda_value());
    std::cout << "model: " << bundle.model_id() << " (" << bundle.params().total_params()
              << " parameters)\n";

    const fs::path latest = rundir / "latest.ckpt";
    const fs::path best = rundir / "best.ckpt";
    if (a.resume) {
        if (!fs::exists(latest))
            throw ConfigError(latest.string() + ": missing checkpoint; nothing to resume");
        load_checkpoint_into(latest.string(), bundle, &resume_state, &resume_opt);
        std::cout << "resuming after epoch " << json_get(resume_state, "epoch", 0) << "\n";
    }

    std::ofstream log(rundir / "epochs.jsonl", a.resume ? std::ios::app : std::ios::trunc);
    TrainHooks hooks;
    hooks.on_epoch = [&log](const EpochRecord& r) {
        log << r.to_json().dump() << "\n";
        log.flush();
        std::printf("epoch %4d  lr %.3e  train %.6f  val %.6f  %.1fs\n", r.epoch, r.lr,
                    r.train_loss, r.val_loss, r.wall_time_s);
        std::fflush(stdout);
    };
    hooks.save = [&](const json& state, const NamedTensors& opt, bool is_best) {
        save_checkpoint(latest.string(), bundle, state, opt);
        if (is_best) save_checkpoint(best.string(), bundle, state, opt);
    };

    const TrainResult res =
        train(bundle, data.train, data.val, cfg.train, hooks,
              a.resume ? &resume_state : nullptr, a.resume ? &resume_opt : nullptr);

    json result{{"best_epoch", res.best_epoch},
                {"best_val", res.best_val},
                {"epochs_run", res.history.size()},
                {"early_stopped", res.early_stopped}};
    std::ofstream rs(rundir / "result.json", std::ios::trunc);
    rs << result.dump(2) << "\n";
    std::cout << "best val " << res.best_val << " at epoch " << res.best_epoch << "; artifacts in "
              << rundir.string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::vector<double> gammas{0.0, 2.0, 4.0, 6.0, 8.0};
    double snr_sr_db = std::numeric_limits<double>::quiet_NaN();
    std::string snr_sr_raw;
    size_t batch_size = 64;
    uint64_t seed = 1;
    std::string out = "records.jsonl";
    std::string data_root;
    size_t synthetic_n = 512;
    size_t subset = 0;
    bool separation = false;
    std::string codec_cmd = "python3 tools/webp_codec.py";
};

ImageDataset eval_images(const EvalArgs& a, const EncoderConfig& enc) {
    ImageDataset set;
    if (!a.data_root.empty()) {
        set = load_cifar10(a.data_root).test;
        if (set.channels() != enc.image_c || set.height() != enc.image_h ||
            set.width() != enc.image_w)
            throw ConfigError("dataset images are " + std::to_string(set.channels()) + "x" +
                              std::to_string(set.height()) + "x" + std::to_string(set.width()) +
                              " but the checkpoint expects " + std::to_string(enc.image_c) + "x" +
                              std::to_string(enc.image_h) + "x" + std::to_string(enc.image_w));
    } else {
        set = synthetic_images(a.synthetic_n, derive_seed(a.seed, 0x7465ULL), enc.image_c,
                               enc.image_h, enc.image_w);
    }
    if (a.subset > 0 && a.subset < set.size()) set = set.take(a.subset);
    return set;
}

int cmd_eval(const EvalArgs& a) {
    json state;
    ModelBundle bundle = load_checkpoint(a.checkpoint, &state);
    const json tc = json_get(state, "train_config", json::object());

    SweepConfig sc;
    sc.gammas_db = a.gammas;
    sc.batch_size = a.batch_size;
    sc.seed = a.seed;
    if (!a.snr_sr_raw.empty())
        sc.snr_sr_db = (a.snr_sr_raw == "inf") ? std::numeric_limits<double>::infinity()
                                               : std::stod(a.snr_sr_raw);
    else
        sc.snr_sr_db = json_get_db(tc, "snr_sr_db", 12.0);
    if (!tc.empty()) {
        const std::string mode = json_get<std::string>(tc, "gamma_mode", "uniform");
        if (mode == "fixed") {
            const double g = json_get(tc, "gamma_fixed_db", 4.0);
            sc.trained_gamma_range = {g, g};
        } else {
            sc.trained_gamma_range = {json_get(tc, "gamma_lo_db", 2.0),
                                      json_get(tc, "gamma_hi_db", 8.0)};
        }
    }

    const ImageDataset images = eval_images(a, bundle.config());
    std::cout << "evaluating " << bundle.model_id() << " on " << images.size() << " images\n";
    std::vector<EvalRecord> records = sweep(bundle, images, sc);
    for (const auto& r : records) {
        std::printf("gamma %5.2f dB  psnr %7.3f dB  ssim %.4f", r.gamma_db, r.psnr, r.ssim_val);
        for (const auto& f : r.flags) std::printf("  [%s]", f.c_str());
        std::printf("\n");
    }

    if (a.separation) {
        ExternalCodec codec(a.codec_cmd, "webp");
        for (double g : a.gammas) {
            const SeparationResult sep =
                separation_baseline(images, g, bundle.config().k(), codec, a.seed);
            std::printf("separation gamma %5.2f dB  budget %lld bits  fit %zu/%zu  psnr %7.3f dB\n",
                        g, sep.budget_bits, sep.fitted_count, images.size(), sep.record.psnr);
            records.push_back(sep.record);
        }
    }

    write_records_jsonl(records, a.out);
    std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
    return kExitOk;
}

struct SimArgs {
    std::string what;
    size_t trials = 100;
    size_t symbols = 100000;
    uint64_t seed = 1;
};

int cmd_simulate(const SimArgs& a) {
    if (a.what == "mrc") {
        double max_weight_err = 0.0, max_snr_err_db = 0.0;
        for (size_t t = 0; t < a.trials; ++t) {
            const MrcTrial r = verify_mrc_once(derive_seed(a.seed, 0x6d7263ULL, t), a.symbols);
            max_weight_err = std::max(max_weight_err, r.weight_err);
            max_snr_err_db = std::max(
                max_snr_err_db, std::abs(snr_linear_to_db(r.empirical_snr) -
                                         snr_linear_to_db(r.predicted_snr)));
        }
        std::printf("mrc: %zu trials x %zu symbols\n", a.trials, a.symbols);
        std::printf("  max |w_analytic - w_numeric| = %.3e\n", max_weight_err);
        std::printf("  max |empirical - predicted combined SNR| = %.4f dB\n", max_snr_err_db);
        const bool ok = max_weight_err < 1e-6 && max_snr_err_db < 0.2;
        std::printf("  %s\n", ok ? "PASS" : "FAIL");
        return ok ? kExitOk : kExitRuntimeError;
    }
    if (a.what == "af-noise") {
        double max_rel = 0.0;
        for (size_t t = 0; t < a.trials; ++t) {
            const AfNoiseTrial r =
                verify_af_noise_once(derive_seed(a.seed, 0x61666eULL, t), a.symbols);
            max_rel = std::max(max_rel, r.rel_err);
        }
        std::printf("af-noise: %zu trials x %zu symbols\n", a.trials, a.symbols);
        std::printf("  max relative error of the aggregate noise variance = %.4f%%\n",
                    100.0 * max_rel);
        const bool ok = max_rel < 0.01;
        std::printf("  %s\n", ok ? "PASS" : "FAIL");
        return ok ? kExitOk : kExitRuntimeError;
    }
    throw ConfigError("--verify must be mrc or af-noise");
}

struct PlotArgs {
    std::string records;
    std::string out_dir = "plots";
};

int cmd_plot(const PlotArgs& a) {
    const auto records = read_records_jsonl(a.records);
    if (records.empty()) throw ConfigError(a.records + ": no records");
    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    write_records_tsv(records, (out / "records.tsv").string());
    write_metric_table(records, "psnr", (out / "psnr_table.tsv").string());
    write_metric_table(records, "ssim", (out / "ssim_table.tsv").string());
    write_metric_svg(records, "psnr", (out / "psnr.svg").string());
    write_metric_svg(records, "ssim", (out / "ssim.svg").string());
    std::cout << "wrote records.tsv, psnr_table.tsv, ssim_table.tsv, psnr.svg, ssim.svg in "
              << a.out_dir << "\n";
    return kExitOk;
}

struct FetchArgs {
    std::string root;
    std::string host = "www.cs.toronto.edu";
    std::string path = "/~kriz/cifar-10-binary.tar.gz";
};

int cmd_fetch(const FetchArgs& a) {
    fs::create_directories(a.root);
    const fs::path tgz = fs::path(a.root) / "cifar-10-binary.tar.gz";
    std::cout << "downloading https://" << a.host << a.path << " ...\n";
    httplib::SSLClient cli(a.host);
    cli.set_follow_location(true);
    cli.set_connection_timeout(20);
    cli.set_read_timeout(120);
    auto res = cli.Get(a.path);
    if (!res || res->status != 200)
        throw Error("download failed (" +
                    (res ? "HTTP " + std::to_string(res->status) : "no connection") +
                    "); place the six CIFAR-10 .bin files under " + a.root + " manually");
    {
        std::ofstream os(tgz, std::ios::binary | std::ios::trunc);
        os.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
    }
    extract_cifar_targz(tgz.string(), a.root);
    const CifarPair pair = load_cifar10(a.root);
    std::cout << "ok: " << pair.train.size() << " train / " << pair.test.size()
              << " test images under " << a.root << "\n";
    return kExitOk;
}

int cmd_info(const std::string& checkpoint) {
    std::cout << read_checkpoint_info(checkpoint).dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Deep joint source-channel coding over a half-duplex relay channel"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a protocol model");
    train_cmd->add_option("--config", ta.config_path, "Run config JSON");
    train_cmd->add_option("--set", ta.overrides, "Override config fields (path.key=value)");
    train_cmd->add_option("--data-root", ta.data_root, "CIFAR-10 directory");
    train_cmd->add_option("--out", ta.out_dir, "Output directory for runs");
    train_cmd->add_option("--run-name", ta.run_name, "Run directory name");
    train_cmd->add_flag("--resume", ta.resume, "Continue an interrupted run");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over a gamma sweep");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--gammas", ea.gammas, "Destination SNRs in dB")->delimiter(',');
    eval_cmd->add_option("--snr-sr", ea.snr_sr_raw, "Source-relay SNR in dB (or inf)");
    eval_cmd->add_option("--batch-size", ea.batch_size, "Evaluation batch size");
    eval_cmd->add_option("--seed", ea.seed, "Noise seed");
    eval_cmd->add_option("--out", ea.out, "Output records JSONL");
    eval_cmd->add_option("--data-root", ea.data_root, "CIFAR-10 directory (default: synthetic)");
    eval_cmd->add_option("--synthetic-n", ea.synthetic_n, "Synthetic test set size");
    eval_cmd->add_option("--subset", ea.subset, "Evaluate only the first N images");
    eval_cmd->add_flag("--separation", ea.separation, "Also run the digital baseline");
    eval_cmd->add_option("--codec-cmd", ea.codec_cmd, "External codec helper command");

    SimArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo checks of the channel math");
    sim_cmd->add_option("--verify", sa.what, "What to check: mrc | af-noise")->required();
    sim_cmd->add_option("--trials", sa.trials, "Number of random link configurations");
    sim_cmd->add_option("--symbols", sa.symbols, "Symbols per trial");
    sim_cmd->add_option("--seed", sa.seed, "Seed");

    PlotArgs pa;
    auto* plot_cmd = app.add_subcommand("plot", "Render tables and SVG charts from records");
    plot_cmd->add_option("--records", pa.records, "Records JSONL")->required();
    plot_cmd->add_option("--out-dir", pa.out_dir, "Output directory");

    FetchArgs fa;
    auto* fetch_cmd = app.add_subcommand("fetch-data", "Download and unpack CIFAR-10");
    fetch_cmd->add_option("--root", fa.root, "Destination directory")->required();

    std::string info_ckpt;
    auto* info_cmd = app.add_subcommand("info", "Print checkpoint metadata");
    info_cmd->add_option("--checkpoint", info_ckpt, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    if (train_cmd->parsed()) return cmd_train(ta);
    if (eval_cmd->parsed()) return cmd_eval(ea);
    if (sim_cmd->parsed()) return cmd_simulate(sa);
    if (plot_cmd->parsed()) return cmd_plot(pa);
    if (fetch_cmd->parsed()) return cmd_fetch(fa);
    if (info_cmd->parsed()) return cmd_info(info_ckpt);
    throw ConfigError("no subcommand given");
}

}  // namespace jscc
