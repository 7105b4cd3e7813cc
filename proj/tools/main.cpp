// Command-line entry point: pretrain-ae, train, eval, diagnose.
//
// Exit codes: 0 success, 2 usage/config error, 3 data/checkpoint error,
// 4 training divergence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentcast/checkpoint.hpp"
#include "latentcast/config.hpp"
#include "latentcast/diagnostics.hpp"
#include "latentcast/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTrain = 4;

struct SeedFlag {
    std::optional<std::uint64_t> value;
    bool strict = false;
};

// One --seed flag feeds all randomness; in --strict mode omitting it is an
// error, otherwise it falls back to the config (or 1) with a warning.
std::uint64_t resolve_seed(const SeedFlag& flag, latentcast::TrainConfig& cfg) {
    if (flag.value) {
        cfg.seed = *flag.value;
        cfg.seed_set = true;
        return cfg.seed;
    }
    if (flag.strict)
        throw latentcast::ConfigError("--seed is required in --strict mode");
    if (!cfg.seed_set) {
        std::cerr << "[warn] no --seed given, defaulting to 1\n";
        cfg.seed = 1;
    }
    return cfg.seed;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream os(path);
    if (!os) throw latentcast::DataError("cannot write '" + path.string() + "'");
    os << doc.dump(2) << "\n";
}

void write_resolved_config(const fs::path& out_dir, const latentcast::TrainConfig& cfg) {
    write_json(out_dir / "config.resolved.json", latentcast::config_to_json(cfg));
}

int cmd_pretrain_ae(const std::string& config_path, const std::string& data_override,
                    const SeedFlag& seed, const std::string& out_dir) {
    latentcast::TrainConfig cfg = latentcast::load_config(config_path);
    if (!data_override.empty()) cfg.data_path = data_override;
    resolve_seed(seed, cfg);
    fs::create_directories(out_dir);
    write_resolved_config(out_dir, cfg);

    latentcast::Stage1Result res = latentcast::run_stage1(cfg);

    latentcast::AeCheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.final_rec_loss = res.record.stage1_val_curve.empty()
                              ? 0.0
                              : res.record.stage1_val_curve[static_cast<std::size_t>(
                                    std::max(res.record.best_epoch, 0))];
    const fs::path ckpt = fs::path(out_dir) / "ae.ckpt";
    latentcast::save_autoencoder(ckpt.string(), res.ae, meta);

    json doc = latentcast::run_record_to_json(res.record);
    doc["final_rec_loss"] = meta.final_rec_loss;
    doc["checkpoint"] = ckpt.string();
    write_json(fs::path(out_dir) / "run_stage1.json", doc);
    std::cout << "pretrained autoencoder: val rec loss " << meta.final_rec_loss << " (best epoch "
              << res.record.best_epoch << ") -> " << ckpt.string() << "\n";
    return kExitOk;
}

std::vector<std::size_t> parse_pred_lens(const std::string& csv) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        const std::size_t next = csv.find(',', pos);
        const std::string tok = csv.substr(pos, next - pos);
        if (!tok.empty()) out.push_back(std::stoull(tok));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (out.empty()) throw latentcast::ConfigError("--pred-lens: no horizons given");
    return out;
}

int cmd_train(const std::string& config_path, const std::string& data_override,
              const std::string& ae_path, bool baseline, const SeedFlag& seed,
              const std::string& out_dir, const std::string& pred_lens_csv) {
    latentcast::TrainConfig base_cfg = latentcast::load_config(config_path);
    if (!data_override.empty()) base_cfg.data_path = data_override;
    resolve_seed(seed, base_cfg);
    if (!baseline && ae_path.empty() && base_cfg.ae_mode != latentcast::AeMode::scratch)
        throw latentcast::ConfigError(
            "train: an --ae checkpoint is required unless --baseline or scratch mode");

    std::vector<std::size_t> horizons =
        pred_lens_csv.empty() ? std::vector<std::size_t>{base_cfg.horizon}
                              : parse_pred_lens(pred_lens_csv);

    fs::create_directories(out_dir);
    write_resolved_config(out_dir, base_cfg);

    json runs = json::array();
    json test_rows = json::array();
    double mse_sum = 0.0, mae_sum = 0.0;

    for (std::size_t T : horizons) {
        latentcast::TrainConfig cfg = base_cfg;
        cfg.horizon = T;
        cfg.validate();

        latentcast::Stage2Result res;
        if (baseline) {
            res = latentcast::run_baseline(cfg, out_dir);
        } else {
            std::optional<latentcast::AutoEncoder> ae;
            if (!ae_path.empty()) ae = latentcast::load_autoencoder(ae_path);
            res = latentcast::run_stage2(cfg, std::move(ae), out_dir);
        }

        const std::string tag = "T" + std::to_string(T);
        const fs::path bb_ckpt = fs::path(out_dir) / ("backbone_" + tag + ".ckpt");
        latentcast::save_backbone(bb_ckpt.string(), *res.model.backbone, cfg.seed);
        if (res.model.ae && cfg.ae_mode != latentcast::AeMode::frozen_pretrained) {
            latentcast::AeCheckpointMeta meta;
            meta.seed = cfg.seed;
            latentcast::save_autoencoder(
                (fs::path(out_dir) / ("ae_final_" + tag + ".ckpt")).string(), *res.model.ae, meta);
        }

        json rec = latentcast::run_record_to_json(res.record);
        rec["backbone_checkpoint"] = bb_ckpt.string();
        runs.push_back(rec);
        const auto& m = res.record.test.at(0);
        test_rows.push_back({{"horizon", m.horizon}, {"mse", m.mse}, {"mae", m.mae}});
        mse_sum += m.mse;
        mae_sum += m.mae;
        std::cout << (baseline ? "baseline" : "latent") << " " << cfg.dataset << " T=" << T
                  << ": test mse " << m.mse << ", mae " << m.mae << "\n";
    }
    test_rows.push_back({{"horizon", "avg"},
                         {"mse", mse_sum / static_cast<double>(horizons.size())},
                         {"mae", mae_sum / static_cast<double>(horizons.size())}});

    json doc = {{"mode", baseline ? "baseline" : "latent"},
                {"config", latentcast::config_to_json(base_cfg)},
                {"runs", runs},
                {"test", test_rows}};
    write_json(fs::path(out_dir) / "run.json", doc);
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& data_override, const std::string& ae_path,
             const std::string& out_path) {
    latentcast::TrainConfig cfg = latentcast::load_config(config_path);
    if (!data_override.empty()) cfg.data_path = data_override;

    latentcast::TrainedModel model;
    model.backbone = latentcast::load_backbone(checkpoint_path);
    const latentcast::BackboneSpec& spec = model.backbone->spec();
    if (spec.lookback != cfg.lookback)
        throw latentcast::ShapeError("eval: checkpoint lookback " +
                                     std::to_string(spec.lookback) + " does not match config " +
                                     std::to_string(cfg.lookback));
    cfg.horizon = spec.horizon;

    const bool latent = spec.channels == cfg.latent_dim && !ae_path.empty();
    if (spec.channels == cfg.latent_dim && ae_path.empty())
        throw latentcast::ConfigError(
            "eval: checkpoint is a latent-space backbone, an --ae checkpoint is required");
    if (latent) model.ae = latentcast::load_autoencoder(ae_path);

    latentcast::PreparedData data = latentcast::prepare_data(cfg);
    if (!latent && spec.channels != data.ds.num_channels())
        throw latentcast::ShapeError("eval: checkpoint channels " +
                                     std::to_string(spec.channels) + " do not match dataset " +
                                     std::to_string(data.ds.num_channels()));

    latentcast::HorizonMetrics m =
        latentcast::evaluate_split(cfg, model, data, latentcast::SplitKind::test);
    json doc = {{"test", json::array({{{"horizon", m.horizon}, {"mse", m.mse}, {"mae", m.mae}}})}};
    if (!out_path.empty())
        write_json(out_path, doc);
    std::cout << doc.dump(2) << "\n";
    return kExitOk;
}

latentcast::EmbeddingTrace load_run_trace(const fs::path& dir, std::string tap) {
    const fs::path preferred = dir / ("trace_" + tap + "_p100.csv");
    if (fs::exists(preferred)) return latentcast::load_trace(preferred.string());
    throw latentcast::ConfigError("diagnose: run '" + dir.string() +
                                  "' has no export for tap '" + tap + "'");
}

int cmd_diagnose(const std::string& dir_a, const std::string& dir_b, std::string tap,
                 const std::string& out_dir) {
    auto pick_tap = [&tap](const fs::path& dir) {
        if (!tap.empty()) return tap;
        if (fs::exists(dir / "trace_decoder_pre_p100.csv")) return std::string("decoder_pre");
        if (fs::exists(dir / "trace_backbone_hidden_p100.csv"))
            return std::string("backbone_hidden");
        throw latentcast::ConfigError("diagnose: run '" + dir.string() +
                                      "' has no embedding exports");
    };
    latentcast::EmbeddingTrace a = load_run_trace(dir_a, pick_tap(dir_a));
    latentcast::EmbeddingTrace b = load_run_trace(dir_b, pick_tap(dir_b));

    std::optional<latentcast::EmbeddingTrace> raw;
    for (const auto& dir : {dir_a, dir_b}) {
        const fs::path p = fs::path(dir) / "trace_raw.csv";
        if (fs::exists(p)) {
            raw = latentcast::load_trace(p.string());
            break;
        }
    }

    latentcast::CompareReport rep =
        latentcast::compare_runs(a, b, raw ? &*raw : nullptr);
    fs::create_directories(out_dir);
    json doc = latentcast::compare_to_json(rep);
    doc["run_a"] = dir_a;
    doc["run_b"] = dir_b;
    doc["tap_a"] = a.tap;
    doc["tap_b"] = b.tap;
    write_json(fs::path(out_dir) / "comparison.json", doc);

    auto write_spectrum_csv = [&](const latentcast::SpectrumReport& s, const std::string& name) {
        std::ofstream os(fs::path(out_dir) / name);
        os << "frequency,magnitude\n";
        os.precision(17);
        for (std::size_t k = 0; k < s.frequencies.size(); ++k)
            os << s.frequencies[k] << "," << s.magnitude[k] << "\n";
    };
    write_spectrum_csv(rep.spectrum_a, "spectrum_a.csv");
    write_spectrum_csv(rep.spectrum_b, "spectrum_b.csv");

    std::cout << "adjacent distance: a=" << rep.adjacent_a << " b=" << rep.adjacent_b
              << " sign=" << rep.sign << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentcast: latent-space time series forecasting"};
    app.require_subcommand(1);

    SeedFlag seed;
    std::uint64_t seed_value = 0;

    std::string config_path, data_override, out_dir = "out";
    std::string ae_path, checkpoint_path, pred_lens, eval_out;
    std::string run_a, run_b, tap;
    bool baseline = false;

    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_value, "master seed for all randomness")
            ->each([&seed, &seed_value](const std::string&) { seed.value = seed_value; });
        sub->add_flag("--strict", seed.strict, "require --seed");
    };

    CLI::App* pre = app.add_subcommand("pretrain-ae", "stage 1: pretrain the autoencoder");
    pre->add_option("--config", config_path, "config file")->required();
    pre->add_option("--data", data_override, "override data csv path");
    pre->add_option("--out", out_dir, "output directory");
    add_seed(pre);

    CLI::App* train = app.add_subcommand("train", "stage 2 or baseline training");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--data", data_override, "override data csv path");
    train->add_option("--ae", ae_path, "pretrained autoencoder checkpoint");
    train->add_flag("--baseline", baseline, "train directly in observation space");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--pred-lens", pred_lens, "comma-separated horizons");
    add_seed(train);

    CLI::App* eval = app.add_subcommand("eval", "recompute test metrics from a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "backbone checkpoint")->required();
    eval->add_option("--config", config_path, "config file")->required();
    eval->add_option("--data", data_override, "override data csv path");
    eval->add_option("--ae", ae_path, "autoencoder checkpoint (latent runs)");
    eval->add_option("--out", eval_out, "metrics json path");

    CLI::App* diag = app.add_subcommand("diagnose", "compare embedding exports of two runs");
    diag->add_option("--run-a", run_a, "first run directory")->required();
    diag->add_option("--run-b", run_b, "second run directory")->required();
    diag->add_option("--tap", tap, "tap point (decoder_pre or backbone_hidden)");
    diag->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (pre->parsed())
            return cmd_pretrain_ae(config_path, data_override, seed, out_dir);
        if (train->parsed())
            return cmd_train(config_path, data_override, ae_path, baseline, seed, out_dir,
                             pred_lens);
        if (eval->parsed())
            return cmd_eval(checkpoint_path, config_path, data_override, ae_path, eval_out);
        if (diag->parsed())
            return cmd_diagnose(run_a, run_b, tap, out_dir);
    } catch (const latentcast::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const latentcast::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const latentcast::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const latentcast::TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTrain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
