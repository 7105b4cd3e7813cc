#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "latentcast/training.hpp"
#include "support/synthetic.hpp"

using namespace latentcast;

namespace {

// Small periodic dataset written to a temp csv, plus a fast config for it.
struct Fixture {
    std::string csv_path;
    TrainConfig cfg;
};

Fixture make_fixture(std::uint64_t seed = 1) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() / "lc_train_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / ("series_" + std::to_string(counter++) + ".csv");

    SeriesDataset ds = testsupport::periodic_dataset(800, 2, {24.0, 16.0}, 0.05, seed);
    std::ofstream os(path);
    os << "ch0,ch1\n";
    os.precision(17);
    for (std::size_t t = 0; t < 800; ++t) os << ds.values.at(t, 0) << "," << ds.values.at(t, 1) << "\n";
    os.close();

    Fixture f;
    f.csv_path = path.string();
    f.cfg.dataset = "synthetic";
    f.cfg.data_path = f.csv_path;
    f.cfg.split_ratios = std::array<double, 3>{0.7, 0.15, 0.15};
    f.cfg.lookback = 48;
    f.cfg.horizon = 24;
    f.cfg.latent_dim = 8;
    f.cfg.hidden = 16;
    f.cfg.batch_size = 32;
    f.cfg.lr = 3e-3;
    f.cfg.epochs = 6;
    f.cfg.patience = 10;
    f.cfg.seed = seed;
    f.cfg.seed_set = true;
    f.cfg.kernel = 25;
    f.cfg.backbone_kind = BackboneKind::dlinear;
    f.cfg.ae_chunk_len = 24;
    return f;
}

bool same_epoch_logs(const RunRecord& a, const RunRecord& b) {
    if (a.epochs.size() != b.epochs.size()) return false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        if (a.epochs[i].train_total != b.epochs[i].train_total) return false;
        if (a.epochs[i].val_obs_mse != b.epochs[i].val_obs_mse) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("stage 1 pretraining improves validation reconstruction") {
    Fixture f = make_fixture(3);
    f.cfg.epochs = 12;
    Stage1Result res = run_stage1(f.cfg);
    REQUIRE_FALSE(res.record.stage1_val_curve.empty());
    const double first = res.record.stage1_val_curve.front();
    const double best = res.record.stage1_val_curve[static_cast<std::size_t>(
        std::max(res.record.best_epoch, 0))];
    CHECK(best <= first);
    CHECK(res.ae.in_dim == 2);
    CHECK(res.ae.latent_dim == 8);
    CHECK_FALSE(res.ae.frozen);
}

TEST_CASE("stage 1 rejects latent_dim <= channels") {
    Fixture f = make_fixture(4);
    f.cfg.latent_dim = 2;
    CHECK_THROWS_AS(run_stage1(f.cfg), ConfigError);
}

TEST_CASE("frozen stage 2 leaves AE parameters bit-identical and is deterministic") {
    Fixture f = make_fixture(5);
    Stage1Result s1 = run_stage1(f.cfg);

    AutoEncoder pristine = s1.ae;
    Stage2Result a = run_stage2(f.cfg, s1.ae);
    CHECK(a.model.ae->param_checksum() == pristine.param_checksum());
    CHECK(a.model.ae->frozen);
    REQUIRE_FALSE(a.record.epochs.empty());
    CHECK(a.record.best_epoch >= 0);
    REQUIRE(a.record.test.size() == 1);
    CHECK(std::isfinite(a.record.test[0].mse));

    Stage2Result b = run_stage2(f.cfg, pristine);
    CHECK(same_epoch_logs(a.record, b.record));
    CHECK(a.record.test[0].mse == b.record.test[0].mse);
    CHECK(a.record.test[0].mae == b.record.test[0].mae);

    TrainConfig other = f.cfg;
    other.seed = 999;
    Stage1Result s1_other = run_stage1(other);
    Stage2Result c = run_stage2(other, s1_other.ae);
    CHECK_FALSE(same_epoch_logs(a.record, c.record));
}

TEST_CASE("latent training fits an easy periodic series") {
    Fixture f = make_fixture(6);
    f.cfg.epochs = 10;
    Stage1Result s1 = run_stage1(f.cfg);
    Stage2Result s2 = run_stage2(f.cfg, s1.ae);
    const auto& ep = s2.record.epochs;
    REQUIRE(ep.size() >= 2);
    CHECK(ep.back().val_obs_mse < ep.front().val_obs_mse);
    CHECK(s2.record.test[0].mse < 1.0);  // standardized scale, periodic signal
}

TEST_CASE("finetune learning-rate split controls which AE halves move") {
    Fixture f = make_fixture(7);
    Stage1Result s1 = run_stage1(f.cfg);

    // decoder adaptation needs the observation-space loss
    f.cfg.ae_mode = AeMode::finetune;
    f.cfg.weights.alpha = 10.0;
    f.cfg.weights.beta = 10.0;
    f.cfg.weights.perc = 10.0;
    f.cfg.epochs = 2;

    SECTION("enc_lr=0, dec_lr>0 moves only the decoder") {
        f.cfg.enc_lr = 0.0;
        f.cfg.dec_lr = 1e-3;
        AutoEncoder before = s1.ae;
        Stage2Result res = run_stage2(f.cfg, s1.ae);
        CHECK(res.model.ae->enc1.weight.data == before.enc1.weight.data);
        CHECK(res.model.ae->enc2.weight.data == before.enc2.weight.data);
        CHECK(res.model.ae->dec.weight.data != before.dec.weight.data);
    }

    SECTION("enc_lr>0, dec_lr>0 moves both halves") {
        f.cfg.enc_lr = 5e-4;
        f.cfg.dec_lr = 1e-3;
        AutoEncoder before = s1.ae;
        Stage2Result res = run_stage2(f.cfg, s1.ae);
        CHECK(res.model.ae->enc1.weight.data != before.enc1.weight.data);
        CHECK(res.model.ae->dec.weight.data != before.dec.weight.data);
    }
}

TEST_CASE("finetune with zero learning rates reproduces frozen mode bit-for-bit") {
    Fixture f = make_fixture(8);
    f.cfg.epochs = 3;
    Stage1Result s1 = run_stage1(f.cfg);
    AutoEncoder copy = s1.ae;

    Stage2Result frozen = run_stage2(f.cfg, s1.ae);

    f.cfg.ae_mode = AeMode::finetune;
    f.cfg.enc_lr = 0.0;
    f.cfg.dec_lr = 0.0;
    Stage2Result tuned = run_stage2(f.cfg, copy);

    CHECK(same_epoch_logs(frozen.record, tuned.record));
    CHECK(frozen.record.test[0].mse == tuned.record.test[0].mse);
    CHECK(frozen.record.test[0].mae == tuned.record.test[0].mae);
}

TEST_CASE("scratch mode trains a randomly initialized AE without a checkpoint") {
    Fixture f = make_fixture(9);
    f.cfg.ae_mode = AeMode::scratch;
    f.cfg.enc_lr = 1e-3;
    f.cfg.dec_lr = 1e-3;
    f.cfg.weights.perc = 10.0;
    f.cfg.epochs = 2;
    Stage2Result res = run_stage2(f.cfg, std::nullopt);
    CHECK(res.model.ae.has_value());
    CHECK(std::isfinite(res.record.test[0].mse));
}

TEST_CASE("frozen-pretrained mode without a checkpoint is a config error") {
    Fixture f = make_fixture(10);
    CHECK_THROWS_AS(run_stage2(f.cfg, std::nullopt), ConfigError);
}

TEST_CASE("perceptual loss with a frozen AE leaves decoder parameters unchanged") {
    Fixture f = make_fixture(11);
    f.cfg.weights.perc = 5.0;
    f.cfg.epochs = 2;
    Stage1Result s1 = run_stage1(f.cfg);
    AutoEncoder before = s1.ae;
    Stage2Result res = run_stage2(f.cfg, s1.ae);
    CHECK(res.model.ae->dec.weight.data == before.dec.weight.data);
    CHECK(res.model.ae->param_checksum() == before.param_checksum());
}

TEST_CASE("baseline arm trains in observation space and is deterministic") {
    Fixture f = make_fixture(12);
    f.cfg.epochs = 5;
    Stage2Result a = run_baseline(f.cfg);
    CHECK_FALSE(a.model.ae.has_value());
    REQUIRE_FALSE(a.record.epochs.empty());
    CHECK(a.record.epochs.back().val_obs_mse < a.record.epochs.front().val_obs_mse);

    Stage2Result b = run_baseline(f.cfg);
    CHECK(same_epoch_logs(a.record, b.record));
}

TEST_CASE("zero-epoch run reports metrics from initialization") {
    Fixture f = make_fixture(13);
    f.cfg.epochs = 0;
    Stage2Result res = run_baseline(f.cfg);
    CHECK(res.record.epochs.empty());
    CHECK(res.record.best_epoch == -1);
    CHECK(std::isfinite(res.record.test[0].mse));
}

TEST_CASE("evaluate_split reproduces the recorded test metrics bit-for-bit") {
    Fixture f = make_fixture(14);
    f.cfg.epochs = 3;
    Stage1Result s1 = run_stage1(f.cfg);
    Stage2Result s2 = run_stage2(f.cfg, s1.ae);

    PreparedData data = prepare_data(f.cfg);
    HorizonMetrics again = evaluate_split(f.cfg, s2.model, data, SplitKind::test);
    CHECK(again.mse == s2.record.test[0].mse);
    CHECK(again.mae == s2.record.test[0].mae);
}

TEST_CASE("embedding trace export: shapes, determinism, taps") {
    Fixture f = make_fixture(15);
    f.cfg.epochs = 2;
    Stage1Result s1 = run_stage1(f.cfg);
    Stage2Result s2 = run_stage2(f.cfg, s1.ae);
    PreparedData data = prepare_data(f.cfg);

    EmbeddingTrace t = compute_embedding_trace(s2.model, data, "decoder_pre", 96, "100");
    CHECK(t.matrix.shape == Shape{96, 8});  // slice steps x latent dim
    CHECK(t.step_index.front() == data.ds.split_sizes.train + data.ds.split_sizes.val);

    EmbeddingTrace t2 = compute_embedding_trace(s2.model, data, "decoder_pre", 96, "100");
    CHECK(t.matrix.data == t2.matrix.data);  // same checkpoint, bit-identical

    EmbeddingTrace h = compute_embedding_trace(s2.model, data, "backbone_hidden", 96, "100");
    CHECK(h.steps() == 96);

    CHECK_THROWS_AS(compute_embedding_trace(s2.model, data, "nonsense", 96, "100"), ConfigError);

    Stage2Result base = run_baseline(f.cfg);
    CHECK_THROWS_AS(compute_embedding_trace(base.model, data, "decoder_pre", 96, "100"),
                    ConfigError);
    EmbeddingTrace bh = compute_embedding_trace(base.model, data, "backbone_hidden", 96, "100");
    CHECK(bh.steps() == 96);
}

TEST_CASE("export hook writes progress-tagged trace files") {
    Fixture f = make_fixture(16);
    f.cfg.epochs = 4;
    f.cfg.diag.export_embeddings = true;
    f.cfg.diag.tap = "decoder_pre";
    f.cfg.diag.slice_steps = 96;
    const auto dir = std::filesystem::temp_directory_path() / "lc_export_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    Stage1Result s1 = run_stage1(f.cfg);
    run_stage2(f.cfg, s1.ae, dir.string());

    CHECK(std::filesystem::exists(dir / "trace_raw.csv"));
    CHECK(std::filesystem::exists(dir / "trace_decoder_pre_p000.csv"));
    CHECK(std::filesystem::exists(dir / "trace_decoder_pre_p050.csv"));
    CHECK(std::filesystem::exists(dir / "trace_decoder_pre_p100.csv"));

    EmbeddingTrace p0 = load_trace((dir / "trace_decoder_pre_p000.csv").string());
    EmbeddingTrace p100 = load_trace((dir / "trace_decoder_pre_p100.csv").string());
    CHECK(p0.progress == "000");
    CHECK(p100.progress == "100");
    CHECK(p0.step_index == p100.step_index);
}

TEST_CASE("training divergence raises a TrainError") {
    Fixture f = make_fixture(17);
    f.cfg.lr = 1e200;
    f.cfg.grad_clip = 0.0;
    f.cfg.epochs = 10;
    Stage1Result s1;
    {
        TrainConfig pre = f.cfg;
        pre.lr = 3e-3;
        s1 = run_stage1(pre);
    }
    CHECK_THROWS_AS(run_stage2(f.cfg, s1.ae), TrainError);
}
