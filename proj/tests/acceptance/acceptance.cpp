// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Heavier end-to-end checks (4, 8) need data/ETTh1.csv and
// the CLI binary (LATENTCAST_CLI env var, set by ctest).
//
// Run all criteria: ./acceptance
// Run a subset:     ./acceptance 1 2 3

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/backbone.hpp"
#include "latentcast/checkpoint.hpp"
#include "latentcast/config.hpp"
#include "latentcast/diagnostics.hpp"
#include "latentcast/losses.hpp"
#include "latentcast/training.hpp"
#include "support/finite_diff.hpp"
#include "support/synthetic.hpp"

using namespace latentcast;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::ostringstream&)> run;
};

std::string source_dir() { return LATENTCAST_SOURCE_DIR; }

bool have_etth1() { return fs::exists(source_dir() + "/data/ETTh1.csv"); }

// ---------------------------------------------------------------- criterion 1

bool gradient_oracle_suite(std::ostringstream& log) {
    const int trials = 100;
    const double tol = 1e-4;
    Rng rng(20250809);
    bool ok = true;
    double worst = 0.0;
    auto note = [&](const char* what, double err) {
        worst = std::max(worst, err);
        if (err >= tol) {
            ok = false;
            log << "  " << what << " rel err " << err << " >= " << tol << "\n";
        }
    };

    for (int t = 0; t < trials; ++t) {
        // L_Rec: grad of mean |recon - x| w.r.t. recon, away from the kink
        TensorF x = testsupport::random_tensor({3, 4}, rng);
        TensorF recon = x;
        for (auto& v : recon.data) {
            double d = rng.uniform(-1.0, 1.0);
            if (std::abs(d) < 1e-2) d = d < 0 ? -1e-2 : 1e-2;
            v += d;
        }
        TensorF ana(recon.shape);
        const double inv_n = 1.0 / static_cast<double>(recon.numel());
        for (std::size_t i = 0; i < recon.numel(); ++i)
            ana.data[i] = (recon.data[i] > x.data[i] ? 1.0 : -1.0) * inv_n;
        auto f_rec = [&]() { return mae_loss(x, recon); };
        auto num = testsupport::finite_diff_grad(f_rec, testsupport::tensor_ptrs(recon));
        note("L_Rec", testsupport::max_rel_error(
                          std::vector<double>(ana.data.begin(), ana.data.end()), num));

        // L_Pred
        TensorF zy = testsupport::random_tensor({2, 3, 2}, rng);
        TensorF zh = testsupport::random_tensor({2, 3, 2}, rng);
        LossResult pred = loss_pred(zy, zh);
        auto f_pred = [&]() { return loss_pred(zy, zh).value; };
        note("L_Pred",
             testsupport::max_rel_error(
                 std::vector<double>(pred.grad.data.begin(), pred.grad.data.end()),
                 testsupport::finite_diff_grad(f_pred, testsupport::tensor_ptrs(zh))));

        // L_Align
        LossResult align = loss_align(zy, zh);
        auto f_align = [&]() { return loss_align(zy, zh).value; };
        note("L_Align",
             testsupport::max_rel_error(
                 std::vector<double>(align.grad.data.begin(), align.grad.data.end()),
                 testsupport::finite_diff_grad(f_align, testsupport::tensor_ptrs(zh))));

        // L_Align^NCE
        TensorF nh = testsupport::random_tensor({3, 4}, rng);
        TensorF ny = testsupport::random_tensor({3, 4}, rng);
        NceResult nce = loss_align_nce(nh, ny, 0.5);
        auto f_nce = [&]() { return loss_align_nce(nh, ny, 0.5).value; };
        note("L_Align_NCE",
             testsupport::max_rel_error(
                 std::vector<double>(nce.grad.data.begin(), nce.grad.data.end()),
                 testsupport::finite_diff_grad(f_nce, testsupport::tensor_ptrs(nh))));

        // L_Perc
        TensorF y = testsupport::random_tensor({2, 2, 3}, rng);
        TensorF yh = testsupport::random_tensor({2, 2, 3}, rng);
        LossResult perc = loss_perceptual(y, yh);
        auto f_perc = [&]() { return loss_perceptual(y, yh).value; };
        note("L_Perc",
             testsupport::max_rel_error(
                 std::vector<double>(perc.grad.data.begin(), perc.grad.data.end()),
                 testsupport::finite_diff_grad(f_perc, testsupport::tensor_ptrs(yh))));

        // linear layer backward (weights, bias, input)
        LinearLayer layer(3, 4);
        layer.init(rng);
        TensorF input = testsupport::random_tensor({2, 3}, rng);
        TensorF coeff = testsupport::random_tensor({2, 4}, rng);
        layer.zero_grads();
        TensorF gin = layer.backward(input, coeff);
        auto f_lin = [&]() { return dot_flat(coeff, layer.forward(input)); };
        note("linear.weight",
             testsupport::max_rel_error(
                 std::vector<double>(layer.weight_grad.data.begin(), layer.weight_grad.data.end()),
                 testsupport::finite_diff_grad(f_lin, testsupport::tensor_ptrs(layer.weight))));
        note("linear.bias",
             testsupport::max_rel_error(
                 std::vector<double>(layer.bias_grad.data.begin(), layer.bias_grad.data.end()),
                 testsupport::finite_diff_grad(f_lin, testsupport::tensor_ptrs(layer.bias))));
        note("linear.input",
             testsupport::max_rel_error(
                 std::vector<double>(gin.data.begin(), gin.data.end()),
                 testsupport::finite_diff_grad(f_lin, testsupport::tensor_ptrs(input))));

        // activations, inputs kept away from the relu kink
        TensorF ax({6});
        for (auto& v : ax.data) {
            v = rng.uniform(-2.0, 2.0);
            if (std::abs(v) < 1e-2) v = v < 0 ? -1e-2 : 1e-2;
        }
        TensorF up = testsupport::random_tensor({6}, rng);
        for (Activation kind : {Activation::relu, Activation::gelu}) {
            TensorF ag = activation_backward(kind, ax, up);
            auto f_act = [&]() { return dot_flat(up, activation_forward(kind, ax)); };
            note(kind == Activation::relu ? "relu" : "gelu",
                 testsupport::max_rel_error(
                     std::vector<double>(ag.data.begin(), ag.data.end()),
                     testsupport::finite_diff_grad(f_act, testsupport::tensor_ptrs(ax))));
        }
    }
    log << "  worst rel err " << worst << " over " << trials << " trials per op\n";
    return ok;
}

// ---------------------------------------------------------------- criterion 2

bool loss_identities(std::ostringstream& log) {
    bool ok = true;
    Rng rng(7);

    TensorF z = testsupport::random_tensor({4, 3}, rng);
    if (loss_pred(z, z).value != 0.0) {
        ok = false;
        log << "  L_Pred(Z,Z) != 0\n";
    }

    for (double c : {0.1, 1.0, 10.0}) {
        TensorF zc = z;
        scale(zc, c);
        const double v = loss_align(z, zc).value;
        if (std::abs(v) > 1e-12) {
            ok = false;
            log << "  L_Align(Z," << c << "Z) = " << v << " > 1e-12\n";
        }
    }

    for (std::size_t B : {2u, 4u, 8u}) {
        TensorF batch({B, 5});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < 5; ++k) batch.at(b, k) = 0.3 * (double)k + 0.1;
        const double v = loss_align_nce(batch, batch, 0.1).value;
        if (std::abs(v - std::log((double)B)) > 1e-12) {
            ok = false;
            log << "  uniform InfoNCE |B|=" << B << " off by "
                << std::abs(v - std::log((double)B)) << "\n";
        }
    }

    // exact weight linearity
    TensorF zh = testsupport::random_tensor({4, 3}, rng);
    TensorF y = testsupport::random_tensor({2, 6}, rng);
    TensorF yh = testsupport::random_tensor({2, 6}, rng);
    LossWeights w1;
    w1.alpha = 3.5;
    w1.beta = 1.25;
    w1.perc = 0.5;
    LossWeights w2 = w1;
    w2.alpha *= 2;
    w2.beta *= 2;
    w2.perc *= 2;
    TotalLossResult r1 = loss_total(w1, z, zh, &y, &yh);
    TotalLossResult r2 = loss_total(w2, z, zh, &y, &yh);
    if (r2.value != 2.0 * r1.value) {
        ok = false;
        log << "  loss_total value not exactly weight-linear\n";
    }
    for (std::size_t i = 0; i < r1.grad_z_hat.numel(); ++i)
        if (r2.grad_z_hat.data[i] != 2.0 * r1.grad_z_hat.data[i]) {
            ok = false;
            log << "  loss_total grad not exactly weight-linear\n";
            break;
        }
    return ok;
}

// ---------------------------------------------------------------- criterion 3

bool data_plumbing(std::ostringstream& log) {
    bool ok = true;
    auto check_split = [&](const std::string& name, std::size_t tr, std::size_t va,
                           std::size_t te) {
        auto s = registered_split(name);
        if (!s || s->train != tr || s->val != va || s->test != te) {
            ok = false;
            log << "  split mismatch for " << name << "\n";
        }
    };
    check_split("ETTh1", 8545, 2881, 2881);
    check_split("ETTm1", 34465, 11521, 11521);

    // window counts vs the enumeration oracle for all four horizons
    auto oracle = [](std::size_t len, std::size_t L, std::size_t T) {
        std::size_t n = 0;
        for (std::size_t s = 0; s + L + T <= len; ++s) ++n;
        return n;
    };
    const std::size_t L = 720;
    for (const std::string name : {"ETTh1", "ETTm1"}) {
        const SplitSizes s = *registered_split(name);
        for (std::size_t T : {96u, 192u, 336u, 720u}) {
            const std::size_t lens[] = {s.train, s.val + L, s.test + L};
            for (std::size_t len : lens) {
                if (count_windows(len, L, T) != oracle(len, L, T)) {
                    ok = false;
                    log << "  window count mismatch " << name << " len=" << len << " T=" << T
                        << "\n";
                }
            }
        }
    }
    if (ok) log << "  splits and window counts match the oracle\n";
    return ok;
}

// ---------------------------------------------------------------- criterion 4

TrainConfig etth1_desk_config() {
    json doc = {
        {"data", {{"dataset", "ETTh1"}, {"path", source_dir() + "/data/ETTh1.csv"}}},
        {"training", {{"horizon", 96}, {"epochs", 100}, {"patience", 5}}},
    };
    return parse_config(doc);
}

bool desk_scale_etth1(std::ostringstream& log) {
    if (!have_etth1()) {
        log << "  data/ETTh1.csv missing; cannot run the benchmark reproduction\n";
        return false;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<double> base_mse, latent_mse;
    bool freeze_ok = true;

    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = etth1_desk_config();
        cfg.seed = seed;
        cfg.seed_set = true;

        Stage2Result base = run_baseline(cfg);
        base_mse.push_back(base.record.test[0].mse);

        Stage1Result s1 = run_stage1(cfg);
        const std::uint64_t checksum = s1.ae.param_checksum();
        Stage2Result lat = run_stage2(cfg, s1.ae);
        latent_mse.push_back(lat.record.test[0].mse);
        if (lat.model.ae->param_checksum() != checksum) freeze_ok = false;

        log << "  seed " << seed << ": baseline mse " << base.record.test[0].mse
            << ", latent mse " << lat.record.test[0].mse << "\n";
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const double mb = mean(base_mse), ml = mean(latent_mse);
    const double improvement = mb - ml;
    log << "  3-seed mean: baseline " << mb << " (target 0.375 +- 0.03), latent " << ml
        << " (target 0.366 +- 0.03), improvement " << improvement << " (>= -0.005)\n";
    log << "  wall time " << wall << " s (< 1800)\n";
    if (!freeze_ok) log << "  FROZEN AE CHANGED\n";

    bool ok = true;
    if (std::abs(mb - 0.375) > 0.03) ok = false;
    if (std::abs(ml - 0.366) > 0.03) ok = false;
    if (improvement < -0.005) ok = false;
    if (wall >= 1800.0) ok = false;
    if (!freeze_ok) ok = false;
    return ok;
}

// ---------------------------------------------------------------- criterion 5

bool freeze_safety(std::ostringstream& log) {
    // Frozen-mode stage 2 on a small synthetic run; the training loop itself
    // asserts the checksum, this re-verifies parameter bytes externally.
    SeriesDataset ds = testsupport::periodic_dataset(800, 2, {24.0, 16.0}, 0.05, 5);
    const fs::path dir = fs::temp_directory_path() / "lc_acc_freeze";
    fs::create_directories(dir);
    const std::string csv = (dir / "series.csv").string();
    {
        std::ofstream os(csv);
        os << "ch0,ch1\n";
        os.precision(17);
        for (std::size_t t = 0; t < 800; ++t)
            os << ds.values.at(t, 0) << "," << ds.values.at(t, 1) << "\n";
    }
    TrainConfig cfg;
    cfg.dataset = "synthetic";
    cfg.data_path = csv;
    cfg.split_ratios = std::array<double, 3>{0.7, 0.15, 0.15};
    cfg.lookback = 48;
    cfg.horizon = 24;
    cfg.latent_dim = 8;
    cfg.hidden = 16;
    cfg.batch_size = 32;
    cfg.lr = 3e-3;
    cfg.epochs = 4;
    cfg.patience = 10;
    cfg.seed = 11;
    cfg.weights.perc = 1.0;  // exercise the decoder path too

    Stage1Result s1 = run_stage1(cfg);
    AutoEncoder pristine = s1.ae;
    Stage2Result s2 = run_stage2(cfg, s1.ae);
    const bool checksum_equal = s2.model.ae->param_checksum() == pristine.param_checksum();
    bool bytes_equal = true;
    for (auto [a, b] : {std::pair{&pristine.enc1.weight, &s2.model.ae->enc1.weight},
                        std::pair{&pristine.enc2.weight, &s2.model.ae->enc2.weight},
                        std::pair{&pristine.dec.weight, &s2.model.ae->dec.weight},
                        std::pair{&pristine.dec.bias, &s2.model.ae->dec.bias}})
        bytes_equal = bytes_equal && (a->data == b->data);
    log << "  checksum equal: " << (checksum_equal ? "yes" : "NO") << ", parameter bytes equal: "
        << (bytes_equal ? "yes" : "NO") << "\n";
    return checksum_equal && bytes_equal;
}

// ---------------------------------------------------------------- criterion 6

bool latent_chaos_directional(std::ostringstream& log) {
    // Multichannel periodic data; periods and horizon chosen so the true
    // peak bins (slice/24 = 10, slice/16 = 15) are not multiples of the
    // window-tiling artifact bin (slice/T = 4).
    const std::size_t slice = 240;
    int adj_wins = 0, spec_wins = 0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SeriesDataset ds = testsupport::periodic_dataset(2400, 3, {24.0, 16.0}, 0.1, seed);
        const fs::path dir = fs::temp_directory_path() / ("lc_acc_chaos_" + std::to_string(seed));
        fs::create_directories(dir);
        const std::string csv = (dir / "series.csv").string();
        {
            std::ofstream os(csv);
            os << "a,b,c\n";
            os.precision(17);
            for (std::size_t t = 0; t < 2400; ++t)
                os << ds.values.at(t, 0) << "," << ds.values.at(t, 1) << ","
                   << ds.values.at(t, 2) << "\n";
        }
        TrainConfig cfg;
        cfg.dataset = "synthetic";
        cfg.data_path = csv;
        cfg.split_ratios = std::array<double, 3>{0.7, 0.15, 0.15};
        cfg.lookback = 120;
        cfg.horizon = 60;
        cfg.latent_dim = 8;
        cfg.hidden = 32;
        cfg.batch_size = 64;
        cfg.lr = 3e-3;
        cfg.epochs = 10;
        cfg.patience = 10;
        cfg.seed = seed;
        cfg.backbone_kind = BackboneKind::mlp;

        Stage1Result s1 = run_stage1(cfg);
        Stage2Result lat = run_stage2(cfg, s1.ae);
        Stage2Result base = run_baseline(cfg);

        PreparedData data = prepare_data(cfg);
        EmbeddingTrace raw = raw_observation_trace(data, cfg.horizon, slice);
        EmbeddingTrace lat_tr =
            compute_embedding_trace(lat.model, data, "decoder_pre", slice, "100");
        EmbeddingTrace base_tr =
            compute_embedding_trace(base.model, data, "backbone_hidden", slice, "100");

        const double da = adjacent_distance(lat_tr);
        const double db = adjacent_distance(base_tr);
        if (da < db) ++adj_wins;

        SpectrumReport rs = spectrum(raw), ls = spectrum(lat_tr), bs = spectrum(base_tr);
        auto top2 = [](const SpectrumReport& s) {
            return std::set<std::size_t>{s.peak_bins[0], s.peak_bins[1]};
        };
        const bool lat_match = top2(ls) == top2(rs);
        const bool base_match = top2(bs) == top2(rs);
        if (lat_match && !base_match) ++spec_wins;

        log << "  seed " << seed << ": adj latent " << da << " vs baseline " << db
            << "; latent peaks match raw: " << (lat_match ? "yes" : "no")
            << ", baseline: " << (base_match ? "yes" : "no") << "\n";
    }
    log << "  adjacency wins " << adj_wins << "/3 (need >=2), spectrum wins " << spec_wins
        << "/3 (need >=2)\n";
    return adj_wins >= 2 && spec_wins >= 2;
}

// ---------------------------------------------------------------- criterion 7

bool diagnostics_invariants(std::ostringstream& log) {
    bool ok = true;
    Rng rng(99);

    // constant-trace zero cases, exact
    {
        EmbeddingTrace t;
        t.matrix = TensorF::full({16, 3}, 4.2);
        t.step_index.resize(16);
        for (std::size_t i = 0; i < 16; ++i) t.step_index[i] = i;
        if (adjacent_distance(t) != 0.0) {
            ok = false;
            log << "  constant trace adjacent_distance != 0\n";
        }
        for (double m : spectrum(t).magnitude)
            if (m != 0.0) {
                ok = false;
                log << "  constant trace spectrum magnitude != 0\n";
                break;
            }
    }

    // scaling + rotation invariance, 20 trials, rel err <= 1e-10
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dims = 5;
        TensorF m = testsupport::random_tensor({40, dims}, rng);
        EmbeddingTrace t;
        t.matrix = m;
        t.step_index.resize(40);
        for (std::size_t i = 0; i < 40; ++i) t.step_index[i] = i;
        const double base = adjacent_distance(t);

        EmbeddingTrace scaled = t;
        scale(scaled.matrix, rng.uniform(0.01, 100.0));
        worst = std::max(worst, std::abs(adjacent_distance(scaled) - base) / base);

        // random orthogonal via Gram-Schmidt on a random Gaussian matrix
        TensorF q({dims, dims});
        for (std::size_t i = 0; i < dims; ++i) {
            std::vector<double> v(dims);
            for (auto& x : v) x = rng.normal();
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < dims; ++k) dot += v[k] * q.at(j, k);
                for (std::size_t k = 0; k < dims; ++k) v[k] -= dot * q.at(j, k);
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < dims; ++k) q.at(i, k) = v[k] / norm;
        }
        EmbeddingTrace rotated = t;
        rotated.matrix = matmul(m, q);
        worst = std::max(worst, std::abs(adjacent_distance(rotated) - base) / base);
    }
    log << "  worst invariance rel err " << worst << " (<= 1e-10)\n";
    if (worst > 1e-10) ok = false;

    // spectrum linearity on sinusoid sums
    {
        auto sine = [](std::size_t steps, double period, double phase) {
            TensorF m({steps, 2});
            for (std::size_t t = 0; t < steps; ++t)
                for (std::size_t d = 0; d < 2; ++d)
                    m.at(t, d) = std::sin(6.283185307179586 * t / period + phase + d);
            return m;
        };
        EmbeddingTrace f, g, sum;
        f.matrix = sine(64, 8.0, 0.1);
        g.matrix = sine(64, 16.0, 0.9);
        sum.matrix = f.matrix;
        axpy(sum.matrix, 1.0, g.matrix);
        f.step_index = g.step_index = sum.step_index = std::vector<std::size_t>(64);
        for (std::size_t i = 0; i < 64; ++i)
            f.step_index[i] = g.step_index[i] = sum.step_index[i] = i;
        SpectrumReport sf = spectrum(f), sg = spectrum(g), ss = spectrum(sum);
        for (std::size_t k = 0; k < sf.magnitude.size(); ++k)
            if (std::abs(ss.magnitude[k] - sf.magnitude[k] - sg.magnitude[k]) > 1e-9) {
                ok = false;
                log << "  spectrum linearity violated at bin " << k << "\n";
                break;
            }
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 8

bool determinism_cli(std::ostringstream& log) {
    const char* cli = std::getenv("LATENTCAST_CLI");
    if (!cli) {
        log << "  LATENTCAST_CLI not set (run through ctest or set it manually)\n";
        return false;
    }
    if (!have_etth1()) {
        log << "  data/ETTh1.csv missing\n";
        return false;
    }
    const fs::path dir = fs::temp_directory_path() / "lc_acc_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);

    json doc = {
        {"data", {{"dataset", "ETTh1"}, {"path", source_dir() + "/data/ETTh1.csv"}}},
        {"training", {{"horizon", 96}, {"epochs", 2}, {"patience", 5}}},
    };
    const fs::path cfg_path = dir / "config.json";
    {
        std::ofstream os(cfg_path);
        os << doc.dump(2);
    }

    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(cli) + " " + args + " > " +
                                (dir / "log.txt").string() + " 2>&1";
        return std::system(cmd.c_str());
    };
    if (run("pretrain-ae --config " + cfg_path.string() + " --seed 7 --out " +
            (dir / "ae").string()) != 0) {
        log << "  pretrain-ae failed\n";
        return false;
    }
    for (const char* out : {"r1", "r2"}) {
        if (run("train --config " + cfg_path.string() + " --ae " + (dir / "ae/ae.ckpt").string() +
                " --seed 7 --out " + (dir / out).string()) != 0) {
            log << "  train run failed\n";
            return false;
        }
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    json a = json::parse(slurp(dir / "r1/run.json"));
    json b = json::parse(slurp(dir / "r2/run.json"));
    const bool curves = a["runs"][0]["epochs"].dump() == b["runs"][0]["epochs"].dump();
    const bool metrics = a["test"].dump() == b["test"].dump();
    log << "  loss curves identical: " << (curves ? "yes" : "NO") << ", metrics identical: "
        << (metrics ? "yes" : "NO") << "\n";
    return curves && metrics;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> criteria = {
        {1, "gradient oracle suite (FD, 100 trials, rel err <= 1e-4)", gradient_oracle_suite},
        {2, "loss identities", loss_identities},
        {3, "data plumbing (splits + window counts)", data_plumbing},
        {4, "desk-scale ETTh1/DLinear T=96 reproduction (3 seeds)", desk_scale_etth1},
        {5, "freeze safety (AE checksum)", freeze_safety},
        {6, "latent-chaos directional check (3 seeds)", latent_chaos_directional},
        {7, "diagnostics invariants", diagnostics_invariants},
        {8, "determinism of cmd_train --seed 7", determinism_cli},
    };

    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failures = 0;
    for (auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        std::ostringstream log;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = c.run(log);
        } catch (const std::exception& e) {
            log << "  exception: " << e.what() << "\n";
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name
                  << "  (" << dt << " s)\n"
                  << log.str();
        std::cout.flush();
        if (!ok) ++failures;
    }
    if (failures) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all criteria passed\n";
    return 0;
}
