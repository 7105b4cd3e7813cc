#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/autoencoder.hpp"
#include "latentcast/backbone.hpp"
#include "latentcast/config.hpp"
#include "latentcast/data.hpp"
#include "latentcast/diagnostics.hpp"
#include "latentcast/errors.hpp"
#include "latentcast/losses.hpp"
#include "latentcast/optim.hpp"
#include "latentcast/rng.hpp"

namespace latentcast {

// ---- run records ----

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_total = 0.0, train_pred = 0.0, train_align = 0.0, train_perc = 0.0;
    double val_obs_mse = 0.0;     // early-stopping metric
    double val_latent_pred = 0.0; // logged, not used for stopping
};

struct HorizonMetrics {
    std::size_t horizon = 0;
    double mse = 0.0, mae = 0.0;
};

struct RunRecord {
    std::string stage;  // stage1 | stage2 | baseline
    nlohmann::json config_snapshot;
    std::uint64_t seed = 0;
    std::vector<EpochLog> epochs;
    std::vector<double> stage1_train_curve, stage1_val_curve;
    int best_epoch = -1;
    std::vector<HorizonMetrics> test;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"lr", e.lr},
                          {"train_total", e.train_total},
                          {"train_pred", e.train_pred},
                          {"train_align", e.train_align},
                          {"train_perc", e.train_perc},
                          {"val_obs_mse", e.val_obs_mse},
                          {"val_latent_pred", e.val_latent_pred}});
    nlohmann::json test = nlohmann::json::array();
    for (const auto& m : r.test)
        test.push_back({{"horizon", m.horizon}, {"mse", m.mse}, {"mae", m.mae}});
    nlohmann::json doc = {{"stage", r.stage},
                          {"config", r.config_snapshot},
                          {"seed", r.seed},
                          {"epochs", epochs},
                          {"best_epoch", r.best_epoch},
                          {"test", test},
                          {"wall_seconds", r.wall_seconds},
                          {"warnings", r.warnings}};
    if (!r.stage1_train_curve.empty()) {
        doc["stage1_train_curve"] = r.stage1_train_curve;
        doc["stage1_val_curve"] = r.stage1_val_curve;
    }
    return doc;
}

// ---- data preparation ----

struct PreparedData {
    SeriesDataset ds;  // standardized in place
    Standardizer stats;
    SplitViews views;

    std::size_t used_points() const { return ds.split_sizes.total(); }
};

inline std::string resolve_data_path(const TrainConfig& c) {
    if (!c.data_path.empty()) return c.data_path;
    const char* env = std::getenv("LATENTCAST_DATA_DIR");
    const std::string dir = env ? env : "data";
    return (std::filesystem::path(dir) / (c.dataset + ".csv")).string();
}

/// Load, split and standardize per the config. The dataset keeps the
/// configured name so the split registry applies.
inline PreparedData prepare_data(const TrainConfig& c) {
    PreparedData p;
    p.ds = load_csv(resolve_data_path(c));
    p.ds.name = c.dataset;
    p.views = split(p.ds, c.split_ratios);
    p.stats = standardize_fit_apply(p.ds, p.views.train);
    return p;
}

// ---- batch gathering ----

namespace batching {

/// blocks(b, d, t) = rows(starts[b] + t, d); rows are (time x dims).
inline TensorF gather_blocks(const TensorF& rows, const std::vector<std::size_t>& starts,
                             std::size_t len) {
    const std::size_t dims = rows.shape[1];
    TensorF out({starts.size(), dims, len});
    for (std::size_t b = 0; b < starts.size(); ++b)
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t d = 0; d < dims; ++d)
                out.at(b, d, t) = rows.at(starts[b] + t, d);
    return out;
}

/// (time x dims) -> (dims x time), truncated to the first `used` rows.
/// Window gathers from the transposed layout are contiguous copies.
inline TensorF transpose_series(const TensorF& rows, std::size_t used) {
    const std::size_t dims = rows.shape[1];
    TensorF out({dims, used});
    for (std::size_t t = 0; t < used; ++t)
        for (std::size_t d = 0; d < dims; ++d) out.at(d, t) = rows.at(t, d);
    return out;
}

/// blocks(b, d, t) = seriesT(d, starts[b] + t); seriesT is (dims x time).
inline TensorF gather_blocks_t(const TensorF& seriesT, const std::vector<std::size_t>& starts,
                               std::size_t len) {
    const std::size_t dims = seriesT.shape[0], n = seriesT.shape[1];
    TensorF out({starts.size(), dims, len});
    for (std::size_t b = 0; b < starts.size(); ++b)
        for (std::size_t d = 0; d < dims; ++d)
            std::copy_n(seriesT.data.data() + d * n + starts[b], len,
                        out.data.data() + (b * dims + d) * len);
    return out;
}

/// time-major row gather: out((b*len + t), c) = rows(starts[b] + t, c).
inline TensorF gather_step_rows(const TensorF& rows, const std::vector<std::size_t>& starts,
                                std::size_t len) {
    const std::size_t dims = rows.shape[1];
    TensorF out({starts.size() * len, dims});
    std::size_t r = 0;
    for (std::size_t b = 0; b < starts.size(); ++b)
        for (std::size_t t = 0; t < len; ++t, ++r)
            for (std::size_t d = 0; d < dims; ++d) out.at(r, d) = rows.at(starts[b] + t, d);
    return out;
}

/// (B x D x T) -> ((B*T) x D) with row (b*T + t) = block(b, :, t).
inline TensorF blocks_to_step_rows(const TensorF& blocks) {
    const std::size_t B = blocks.shape[0], D = blocks.shape[1], T = blocks.shape[2];
    TensorF out({B * T, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d) out.at(b * T + t, d) = blocks.at(b, d, t);
    return out;
}

/// Inverse of blocks_to_step_rows.
inline TensorF step_rows_to_blocks(const TensorF& rows, std::size_t B, std::size_t T) {
    const std::size_t D = rows.shape[1];
    TensorF out({B, D, T});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d) out.at(b, d, t) = rows.at(b * T + t, d);
    return out;
}

}  // namespace batching

// ---- trained model + embedding taps ----

struct TrainedModel {
    std::optional<AutoEncoder> ae;  // absent in the baseline arm
    std::unique_ptr<Backbone> backbone;
};

inline std::unique_ptr<Backbone> clone_backbone(Backbone& b) {
    auto copy = make_backbone(b.spec());
    std::vector<ParamRef> src, dst;
    b.collect_params(src);
    copy->collect_params(dst);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
    return copy;
}

inline void copy_backbone_params(Backbone& from, Backbone& to) {
    std::vector<ParamRef> src, dst;
    from.collect_params(src);
    to.collect_params(dst);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
}

/// Per-time-step representation over a contiguous slice of the test split.
/// Windows advance by the horizon so each future step appears exactly once.
/// Taps: decoder_pre = predicted latent state entering the decoder (latent
/// runs only); backbone_hidden = the backbone's per-step readout embedding.
inline EmbeddingTrace compute_embedding_trace(const TrainedModel& model, const PreparedData& data,
                                              const std::string& tap, std::size_t slice_steps,
                                              const std::string& progress) {
    const BackboneSpec& spec = model.backbone->spec();
    const std::size_t L = spec.lookback, T = spec.horizon;
    const std::size_t test_start = data.ds.split_sizes.train + data.ds.split_sizes.val;
    const std::size_t test_len = data.ds.split_sizes.test;

    std::size_t n_windows = std::min(slice_steps, test_len) / T;
    if (n_windows == 0) throw DataError("embedding trace: slice shorter than one horizon");
    if (test_start < L) throw DataError("embedding trace: not enough lookback context");

    const bool latent = model.ae.has_value();
    if (tap != "decoder_pre" && tap != "backbone_hidden")
        throw ConfigError("embedding trace: unknown tap '" + tap + "'");
    if (tap == "decoder_pre" && !latent)
        throw ConfigError("embedding trace: tap 'decoder_pre' needs a latent-mode model");

    std::vector<std::size_t> starts(n_windows);
    for (std::size_t k = 0; k < n_windows; ++k) starts[k] = test_start - L + k * T;

    // Lookback blocks in the model's native space.
    TensorF input_blocks;
    if (latent) {
        TensorF x_rows = batching::gather_step_rows(data.ds.values, starts, L);
        TensorF z_rows = model.ae->encode_rows(x_rows);
        input_blocks = batching::step_rows_to_blocks(z_rows, n_windows, L);
    } else {
        input_blocks = batching::gather_blocks(data.ds.values, starts, L);
    }

    EmbeddingTrace trace;
    trace.source = "backbone_embeddings";
    trace.tap = tap;
    trace.dataset = data.ds.name;
    trace.model = backbone_kind_name(spec.kind) + (latent ? "+latent" : "+baseline");
    trace.progress = progress;

    if (tap == "decoder_pre") {
        TensorF z_hat = model.backbone->forward(input_blocks);  // (K x D x T)
        trace.matrix = batching::blocks_to_step_rows(z_hat);    // (K*T x D)
    } else {
        const std::size_t D = spec.channels;
        TensorF first = model.backbone->step_embeddings(
            TensorF({D, L}, std::vector<double>(input_blocks.data.begin(),
                                                input_blocks.data.begin() + D * L)));
        trace.matrix = TensorF({n_windows * T, first.shape[1]});
        for (std::size_t k = 0; k < n_windows; ++k) {
            TensorF block({D, L}, std::vector<double>(input_blocks.data.begin() + k * D * L,
                                                      input_blocks.data.begin() + (k + 1) * D * L));
            TensorF emb = k == 0 ? first : model.backbone->step_embeddings(block);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < emb.shape[1]; ++j)
                    trace.matrix.at(k * T + t, j) = emb.at(t, j);
        }
    }

    trace.step_index.resize(n_windows * T);
    for (std::size_t i = 0; i < trace.step_index.size(); ++i)
        trace.step_index[i] = test_start + i;
    trace.validate();
    return trace;
}

/// Raw-observation trace over the same steps as compute_embedding_trace.
inline EmbeddingTrace raw_observation_trace(const PreparedData& data, std::size_t horizon,
                                            std::size_t slice_steps) {
    const std::size_t test_start = data.ds.split_sizes.train + data.ds.split_sizes.val;
    const std::size_t n_steps = (std::min(slice_steps, data.ds.split_sizes.test) / horizon) * horizon;
    if (n_steps < 2) throw DataError("raw trace: slice too short");
    const std::size_t C = data.ds.num_channels();
    EmbeddingTrace trace;
    trace.source = "raw_observations";
    trace.tap = "raw";
    trace.dataset = data.ds.name;
    trace.matrix = TensorF({n_steps, C});
    trace.step_index.resize(n_steps);
    for (std::size_t t = 0; t < n_steps; ++t) {
        trace.step_index[t] = test_start + t;
        for (std::size_t c = 0; c < C; ++c)
            trace.matrix.at(t, c) = data.ds.values.at(test_start + t, c);
    }
    return trace;
}

/// Write one tap trace (and metadata sidecar) into a run directory.
inline std::string export_embeddings(const TrainedModel& model, const PreparedData& data,
                                     const std::string& tap, std::size_t slice_steps,
                                     const std::string& progress, const std::string& dir) {
    EmbeddingTrace trace = compute_embedding_trace(model, data, tap, slice_steps, progress);
    const std::string path =
        (std::filesystem::path(dir) / ("trace_" + tap + "_p" + progress + ".csv")).string();
    write_trace(trace, path);
    return path;
}

/// Split metrics for a trained model, batched in fixed order. The same
/// routine produces the RunRecord test numbers and cmd_eval's
/// recomputation, so the two match bit-for-bit.
inline HorizonMetrics evaluate_split(const TrainConfig& cfg, const TrainedModel& model,
                                     const PreparedData& data, SplitKind kind) {
    const std::size_t L = cfg.lookback, T = cfg.horizon;
    const std::size_t C = data.ds.num_channels();
    const bool latent = model.ae.has_value();

    const std::size_t used = data.used_points();
    const TensorF obs_t = batching::transpose_series(data.ds.values, used);
    TensorF latent_t;
    if (latent) {
        TensorF used_rows({used, C},
                          std::vector<double>(data.ds.values.data.begin(),
                                              data.ds.values.data.begin() + used * C));
        latent_t = batching::transpose_series(model.ae->encode_rows(used_rows), used);
    }

    SeriesView v = windowed_view(data.ds, kind, L);
    std::vector<std::size_t> starts = window_starts(v.length, L, T);
    for (auto& s : starts) s += v.offset;
    if (starts.empty()) throw DataError("evaluate_split: split admits no windows");

    double se = 0.0, abs_err = 0.0;
    std::size_t count = 0;
    for (std::size_t b0 = 0; b0 < starts.size(); b0 += cfg.batch_size) {
        const std::size_t bn = std::min(cfg.batch_size, starts.size() - b0);
        std::vector<std::size_t> xs(starts.begin() + b0, starts.begin() + b0 + bn);
        std::vector<std::size_t> ys = xs;
        for (auto& s : ys) s += L;

        TensorF y = batching::gather_blocks_t(obs_t, ys, T);
        TensorF y_hat;
        if (latent) {
            TensorF z_x = batching::gather_blocks_t(latent_t, xs, L);
            TensorF z_hat = model.backbone->forward(z_x);
            TensorF y_hat_rows = model.ae->decode_rows(batching::blocks_to_step_rows(z_hat));
            y_hat = batching::step_rows_to_blocks(y_hat_rows, bn, T);
        } else {
            TensorF x = batching::gather_blocks_t(obs_t, xs, L);
            y_hat = model.backbone->forward(x);
        }
        for (std::size_t i = 0; i < y.numel(); ++i) {
            const double d = y_hat.data[i] - y.data[i];
            se += d * d;
            abs_err += std::abs(d);
        }
        count += y.numel();
    }
    HorizonMetrics m;
    m.horizon = T;
    m.mse = se / static_cast<double>(count);
    m.mae = abs_err / static_cast<double>(count);
    return m;
}

// ---- stage 1 ----

struct Stage1Result {
    AutoEncoder ae;
    RunRecord record;
};

/// Pretrain the point-wise AutoEncoder on the train split, early-stopped on
/// validation reconstruction loss. The returned AE is NOT yet frozen.
inline Stage1Result run_stage1(const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    PreparedData data = prepare_data(cfg);
    const std::size_t C = data.ds.num_channels();

    AutoEncoder ae(C, cfg.latent_dim);
    ae.dropout = cfg.ae_dropout;
    Rng init_rng(Rng::derive(cfg.seed, 1));
    ae.init(init_rng);

    AePretrainOptions opt;
    opt.chunk_len = cfg.ae_chunk_len;
    opt.batch_size = cfg.batch_size;
    opt.lr = cfg.lr;
    opt.epochs = cfg.epochs;
    opt.patience = cfg.patience;
    opt.seed = cfg.seed;
    opt.cosine_schedule = cfg.scheduler == "cosine";

    Stage1Result out;
    AePretrainResult res = pretrain(ae, data.views.train, data.views.val, opt);
    out.ae = std::move(ae);
    out.record.stage = "stage1";
    out.record.config_snapshot = config_to_json(cfg);
    out.record.seed = cfg.seed;
    out.record.stage1_train_curve = res.train_curve;
    out.record.stage1_val_curve = res.val_curve;
    out.record.best_epoch = res.best_epoch;
    out.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---- stage 2 / baseline ----

struct Stage2Result {
    TrainedModel model;
    RunRecord record;
};

namespace detail {

struct ExportHook {
    bool enabled = false;
    std::string tap;
    std::size_t slice_steps = 240;
    std::string dir;
};

/// Shared stage-2/baseline trainer. In the latent arm the backbone maps
/// encoded blocks and losses live in latent space; in the baseline arm the
/// backbone maps raw blocks under plain observation MSE.
inline Stage2Result train_forecaster(const TrainConfig& cfg, std::optional<AutoEncoder> ae_in,
                                     bool baseline, const ExportHook& hook) {
    const auto t0 = std::chrono::steady_clock::now();
    Stage2Result out;
    RunRecord& rec = out.record;
    rec.stage = baseline ? "baseline" : "stage2";
    rec.config_snapshot = config_to_json(cfg);
    rec.seed = cfg.seed;

    auto prev_warn = warn_handler();
    warn_handler() = [&rec](const std::string& m) { rec.warnings.push_back(m); };
    struct WarnRestore {
        std::function<void(const std::string&)> prev;
        ~WarnRestore() { warn_handler() = prev; }
    } restore{prev_warn};

    PreparedData data = prepare_data(cfg);
    const std::size_t C = data.ds.num_channels();
    const std::size_t L = cfg.lookback, T = cfg.horizon;

    // Autoencoder per mode.
    bool frozen_mode = false;
    if (!baseline) {
        switch (cfg.ae_mode) {
            case AeMode::frozen_pretrained:
                if (!ae_in) throw ConfigError("stage2: frozen_pretrained mode needs an AE checkpoint");
                out.model.ae = std::move(*ae_in);
                freeze(*out.model.ae);
                frozen_mode = true;
                break;
            case AeMode::finetune:
                if (!ae_in) throw ConfigError("stage2: finetune mode needs an AE checkpoint");
                out.model.ae = std::move(*ae_in);
                out.model.ae->frozen = false;
                break;
            case AeMode::scratch: {
                AutoEncoder fresh(C, cfg.latent_dim);
                fresh.dropout = cfg.ae_dropout;
                Rng ae_rng(Rng::derive(cfg.seed, 3));
                fresh.init(ae_rng);
                out.model.ae = std::move(fresh);
                break;
            }
        }
        if (out.model.ae->in_dim != C)
            throw ShapeError("stage2: AE expects " + std::to_string(out.model.ae->in_dim) +
                             " channels, dataset has " + std::to_string(C));
        if (out.model.ae->latent_dim != cfg.latent_dim)
            throw ConfigError("stage2: AE latent dim " + std::to_string(out.model.ae->latent_dim) +
                              " does not match configured " + std::to_string(cfg.latent_dim));
    }
    AutoEncoder* ae = out.model.ae ? &*out.model.ae : nullptr;
    const std::uint64_t checksum_before = frozen_mode ? ae->param_checksum() : 0;

    // Backbone over D channels (latent arm) or C channels (baseline).
    const std::size_t chan = baseline ? C : cfg.latent_dim;
    out.model.backbone = make_backbone(cfg.backbone_spec(chan));
    Backbone& backbone = *out.model.backbone;
    Rng bb_rng(Rng::derive(cfg.seed, 2));
    backbone.init(bb_rng);

    // Frozen-encoder runs precompute the latent series once; both series are
    // kept channel-major so window gathers are contiguous copies.
    const std::size_t used = data.used_points();
    const TensorF obs_t = batching::transpose_series(data.ds.values, used);
    TensorF latent_t;
    if (!baseline && frozen_mode) {
        TensorF used_rows({used, C},
                          std::vector<double>(data.ds.values.data.begin(),
                                              data.ds.values.data.begin() + used * C));
        latent_t = batching::transpose_series(ae->encode_rows(used_rows), used);
    }

    // Window starts, absolute into the dataset rows.
    auto absolute_starts = [&](SplitKind kind) {
        SeriesView v = windowed_view(data.ds, kind, L);
        std::vector<std::size_t> starts = window_starts(v.length, L, T);
        for (auto& s : starts) s += v.offset;
        return starts;
    };
    const std::vector<std::size_t> train_starts = absolute_starts(SplitKind::train);
    const std::vector<std::size_t> val_starts = absolute_starts(SplitKind::val);
    if (train_starts.empty()) throw DataError("stage2: train split admits no windows");

    // Optimizer groups. Frozen AE parameters are never registered.
    Adam bb_adam, enc_adam, dec_adam;
    std::vector<ParamRef> bb_params, enc_params, dec_params;
    backbone.collect_params(bb_params);
    const bool train_encoder = !baseline && !frozen_mode && cfg.enc_lr > 0.0;
    const bool train_decoder = !baseline && !frozen_mode && cfg.dec_lr > 0.0;
    if (!baseline && !frozen_mode) {
        ae->collect_encoder_params(enc_params);
        ae->collect_decoder_params(dec_params);
    }

    const bool need_perc = !baseline && cfg.weights.perc > 0.0;
    const LossWeights& w = cfg.weights;

    // Fixed-order batched evaluation: observation MSE/MAE of decoded
    // forecasts plus the latent prediction loss (latent arm).
    auto evaluate = [&](const std::vector<std::size_t>& starts, double* out_mae,
                        double* out_latent) {
        double se = 0.0, ae_abs = 0.0, latent_se = 0.0;
        std::size_t count = 0, latent_windows = 0;
        for (std::size_t b0 = 0; b0 < starts.size(); b0 += cfg.batch_size) {
            const std::size_t bn = std::min(cfg.batch_size, starts.size() - b0);
            std::vector<std::size_t> xs(starts.begin() + b0, starts.begin() + b0 + bn);
            std::vector<std::size_t> ys = xs;
            for (auto& s : ys) s += L;

            TensorF y = batching::gather_blocks_t(obs_t, ys, T);  // (B x C x T)
            TensorF y_hat;
            if (baseline) {
                TensorF x = batching::gather_blocks_t(obs_t, xs, L);
                y_hat = backbone.forward(x);
            } else {
                TensorF z_x;
                if (frozen_mode) {
                    z_x = batching::gather_blocks_t(latent_t, xs, L);
                } else {
                    TensorF x_rows = batching::gather_step_rows(data.ds.values, xs, L);
                    z_x = batching::step_rows_to_blocks(ae->encode_rows(x_rows), bn, L);
                }
                TensorF z_hat = backbone.forward(z_x);
                if (out_latent) {
                    TensorF z_y;
                    if (frozen_mode) {
                        z_y = batching::gather_blocks_t(latent_t, ys, T);
                    } else {
                        TensorF y_rows = batching::gather_step_rows(data.ds.values, ys, T);
                        z_y = batching::step_rows_to_blocks(ae->encode_rows(y_rows), bn, T);
                    }
                    for (std::size_t i = 0; i < z_y.numel(); ++i) {
                        const double d = z_hat.data[i] - z_y.data[i];
                        latent_se += d * d;
                    }
                    latent_windows += bn;
                }
                TensorF z_hat_rows = batching::blocks_to_step_rows(z_hat);
                TensorF y_hat_rows = ae->decode_rows(z_hat_rows);
                y_hat = batching::step_rows_to_blocks(y_hat_rows, bn, T);
            }
            for (std::size_t i = 0; i < y.numel(); ++i) {
                const double d = y_hat.data[i] - y.data[i];
                se += d * d;
                ae_abs += std::abs(d);
            }
            count += y.numel();
        }
        if (out_mae) *out_mae = ae_abs / static_cast<double>(count);
        if (out_latent)
            *out_latent = latent_windows ? latent_se / static_cast<double>(latent_windows) : 0.0;
        return se / static_cast<double>(count);
    };

    // Optional trace exports at 0%/50%/100% training progress.
    auto maybe_export = [&](const std::string& progress) {
        if (!hook.enabled) return;
        std::string tap = hook.tap;
        if (baseline && tap == "decoder_pre") tap = "backbone_hidden";
        export_embeddings(out.model, data, tap, hook.slice_steps, progress, hook.dir);
    };
    if (hook.enabled) {
        EmbeddingTrace raw = raw_observation_trace(data, T, hook.slice_steps);
        write_trace(raw, (std::filesystem::path(hook.dir) / "trace_raw.csv").string());
    }
    maybe_export("000");

    // Best-checkpoint tracking.
    std::unique_ptr<Backbone> best_backbone;
    std::optional<AutoEncoder> best_ae;
    std::vector<double> val_history;
    int best_epoch = -1;
    double best_val = std::numeric_limits<double>::infinity();

    const int half_epoch = cfg.epochs / 2;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.scheduler == "cosine" ? cosine_lr(cfg.lr, epoch, cfg.epochs) : cfg.lr;
        Rng shuffle_rng(Rng::derive(cfg.seed, 0x52000000ULL + static_cast<std::uint64_t>(epoch)));
        Rng drop_rng(Rng::derive(cfg.seed, 0x5d000000ULL + static_cast<std::uint64_t>(epoch)));

        std::vector<std::size_t> order = train_starts;
        shuffle_rng.shuffle(order);

        double ep_total = 0.0, ep_pred = 0.0, ep_align = 0.0, ep_perc = 0.0;
        std::size_t n_batches = 0;

        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
            std::vector<std::size_t> xs(order.begin() + b0, order.begin() + b0 + bn);
            std::vector<std::size_t> ys = xs;
            for (auto& s : ys) s += L;

            backbone.zero_grads();
            if (ae && !frozen_mode) ae->zero_grads();

            double batch_total = 0.0;
            if (baseline) {
                TensorF x = batching::gather_blocks_t(obs_t, xs, L);
                TensorF y = batching::gather_blocks_t(obs_t, ys, T);
                TensorF y_hat = backbone.forward_train(x, drop_rng);
                LossResult mse = loss_perceptual(y, y_hat);
                batch_total = mse.value;
                ep_perc += mse.value;
                backbone.backward(mse.grad, false);
            } else {
                TensorF z_x, z_y;
                AutoEncoder::EncodeCache enc_cache;
                if (frozen_mode) {
                    z_x = batching::gather_blocks_t(latent_t, xs, L);
                    z_y = batching::gather_blocks_t(latent_t, ys, T);
                } else {
                    TensorF x_rows = batching::gather_step_rows(data.ds.values, xs, L);
                    z_x = batching::step_rows_to_blocks(ae->encode_rows_cached(x_rows, enc_cache),
                                                        bn, L);
                    TensorF y_rows = batching::gather_step_rows(data.ds.values, ys, T);
                    // Targets are detached: no gradient flows into the
                    // encoder through Z_Y.
                    z_y = batching::step_rows_to_blocks(ae->encode_rows(y_rows), bn, T);
                }

                TensorF z_hat = backbone.forward_train(z_x, drop_rng);

                TensorF y, y_hat, z_hat_rows;
                if (need_perc) {
                    y = batching::gather_blocks_t(obs_t, ys, T);
                    z_hat_rows = batching::blocks_to_step_rows(z_hat);
                    y_hat = batching::step_rows_to_blocks(ae->decode_rows(z_hat_rows), bn, T);
                }
                TotalLossResult total =
                    loss_total(w, z_y, z_hat, need_perc ? &y : nullptr,
                               need_perc ? &y_hat : nullptr);
                batch_total = total.value;
                ep_pred += total.pred;
                ep_align += total.align;
                ep_perc += total.perc;

                TensorF g = std::move(total.grad_z_hat);
                if (need_perc) {
                    TensorF gy_rows = batching::blocks_to_step_rows(total.grad_y_hat);
                    TensorF gz_rows = ae->decode_backward(z_hat_rows, gy_rows);
                    axpy(g, 1.0, batching::step_rows_to_blocks(gz_rows, bn, T));
                }
                TensorF dzx = backbone.backward(g, train_encoder);
                if (train_encoder) {
                    TensorF dzx_rows = batching::blocks_to_step_rows(dzx);
                    ae->encode_backward(enc_cache, dzx_rows);
                }
            }
            ep_total += batch_total;
            ++n_batches;
            if (!std::isfinite(batch_total))
                throw TrainError(rec.stage + ": non-finite loss at epoch " +
                                 std::to_string(epoch));

            if (cfg.grad_clip > 0.0) clip_grad_norm(bb_params, cfg.grad_clip);
            bb_adam.step(bb_params, lr);
            if (train_encoder) {
                if (cfg.grad_clip > 0.0) clip_grad_norm(enc_params, cfg.grad_clip);
                enc_adam.step(enc_params, cfg.enc_lr);
            }
            if (train_decoder) {
                if (cfg.grad_clip > 0.0) clip_grad_norm(dec_params, cfg.grad_clip);
                dec_adam.step(dec_params, cfg.dec_lr);
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_total = ep_total / static_cast<double>(n_batches);
        log.train_pred = ep_pred / static_cast<double>(n_batches);
        log.train_align = ep_align / static_cast<double>(n_batches);
        log.train_perc = ep_perc / static_cast<double>(n_batches);
        log.val_obs_mse = evaluate(val_starts, nullptr, baseline ? nullptr : &log.val_latent_pred);
        rec.epochs.push_back(log);
        val_history.push_back(log.val_obs_mse);

        if (log.val_obs_mse < best_val) {
            best_val = log.val_obs_mse;
            best_epoch = epoch;
            best_backbone = clone_backbone(backbone);
            if (ae && !frozen_mode) best_ae = *ae;
        }
        if (epoch == half_epoch) maybe_export("050");
        if (early_stop_check(val_history, cfg.patience)) break;
    }

    // Restore the best-validation checkpoint before computing test metrics.
    rec.best_epoch = best_epoch;
    if (best_backbone) copy_backbone_params(*best_backbone, backbone);
    if (best_ae) *ae = *best_ae;

    rec.test.push_back(evaluate_split(cfg, out.model, data, SplitKind::test));

    maybe_export("100");

    if (frozen_mode) {
        const std::uint64_t checksum_after = ae->param_checksum();
        if (checksum_after != checksum_before)
            throw TrainError("stage2: frozen autoencoder parameters changed during training "
                             "(internal invariant violated)");
    }

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace detail

/// Stage 2: latent-space training of the forecasting backbone against the
/// encoded targets, early-stopped on observation-space validation MSE of the
/// decoded forecasts.
inline Stage2Result run_stage2(const TrainConfig& cfg, std::optional<AutoEncoder> ae,
                               const std::string& export_dir = "") {
    detail::ExportHook hook;
    if (cfg.diag.export_embeddings && !export_dir.empty()) {
        hook.enabled = true;
        hook.tap = cfg.diag.tap;
        hook.slice_steps = cfg.diag.slice_steps;
        hook.dir = export_dir;
    }
    return detail::train_forecaster(cfg, std::move(ae), false, hook);
}

/// Baseline arm: the same backbone trained directly on observations with
/// plain MSE, no autoencoder.
inline Stage2Result run_baseline(const TrainConfig& cfg, const std::string& export_dir = "") {
    detail::ExportHook hook;
    if (cfg.diag.export_embeddings && !export_dir.empty()) {
        hook.enabled = true;
        hook.tap = cfg.diag.tap;
        hook.slice_steps = cfg.diag.slice_steps;
        hook.dir = export_dir;
    }
    return detail::train_forecaster(cfg, std::nullopt, true, hook);
}

}  // namespace latentcast
