#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "latentcast/backbone.hpp"
#include "latentcast/data.hpp"
#include "latentcast/errors.hpp"
#include "latentcast/losses.hpp"

namespace latentcast {

enum class AeMode { frozen_pretrained, finetune, scratch };

inline std::string ae_mode_name(AeMode m) {
    switch (m) {
        case AeMode::frozen_pretrained: return "frozen_pretrained";
        case AeMode::finetune: return "finetune";
        case AeMode::scratch: return "scratch";
    }
    return "?";
}

inline AeMode ae_mode_from(const std::string& s) {
    if (s == "frozen_pretrained") return AeMode::frozen_pretrained;
    if (s == "finetune") return AeMode::finetune;
    if (s == "scratch") return AeMode::scratch;
    throw ConfigError("unknown ae mode '" + s +
                      "' (expected frozen_pretrained, finetune or scratch)");
}

struct DiagnosticsConfig {
    bool export_embeddings = false;
    std::string tap = "decoder_pre";  // or backbone_hidden
    std::size_t slice_steps = 240;
};

/// Full hyperparameter record for one run. Defaults follow the benchmark
/// recipe; dataset-specific dimensions and rates are filled in from the
/// registry below when the config file leaves them out.
struct TrainConfig {
    // data
    std::string dataset;
    std::string data_path;
    std::optional<std::array<double, 3>> split_ratios;

    // shape
    std::size_t lookback = 720;  // L
    std::size_t horizon = 96;    // T
    std::size_t latent_dim = 0;  // D (d_model)
    std::size_t hidden = 0;      // d_ff

    // optimization
    std::size_t batch_size = 0;
    double lr = 0.0;
    int epochs = 100;
    int patience = 5;
    std::string scheduler = "cosine";
    double grad_clip = 5.0;  // 0 disables
    std::uint64_t seed = 0;
    bool seed_set = false;

    // losses
    LossWeights weights;

    // autoencoder
    AeMode ae_mode = AeMode::frozen_pretrained;
    double enc_lr = 0.0;  // finetune/scratch encoder learning rate
    double dec_lr = 0.0;  // finetune/scratch decoder learning rate
    double ae_dropout = 0.1;
    std::size_t ae_chunk_len = 24;

    // backbone
    BackboneKind backbone_kind = BackboneKind::dlinear;
    std::size_t kernel = 25;
    double backbone_dropout = 0.1;

    DiagnosticsConfig diag;

    void validate() const {
        if (dataset.empty()) throw ConfigError("config: data.dataset is required");
        if (lookback == 0 || horizon == 0)
            throw ConfigError("config: lookback and horizon must be positive");
        if (latent_dim == 0) throw ConfigError("config: autoencoder.latent_dim must be positive");
        if (hidden == 0) throw ConfigError("config: backbone.hidden must be positive");
        if (batch_size == 0) throw ConfigError("config: training.batch_size must be positive");
        if (lr <= 0.0) throw ConfigError("config: training.lr must be positive");
        if (epochs < 0) throw ConfigError("config: training.epochs must be non-negative");
        if (patience < 0) throw ConfigError("config: training.patience must be non-negative");
        if (scheduler != "cosine" && scheduler != "constant")
            throw ConfigError("config: scheduler '" + scheduler + "' (expected cosine or constant)");
        if (grad_clip < 0.0) throw ConfigError("config: training.grad_clip must be non-negative");
        if (ae_dropout < 0.0 || ae_dropout >= 1.0)
            throw ConfigError("config: autoencoder.dropout must be in [0,1)");
        if (backbone_dropout < 0.0 || backbone_dropout >= 1.0)
            throw ConfigError("config: backbone.dropout must be in [0,1)");
        if (ae_chunk_len == 0) throw ConfigError("config: autoencoder.chunk_len must be positive");
        if (enc_lr < 0.0 || dec_lr < 0.0)
            throw ConfigError("config: autoencoder learning rates must be non-negative");
        if (diag.tap != "decoder_pre" && diag.tap != "backbone_hidden")
            throw ConfigError("config: diagnostics.tap '" + diag.tap +
                              "' (expected decoder_pre or backbone_hidden)");
        weights.validate();
        backbone_spec().validate();
    }

    BackboneSpec backbone_spec(std::size_t channels = 0) const {
        BackboneSpec s;
        s.kind = backbone_kind;
        s.lookback = lookback;
        s.horizon = horizon;
        s.channels = channels == 0 ? latent_dim : channels;
        s.kernel = kernel;
        s.hidden = hidden;
        s.dropout = backbone_dropout;
        return s;
    }
};

/// Per-dataset (d_model, d_ff, batch size, learning rate) defaults.
struct DatasetDefaults {
    std::size_t d_model, d_ff, batch;
    double lr;
};

inline std::optional<DatasetDefaults> dataset_defaults(const std::string& name) {
    static const std::map<std::string, DatasetDefaults> table = {
        {"etth1", {32, 64, 256, 3e-4}},       {"etth2", {64, 128, 256, 3e-4}},
        {"ettm1", {32, 64, 256, 3e-4}},       {"ettm2", {64, 128, 256, 3e-4}},
        {"electricity", {512, 1024, 32, 1e-3}}, {"traffic", {512, 1024, 32, 1e-3}},
    };
    auto it = table.find(detail::lower(name));
    if (it == table.end()) return std::nullopt;
    return it->second;
}

namespace cfg_detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                           const std::string& section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" +
                              (section.empty() ? it.key() : section + "." + it.key()) + "'");
    }
}

template <typename T>
void take(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace cfg_detail

/// Parse a config document. Section and key names are fixed; any unknown key
/// is rejected naming the offender. Dataset defaults fill whatever the file
/// leaves out.
inline TrainConfig parse_config(const nlohmann::json& doc) {
    cfg_detail::reject_unknown(
        doc, {"data", "autoencoder", "backbone", "losses", "training", "diagnostics"}, "");

    TrainConfig c;

    if (doc.contains("data")) {
        const auto& d = doc.at("data");
        cfg_detail::reject_unknown(d, {"dataset", "path", "split_ratios"}, "data");
        cfg_detail::take(d, "dataset", c.dataset);
        cfg_detail::take(d, "path", c.data_path);
        if (d.contains("split_ratios")) {
            auto v = d.at("split_ratios").get<std::vector<double>>();
            if (v.size() != 3)
                throw ConfigError("config: data.split_ratios needs exactly 3 values");
            c.split_ratios = std::array<double, 3>{v[0], v[1], v[2]};
        }
    }

    // Dataset defaults before explicit values so the file wins.
    if (auto def = dataset_defaults(c.dataset)) {
        c.latent_dim = def->d_model;
        c.hidden = def->d_ff;
        c.batch_size = def->batch;
        c.lr = def->lr;
    } else {
        c.latent_dim = 32;
        c.hidden = 64;
        c.batch_size = 256;
        c.lr = 3e-4;
    }

    if (doc.contains("autoencoder")) {
        const auto& a = doc.at("autoencoder");
        cfg_detail::reject_unknown(
            a, {"latent_dim", "dropout", "chunk_len", "mode", "enc_lr", "dec_lr"}, "autoencoder");
        cfg_detail::take(a, "latent_dim", c.latent_dim);
        cfg_detail::take(a, "dropout", c.ae_dropout);
        cfg_detail::take(a, "chunk_len", c.ae_chunk_len);
        if (a.contains("mode")) c.ae_mode = ae_mode_from(a.at("mode").get<std::string>());
        cfg_detail::take(a, "enc_lr", c.enc_lr);
        cfg_detail::take(a, "dec_lr", c.dec_lr);
    }

    if (doc.contains("backbone")) {
        const auto& b = doc.at("backbone");
        cfg_detail::reject_unknown(b, {"kind", "kernel", "hidden", "dropout"}, "backbone");
        if (b.contains("kind")) c.backbone_kind = backbone_kind_from(b.at("kind").get<std::string>());
        cfg_detail::take(b, "kernel", c.kernel);
        cfg_detail::take(b, "hidden", c.hidden);
        cfg_detail::take(b, "dropout", c.backbone_dropout);
    }

    if (doc.contains("losses")) {
        const auto& l = doc.at("losses");
        cfg_detail::reject_unknown(
            l, {"pred_weight", "align_weight", "perceptual_weight", "align_kind", "nce_temperature"},
            "losses");
        cfg_detail::take(l, "pred_weight", c.weights.alpha);
        cfg_detail::take(l, "align_weight", c.weights.beta);
        cfg_detail::take(l, "perceptual_weight", c.weights.perc);
        if (l.contains("align_kind")) {
            const std::string k = l.at("align_kind").get<std::string>();
            if (k == "cosine")
                c.weights.align_kind = AlignKind::cosine;
            else if (k == "infonce")
                c.weights.align_kind = AlignKind::infonce;
            else
                throw ConfigError("config: losses.align_kind '" + k +
                                  "' (expected cosine or infonce)");
        }
        cfg_detail::take(l, "nce_temperature", c.weights.nce_temperature);
    }

    if (doc.contains("training")) {
        const auto& t = doc.at("training");
        cfg_detail::reject_unknown(t,
                                   {"lookback", "horizon", "batch_size", "lr", "epochs",
                                    "patience", "scheduler", "grad_clip", "seed"},
                                   "training");
        cfg_detail::take(t, "lookback", c.lookback);
        cfg_detail::take(t, "horizon", c.horizon);
        cfg_detail::take(t, "batch_size", c.batch_size);
        cfg_detail::take(t, "lr", c.lr);
        cfg_detail::take(t, "epochs", c.epochs);
        cfg_detail::take(t, "patience", c.patience);
        cfg_detail::take(t, "scheduler", c.scheduler);
        cfg_detail::take(t, "grad_clip", c.grad_clip);
        if (t.contains("seed")) {
            c.seed = t.at("seed").get<std::uint64_t>();
            c.seed_set = true;
        }
    }

    if (doc.contains("diagnostics")) {
        const auto& g = doc.at("diagnostics");
        cfg_detail::reject_unknown(g, {"export_embeddings", "tap", "slice_steps"}, "diagnostics");
        cfg_detail::take(g, "export_embeddings", c.diag.export_embeddings);
        cfg_detail::take(g, "tap", c.diag.tap);
        cfg_detail::take(g, "slice_steps", c.diag.slice_steps);
    }

    c.validate();
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': parse error: " + e.what());
    }
    return parse_config(doc);
}

/// Fully resolved snapshot (defaults expanded) for reproducibility.
inline nlohmann::json config_to_json(const TrainConfig& c) {
    nlohmann::json doc;
    doc["data"] = {{"dataset", c.dataset}, {"path", c.data_path}};
    if (c.split_ratios)
        doc["data"]["split_ratios"] = {(*c.split_ratios)[0], (*c.split_ratios)[1],
                                       (*c.split_ratios)[2]};
    doc["autoencoder"] = {{"latent_dim", c.latent_dim}, {"dropout", c.ae_dropout},
                          {"chunk_len", c.ae_chunk_len}, {"mode", ae_mode_name(c.ae_mode)},
                          {"enc_lr", c.enc_lr},          {"dec_lr", c.dec_lr}};
    doc["backbone"] = {{"kind", backbone_kind_name(c.backbone_kind)},
                       {"kernel", c.kernel},
                       {"hidden", c.hidden},
                       {"dropout", c.backbone_dropout}};
    doc["losses"] = {{"pred_weight", c.weights.alpha},
                     {"align_weight", c.weights.beta},
                     {"perceptual_weight", c.weights.perc},
                     {"align_kind", c.weights.align_kind == AlignKind::cosine ? "cosine" : "infonce"},
                     {"nce_temperature", c.weights.nce_temperature}};
    doc["training"] = {{"lookback", c.lookback}, {"horizon", c.horizon},
                       {"batch_size", c.batch_size}, {"lr", c.lr},
                       {"epochs", c.epochs},     {"patience", c.patience},
                       {"scheduler", c.scheduler}, {"grad_clip", c.grad_clip},
                       {"seed", c.seed}};
    doc["diagnostics"] = {{"export_embeddings", c.diag.export_embeddings},
                          {"tap", c.diag.tap},
                          {"slice_steps", c.diag.slice_steps}};
    return doc;
}

}  // namespace latentcast
