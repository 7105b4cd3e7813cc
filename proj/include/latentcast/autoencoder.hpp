#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "latentcast/data.hpp"
#include "latentcast/errors.hpp"
#include "latentcast/nn.hpp"
#include "latentcast/optim.hpp"
#include "latentcast/rng.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

/// (C x L) block -> (L x C) rows and back.
inline TensorF transpose2d(const TensorF& t) {
    if (t.rank() != 2) throw ShapeError("transpose2d: need rank-2 tensor, got " + shape_str(t.shape));
    TensorF out({t.shape[1], t.shape[0]});
    for (std::size_t i = 0; i < t.shape[0]; ++i)
        for (std::size_t j = 0; j < t.shape[1]; ++j) out.at(j, i) = t.at(i, j);
    return out;
}

/// Point-wise expanding AutoEncoder: encoder C -> D -> D (GELU between,
/// dropout during pretraining only), decoder D -> C (single linear map).
/// Feature expansion D > C is enforced at construction. Once frozen, the
/// parameters are never handed to an optimizer again; encode/decode stay
/// usable and deterministic.
class AutoEncoder {
public:
    std::size_t in_dim = 0;      // C
    std::size_t latent_dim = 0;  // D
    LinearLayer enc1, enc2, dec;
    bool frozen = false;
    double dropout = 0.1;  // active in pretraining forward only

    AutoEncoder() = default;

    AutoEncoder(std::size_t C, std::size_t D)
        : in_dim(C), latent_dim(D), enc1(C, D), enc2(D, D), dec(D, C) {
        if (D <= C)
            throw ConfigError("autoencoder: latent dimension " + std::to_string(D) +
                              " must exceed input dimension " + std::to_string(C));
    }

    void init(Rng& rng) {
        enc1.init(rng);
        enc2.init(rng);
        dec.init(rng);
    }

    void zero_grads() {
        enc1.zero_grads();
        enc2.zero_grads();
        dec.zero_grads();
    }

    void collect_encoder_params(std::vector<ParamRef>& out) {
        enc1.collect_params(out, "ae.enc1");
        enc2.collect_params(out, "ae.enc2");
    }

    void collect_decoder_params(std::vector<ParamRef>& out) {
        dec.collect_params(out, "ae.dec");
    }

    void collect_params(std::vector<ParamRef>& out) {
        collect_encoder_params(out);
        collect_decoder_params(out);
    }

    /// FNV-1a over all parameter bytes; used by the freeze-safety guard.
    std::uint64_t param_checksum() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&h](const TensorF& t) {
            for (double v : t.data) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                for (int i = 0; i < 8; ++i) {
                    h ^= (bits >> (8 * i)) & 0xffULL;
                    h *= 1099511628211ULL;
                }
            }
        };
        mix(enc1.weight);
        mix(enc1.bias);
        mix(enc2.weight);
        mix(enc2.bias);
        mix(dec.weight);
        mix(dec.bias);
        return h;
    }

    // ---- eval-mode point-wise maps over (n x C) / (n x D) rows ----

    TensorF encode_rows(const TensorF& rows) const {
        TensorF a1 = enc1.forward(rows);
        TensorF g1 = activation_forward(Activation::gelu, a1);
        return enc2.forward(g1);
    }

    TensorF decode_rows(const TensorF& rows) const { return dec.forward(rows); }

    /// encode for a single observation vector (C) or a block (C x L),
    /// applied independently per time step.
    TensorF encode(const TensorF& x) const {
        if (x.rank() == 1) {
            TensorF rows({1, x.shape[0]}, x.data);
            TensorF z = encode_rows(rows);
            return TensorF({latent_dim}, std::move(z.data));
        }
        if (x.rank() == 2) return transpose2d(encode_rows(transpose2d(x)));
        throw ShapeError("encode: expected rank 1 or 2, got " + shape_str(x.shape));
    }

    TensorF decode(const TensorF& z) const {
        if (z.rank() == 1) {
            TensorF rows({1, z.shape[0]}, z.data);
            TensorF x = decode_rows(rows);
            return TensorF({in_dim}, std::move(x.data));
        }
        if (z.rank() == 2) return transpose2d(decode_rows(transpose2d(z)));
        throw ShapeError("decode: expected rank 1 or 2, got " + shape_str(z.shape));
    }

    // ---- cached forward/backward for training paths ----

    struct EncodeCache {
        TensorF input, a1, g1;
    };

    TensorF encode_rows_cached(const TensorF& rows, EncodeCache& cache) const {
        cache.input = rows;
        cache.a1 = enc1.forward(rows);
        cache.g1 = activation_forward(Activation::gelu, cache.a1);
        return enc2.forward(cache.g1);
    }

    /// Backward through the encoder; accumulates parameter grads unless the
    /// AE is frozen. Returns grad w.r.t. the input rows.
    TensorF encode_backward(const EncodeCache& cache, const TensorF& upstream) {
        const bool acc = !frozen;
        TensorF dg1 = enc2.backward(cache.g1, upstream, acc);
        TensorF da1 = activation_backward(Activation::gelu, cache.a1, dg1);
        return enc1.backward(cache.input, da1, acc);
    }

    /// Backward through the decoder given its forward input rows. Gradients
    /// flow through regardless of freezing; parameter grads accumulate only
    /// when unfrozen.
    TensorF decode_backward(const TensorF& z_rows, const TensorF& upstream) {
        return dec.backward(z_rows, upstream, !frozen);
    }

    struct PretrainCache {
        TensorF input, a1, g1, gd, z;
        DropoutMask mask;
    };

    /// Pretraining forward with dropout between encoder layers. Returns the
    /// reconstruction rows.
    TensorF pretrain_forward(const TensorF& rows, Rng& rng, PretrainCache& cache) const {
        cache.input = rows;
        cache.a1 = enc1.forward(rows);
        cache.g1 = activation_forward(Activation::gelu, cache.a1);
        cache.gd = dropout_forward(cache.g1, dropout, rng, cache.mask);
        cache.z = enc2.forward(cache.gd);
        return dec.forward(cache.z);
    }

    void pretrain_backward(const PretrainCache& cache, const TensorF& upstream_recon) {
        TensorF dz = dec.backward(cache.z, upstream_recon);
        TensorF dgd = enc2.backward(cache.gd, dz);
        TensorF dg1 = dropout_backward(dgd, cache.mask);
        TensorF da1 = activation_backward(Activation::gelu, cache.a1, dg1);
        enc1.backward(cache.input, da1);
    }
};

inline void freeze(AutoEncoder& ae) { ae.frozen = true; }

/// Mean absolute error over all elements; the reconstruction-loss convention
/// (per-element mean, so the value is size independent).
inline double mae_loss(const TensorF& x, const TensorF& recon) {
    require_same_shape(x, recon, "mae_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += std::abs(recon.data[i] - x.data[i]);
    return acc / static_cast<double>(x.numel());
}

/// Reconstruction loss of the AE on a row block.
inline double reconstruction_loss(const AutoEncoder& ae, const TensorF& rows) {
    return mae_loss(rows, ae.decode_rows(ae.encode_rows(rows)));
}

struct AePretrainOptions {
    std::size_t chunk_len = 24;  // consecutive time steps per training sample
    std::size_t stride = 1;      // sliding-window stride over the train view
    std::size_t batch_size = 256;
    double lr = 3e-4;
    int epochs = 100;
    int patience = 5;
    std::uint64_t seed = 1;
    bool cosine_schedule = true;
};

struct AePretrainResult {
    std::vector<double> train_curve, val_curve;
    int best_epoch = -1;
    double best_val = 0.0;
    int epochs_run = 0;
};

namespace detail {

inline TensorF gather_rows(const SeriesView& view, const std::vector<std::size_t>& starts,
                           std::size_t chunk_len) {
    const std::size_t C = view.ds->num_channels();
    TensorF rows({starts.size() * chunk_len, C});
    std::size_t r = 0;
    for (std::size_t s : starts)
        for (std::size_t t = 0; t < chunk_len; ++t, ++r)
            for (std::size_t c = 0; c < C; ++c) rows.at(r, c) = view.value(s + t, c);
    return rows;
}

}  // namespace detail

/// Stage-1 pretraining: minimize the per-element mean absolute
/// reconstruction error with Adam over chunked time-step batches. Keeps the
/// best-validation parameters.
inline AePretrainResult pretrain(AutoEncoder& ae, const SeriesView& train, const SeriesView& val,
                                 const AePretrainOptions& opt) {
    if (ae.frozen) throw ConfigError("pretrain: autoencoder is frozen");
    if (train.length < opt.chunk_len) throw DataError("pretrain: train view shorter than chunk");

    std::vector<std::size_t> chunk_starts;
    for (std::size_t s = 0; s + opt.chunk_len <= train.length; s += opt.stride)
        chunk_starts.push_back(s);

    Adam adam;
    std::vector<ParamRef> params;
    ae.collect_params(params);

    AePretrainResult res;
    AutoEncoder best = ae;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    // One eval pass over a view in fixed order.
    auto eval_rec = [&](const SeriesView& v) {
        const std::size_t rows_per = opt.batch_size * opt.chunk_len;
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t off = 0; off < v.length; off += rows_per) {
            const std::size_t len = std::min(rows_per, v.length - off);
            SeriesView sub{v.ds, v.offset + off, len};
            TensorF rows = detail::gather_rows(sub, {0}, len);
            TensorF recon = ae.decode_rows(ae.encode_rows(rows));
            for (std::size_t i = 0; i < rows.numel(); ++i)
                acc += std::abs(recon.data[i] - rows.data[i]);
            count += rows.numel();
        }
        return acc / static_cast<double>(count);
    };

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng shuffle_rng(Rng::derive(opt.seed, 0xae000000ULL + static_cast<std::uint64_t>(epoch)));
        Rng drop_rng(Rng::derive(opt.seed, 0xaed00000ULL + static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order = chunk_starts;
        shuffle_rng.shuffle(order);

        const double lr = opt.cosine_schedule ? cosine_lr(opt.lr, epoch, opt.epochs) : opt.lr;

        double train_acc = 0.0;
        std::size_t train_count = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch_size) {
            const std::size_t bn = std::min(opt.batch_size, order.size() - b0);
            std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b0 + bn);
            TensorF rows = detail::gather_rows(train, batch, opt.chunk_len);

            AutoEncoder::PretrainCache cache;
            TensorF recon = ae.pretrain_forward(rows, drop_rng, cache);

            const double inv_n = 1.0 / static_cast<double>(rows.numel());
            TensorF drecon(recon.shape);
            double loss = 0.0;
            for (std::size_t i = 0; i < rows.numel(); ++i) {
                const double d = recon.data[i] - rows.data[i];
                loss += std::abs(d);
                drecon.data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
            }
            loss *= inv_n;
            if (!std::isfinite(loss))
                throw TrainError("pretrain: non-finite reconstruction loss at epoch " +
                                 std::to_string(epoch));
            train_acc += loss * static_cast<double>(rows.numel());
            train_count += rows.numel();

            ae.zero_grads();
            ae.pretrain_backward(cache, drecon);
            adam.step(params, lr);
        }

        res.train_curve.push_back(train_acc / static_cast<double>(train_count));
        const double val_loss = val.length > 0 ? eval_rec(val) : res.train_curve.back();
        res.val_curve.push_back(val_loss);
        res.epochs_run = epoch + 1;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best = ae;
        }
        if (early_stop_check(res.val_curve, opt.patience)) break;
    }

    ae = best;
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    return res;
}

}  // namespace latentcast
