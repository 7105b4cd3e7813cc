#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latentcast/errors.hpp"
#include "latentcast/nn.hpp"
#include "latentcast/rng.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

enum class BackboneKind { dlinear, mlp };

inline std::string backbone_kind_name(BackboneKind k) {
    return k == BackboneKind::dlinear ? "dlinear" : "mlp";
}

inline BackboneKind backbone_kind_from(const std::string& s) {
    if (s == "dlinear") return BackboneKind::dlinear;
    if (s == "mlp") return BackboneKind::mlp;
    throw ConfigError("unknown backbone kind '" + s + "' (expected dlinear or mlp)");
}

/// Shape and hyperparameters of a latent forecaster. Temporal weights are
/// shared across the D latent dimensions (channel independence), so the
/// same spec works for any D, including D == C in the baseline arm.
struct BackboneSpec {
    BackboneKind kind = BackboneKind::dlinear;
    std::size_t lookback = 720;   // L
    std::size_t horizon = 96;     // T
    std::size_t channels = 32;    // D (or C in the baseline arm)
    std::size_t kernel = 25;      // dlinear moving-average kernel, odd
    std::size_t hidden = 64;      // mlp hidden width (d_ff)
    double dropout = 0.1;         // mlp only

    void validate() const {
        if (lookback == 0 || horizon == 0 || channels == 0)
            throw ConfigError("backbone: lookback, horizon and channels must be positive");
        if (kind == BackboneKind::dlinear) {
            if (kernel % 2 == 0) throw ConfigError("dlinear: kernel must be odd");
            if (kernel < 1 || kernel > lookback)
                throw ConfigError("dlinear: kernel must be in [1, lookback]");
        }
        if (kind == BackboneKind::mlp && hidden == 0)
            throw ConfigError("mlp: hidden width must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("backbone: dropout must be in [0,1)");
    }
};

/// Centered moving average with replicate padding, one row at a time.
/// Prefix sums keep it O(L); each output is a fixed-order combination.
inline void moving_average_row(const double* x, double* out, std::size_t L, std::size_t k) {
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(L);
    const double inv_k = 1.0 / static_cast<double>(k);
    // prefix[i] = x[0] + ... + x[i-1]
    std::vector<double> prefix(L + 1);
    prefix[0] = 0.0;
    for (std::size_t i = 0; i < L; ++i) prefix[i + 1] = prefix[i] + x[i];
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t lo = t - half;
        const std::ptrdiff_t hi = t + half;  // inclusive
        const std::ptrdiff_t clo = lo < 0 ? 0 : lo;
        const std::ptrdiff_t chi = hi >= n ? n - 1 : hi;
        double acc = prefix[chi + 1] - prefix[clo];
        if (lo < 0) acc += static_cast<double>(-lo) * x[0];
        if (hi >= n) acc += static_cast<double>(hi - n + 1) * x[n - 1];
        out[t] = acc * inv_k;
    }
}

/// Adjoint of moving_average_row: scatters upstream back to the clamped
/// source indices.
inline void moving_average_row_adjoint(const double* up, double* out, std::size_t L,
                                       std::size_t k) {
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < L; ++i) out[i] = 0.0;
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(L); ++t) {
        const double v = up[t] * inv_k;
        for (std::ptrdiff_t o = -half; o <= half; ++o) {
            std::ptrdiff_t s = t + o;
            if (s < 0) s = 0;
            if (s >= static_cast<std::ptrdiff_t>(L)) s = static_cast<std::ptrdiff_t>(L) - 1;
            out[s] += v;
        }
    }
}

/// Trend/seasonal split of a (D x L) block: trend is the centered moving
/// average with replicate padding, seasonal the remainder. Trend + seasonal
/// reproduces the input exactly.
inline std::pair<TensorF, TensorF> dlinear_decompose(const TensorF& series, std::size_t kernel) {
    if (series.rank() != 2)
        throw ShapeError("dlinear_decompose: need (D x L) block, got " + shape_str(series.shape));
    if (kernel % 2 == 0) throw ConfigError("dlinear_decompose: kernel must be odd");
    const std::size_t D = series.shape[0], L = series.shape[1];
    if (kernel < 1 || kernel > L) throw ConfigError("dlinear_decompose: kernel must be in [1, L]");
    TensorF trend({D, L}), seasonal({D, L});
    for (std::size_t d = 0; d < D; ++d) {
        moving_average_row(series.data.data() + d * L, trend.data.data() + d * L, L, kernel);
        for (std::size_t t = 0; t < L; ++t) seasonal.at(d, t) = series.at(d, t) - trend.at(d, t);
    }
    return {std::move(trend), std::move(seasonal)};
}

/// Latent forecaster interface: (batch x D x L) -> (batch x D x T).
/// Implementations cache the last training forward internally; backward must
/// follow the matching forward (single-writer training contract).
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual const BackboneSpec& spec() const = 0;
    virtual void init(Rng& rng) = 0;
    virtual void zero_grads() = 0;
    virtual void collect_params(std::vector<ParamRef>& out) = 0;

    /// Eval-mode forward (deterministic, no dropout, no cache).
    virtual TensorF forward(const TensorF& z_x) const = 0;

    /// Training forward; caches intermediates for backward.
    virtual TensorF forward_train(const TensorF& z_x, Rng& dropout_rng) = 0;

    /// Accumulates parameter grads. Returns grad w.r.t. the cached forward's
    /// input when need_input_grad is set, otherwise an empty tensor (the
    /// input-gradient matmuls are skipped when nothing consumes them).
    virtual TensorF backward(const TensorF& upstream, bool need_input_grad = true) = 0;

    /// Per-future-step readout embedding at the given window input: for step
    /// t, the output-layer row t scaled by its input activations, averaged
    /// over channels. This is the model's internal per-step representation
    /// used by the diagnostics tap.
    virtual TensorF step_embeddings(const TensorF& z_x_single) const = 0;
};

namespace detail {

inline void check_input(const BackboneSpec& s, const TensorF& z) {
    if (z.rank() != 3 || z.shape[1] != s.channels || z.shape[2] != s.lookback)
        throw ShapeError("backbone: input " + shape_str(z.shape) + " does not match (batch x " +
                         std::to_string(s.channels) + " x " + std::to_string(s.lookback) + ")");
}

/// (B x D x L) viewed as (B*D x L) rows; shapes share the same flat layout.
inline TensorF as_rows(const TensorF& t) {
    return TensorF({t.shape[0] * t.shape[1], t.shape[2]}, t.data);
}

inline TensorF as_blocks(TensorF rows, std::size_t batch, std::size_t channels) {
    return TensorF({batch, channels, rows.shape[1]}, std::move(rows.data));
}

}  // namespace detail

/// Decomposition-linear forecaster: two direct L -> T linear maps, one on
/// the trend, one on the seasonal remainder, shared across channels.
class DLinearBackbone final : public Backbone {
public:
    explicit DLinearBackbone(BackboneSpec s) : spec_(std::move(s)) {
        spec_.kind = BackboneKind::dlinear;
        spec_.validate();
        seasonal_ = LinearLayer(spec_.lookback, spec_.horizon);
        trend_ = LinearLayer(spec_.lookback, spec_.horizon);
    }

    const BackboneSpec& spec() const override { return spec_; }

    void init(Rng& rng) override {
        seasonal_.init(rng);
        trend_.init(rng);
    }

    void zero_grads() override {
        seasonal_.zero_grads();
        trend_.zero_grads();
    }

    void collect_params(std::vector<ParamRef>& out) override {
        seasonal_.collect_params(out, "backbone.seasonal");
        trend_.collect_params(out, "backbone.trend");
    }

    TensorF forward(const TensorF& z_x) const override {
        detail::check_input(spec_, z_x);
        TensorF rows = detail::as_rows(z_x);
        TensorF trend_rows, seas_rows;
        decompose_rows(rows, trend_rows, seas_rows);
        TensorF out = seasonal_.forward(seas_rows);
        TensorF out_t = trend_.forward(trend_rows);
        axpy(out, 1.0, out_t);
        return detail::as_blocks(std::move(out), z_x.shape[0], spec_.channels);
    }

    TensorF forward_train(const TensorF& z_x, Rng&) override {
        detail::check_input(spec_, z_x);
        batch_ = z_x.shape[0];
        TensorF rows = detail::as_rows(z_x);
        decompose_rows(rows, trend_rows_, seas_rows_);
        TensorF out = seasonal_.forward(seas_rows_);
        TensorF out_t = trend_.forward(trend_rows_);
        axpy(out, 1.0, out_t);
        return detail::as_blocks(std::move(out), batch_, spec_.channels);
    }

    TensorF backward(const TensorF& upstream, bool need_input_grad = true) override {
        TensorF up_rows = detail::as_rows(upstream);
        if (!need_input_grad) {
            seasonal_.backward_params(seas_rows_, up_rows);
            trend_.backward_params(trend_rows_, up_rows);
            return {};
        }
        TensorF dseas = seasonal_.backward(seas_rows_, up_rows);
        TensorF dtrend = trend_.backward(trend_rows_, up_rows);
        // x = trend + seasonal with trend = MA(x): dx = dseas + MA^T(dtrend - dseas)
        const std::size_t L = spec_.lookback;
        TensorF dx({dseas.shape[0], L});
        std::vector<double> tmp(L);
        for (std::size_t r = 0; r < dseas.shape[0]; ++r) {
            double* diff = dtrend.data.data() + r * L;
            const double* ds = dseas.data.data() + r * L;
            for (std::size_t t = 0; t < L; ++t) tmp[t] = diff[t] - ds[t];
            moving_average_row_adjoint(tmp.data(), dx.data.data() + r * L, L, spec_.kernel);
            for (std::size_t t = 0; t < L; ++t) dx.data[r * L + t] += ds[t];
        }
        return detail::as_blocks(std::move(dx), batch_, spec_.channels);
    }

    TensorF step_embeddings(const TensorF& z_x_single) const override {
        if (z_x_single.rank() != 2)
            throw ShapeError("step_embeddings: need (D x L) block");
        const std::size_t D = z_x_single.shape[0], L = spec_.lookback, T = spec_.horizon;
        auto [trend, seasonal] = dlinear_decompose(z_x_single, spec_.kernel);
        // e_t = [W_seas[t,:] .* mean_d(seasonal), W_trend[t,:] .* mean_d(trend)]
        std::vector<double> ms(L, 0.0), mt(L, 0.0);
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < L; ++t) {
                ms[t] += seasonal.at(d, t);
                mt[t] += trend.at(d, t);
            }
        for (std::size_t t = 0; t < L; ++t) {
            ms[t] /= static_cast<double>(D);
            mt[t] /= static_cast<double>(D);
        }
        TensorF emb({T, 2 * L});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < L; ++j) {
                emb.at(t, j) = seasonal_.weight.at(t, j) * ms[j];
                emb.at(t, L + j) = trend_.weight.at(t, j) * mt[j];
            }
        return emb;
    }

private:
    void decompose_rows(const TensorF& rows, TensorF& trend_rows, TensorF& seas_rows) const {
        const std::size_t n = rows.shape[0], L = spec_.lookback;
        trend_rows = TensorF({n, L});
        seas_rows = TensorF({n, L});
#pragma omp parallel for schedule(static)
        for (long long rr = 0; rr < static_cast<long long>(n); ++rr) {
            const std::size_t r = static_cast<std::size_t>(rr);
            moving_average_row(rows.data.data() + r * L, trend_rows.data.data() + r * L, L,
                               spec_.kernel);
            for (std::size_t t = 0; t < L; ++t)
                seas_rows.data[r * L + t] = rows.data[r * L + t] - trend_rows.data[r * L + t];
        }
    }

    BackboneSpec spec_;
    LinearLayer seasonal_, trend_;
    // training cache
    std::size_t batch_ = 0;
    TensorF trend_rows_, seas_rows_;
};

/// Two-layer temporal MLP per channel: L -> hidden -> T with GELU and
/// dropout, weights shared across channels.
class MlpBackbone final : public Backbone {
public:
    explicit MlpBackbone(BackboneSpec s) : spec_(std::move(s)) {
        spec_.kind = BackboneKind::mlp;
        spec_.validate();
        lin1_ = LinearLayer(spec_.lookback, spec_.hidden);
        lin2_ = LinearLayer(spec_.hidden, spec_.horizon);
    }

    const BackboneSpec& spec() const override { return spec_; }

    void init(Rng& rng) override {
        lin1_.init(rng);
        lin2_.init(rng);
    }

    void zero_grads() override {
        lin1_.zero_grads();
        lin2_.zero_grads();
    }

    void collect_params(std::vector<ParamRef>& out) override {
        lin1_.collect_params(out, "backbone.lin1");
        lin2_.collect_params(out, "backbone.lin2");
    }

    TensorF forward(const TensorF& z_x) const override {
        detail::check_input(spec_, z_x);
        TensorF rows = detail::as_rows(z_x);
        TensorF h = activation_forward(Activation::gelu, lin1_.forward(rows));
        TensorF out = lin2_.forward(h);
        return detail::as_blocks(std::move(out), z_x.shape[0], spec_.channels);
    }

    TensorF forward_train(const TensorF& z_x, Rng& dropout_rng) override {
        detail::check_input(spec_, z_x);
        batch_ = z_x.shape[0];
        input_rows_ = detail::as_rows(z_x);
        a1_ = lin1_.forward(input_rows_);
        g1_ = activation_forward(Activation::gelu, a1_);
        gd_ = dropout_forward(g1_, spec_.dropout, dropout_rng, mask_);
        TensorF out = lin2_.forward(gd_);
        return detail::as_blocks(std::move(out), batch_, spec_.channels);
    }

    TensorF backward(const TensorF& upstream, bool need_input_grad = true) override {
        TensorF up_rows = detail::as_rows(upstream);
        TensorF dgd = lin2_.backward(gd_, up_rows);
        TensorF dg1 = dropout_backward(dgd, mask_);
        TensorF da1 = activation_backward(Activation::gelu, a1_, dg1);
        if (!need_input_grad) {
            lin1_.backward_params(input_rows_, da1);
            return {};
        }
        TensorF dx = lin1_.backward(input_rows_, da1);
        return detail::as_blocks(std::move(dx), batch_, spec_.channels);
    }

    TensorF step_embeddings(const TensorF& z_x_single) const override {
        if (z_x_single.rank() != 2)
            throw ShapeError("step_embeddings: need (D x L) block");
        const std::size_t D = z_x_single.shape[0], H = spec_.hidden, T = spec_.horizon;
        // Mean hidden activation over channels, then e_t = W2[t,:] .* h.
        TensorF rows({D, spec_.lookback}, z_x_single.data);
        TensorF h = activation_forward(Activation::gelu, lin1_.forward(rows));
        std::vector<double> mh(H, 0.0);
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t j = 0; j < H; ++j) mh[j] += h.at(d, j);
        for (std::size_t j = 0; j < H; ++j) mh[j] /= static_cast<double>(D);
        TensorF emb({T, H});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < H; ++j) emb.at(t, j) = lin2_.weight.at(t, j) * mh[j];
        return emb;
    }

private:
    BackboneSpec spec_;
    LinearLayer lin1_, lin2_;
    // training cache
    std::size_t batch_ = 0;
    TensorF input_rows_, a1_, g1_, gd_;
    DropoutMask mask_;
};

inline std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec) {
    spec.validate();
    if (spec.kind == BackboneKind::dlinear) return std::make_unique<DLinearBackbone>(spec);
    return std::make_unique<MlpBackbone>(spec);
}

/// forecast_latent: eval-mode latent forecast (batch x D x L) -> (batch x D x T).
inline TensorF forecast_latent(const Backbone& backbone, const TensorF& z_x) {
    return backbone.forward(z_x);
}

}  // namespace latentcast
