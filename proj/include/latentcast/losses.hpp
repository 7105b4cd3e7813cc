#pragma once

#include <cmath>
#include <vector>

#include "latentcast/errors.hpp"
#include "latentcast/log.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

// Losses accept either a single sample (rank <= 2) or a batch with the
// leading dimension as the batch axis (rank 3). Flattening scope for norms
// and inner products is always the full per-sample block.

namespace detail {

inline std::size_t batch_of(const TensorF& t) { return t.rank() == 3 ? t.shape[0] : 1; }

inline std::size_t sample_numel(const TensorF& t) { return t.numel() / batch_of(t); }

constexpr double kNormFloor = 1e-12;

}  // namespace detail

struct LossResult {
    double value = 0.0;
    TensorF grad;  // w.r.t. the prediction argument
};

/// Squared Frobenius error between target and predicted latent blocks,
/// summed per sample, averaged over the batch.
inline LossResult loss_pred(const TensorF& z_y, const TensorF& z_hat) {
    require_same_shape(z_y, z_hat, "loss_pred");
    const double inv_b = 1.0 / static_cast<double>(detail::batch_of(z_y));
    LossResult r;
    r.grad = TensorF(z_hat.shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < z_y.numel(); ++i) {
        const double d = z_hat.data[i] - z_y.data[i];
        acc += d * d;
        r.grad.data[i] = 2.0 * d * inv_b;
    }
    r.value = acc * inv_b;
    return r;
}

/// Cosine misalignment 1 - <Z, Zhat>_F / (|Z|_F |Zhat|_F) per sample,
/// averaged over the batch. Norms are floored at 1e-12; a both-zero pair
/// contributes loss 1 with zero gradient and a logged warning.
inline LossResult loss_align(const TensorF& z_y, const TensorF& z_hat) {
    require_same_shape(z_y, z_hat, "loss_align");
    const std::size_t B = detail::batch_of(z_y);
    const std::size_t n = detail::sample_numel(z_y);
    const double inv_b = 1.0 / static_cast<double>(B);
    LossResult r;
    r.grad = TensorF(z_hat.shape);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* z = z_y.data.data() + b * n;
        const double* h = z_hat.data.data() + b * n;
        double* g = r.grad.data.data() + b * n;
        double dot = 0.0, zz = 0.0, hh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += z[i] * h[i];
            zz += z[i] * z[i];
            hh += h[i] * h[i];
        }
        const double nz = std::max(std::sqrt(zz), detail::kNormFloor);
        const double nh = std::max(std::sqrt(hh), detail::kNormFloor);
        if (zz == 0.0 && hh == 0.0) {
            log_warn("loss_align: both tensors are zero, returning 1 with zero gradient");
            total += 1.0;
            continue;
        }
        const double s = dot / (nz * nh);
        total += 1.0 - s;
        // d(1-s)/dh = -(z/(nz*nh) - s*h/nh^2)
        const double a = 1.0 / (nz * nh);
        const double c = s / (nh * nh);
        for (std::size_t i = 0; i < n; ++i) g[i] = -(z[i] * a - h[i] * c) * inv_b;
    }
    r.value = total * inv_b;
    return r;
}

struct NceResult {
    double value = 0.0;
    double mi_bound = 0.0;  // log |B| - loss, lower bound estimate
    TensorF grad;           // w.r.t. z_hat batch
};

/// In-batch InfoNCE over flattened cosine scores s(i,j) = cos(zhat_i, z_j):
/// -mean_i log softmax_j(s(i,j)/tau)[j == i]. The leading dimension is
/// always the batch axis (contrastive pairs need one).
inline NceResult loss_align_nce(const TensorF& z_hat, const TensorF& z_y, double temperature) {
    require_same_shape(z_y, z_hat, "loss_align_nce");
    if (z_hat.rank() < 2)
        throw ShapeError("loss_align_nce: need a batched tensor, got " + shape_str(z_hat.shape));
    const std::size_t B = z_hat.shape[0];
    if (B < 2) throw ConfigError("loss_align_nce: batch size must be at least 2");
    if (temperature <= 0.0) throw ConfigError("loss_align_nce: temperature must be positive");
    const std::size_t n = z_hat.numel() / B;

    std::vector<double> norm_h(B), norm_z(B);
    for (std::size_t b = 0; b < B; ++b) {
        double hh = 0.0, zz = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double h = z_hat.data[b * n + i];
            const double z = z_y.data[b * n + i];
            hh += h * h;
            zz += z * z;
        }
        norm_h[b] = std::max(std::sqrt(hh), detail::kNormFloor);
        norm_z[b] = std::max(std::sqrt(zz), detail::kNormFloor);
    }

    std::vector<double> s(B * B);  // s[i*B+j] = cos(zhat_i, z_j)
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                dot += z_hat.data[i * n + k] * z_y.data[j * n + k];
            s[i * B + j] = dot / (norm_h[i] * norm_z[j]);
        }
    }

    NceResult r;
    r.grad = TensorF(z_hat.shape);
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<double> p(B);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double mx = s[i * B];
        for (std::size_t j = 1; j < B; ++j) mx = std::max(mx, s[i * B + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < B; ++j) {
            p[j] = std::exp((s[i * B + j] - mx) / temperature);
            denom += p[j];
        }
        for (std::size_t j = 0; j < B; ++j) p[j] /= denom;
        total += -((s[i * B + i] - mx) / temperature - std::log(denom));

        // dL/ds(i,j) = (p_j - delta_ij)/(B*tau); chain through the cosine.
        const double* hi = z_hat.data.data() + i * n;
        double* gi = r.grad.data.data() + i * n;
        for (std::size_t j = 0; j < B; ++j) {
            const double coeff = (p[j] - (i == j ? 1.0 : 0.0)) * inv_b / temperature;
            if (coeff == 0.0) continue;
            const double* zj = z_y.data.data() + j * n;
            const double a = 1.0 / (norm_h[i] * norm_z[j]);
            const double c = s[i * B + j] / (norm_h[i] * norm_h[i]);
            for (std::size_t k = 0; k < n; ++k) gi[k] += coeff * (zj[k] * a - hi[k] * c);
        }
    }
    r.value = total * inv_b;
    r.mi_bound = std::log(static_cast<double>(B)) - r.value;
    return r;
}

/// Observation-space MSE on decoded forecasts; mean over every element.
/// The returned grad is w.r.t. y_hat and is meant to be pushed back through
/// the decoder by the caller.
inline LossResult loss_perceptual(const TensorF& y, const TensorF& y_hat) {
    require_same_shape(y, y_hat, "loss_perceptual");
    const double inv_n = 1.0 / static_cast<double>(y.numel());
    LossResult r;
    r.grad = TensorF(y_hat.shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double d = y_hat.data[i] - y.data[i];
        acc += d * d;
        r.grad.data[i] = 2.0 * d * inv_n;
    }
    r.value = acc * inv_n;
    return r;
}

enum class AlignKind { cosine, infonce };

/// Loss weights for the combined objective. Defaults alpha=10, beta=15,
/// perceptual disabled.
struct LossWeights {
    double alpha = 10.0;
    double beta = 15.0;
    double perc = 0.0;
    AlignKind align_kind = AlignKind::cosine;
    double nce_temperature = 0.1;

    void validate() const {
        if (alpha < 0.0 || beta < 0.0 || perc < 0.0)
            throw ConfigError("loss weights must be non-negative");
        if (alpha == 0.0 && beta == 0.0 && perc == 0.0)
            throw ConfigError("at least one loss weight must be nonzero");
        if (nce_temperature <= 0.0) throw ConfigError("nce temperature must be positive");
    }
};

struct TotalLossResult {
    double value = 0.0;
    double pred = 0.0;
    double align = 0.0;
    double perc = 0.0;
    TensorF grad_z_hat;
    TensorF grad_y_hat;  // empty unless perceptual weight is nonzero
};

/// alpha*L_Pred + beta*L_Align + perc*L_Perc. The perceptual component needs
/// decoded forecasts; requesting it without them is a config error.
inline TotalLossResult loss_total(const LossWeights& w, const TensorF& z_y, const TensorF& z_hat,
                                  const TensorF* y = nullptr, const TensorF* y_hat = nullptr) {
    w.validate();
    TotalLossResult out;
    out.grad_z_hat = TensorF(z_hat.shape);

    if (w.alpha != 0.0) {
        LossResult p = loss_pred(z_y, z_hat);
        out.pred = p.value;
        axpy(out.grad_z_hat, w.alpha, p.grad);
    }
    if (w.beta != 0.0) {
        if (w.align_kind == AlignKind::cosine) {
            LossResult a = loss_align(z_y, z_hat);
            out.align = a.value;
            axpy(out.grad_z_hat, w.beta, a.grad);
        } else {
            NceResult a = loss_align_nce(z_hat, z_y, w.nce_temperature);
            out.align = a.value;
            axpy(out.grad_z_hat, w.beta, a.grad);
        }
    }
    if (w.perc != 0.0) {
        if (y == nullptr || y_hat == nullptr)
            throw ConfigError("loss_total: perceptual weight is nonzero but no decoded "
                              "forecasts were provided");
        LossResult p = loss_perceptual(*y, *y_hat);
        out.perc = p.value;
        out.grad_y_hat = p.grad;
        scale(out.grad_y_hat, w.perc);
    }
    out.value = w.alpha * out.pred + w.beta * out.align + w.perc * out.perc;
    return out;
}

/// Mean squared error over all elements (standardized scale).
inline double metric_mse(const TensorF& y, const TensorF& y_hat) {
    require_same_shape(y, y_hat, "metric_mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double d = y_hat.data[i] - y.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.numel());
}

/// Mean absolute error over all elements (standardized scale).
inline double metric_mae(const TensorF& y, const TensorF& y_hat) {
    require_same_shape(y, y_hat, "metric_mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += std::abs(y_hat.data[i] - y.data[i]);
    return acc / static_cast<double>(y.numel());
}

}  // namespace latentcast
