#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "latentcast/errors.hpp"
#include "latentcast/nn.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

/// Per-parameter Adam moments. v stays elementwise non-negative by
/// construction; t counts completed steps for the whole group.
struct AdamState {
    TensorF m, v;
};

/// Adam with bias correction. One optimizer instance owns the moment slots
/// for a fixed parameter group; the group is bound at first step and must
/// keep its order afterwards.
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;

    void step(const std::vector<ParamRef>& params, double lr) {
        if (lr <= 0.0) throw ConfigError("adam_step: lr must be positive");
        if (slots_.empty()) {
            slots_.reserve(params.size());
            for (const auto& p : params) slots_.push_back({TensorF(p.value->shape), TensorF(p.value->shape)});
        }
        if (slots_.size() != params.size())
            throw ConfigError("adam_step: parameter group changed size");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t s = 0; s < params.size(); ++s) {
            TensorF& value = *params[s].value;
            const TensorF& grad = *params[s].grad;
            require_same_shape(value, grad, "adam_step");
            AdamState& st = slots_[s];
            for (std::size_t i = 0; i < value.numel(); ++i) {
                const double g = grad.data[i];
                if (!std::isfinite(g))
                    throw TrainError("adam_step: non-finite gradient in parameter '" +
                                     params[s].name + "'");
                st.m.data[i] = beta1 * st.m.data[i] + (1.0 - beta1) * g;
                st.v.data[i] = beta2 * st.v.data[i] + (1.0 - beta2) * g * g;
                const double mhat = st.m.data[i] / bc1;
                const double vhat = st.v.data[i] / bc2;
                value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

private:
    std::vector<AdamState> slots_;
};

/// Cosine annealing over epochs: base_lr at epoch 0, decaying along half a
/// cosine period so lr(total-1) = base_lr*(1+cos(pi*(total-1)/total))/2.
inline double cosine_lr(double base_lr, int epoch, int total_epochs) {
    if (epoch < 0 || epoch >= total_epochs)
        throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + ")");
    const double pi = 3.141592653589793;
    return base_lr * (1.0 + std::cos(pi * static_cast<double>(epoch) /
                                     static_cast<double>(total_epochs))) / 2.0;
}

/// Early-stopping rule shared by both training stages: stop once the best
/// validation value lies more than `patience` entries in the past. Ties
/// resolve to the earliest occurrence.
inline bool early_stop_check(const std::vector<double>& history, int patience) {
    if (history.empty()) throw ConfigError("early_stop_check: history is empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i] < history[best]) best = i;
    return static_cast<long long>(history.size() - 1 - best) > patience;
}

/// Global-norm gradient clip over a parameter group. Returns the pre-clip norm.
inline double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
    double total = 0.0;
    for (const auto& p : params) total += sq_norm(*p.grad);
    const double norm = std::sqrt(total);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& p : params) scale(*p.grad, s);
    }
    return norm;
}

}  // namespace latentcast
