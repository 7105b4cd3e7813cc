#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "latentcast/rng.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

/// Named view of one trainable tensor and its gradient accumulator.
/// Optimizers operate on lists of these; frozen parameters are simply
/// excluded from the list handed to the optimizer.
struct ParamRef {
    TensorF* value;
    TensorF* grad;
    std::string name;
};

/// Fully connected layer, weight is (out x in), bias is (out).
/// Gradients accumulate additively until zero_grads().
class LinearLayer {
public:
    TensorF weight, bias;
    TensorF weight_grad, bias_grad;

    LinearLayer() = default;

    LinearLayer(std::size_t in_dim, std::size_t out_dim)
        : weight({out_dim, in_dim}),
          bias({out_dim}),
          weight_grad({out_dim, in_dim}),
          bias_grad({out_dim}) {}

    std::size_t in_dim() const { return weight.shape[1]; }
    std::size_t out_dim() const { return weight.shape[0]; }

    /// Uniform +-1/sqrt(fan_in) for weight and bias.
    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
        for (double& w : weight.data) w = rng.uniform(-bound, bound);
        for (double& b : bias.data) b = rng.uniform(-bound, bound);
    }

    void zero_grads() {
        weight_grad.fill(0.0);
        bias_grad.fill(0.0);
    }

    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
        out.push_back({&weight, &weight_grad, prefix + ".weight"});
        out.push_back({&bias, &bias_grad, prefix + ".bias"});
    }

    /// output[b] = weight * input[b] + bias, input is (batch x in).
    TensorF forward(const TensorF& input) const {
        if (input.rank() != 2 || input.shape[1] != in_dim()) {
            throw ShapeError("linear_forward: input " + shape_str(input.shape) +
                             " does not match weight " + shape_str(weight.shape));
        }
        TensorF out;
        matmul_a_bt_into(out, input, weight);  // (batch x out)
        const std::size_t batch = out.shape[0], o = out.shape[1];
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < o; ++j) out.data[b * o + j] += bias.data[j];
        return out;
    }

    /// Accumulates weight/bias grads, returns grad w.r.t. input.
    /// When accumulate_param_grads is false the signal still flows through
    /// (stop-gradient semantics for frozen stacks).
    TensorF backward(const TensorF& input, const TensorF& upstream,
                     bool accumulate_param_grads = true) {
        if (upstream.rank() != 2 || upstream.shape[1] != out_dim() ||
            upstream.shape[0] != input.shape[0]) {
            throw ShapeError("linear_backward: upstream " + shape_str(upstream.shape) +
                             " does not match output (" + std::to_string(input.shape[0]) +
                             "x" + std::to_string(out_dim()) + ")");
        }
        if (accumulate_param_grads) {
            TensorF wg;
            matmul_at_b_into(wg, upstream, input);  // (out x in)
            axpy(weight_grad, 1.0, wg);
            const std::size_t batch = upstream.shape[0], o = out_dim();
            for (std::size_t j = 0; j < o; ++j) {
                double acc = 0.0;
                for (std::size_t b = 0; b < batch; ++b) acc += upstream.data[b * o + j];
                bias_grad.data[j] += acc;
            }
        }
        TensorF gin;
        matmul_into(gin, upstream, weight);  // (batch x in)
        return gin;
    }

    /// backward without the input-gradient matmul, for the first layer of a
    /// stack when nothing upstream needs the signal.
    void backward_params(const TensorF& input, const TensorF& upstream) {
        TensorF wg;
        matmul_at_b_into(wg, upstream, input);
        axpy(weight_grad, 1.0, wg);
        const std::size_t batch = upstream.shape[0], o = out_dim();
        for (std::size_t j = 0; j < o; ++j) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) acc += upstream.data[b * o + j];
            bias_grad.data[j] += acc;
        }
    }
};

enum class Activation { relu, gelu };

namespace detail {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace detail

inline double gelu_scalar(double x) {
    const double u = detail::kGeluC * (x + detail::kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_scalar(double x) {
    const double u = detail::kGeluC * (x + detail::kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline TensorF activation_forward(Activation kind, const TensorF& x) {
    TensorF y = x;
    if (kind == Activation::relu) {
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    } else {
        for (double& v : y.data) v = gelu_scalar(v);
    }
    return y;
}

/// Grad w.r.t. x given the forward input x and the upstream grad.
inline TensorF activation_backward(Activation kind, const TensorF& x, const TensorF& upstream) {
    require_same_shape(x, upstream, "activation_backward");
    TensorF g = upstream;
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (x.data[i] <= 0.0) g.data[i] = 0.0;
    } else {
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] *= gelu_grad_scalar(x.data[i]);
    }
    return g;
}

/// Inverted dropout. Mask is sampled per call from the supplied rng and kept
/// for the matching backward. rate == 0 or eval mode is the identity.
struct DropoutMask {
    std::vector<double> scale;  // 0 or 1/(1-p) per element
};

inline TensorF dropout_forward(const TensorF& x, double rate, Rng& rng, DropoutMask& mask) {
    TensorF y = x;
    mask.scale.assign(x.numel(), 1.0);
    if (rate <= 0.0) return y;
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        if (rng.next_double() < rate) {
            mask.scale[i] = 0.0;
            y.data[i] = 0.0;
        } else {
            mask.scale[i] = 1.0 / keep;
            y.data[i] *= mask.scale[i];
        }
    }
    return y;
}

inline TensorF dropout_backward(const TensorF& upstream, const DropoutMask& mask) {
    TensorF g = upstream;
    for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] *= mask.scale[i];
    return g;
}

}  // namespace latentcast
