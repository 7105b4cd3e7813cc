#pragma once

// Central finite-difference gradient checking, independent of the library's
// backward passes. Used as the oracle for every analytic gradient.

#include <cmath>
#include <functional>
#include <vector>

#include "latentcast/tensor.hpp"

namespace testsupport {

/// Central difference d f / d x_i with step h on a flat parameter vector.
inline std::vector<double> finite_diff_grad(const std::function<double()>& f,
                                            std::vector<double*> params, double h = 1e-5) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = *params[i];
        *params[i] = orig + h;
        const double fp = f();
        *params[i] = orig - h;
        const double fm = f();
        *params[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

inline std::vector<double*> tensor_ptrs(latentcast::TensorF& t) {
    std::vector<double*> out;
    out.reserve(t.numel());
    for (auto& v : t.data) out.push_back(&v);
    return out;
}

/// Largest relative error between analytic and numeric gradients, with an
/// absolute floor for near-zero entries.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

}  // namespace testsupport
