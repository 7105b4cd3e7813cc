#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "latentcast/errors.hpp"

namespace latentcast {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << ")";
    return os.str();
}

/// Dense row-major tensor of 64-bit floats. The universal numeric carrier:
/// every series block, latent block, parameter and gradient lives in one of
/// these. product(shape) == data.size() always holds.
class TensorF {
public:
    Shape shape;
    std::vector<double> data;

    TensorF() = default;

    explicit TensorF(Shape s) : shape(std::move(s)), data(count(shape), 0.0) {}

    TensorF(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }

    static TensorF zeros(Shape s) { return TensorF(std::move(s)); }

    static TensorF full(Shape s, double v) {
        TensorF t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static std::size_t count(const Shape& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t extent(std::size_t d) const { return shape.at(d); }

    // 2-D element access (row-major).
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    // 3-D element access.
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const TensorF& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const TensorF& a, const TensorF& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
    }
}

/// C[m x n] = A[m x k] * B[k x n]. Fixed (i,k,j) loop order: each output
/// element accumulates in ascending-k order regardless of blocking or
/// thread count, so results are bit-identical across runs. Rows are blocked
/// by four to reuse each B row from registers/cache.
inline void matmul_into(TensorF& c, const TensorF& a, const TensorF& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    if (b.shape[0] != k) {
        throw ShapeError("matmul: inner dimensions " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    c.shape = {m, n};
    c.data.assign(m * n, 0.0);
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
#pragma omp parallel for schedule(static)
    for (long long i0 = 0; i0 < static_cast<long long>(m); i0 += 4) {
        const std::size_t imax = std::min<std::size_t>(static_cast<std::size_t>(i0) + 4, m);
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = pb + p * n;
            for (std::size_t i = static_cast<std::size_t>(i0); i < imax; ++i) {
                const double av = pa[i * k + p];
                double* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

inline TensorF matmul(const TensorF& a, const TensorF& b) {
    TensorF c;
    matmul_into(c, a, b);
    return c;
}

/// C[m x n] = A^T[m x k_rows] ... specifically C = A^T * B where A is [k x m], B is [k x n].
inline void matmul_at_b_into(TensorF& c, const TensorF& a, const TensorF& b) {
    const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
    if (b.shape[0] != k) {
        throw ShapeError("matmul_at_b: inner dimensions " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    c.shape = {m, n};
    c.data.assign(m * n, 0.0);
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    // Row i of C gathers from column i of A; four-row blocks turn the
    // strided column reads into contiguous 4-wide loads.
#pragma omp parallel for schedule(static)
    for (long long i0 = 0; i0 < static_cast<long long>(m); i0 += 4) {
        const std::size_t imax = std::min<std::size_t>(static_cast<std::size_t>(i0) + 4, m);
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = pb + p * n;
            for (std::size_t i = static_cast<std::size_t>(i0); i < imax; ++i) {
                const double av = pa[p * m + i];
                double* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

/// C[m x n] = A[m x k] * B^T where B is [n x k]. B is transposed into
/// scratch so the same row-accumulation kernel applies; per-element
/// accumulation stays in ascending-k order.
inline void matmul_a_bt_into(TensorF& c, const TensorF& a, const TensorF& b) {
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    if (b.shape[1] != k) {
        throw ShapeError("matmul_a_bt: inner dimensions " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    TensorF bt({k, n});
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt.data[p * n + j] = b.data[j * k + p];
    c.shape = {m, n};
    c.data.assign(m * n, 0.0);
    const double* pa = a.data.data();
    const double* pb = bt.data.data();
    double* pc = c.data.data();
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        double* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Elementwise helpers. Left-to-right reduction order keeps sums reproducible.

inline double sum(const TensorF& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s;
}

inline double sq_norm(const TensorF& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
}

inline double dot_flat(const TensorF& a, const TensorF& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline void axpy(TensorF& y, double alpha, const TensorF& x) {
    require_same_shape(y, x, "axpy");
    for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += alpha * x.data[i];
}

inline void scale(TensorF& t, double alpha) {
    for (double& v : t.data) v *= alpha;
}

}  // namespace latentcast
