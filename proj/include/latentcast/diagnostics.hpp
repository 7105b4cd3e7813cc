#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentcast/errors.hpp"
#include "latentcast/log.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

// ---- FFT ----
// Iterative radix-2 core; arbitrary lengths go through Bluestein's chirp-z
// reformulation, which zero-pads to the next power of two internally and
// returns the exact-length DFT.

namespace fftd {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw ConfigError("fft_radix2: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.141592653589793;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

/// Exact-length DFT of a real signal. Radix-2 directly for powers of two,
/// Bluestein otherwise.
inline std::vector<std::complex<double>> dft_real(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (is_pow2(n)) {
        std::vector<std::complex<double>> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = x[i];
        fft_radix2(a, false);
        return a;
    }
    const double pi = 3.141592653589793;
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<std::complex<double>> a(m), b(m);
    std::vector<std::complex<double>> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // e^{-i*pi*k^2/n}; reduce k^2 mod 2n to keep the angle accurate
        const std::size_t k2 = (static_cast<std::size_t>(k) * k) % (2 * n);
        const double ang = -pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    for (std::size_t i = 0; i < n; ++i) a[i] = x[i] * chirp[i];
    b[0] = {1.0, 0.0};
    for (std::size_t i = 1; i < n; ++i) b[i] = b[m - i] = std::conj(chirp[i]);
    fft_radix2(a, false);
    fft_radix2(b, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_radix2(a, true);
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
    return out;
}

}  // namespace fftd

// ---- Embedding traces ----

/// A per-time-step representation matrix (steps x dims) plus provenance.
/// Sources: raw_observations (the series itself) or backbone_embeddings
/// (a model tap point).
struct EmbeddingTrace {
    std::string source;  // raw_observations | backbone_embeddings
    TensorF matrix;      // steps x dims
    std::vector<std::size_t> step_index;
    // metadata
    std::string model, dataset, progress, tap;

    std::size_t steps() const { return matrix.rank() == 2 ? matrix.shape[0] : 0; }
    std::size_t dims() const { return matrix.rank() == 2 ? matrix.shape[1] : 0; }

    void validate() const {
        if (matrix.rank() != 2) throw DataError("trace: matrix must be (steps x dims)");
        if (step_index.size() != steps())
            throw DataError("trace: step_index length does not match matrix rows");
        for (std::size_t i = 1; i < step_index.size(); ++i)
            if (step_index[i] <= step_index[i - 1])
                throw DataError("trace: step_index must be strictly increasing");
    }
};

/// Mean adjacent-step Euclidean distance normalized by the mean embedding
/// norm. Scale-free: lower means stronger temporal locality. An all-zero
/// trace yields 0 with a warning.
inline double adjacent_distance(const EmbeddingTrace& trace) {
    const std::size_t n = trace.steps(), d = trace.dims();
    if (n < 2) throw DataError("adjacent_distance: need at least 2 steps");
    double gap_sum = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = trace.matrix.at(t + 1, j) - trace.matrix.at(t, j);
            s += diff * diff;
        }
        gap_sum += std::sqrt(s);
    }
    double norm_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += trace.matrix.at(t, j) * trace.matrix.at(t, j);
        norm_sum += std::sqrt(s);
    }
    const double mean_gap = gap_sum / static_cast<double>(n - 1);
    const double mean_norm = norm_sum / static_cast<double>(n);
    if (mean_norm == 0.0) {
        log_warn("adjacent_distance: all-zero trace, returning 0");
        return 0.0;
    }
    return mean_gap / mean_norm;
}

/// One-sided magnitude spectrum averaged over embedding dimensions, after
/// per-dimension mean removal. magnitude.size() == floor(steps/2)+1.
struct SpectrumReport {
    std::vector<double> frequencies;  // cycles per step, k/steps
    std::vector<double> magnitude;
    std::vector<std::pair<double, double>> peaks;  // (frequency, magnitude), descending
    std::vector<std::size_t> peak_bins;

    static constexpr std::size_t kTopPeaks = 5;
};

inline SpectrumReport spectrum(const EmbeddingTrace& trace) {
    const std::size_t n = trace.steps(), d = trace.dims();
    if (n < 4) throw DataError("spectrum: need at least 4 steps");
    const std::size_t bins = n / 2 + 1;
    SpectrumReport rep;
    rep.frequencies.resize(bins);
    rep.magnitude.assign(bins, 0.0);
    for (std::size_t k = 0; k < bins; ++k)
        rep.frequencies[k] = static_cast<double>(k) / static_cast<double>(n);

    std::vector<double> x(n);
    for (std::size_t j = 0; j < d; ++j) {
        // constant dimensions are exactly zero after mean removal
        bool constant = true;
        for (std::size_t t = 1; t < n && constant; ++t)
            constant = trace.matrix.at(t, j) == trace.matrix.at(0, j);
        if (constant) continue;
        double mean = 0.0;
        for (std::size_t t = 0; t < n; ++t) mean += trace.matrix.at(t, j);
        mean /= static_cast<double>(n);
        for (std::size_t t = 0; t < n; ++t) x[t] = trace.matrix.at(t, j) - mean;
        const auto spec = fftd::dft_real(x);
        for (std::size_t k = 0; k < bins; ++k) rep.magnitude[k] += std::abs(spec[k]);
    }
    for (double& m : rep.magnitude) m /= static_cast<double>(d);

    // Top peaks over non-DC bins.
    std::vector<std::size_t> order;
    for (std::size_t k = 1; k < bins; ++k) order.push_back(k);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rep.magnitude[a] > rep.magnitude[b]; });
    const std::size_t top = std::min<std::size_t>(SpectrumReport::kTopPeaks, order.size());
    for (std::size_t i = 0; i < top; ++i) {
        rep.peak_bins.push_back(order[i]);
        rep.peaks.emplace_back(rep.frequencies[order[i]], rep.magnitude[order[i]]);
    }
    return rep;
}

/// Fraction of this spectrum's top-k peak bins that also appear in the
/// reference spectrum's top-k.
inline double peak_alignment(const SpectrumReport& spec, const SpectrumReport& reference,
                             std::size_t k = 2) {
    const std::size_t ka = std::min(k, spec.peak_bins.size());
    const std::size_t kb = std::min(k, reference.peak_bins.size());
    if (ka == 0 || kb == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ka; ++i)
        for (std::size_t j = 0; j < kb; ++j)
            if (spec.peak_bins[i] == reference.peak_bins[j]) {
                ++hits;
                break;
            }
    return static_cast<double>(hits) / static_cast<double>(k);
}

struct CompareReport {
    double adjacent_a = 0.0, adjacent_b = 0.0;
    int sign = 0;  // sign of (adjacent_a - adjacent_b)
    SpectrumReport spectrum_a, spectrum_b;
    double peak_alignment_a = -1.0, peak_alignment_b = -1.0;  // vs raw, -1 if no raw given
};

/// Side-by-side locality and spectral comparison of two traces over the same
/// time steps, optionally scored against the raw-observation spectrum.
inline CompareReport compare_runs(const EmbeddingTrace& a, const EmbeddingTrace& b,
                                  const EmbeddingTrace* raw = nullptr) {
    if (a.step_index != b.step_index)
        throw DataError("compare_runs: traces do not share step indices");
    CompareReport rep;
    rep.adjacent_a = adjacent_distance(a);
    rep.adjacent_b = adjacent_distance(b);
    const double diff = rep.adjacent_a - rep.adjacent_b;
    rep.sign = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
    rep.spectrum_a = spectrum(a);
    rep.spectrum_b = spectrum(b);
    if (raw) {
        if (raw->step_index != a.step_index)
            throw DataError("compare_runs: raw trace does not share step indices");
        SpectrumReport raw_spec = spectrum(*raw);
        rep.peak_alignment_a = peak_alignment(rep.spectrum_a, raw_spec);
        rep.peak_alignment_b = peak_alignment(rep.spectrum_b, raw_spec);
    }
    return rep;
}

// ---- trace files: CSV matrix + JSON sidecar ----

inline void write_trace(const EmbeddingTrace& trace, const std::string& csv_path) {
    trace.validate();
    std::ofstream os(csv_path);
    if (!os) throw DataError("write_trace: cannot write '" + csv_path + "'");
    os << "step_index";
    for (std::size_t j = 0; j < trace.dims(); ++j) os << ",dim_" << j;
    os << "\n";
    os.precision(17);
    for (std::size_t t = 0; t < trace.steps(); ++t) {
        os << trace.step_index[t];
        for (std::size_t j = 0; j < trace.dims(); ++j) os << "," << trace.matrix.at(t, j);
        os << "\n";
    }
    nlohmann::json meta = {{"source", trace.source}, {"model", trace.model},
                           {"dataset", trace.dataset}, {"progress", trace.progress},
                           {"tap", trace.tap},         {"steps", trace.steps()},
                           {"dims", trace.dims()}};
    std::ofstream ms(csv_path + ".meta.json");
    if (!ms) throw DataError("write_trace: cannot write '" + csv_path + ".meta.json'");
    ms << meta.dump(2) << "\n";
}

inline EmbeddingTrace load_trace(const std::string& csv_path) {
    std::ifstream is(csv_path);
    if (!is) throw DataError("load_trace: cannot open '" + csv_path + "'");
    std::string line;
    if (!std::getline(is, line)) throw DataError("load_trace: '" + csv_path + "' is empty");
    std::size_t dims = 0;
    for (char c : line)
        if (c == ',') ++dims;
    EmbeddingTrace trace;
    std::vector<double> flat;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0, next = 0, col = 0;
        while (next != std::string::npos) {
            next = line.find(',', pos);
            const std::string cell = line.substr(pos, next - pos);
            if (col == 0)
                trace.step_index.push_back(std::stoull(cell));
            else
                flat.push_back(std::stod(cell));
            pos = next + 1;
            ++col;
        }
        if (col != dims + 1)
            throw DataError("load_trace: ragged row in '" + csv_path + "'");
    }
    trace.matrix = TensorF({trace.step_index.size(), dims}, std::move(flat));
    const std::string meta_path = csv_path + ".meta.json";
    std::ifstream ms(meta_path);
    if (ms) {
        try {
            nlohmann::json meta = nlohmann::json::parse(ms);
            trace.source = meta.value("source", "");
            trace.model = meta.value("model", "");
            trace.dataset = meta.value("dataset", "");
            trace.progress = meta.value("progress", "");
            trace.tap = meta.value("tap", "");
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_trace: bad sidecar '" + meta_path + "': " + e.what());
        }
    }
    trace.validate();
    return trace;
}

inline nlohmann::json spectrum_to_json(const SpectrumReport& s) {
    nlohmann::json peaks = nlohmann::json::array();
    for (std::size_t i = 0; i < s.peaks.size(); ++i)
        peaks.push_back({{"frequency", s.peaks[i].first},
                         {"magnitude", s.peaks[i].second},
                         {"bin", s.peak_bins[i]}});
    return {{"frequencies", s.frequencies}, {"magnitude", s.magnitude}, {"peaks", peaks}};
}

inline nlohmann::json compare_to_json(const CompareReport& r) {
    nlohmann::json doc = {{"adjacent_distance_a", r.adjacent_a},
                          {"adjacent_distance_b", r.adjacent_b},
                          {"sign", r.sign},
                          {"spectrum_a", spectrum_to_json(r.spectrum_a)},
                          {"spectrum_b", spectrum_to_json(r.spectrum_b)}};
    if (r.peak_alignment_a >= 0.0) {
        doc["peak_alignment_a"] = r.peak_alignment_a;
        doc["peak_alignment_b"] = r.peak_alignment_b;
    }
    return doc;
}

}  // namespace latentcast
