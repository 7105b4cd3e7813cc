#pragma once

// Synthetic dataset generators shared by unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "latentcast/data.hpp"
#include "latentcast/rng.hpp"
#include "latentcast/tensor.hpp"

namespace testsupport {

/// Multichannel periodic series: each channel mixes the given periods with
/// channel-dependent amplitudes and phases, plus Gaussian noise.
inline latentcast::SeriesDataset periodic_dataset(std::size_t n, std::size_t channels,
                                                  const std::vector<double>& periods,
                                                  double noise, std::uint64_t seed,
                                                  const std::string& name = "synthetic") {
    latentcast::Rng rng(seed);
    latentcast::SeriesDataset ds;
    ds.name = name;
    ds.values = latentcast::TensorF({n, channels});
    const double two_pi = 6.283185307179586;
    std::vector<double> amp(channels * periods.size()), phase(channels * periods.size());
    for (auto& a : amp) a = rng.uniform(0.5, 1.5);
    for (auto& p : phase) p = rng.uniform(0.0, two_pi);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < channels; ++c) {
            double v = 0.0;
            for (std::size_t k = 0; k < periods.size(); ++k)
                v += amp[c * periods.size() + k] *
                     std::sin(two_pi * static_cast<double>(t) / periods[k] +
                              phase[c * periods.size() + k]);
            ds.values.at(t, c) = v + noise * rng.normal();
        }
    for (std::size_t c = 0; c < channels; ++c)
        ds.channel_names.push_back("ch" + std::to_string(c));
    return ds;
}

inline latentcast::TensorF random_tensor(latentcast::Shape shape, latentcast::Rng& rng,
                                         double lo = -1.0, double hi = 1.0) {
    latentcast::TensorF t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace testsupport
