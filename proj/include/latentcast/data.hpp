#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentcast/errors.hpp"
#include "latentcast/log.hpp"
#include "latentcast/tensor.hpp"

namespace latentcast {

struct SplitSizes {
    std::size_t train = 0, val = 0, test = 0;
    std::size_t total() const { return train + val + test; }
};

/// A loaded multivariate series: values are (N x C) time-major, one row per
/// time point. Split sizes are attached by split(); rows past
/// train+val+test (if any) are unused, matching the benchmark convention.
struct SeriesDataset {
    std::string name;
    TensorF values;  // N x C
    std::vector<std::string> channel_names;
    SplitSizes split_sizes;

    std::size_t num_points() const { return values.shape.empty() ? 0 : values.shape[0]; }
    std::size_t num_channels() const { return values.rank() == 2 ? values.shape[1] : 0; }
};

/// Contiguous range of rows of a dataset.
struct SeriesView {
    const SeriesDataset* ds = nullptr;
    std::size_t offset = 0;
    std::size_t length = 0;

    double value(std::size_t t, std::size_t c) const { return ds->values.at(offset + t, c); }
};

/// One training sample: lookback block x (C x L) and target block y (C x T),
/// y immediately following x in time. start_index is relative to the view
/// the window was cut from.
struct WindowPair {
    TensorF x;  // C x L
    TensorF y;  // C x T
    std::size_t start_index = 0;
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string strip(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline void split_line(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
}

}  // namespace detail

/// Load a CSV: one header row, comma separators, optional leading "date"
/// column ignored for numerics. Any unparsable or missing cell is a hard
/// error naming its row and column.
inline SeriesDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> cells;
    detail::split_line(line, cells);
    if (cells.empty()) throw DataError("load_csv: '" + path + "' has an empty header");

    const bool has_date = detail::lower(detail::strip(cells[0])) == "date";
    const std::size_t first_col = has_date ? 1 : 0;
    if (cells.size() <= first_col)
        throw DataError("load_csv: '" + path + "' has no numeric columns");

    SeriesDataset ds;
    ds.name = path;
    for (std::size_t c = first_col; c < cells.size(); ++c)
        ds.channel_names.push_back(detail::strip(cells[c]));
    const std::size_t n_cols = cells.size();
    const std::size_t n_channels = n_cols - first_col;

    std::vector<double> flat;
    std::size_t n_rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_line(line, cells);
        if (cells.size() != n_cols)
            throw DataError("load_csv: row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(n_cols));
        for (std::size_t c = first_col; c < n_cols; ++c) {
            const std::string cell = detail::strip(cells[c]);
            double v = 0.0;
            const char* b = cell.data();
            const char* e = b + cell.size();
            auto res = std::from_chars(b, e, v);
            if (cell.empty() || res.ec != std::errc() || res.ptr != e)
                throw DataError("load_csv: unparsable cell at row " + std::to_string(line_no) +
                                ", column " + std::to_string(c + 1) + " ('" + cell + "')");
            flat.push_back(v);
        }
        ++n_rows;
    }
    if (n_rows == 0) throw DataError("load_csv: '" + path + "' has no data rows");

    ds.values = TensorF({n_rows, n_channels}, std::move(flat));
    return ds;
}

/// Benchmark split registry: (train, val, test) in time points.
inline std::optional<SplitSizes> registered_split(const std::string& dataset_name) {
    static const std::map<std::string, SplitSizes> table = {
        {"etth1", {8545, 2881, 2881}},
        {"etth2", {8545, 2881, 2881}},
        {"ettm1", {34465, 11521, 11521}},
        {"ettm2", {34465, 11521, 11521}},
        {"electricity", {18317, 2633, 5261}},
        {"traffic", {12185, 1757, 3509}},
        {"weather", {36792, 5271, 10540}},
    };
    auto it = table.find(detail::lower(dataset_name));
    if (it == table.end()) return std::nullopt;
    return it->second;
}

struct SplitViews {
    SeriesView train, val, test;
};

/// Chronological split. Uses the registry for known benchmark names; unknown
/// datasets need explicit ratios. Sizes are attached to the dataset.
inline SplitViews split(SeriesDataset& ds, std::optional<std::array<double, 3>> ratios = {}) {
    SplitSizes sizes;
    if (auto reg = registered_split(ds.name)) {
        sizes = *reg;
    } else if (ratios) {
        const double rt = (*ratios)[0], rv = (*ratios)[1], rs = (*ratios)[2];
        if (rt <= 0.0 || rv < 0.0 || rs < 0.0 || rt + rv + rs > 1.0 + 1e-9)
            throw ConfigError("split: ratios must be non-negative and sum to at most 1");
        const auto n = static_cast<double>(ds.num_points());
        sizes.train = static_cast<std::size_t>(std::floor(n * rt + 1e-9));
        sizes.val = static_cast<std::size_t>(std::floor(n * rv + 1e-9));
        sizes.test = static_cast<std::size_t>(std::floor(n * rs + 1e-9));
    } else {
        throw ConfigError("split: dataset '" + ds.name +
                          "' has no registered split and no ratios were given");
    }
    if (sizes.total() > ds.num_points())
        throw DataError("split: dataset '" + ds.name + "' has " +
                        std::to_string(ds.num_points()) + " points, split needs " +
                        std::to_string(sizes.total()));
    ds.split_sizes = sizes;
    SplitViews v;
    v.train = {&ds, 0, sizes.train};
    v.val = {&ds, sizes.train, sizes.val};
    v.test = {&ds, sizes.train + sizes.val, sizes.test};
    return v;
}

enum class SplitKind { train, val, test };

/// View used for window extraction. Val/test views extend their lookback L
/// points into the preceding split so that every target block of the split
/// is reachable; train windows stay strictly inside the train range.
inline SeriesView windowed_view(const SeriesDataset& ds, SplitKind kind, std::size_t lookback) {
    const SplitSizes& s = ds.split_sizes;
    switch (kind) {
        case SplitKind::train:
            return {&ds, 0, s.train};
        case SplitKind::val: {
            const std::size_t ext = std::min(lookback, s.train);
            return {&ds, s.train - ext, s.val + ext};
        }
        case SplitKind::test: {
            const std::size_t ext = std::min(lookback, s.train + s.val);
            return {&ds, s.train + s.val - ext, s.test + ext};
        }
    }
    return {};
}

/// Number of (L, T) windows a view of this length admits.
inline std::size_t count_windows(std::size_t view_len, std::size_t L, std::size_t T,
                                 std::size_t stride = 1) {
    if (view_len < L + T) return 0;
    return (view_len - L - T) / stride + 1;
}

/// Valid window start indices, chronologically ordered.
inline std::vector<std::size_t> window_starts(std::size_t view_len, std::size_t L, std::size_t T,
                                              std::size_t stride = 1) {
    std::vector<std::size_t> starts;
    starts.reserve(count_windows(view_len, L, T, stride));
    if (view_len >= L + T)
        for (std::size_t s = 0; s + L + T <= view_len; s += stride) starts.push_back(s);
    return starts;
}

/// Materialize one window at a given start (relative to the view).
inline WindowPair cut_window(const SeriesView& view, std::size_t start, std::size_t L,
                             std::size_t T) {
    const std::size_t C = view.ds->num_channels();
    WindowPair w;
    w.start_index = start;
    w.x = TensorF({C, L});
    w.y = TensorF({C, T});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < L; ++t) w.x.at(c, t) = view.value(start + t, c);
        for (std::size_t t = 0; t < T; ++t) w.y.at(c, t) = view.value(start + L + t, c);
    }
    return w;
}

/// All sliding windows of the view. A too-short view yields an empty list
/// with a warning rather than an error.
inline std::vector<WindowPair> make_windows(const SeriesView& view, std::size_t L, std::size_t T,
                                            std::size_t stride = 1) {
    std::vector<WindowPair> out;
    if (view.length < L + T) {
        log_warn("make_windows: view of length " + std::to_string(view.length) +
                 " is shorter than L+T = " + std::to_string(L + T) + ", no windows produced");
        return out;
    }
    const auto starts = window_starts(view.length, L, T, stride);
    out.reserve(starts.size());
    for (std::size_t s : starts) out.push_back(cut_window(view, s, L, T));
    return out;
}

/// Per-channel z-score parameters fitted on the train split (population
/// sigma). Channels with zero variance standardize with sigma = 1.
struct Standardizer {
    std::vector<double> mean, std;

    static Standardizer fit(const SeriesView& train) {
        if (train.length == 0) throw DataError("standardize: train view is empty");
        const std::size_t C = train.ds->num_channels();
        Standardizer st;
        st.mean.assign(C, 0.0);
        st.std.assign(C, 0.0);
        const auto n = static_cast<double>(train.length);
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t < train.length; ++t) s += train.value(t, c);
            st.mean[c] = s / n;
        }
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t < train.length; ++t) {
                const double d = train.value(t, c) - st.mean[c];
                s += d * d;
            }
            const double sigma = std::sqrt(s / n);
            st.std[c] = sigma > 0.0 ? sigma : 1.0;
        }
        return st;
    }

    /// In-place z-score of an (N x C) series.
    void apply(TensorF& values) const {
        const std::size_t n = values.shape[0], C = values.shape[1];
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t c = 0; c < C; ++c)
                values.at(t, c) = (values.at(t, c) - mean[c]) / std[c];
    }

    /// Inverse of apply for an (N x C) series.
    void invert(TensorF& values) const {
        const std::size_t n = values.shape[0], C = values.shape[1];
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t c = 0; c < C; ++c)
                values.at(t, c) = values.at(t, c) * std[c] + mean[c];
    }

    /// Inverse of apply for a (C x T) block (channels as rows).
    void invert_block(TensorF& block) const {
        const std::size_t C = block.shape[0], T = block.shape[1];
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t)
                block.at(c, t) = block.at(c, t) * std[c] + mean[c];
    }
};

/// Fit on the train view, standardize the whole dataset in place.
inline Standardizer standardize_fit_apply(SeriesDataset& ds, const SeriesView& train) {
    Standardizer st = Standardizer::fit(train);
    st.apply(ds.values);
    return st;
}

}  // namespace latentcast
