#pragma once

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "dagsynth/mixture.hpp"
#include "dagsynth/table.hpp"
#include "dagsynth/tensor.hpp"

namespace dagsynth {

struct ColumnMeta {
    std::string name;
    bool categorical = false;
    std::vector<std::string> categories;  // categorical: ordered unique
    MixtureModel mixture;                 // continuous: fitted before encoding

    std::size_t width() const { return categorical ? categories.size() : 2 * mixture.n_components; }

    std::size_t category_index(const std::string& v) const {
        for (std::size_t i = 0; i < categories.size(); ++i)
            if (categories[i] == v) return i;
        throw ValidationError("column " + name + ": unseen category '" + v + "'");
    }
};

// Continuous columns carry a value block w and a probability block p, both
// rows x N_m; categorical columns carry only the one-hot block in p.
struct EncodedColumn {
    bool categorical = false;
    Tensor w;
    Tensor p;
};

struct EncodedTable {
    std::vector<EncodedColumn> cols;
    std::size_t n_rows = 0;

    std::size_t total_width() const {
        std::size_t w = 0;
        for (const auto& c : cols) w += (c.categorical ? 0 : c.w.cols) + c.p.cols;
        return w;
    }
};

// A column is categorical iff any cell fails float parsing or it is listed in
// the overrides. Mixtures are fitted separately (fit_metas).
inline std::vector<ColumnMeta> infer_meta(const Table& t, const std::set<std::string>& categorical_overrides = {}) {
    if (t.n_cols() == 0 || t.n_rows() == 0) throw ValidationError("infer_meta: empty table");
    std::vector<ColumnMeta> metas;
    for (std::size_t c = 0; c < t.n_cols(); ++c) {
        ColumnMeta m;
        m.name = t.names[c];
        bool numeric = true;
        for (const auto& cell : t.columns[c]) {
            double v;
            if (!parse_double(cell, v)) {
                numeric = false;
                break;
            }
        }
        m.categorical = !numeric || categorical_overrides.count(m.name) > 0;
        if (m.categorical) {
            std::set<std::string> uniq(t.columns[c].begin(), t.columns[c].end());
            m.categories.assign(uniq.begin(), uniq.end());
            if (numeric) {
                // numeric column forced categorical: sort by value, not text
                std::sort(m.categories.begin(), m.categories.end(),
                          [](const std::string& a, const std::string& b) {
                              double x, y;
                              parse_double(a, x);
                              parse_double(b, y);
                              return x < y;
                          });
            }
        }
        metas.push_back(std::move(m));
    }
    return metas;
}

// Fit a mixture per continuous column. Seeds derive from the base seed and
// the column position so per-column fits are independent and reproducible.
inline void fit_metas(const Table& t, std::vector<ColumnMeta>& metas, std::uint64_t seed) {
    for (std::size_t c = 0; c < metas.size(); ++c) {
        if (metas[c].categorical) continue;
        metas[c].mixture = fit_mixture(numeric_column(t, t.col_index(metas[c].name)),
                                       seed ^ (0x9e3779b97f4a7c15ull * (c + 1)));
    }
}

inline std::pair<Tensor, Tensor> encode_continuous(const std::vector<double>& values,
                                                   const MixtureModel& mixture) {
    if (mixture.n_components == 0) throw ValidationError("encode_continuous: unfitted mixture");
    std::size_t n = values.size(), K = mixture.n_components;
    Tensor w(n, K), p(n, K);
    for (std::size_t r = 0; r < n; ++r) {
        double c = values[r];
        if (!std::isfinite(c))
            throw NumericError("encode_continuous: non-finite value at row " + std::to_string(r + 1));
        for (std::size_t k = 0; k < K; ++k) {
            double v = (c - mixture.means[k]) / (mixture.delta * mixture.sigmas[k]);
            w.at(r, k) = std::clamp(v, -0.99, 0.99);
        }
        std::vector<double> post = mixture.posterior(c);
        for (std::size_t k = 0; k < K; ++k) p.at(r, k) = post[k];
    }
    return {std::move(w), std::move(p)};
}

inline Tensor encode_categorical(const std::vector<std::string>& values, const ColumnMeta& meta) {
    Tensor o(values.size(), meta.categories.size());
    for (std::size_t r = 0; r < values.size(); ++r) o.at(r, meta.category_index(values[r])) = 1.0;
    return o;
}

inline EncodedTable encode_table(const Table& t, const std::vector<ColumnMeta>& metas) {
    EncodedTable enc;
    enc.n_rows = t.n_rows();
    for (const auto& meta : metas) {
        std::size_t c = t.col_index(meta.name);
        EncodedColumn col;
        col.categorical = meta.categorical;
        if (meta.categorical) {
            col.p = encode_categorical(t.columns[c], meta);
        } else {
            auto [w, p] = encode_continuous(numeric_column(t, c), meta.mixture);
            col.w = std::move(w);
            col.p = std::move(p);
        }
        enc.cols.push_back(std::move(col));
    }
    return enc;
}

// Sampling strategies: first letter picks the continuous mixture component
// (A = argmax of p, S = draw from p), second letter picks the categorical
// level from o the same way.
enum class SampleStrategy { AA, SA, AS, SS };

inline SampleStrategy parse_strategy(const std::string& s) {
    if (s == "AA") return SampleStrategy::AA;
    if (s == "SA") return SampleStrategy::SA;
    if (s == "AS") return SampleStrategy::AS;
    if (s == "SS") return SampleStrategy::SS;
    throw ValidationError("unknown sampling strategy: " + s + " (expected AA, SA, AS or SS)");
}

inline const char* strategy_name(SampleStrategy s) {
    switch (s) {
        case SampleStrategy::AA: return "AA";
        case SampleStrategy::SA: return "SA";
        case SampleStrategy::AS: return "AS";
        default: return "SS";
    }
}

namespace detail {

inline std::vector<double> simplex_row(const Tensor& t, std::size_t r, const std::string& what) {
    std::vector<double> row(t.cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < t.cols; ++c) {
        double v = t.at(r, c);
        if (v < -1e-6)
            throw NumericError(what + " row " + std::to_string(r + 1) + ": negative probability");
        row[c] = v < 0.0 ? 0.0 : v;
        sum += row[c];
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw NumericError(what + " row " + std::to_string(r + 1) + ": probabilities sum to " +
                           std::to_string(sum));
    return row;
}

inline std::size_t pick(const std::vector<double>& probs, bool simulate, Rng& rng) {
    if (simulate) return rng.categorical(probs);
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Invert the encoding. Synthetic w values are used as-is (no re-clipping);
// component/category choice is governed by the strategy and the seed.
inline Table decode_table(const EncodedTable& enc, const std::vector<ColumnMeta>& metas,
                          SampleStrategy strategy, std::uint64_t seed) {
    if (enc.cols.size() != metas.size())
        throw ValidationError("decode_table: " + std::to_string(enc.cols.size()) + " blocks for " +
                              std::to_string(metas.size()) + " columns");
    bool sim_cont = strategy == SampleStrategy::SA || strategy == SampleStrategy::SS;
    bool sim_cat = strategy == SampleStrategy::AS || strategy == SampleStrategy::SS;
    Rng rng(seed);
    Table out;
    for (const auto& m : metas) {
        out.names.push_back(m.name);
        out.columns.emplace_back();
    }
    for (std::size_t c = 0; c < metas.size(); ++c) {
        const ColumnMeta& meta = metas[c];
        const EncodedColumn& col = enc.cols[c];
        if (meta.categorical) {
            if (col.p.cols != meta.categories.size())
                throw ValidationError("decode_table: block width mismatch for column " + meta.name);
            for (std::size_t r = 0; r < enc.n_rows; ++r) {
                auto probs = detail::simplex_row(col.p, r, meta.name);
                out.columns[c].push_back(meta.categories[detail::pick(probs, sim_cat, rng)]);
            }
        } else {
            const MixtureModel& mix = meta.mixture;
            if (col.p.cols != mix.n_components || col.w.cols != mix.n_components)
                throw ValidationError("decode_table: block width mismatch for column " + meta.name);
            for (std::size_t r = 0; r < enc.n_rows; ++r) {
                auto probs = detail::simplex_row(col.p, r, meta.name);
                std::size_t k = detail::pick(probs, sim_cont, rng);
                double v = mix.delta * col.w.at(r, k) * mix.sigmas[k] + mix.means[k];
                out.columns[c].push_back(detail::format_double(v));
            }
        }
    }
    return out;
}

// Equal-width binning over the original column's [lo, hi]; out-of-range
// values clamp to the edge bins. Degenerate range puts everything in bin 0.
inline std::vector<int> bin_continuous(const std::vector<double>& values, double lo, double hi,
                                       int n_bins = 10) {
    std::vector<int> out(values.size(), 0);
    if (!(hi > lo)) return out;
    double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i < values.size(); ++i) {
        int b = static_cast<int>(std::floor((values[i] - lo) / width));
        out[i] = std::clamp(b, 0, n_bins - 1);
    }
    return out;
}

}  // namespace dagsynth
