#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dagsynth/encoding.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

// Joint relative frequencies over one to three columns. Keys are per-column
// codes: the category index for categorical columns, the bin index for
// continuous ones. Keys never seen in the data are absent.
using FrequencyList = std::map<std::vector<int>, double>;

// Bin edges for continuous columns always come from the original table so
// that both sides land in the same grid; hi==lo marks categorical slots.
struct BinRanges {
    std::vector<double> lo, hi;
};

inline BinRanges continuous_ranges(const Table& t, const std::vector<ColumnMeta>& metas) {
    BinRanges r;
    r.lo.assign(metas.size(), 0.0);
    r.hi.assign(metas.size(), 0.0);
    for (std::size_t c = 0; c < metas.size(); ++c) {
        if (metas[c].categorical) continue;
        std::vector<double> v = numeric_column(t, c);
        double lo = v[0], hi = v[0];
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        r.lo[c] = lo;
        r.hi[c] = hi;
    }
    return r;
}

namespace detail {

inline std::vector<int> column_codes(const Table& t, std::size_t c, const ColumnMeta& meta,
                                     const BinRanges& ranges) {
    if (meta.categorical) {
        std::vector<int> codes;
        codes.reserve(t.columns[c].size());
        for (const auto& cell : t.columns[c])
            codes.push_back(static_cast<int>(meta.category_index(cell)));
        return codes;
    }
    return bin_continuous(numeric_column(t, c), ranges.lo[c], ranges.hi[c]);
}

}  // namespace detail

inline FrequencyList frequency_list(const Table& t, const std::vector<std::string>& columns,
                                    const std::vector<ColumnMeta>& metas, const BinRanges& ranges) {
    if (columns.empty() || columns.size() > 3)
        throw ValidationError("frequency lists cover 1 to 3 columns, got " +
                              std::to_string(columns.size()));
    std::vector<std::vector<int>> codes;
    for (const auto& name : columns) {
        std::size_t c = 0;
        while (c < t.names.size() && t.names[c] != name) ++c;
        if (c == t.names.size()) throw ValidationError("unknown column: " + name);
        codes.push_back(detail::column_codes(t, c, metas[c], ranges));
    }
    FrequencyList out;
    std::size_t n = t.n_rows();
    std::vector<int> key(columns.size());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < codes.size(); ++j) key[j] = codes[j][r];
        out[key] += 1.0;
    }
    for (auto& kv : out) kv.second /= static_cast<double>(n);
    return out;
}

// Pearson and R^2 are undefined on (near-)constant lists; they come back
// empty and the caller decides how to aggregate.
struct CompareResult {
    double mae = 0.0;
    double rmse = 0.0;
    double srmse = 0.0;
    std::optional<double> r2;
    std::optional<double> pearson;
};

inline CompareResult compare(const FrequencyList& orig, const FrequencyList& synth) {
    std::map<std::vector<int>, std::pair<double, double>> aligned;
    for (const auto& kv : orig) aligned[kv.first].first = kv.second;
    for (const auto& kv : synth) aligned[kv.first].second = kv.second;

    const double n = static_cast<double>(aligned.size());
    double abs_sum = 0.0, sq_sum = 0.0, p_sum = 0.0, q_sum = 0.0;
    for (const auto& kv : aligned) {
        double d = kv.second.second - kv.second.first;
        abs_sum += std::abs(d);
        sq_sum += d * d;
        p_sum += kv.second.first;
        q_sum += kv.second.second;
    }
    double p_mean = p_sum / n, q_mean = q_sum / n;
    double ss_tot = 0.0, var_q = 0.0, cov = 0.0;
    for (const auto& kv : aligned) {
        double dp = kv.second.first - p_mean;
        double dq = kv.second.second - q_mean;
        ss_tot += dp * dp;
        var_q += dq * dq;
        cov += dp * dq;
    }

    CompareResult res;
    res.mae = abs_sum / n;
    res.rmse = std::sqrt(sq_sum / n);
    res.srmse = res.rmse / p_mean;
    if (ss_tot > 1e-24) res.r2 = 1.0 - sq_sum / ss_tot;
    if (ss_tot > 1e-24 && var_q > 1e-24) res.pearson = cov / std::sqrt(ss_tot * var_q);
    return res;
}

// Per-order means over every column combination. Combinations where R^2 or
// Pearson is undefined are excluded from that metric's mean; the counts say
// how many.
struct OrderStats {
    std::size_t order = 0;
    std::size_t n_combos = 0;
    double mae = 0.0;
    double rmse = 0.0;
    double srmse = 0.0;
    double r2 = 0.0;
    double pearson = 0.0;
    std::size_t r2_excluded = 0;
    std::size_t pearson_excluded = 0;
};

struct StatReport {
    std::vector<OrderStats> orders;  // order 1, 2, 3 where enough columns exist
};

namespace detail {

inline void combinations(std::size_t n, std::size_t k,
                         const std::function<void(const std::vector<std::size_t>&)>& fn) {
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        fn(idx);
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace detail

inline StatReport statistical_report(const Table& original, const Table& synthetic,
                                     const std::vector<ColumnMeta>& metas) {
    if (original.names != synthetic.names)
        throw ValidationError("statistical report: the two tables have different schemas");
    BinRanges ranges = continuous_ranges(original, metas);

    StatReport report;
    for (std::size_t k = 1; k <= 3 && k <= original.names.size(); ++k) {
        OrderStats st;
        st.order = k;
        double r2_sum = 0.0, pear_sum = 0.0;
        std::size_t r2_n = 0, pear_n = 0;
        detail::combinations(original.names.size(), k, [&](const std::vector<std::size_t>& idx) {
            std::vector<std::string> cols;
            for (std::size_t i : idx) cols.push_back(original.names[i]);
            CompareResult cr = compare(frequency_list(original, cols, metas, ranges),
                                       frequency_list(synthetic, cols, metas, ranges));
            ++st.n_combos;
            st.mae += cr.mae;
            st.rmse += cr.rmse;
            st.srmse += cr.srmse;
            if (cr.r2) {
                r2_sum += *cr.r2;
                ++r2_n;
            }
            if (cr.pearson) {
                pear_sum += *cr.pearson;
                ++pear_n;
            }
        });
        st.mae /= static_cast<double>(st.n_combos);
        st.rmse /= static_cast<double>(st.n_combos);
        st.srmse /= static_cast<double>(st.n_combos);
        st.r2 = r2_n ? r2_sum / static_cast<double>(r2_n) : 0.0;
        st.pearson = pear_n ? pear_sum / static_cast<double>(pear_n) : 0.0;
        st.r2_excluded = st.n_combos - r2_n;
        st.pearson_excluded = st.n_combos - pear_n;
        report.orders.push_back(st);
    }
    return report;
}

}  // namespace dagsynth
