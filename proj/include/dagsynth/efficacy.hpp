#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dagsynth/encoding.hpp"
#include "dagsynth/gbdt.hpp"
#include "dagsynth/table.hpp"

namespace dagsynth {

// Two readings of the per-column score. Both train one surrogate on the
// original training fold and one on a synthetic sample of the same size,
// then:
//   prose   - both models are scored on the original test fold;
//   crossed - the original-trained model is scored on the synthetic test
//             fold instead, the synthetic-trained one on the original fold.
enum class EfficacyMode { prose, crossed };

struct EfficacyScore {
    std::string column;
    bool categorical = false;
    double score = 0.0;  // g_reg (ratio, 1 is perfect) or g_class (difference, 0 is perfect)
};

namespace detail {

inline FeatureMatrix feature_matrix(const Table& t, const std::vector<ColumnMeta>& metas,
                                    std::size_t target) {
    FeatureMatrix X;
    for (std::size_t c = 0; c < metas.size(); ++c) {
        if (c == target) continue;
        std::vector<double> col;
        col.reserve(t.n_rows());
        if (metas[c].categorical) {
            for (const auto& cell : t.columns[c])
                col.push_back(static_cast<double>(metas[c].category_index(cell)));
            X.n_cats.push_back(static_cast<int>(metas[c].categories.size()));
        } else {
            col = numeric_column(t, c);
            X.n_cats.push_back(0);
        }
        X.cols.push_back(std::move(col));
    }
    return X;
}

inline std::vector<double> target_column(const Table& t, const std::vector<ColumnMeta>& metas,
                                         std::size_t target) {
    if (!metas[target].categorical) return numeric_column(t, target);
    std::vector<double> y;
    y.reserve(t.n_rows());
    for (const auto& cell : t.columns[target])
        y.push_back(static_cast<double>(metas[target].category_index(cell)));
    return y;
}

// Fold assignment; stratified deals each class round-robin so every fold
// mirrors the class balance.
inline std::vector<int> assign_folds(const std::vector<double>& y, bool stratified,
                                     std::size_t n_folds, Rng& rng) {
    std::vector<int> fold(y.size(), 0);
    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        std::size_t k = 0;
        for (double v : y) k = std::max(k, static_cast<std::size_t>(v) + 1);
        groups.resize(k);
        for (std::size_t i = 0; i < y.size(); ++i)
            groups[static_cast<std::size_t>(y[i])].push_back(i);
    } else {
        groups.resize(1);
        for (std::size_t i = 0; i < y.size(); ++i) groups[0].push_back(i);
    }
    for (auto& grp : groups) {
        rng.shuffle(grp);
        for (std::size_t j = 0; j < grp.size(); ++j)
            fold[grp[j]] = static_cast<int>(j % n_folds);
    }
    return fold;
}

inline FeatureMatrix rows_of(const FeatureMatrix& X, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.n_cats = X.n_cats;
    out.cols.resize(X.cols.size());
    for (std::size_t c = 0; c < X.cols.size(); ++c) {
        out.cols[c].reserve(rows.size());
        for (std::size_t r : rows) out.cols[c].push_back(X.cols[c][r]);
    }
    return out;
}

inline std::vector<double> pick(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(v[r]);
    return out;
}

// log-loss / log(#classes) so columns of different cardinality compare.
inline double normalized_log_loss(const GbdtModel& m, const FeatureMatrix& X,
                                  const std::vector<double>& y, std::size_t n_classes) {
    double loss = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) {
        auto p = m.predict_proba(X, r);
        std::size_t k = static_cast<std::size_t>(y[r]);
        loss -= std::log(std::max(k < p.size() ? p[k] : 0.0, 1e-12));
    }
    loss /= static_cast<double>(y.size());
    return n_classes >= 2 ? loss / std::log(static_cast<double>(n_classes)) : loss;
}

inline std::vector<double> predictions(const GbdtModel& m, const FeatureMatrix& X, std::size_t n) {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) out.push_back(m.predict(X, r));
    return out;
}

}  // namespace detail

inline std::vector<EfficacyScore> ml_efficacy(const Table& original, const Table& synthetic,
                                              const std::vector<ColumnMeta>& metas,
                                              std::uint64_t seed,
                                              EfficacyMode mode = EfficacyMode::prose,
                                              GbdtConfig gbdt_cfg = {}) {
    if (original.names != synthetic.names)
        throw ValidationError("ml efficacy: the two tables have different schemas");
    constexpr std::size_t kFolds = 5;
    if (original.n_rows() < kFolds)
        throw ValidationError("ml efficacy: need at least 5 original rows");
    // Every training fold holds ~4/5 of the original rows; the synthetic
    // table must be able to supply a sample of that size.
    std::size_t train_size = original.n_rows() - original.n_rows() / kFolds;
    if (synthetic.n_rows() < std::max(train_size, kFolds))
        throw ValidationError("ml efficacy: synthetic table has " +
                              std::to_string(synthetic.n_rows()) + " rows, need at least " +
                              std::to_string(std::max(train_size, kFolds)));

    Rng rng(seed);
    std::vector<EfficacyScore> scores;
    for (std::size_t t = 0; t < metas.size(); ++t) {
        const bool cat = metas[t].categorical;
        const std::size_t n_classes = cat ? metas[t].categories.size() : 0;
        FeatureMatrix Xo = detail::feature_matrix(original, metas, t);
        FeatureMatrix Xs = detail::feature_matrix(synthetic, metas, t);
        std::vector<double> yo = detail::target_column(original, metas, t);
        std::vector<double> ys = detail::target_column(synthetic, metas, t);

        auto fold_o = detail::assign_folds(yo, cat, kFolds, rng);
        auto fold_s = detail::assign_folds(ys, cat, kFolds, rng);

        double g = 0.0;
        for (std::size_t f = 0; f < kFolds; ++f) {
            std::vector<std::size_t> train_o, test_o, pool_s, test_s;
            for (std::size_t i = 0; i < yo.size(); ++i)
                (fold_o[i] == static_cast<int>(f) ? test_o : train_o).push_back(i);
            for (std::size_t i = 0; i < ys.size(); ++i)
                (fold_s[i] == static_cast<int>(f) ? test_s : pool_s).push_back(i);
            rng.shuffle(pool_s);
            if (pool_s.size() > train_o.size()) pool_s.resize(train_o.size());

            GbdtConfig cfg = gbdt_cfg;
            cfg.seed = rng.fork_seed();
            GbdtKind kind = cat ? GbdtKind::classification : GbdtKind::regression;
            GbdtModel m_orig = train_gbdt(detail::rows_of(Xo, train_o), detail::pick(yo, train_o),
                                          kind, n_classes, cfg);
            cfg.seed = rng.fork_seed();
            GbdtModel m_synth = train_gbdt(detail::rows_of(Xs, pool_s), detail::pick(ys, pool_s),
                                           kind, n_classes, cfg);

            FeatureMatrix Xto = detail::rows_of(Xo, test_o);
            std::vector<double> yto = detail::pick(yo, test_o);
            FeatureMatrix Xts = detail::rows_of(Xs, test_s);
            std::vector<double> yts = detail::pick(ys, test_s);
            const bool crossed = mode == EfficacyMode::crossed;

            if (cat) {
                double l_synth = detail::normalized_log_loss(m_synth, Xto, yto, n_classes);
                double l_orig = crossed
                                    ? detail::normalized_log_loss(m_orig, Xts, yts, n_classes)
                                    : detail::normalized_log_loss(m_orig, Xto, yto, n_classes);
                g += std::abs(l_synth - l_orig);
            } else {
                double l_synth = mse(yto, detail::predictions(m_synth, Xto, yto.size()));
                double l_orig =
                    crossed ? mse(yts, detail::predictions(m_orig, Xts, yts.size()))
                            : mse(yto, detail::predictions(m_orig, Xto, yto.size()));
                g += l_synth / std::max(l_orig, 1e-12);
            }
        }
        scores.push_back({original.names[t], cat, g / static_cast<double>(kFolds)});
    }
    return scores;
}

}  // namespace dagsynth
