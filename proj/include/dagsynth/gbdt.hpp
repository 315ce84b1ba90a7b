#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dagsynth/rng.hpp"
#include "dagsynth/tensor.hpp"

namespace dagsynth {

enum class GbdtKind { regression, classification };

struct GbdtConfig {
    std::size_t max_depth = 6;
    double learning_rate = 0.1;
    std::size_t max_rounds = 500;
    std::size_t patience = 20;
    std::size_t min_leaf = 20;  // lightgbm's min_data_in_leaf
    double validation_fraction = 0.2;
    std::uint64_t seed = 0x5eed;
};

// Column-major feature storage; categorical columns hold integer category
// codes and declare their cardinality in n_cats (0 marks a numeric column).
struct FeatureMatrix {
    std::vector<std::vector<double>> cols;
    std::vector<int> n_cats;

    std::size_t n_rows() const { return cols.empty() ? 0 : cols[0].size(); }
    std::size_t n_cols() const { return cols.size(); }
};

namespace gbdt_detail {

struct Node {
    int feature = -1;  // -1 = leaf
    double threshold = 0.0;
    std::vector<std::uint8_t> left_cats;  // nonempty = categorical membership split
    double value = 0.0;
    int left = -1, right = -1;
};

struct Tree {
    std::vector<Node> nodes;

    double predict(const FeatureMatrix& X, std::size_t r) const {
        int id = 0;
        while (nodes[id].feature >= 0) {
            const Node& nd = nodes[id];
            double x = X.cols[nd.feature][r];
            bool go_left;
            if (!nd.left_cats.empty()) {
                long c = static_cast<long>(x);
                // categories unseen at this node during training fall right
                go_left = c >= 0 && c < static_cast<long>(nd.left_cats.size()) && nd.left_cats[c];
            } else {
                go_left = x <= nd.threshold;
            }
            id = go_left ? nd.left : nd.right;
        }
        return nodes[id].value;
    }
};

// Equal-frequency pre-binning caps split search at 256 candidates per
// numeric feature; categorical codes are their own bins.
struct BinnedCol {
    bool categorical = false;
    std::size_t n_bins = 0;
    std::vector<std::uint16_t> bins;
    std::vector<double> upper;  // numeric only: largest raw value in each bin
};

inline BinnedCol bin_column(const std::vector<double>& col, int n_cats) {
    BinnedCol out;
    out.bins.resize(col.size());
    if (n_cats > 0) {
        out.categorical = true;
        out.n_bins = static_cast<std::size_t>(n_cats);
        for (std::size_t r = 0; r < col.size(); ++r)
            out.bins[r] = static_cast<std::uint16_t>(col[r]);
        return out;
    }
    std::vector<double> uniq(col);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    constexpr std::size_t kMaxBins = 256;
    if (uniq.size() <= kMaxBins) {
        out.upper = uniq;
    } else {
        for (std::size_t b = 1; b <= kMaxBins; ++b)
            out.upper.push_back(uniq[b * uniq.size() / kMaxBins - 1]);
        out.upper.erase(std::unique(out.upper.begin(), out.upper.end()), out.upper.end());
    }
    out.n_bins = out.upper.size();
    for (std::size_t r = 0; r < col.size(); ++r) {
        auto it = std::lower_bound(out.upper.begin(), out.upper.end(), col[r]);
        out.bins[r] = static_cast<std::uint16_t>(it - out.upper.begin());
    }
    return out;
}

constexpr double kLeafReg = 1e-6;

struct TreeBuilder {
    const std::vector<BinnedCol>& cols;
    const std::vector<double>& g;  // per-row numerator (residual)
    const std::vector<double>& h;  // per-row curvature, > 0
    std::size_t max_depth;
    std::size_t min_leaf;
    Tree tree;

    int build(std::vector<std::size_t>& rows, std::size_t depth) {
        double G = 0.0, H = 0.0;
        for (std::size_t r : rows) {
            G += g[r];
            H += h[r];
        }
        int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[id].value = G / (H + kLeafReg);
        if (depth >= max_depth || rows.size() < 2 * min_leaf) return id;

        double base = G * G / (H + kLeafReg);
        double best_gain = 1e-12;
        int best_feat = -1;
        std::size_t best_bin = 0;
        bool best_is_cat = false;
        std::vector<std::uint16_t> best_left;  // categorical: bins going left

        std::vector<double> hg, hh;
        std::vector<std::size_t> hc;
        for (std::size_t f = 0; f < cols.size(); ++f) {
            const BinnedCol& bc = cols[f];
            if (bc.n_bins < 2) continue;
            hg.assign(bc.n_bins, 0.0);
            hh.assign(bc.n_bins, 0.0);
            hc.assign(bc.n_bins, 0);
            for (std::size_t r : rows) {
                hg[bc.bins[r]] += g[r];
                hh[bc.bins[r]] += h[r];
                ++hc[bc.bins[r]];
            }
            // Scan order: bin index for numeric features, bins sorted by mean
            // residual for categorical ones (optimal for squared loss).
            std::vector<std::uint16_t> order;
            for (std::size_t b = 0; b < bc.n_bins; ++b)
                if (hc[b]) order.push_back(static_cast<std::uint16_t>(b));
            if (bc.categorical)
                std::sort(order.begin(), order.end(), [&](std::uint16_t a, std::uint16_t b) {
                    double ma = hg[a] / (hh[a] + kLeafReg), mb = hg[b] / (hh[b] + kLeafReg);
                    return ma < mb || (ma == mb && a < b);
                });
            double GL = 0.0, HL = 0.0;
            std::size_t CL = 0;
            for (std::size_t j = 0; j + 1 < order.size(); ++j) {
                GL += hg[order[j]];
                HL += hh[order[j]];
                CL += hc[order[j]];
                double GR = G - GL, HR = H - HL;
                if (CL < min_leaf || rows.size() - CL < min_leaf) continue;
                double gain = GL * GL / (HL + kLeafReg) + GR * GR / (HR + kLeafReg) - base;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feat = static_cast<int>(f);
                    best_bin = order[j];  // the real bin index, not its rank among present bins
                    best_is_cat = bc.categorical;
                    if (bc.categorical)
                        best_left.assign(order.begin(), order.begin() + j + 1);
                }
            }
        }
        if (best_feat < 0) return id;

        const BinnedCol& bc = cols[best_feat];
        std::vector<std::size_t> left_rows, right_rows;
        if (best_is_cat) {
            std::vector<std::uint8_t> mask(bc.n_bins, 0);
            for (std::uint16_t b : best_left) mask[b] = 1;
            for (std::size_t r : rows)
                (mask[bc.bins[r]] ? left_rows : right_rows).push_back(r);
            tree.nodes[id].left_cats = mask;
        } else {
            for (std::size_t r : rows)
                (bc.bins[r] <= best_bin ? left_rows : right_rows).push_back(r);
            tree.nodes[id].threshold = bc.upper[best_bin];
        }
        tree.nodes[id].feature = best_feat;
        rows.clear();
        rows.shrink_to_fit();
        int l = build(left_rows, depth + 1);
        int r = build(right_rows, depth + 1);
        tree.nodes[id].left = l;
        tree.nodes[id].right = r;
        return id;
    }
};

inline Tree fit_tree(const std::vector<BinnedCol>& cols, const std::vector<double>& g,
                     const std::vector<double>& h, std::vector<std::size_t> rows,
                     std::size_t max_depth, std::size_t min_leaf) {
    TreeBuilder tb{cols, g, h, max_depth, std::max<std::size_t>(min_leaf, 1), {}};
    tb.build(rows, 0);
    return std::move(tb.tree);
}

inline void softmax_inplace(std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& v : logits) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : logits) v /= sum;
}

}  // namespace gbdt_detail

struct GbdtModel {
    GbdtKind kind = GbdtKind::regression;
    std::size_t n_classes = 1;
    double learning_rate = 0.1;
    std::vector<double> base;                             // 1 entry, or one logit per class
    std::vector<std::vector<gbdt_detail::Tree>> rounds;   // [round][class]

    double predict(const FeatureMatrix& X, std::size_t r) const {
        double s = base[0];
        for (const auto& round : rounds) s += learning_rate * round[0].predict(X, r);
        return s;
    }

    std::vector<double> predict_proba(const FeatureMatrix& X, std::size_t r) const {
        std::vector<double> logits(base);
        for (const auto& round : rounds)
            for (std::size_t k = 0; k < n_classes; ++k)
                logits[k] += learning_rate * round[k].predict(X, r);
        gbdt_detail::softmax_inplace(logits);
        return logits;
    }
};

// Squared-error boosting for regression, per-class trees + softmax for
// probabilistic classification. Early stopping watches a held-out slice of
// the supplied rows. n_classes may exceed the classes present so that
// categories absent from training still get a (tiny) probability.
inline GbdtModel train_gbdt(const FeatureMatrix& X, const std::vector<double>& y, GbdtKind kind,
                            std::size_t n_classes = 0, GbdtConfig cfg = {}) {
    const std::size_t n = X.n_rows();
    if (n == 0 || y.size() != n)
        throw ValidationError("gbdt: need one target per feature row, got " +
                              std::to_string(y.size()) + " targets for " + std::to_string(n) +
                              " rows");

    GbdtModel model;
    model.kind = kind;
    model.learning_rate = cfg.learning_rate;

    if (kind == GbdtKind::classification) {
        std::size_t seen = 0;
        for (double v : y) seen = std::max(seen, static_cast<std::size_t>(v) + 1);
        model.n_classes = std::max(n_classes, seen);
        if (model.n_classes <= 1) {  // degenerate single-class target
            model.n_classes = 1;
            model.base = {0.0};
            return model;
        }
    }

    std::vector<gbdt_detail::BinnedCol> binned;
    for (std::size_t c = 0; c < X.n_cols(); ++c)
        binned.push_back(gbdt_detail::bin_column(X.cols[c], X.n_cats[c]));

    Rng rng(cfg.seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    std::size_t n_val =
        n >= 2 ? std::clamp<std::size_t>(static_cast<std::size_t>(n * cfg.validation_fraction),
                                         1, n - 1)
               : 0;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + n_val);
    std::vector<std::size_t> train(idx.begin() + n_val, idx.end());
    if (train.empty() || n_val == 0) {
        // Too small to validate; fall back to the base prediction alone.
        train = idx;
        val.clear();
    }

    const std::size_t K = kind == GbdtKind::classification ? model.n_classes : 1;
    std::vector<double> scores(n * K, 0.0);
    model.base.assign(K, 0.0);
    if (kind == GbdtKind::regression) {
        double mean = 0.0;
        for (std::size_t r : train) mean += y[r];
        mean /= static_cast<double>(train.size());
        model.base[0] = mean;
    } else {
        std::vector<double> prior(K, 0.0);
        for (std::size_t r : train) prior[static_cast<std::size_t>(y[r])] += 1.0;
        for (std::size_t k = 0; k < K; ++k)
            model.base[k] = std::log(std::max(prior[k] / static_cast<double>(train.size()), 1e-12));
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < K; ++k) scores[r * K + k] = model.base[k];

    auto val_loss = [&]() {
        double loss = 0.0;
        if (kind == GbdtKind::regression) {
            for (std::size_t r : val) {
                double d = y[r] - scores[r];
                loss += d * d;
            }
        } else {
            std::vector<double> p(K);
            for (std::size_t r : val) {
                for (std::size_t k = 0; k < K; ++k) p[k] = scores[r * K + k];
                gbdt_detail::softmax_inplace(p);
                loss -= std::log(std::max(p[static_cast<std::size_t>(y[r])], 1e-12));
            }
        }
        return loss / static_cast<double>(std::max<std::size_t>(val.size(), 1));
    };

    double best = val.empty() ? 0.0 : val_loss();
    std::size_t best_rounds = 0, since_best = 0;
    std::vector<double> g(n, 0.0), h(n, 1.0), p(K);

    for (std::size_t round = 0; round < cfg.max_rounds && !val.empty(); ++round) {
        std::vector<gbdt_detail::Tree> trees;
        double train_abs = 0.0;
        if (kind == GbdtKind::regression) {
            for (std::size_t r : train) {
                g[r] = y[r] - scores[r];
                train_abs += std::abs(g[r]);
            }
            trees.push_back(gbdt_detail::fit_tree(binned, g, h, train, cfg.max_depth, cfg.min_leaf));
        } else {
            std::vector<std::vector<double>> probs(n, std::vector<double>());
            for (std::size_t r : train) {
                for (std::size_t k = 0; k < K; ++k) p[k] = scores[r * K + k];
                gbdt_detail::softmax_inplace(p);
                probs[r] = p;
            }
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t r : train) {
                    double pk = probs[r][k];
                    double yk = static_cast<std::size_t>(y[r]) == k ? 1.0 : 0.0;
                    g[r] = yk - pk;
                    h[r] = std::max(pk * (1.0 - pk), 1e-16);
                    train_abs += std::abs(g[r]);
                }
                trees.push_back(gbdt_detail::fit_tree(binned, g, h, train, cfg.max_depth, cfg.min_leaf));
            }
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < K; ++k)
                scores[r * K + k] += cfg.learning_rate * trees[k].predict(X, r);
        model.rounds.push_back(std::move(trees));

        double loss = val_loss();
        if (loss < best - 1e-12) {
            best = loss;
            best_rounds = model.rounds.size();
            since_best = 0;
        } else if (++since_best > cfg.patience) {
            break;
        }
        if (train_abs < 1e-12) break;  // training side already perfectly fitted
    }
    model.rounds.resize(best_rounds);
    return model;
}

inline double mse(const std::vector<double>& truth, const std::vector<double>& pred) {
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        double d = truth[i] - pred[i];
        s += d * d;
    }
    return s / static_cast<double>(truth.size());
}

}  // namespace dagsynth
