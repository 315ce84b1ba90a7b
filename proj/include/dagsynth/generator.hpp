#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dagsynth/dag.hpp"
#include "dagsynth/encoding.hpp"
#include "dagsynth/ops.hpp"
#include "dagsynth/optim.hpp"
#include "dagsynth/rng.hpp"

namespace dagsynth {

struct GeneratorSizes {
    std::size_t n_hidden = 50;  // LSTM state width
    std::size_t n_noise = 50;   // per-node noise width
    std::size_t n_conv = 50;    // output-transformer hidden width

    void check() const {
        if (n_hidden < 1 || n_noise < 1 || n_conv < 1)
            throw ValidationError("generator sizes must all be >= 1");
    }
};

struct FcParam {
    Tensor W, b;
    FcParam() = default;
    FcParam(std::size_t in, std::size_t out, Rng& rng) : W(Tensor::glorot(in, out, rng)), b(1, out) {}
};

// One LSTM cell per table column. Ancestor/direct lists are kept in cell
// (construction) order so attention indices and merge concatenation are
// stable; sources are kept sorted because they key the shared noise routes.
struct GeneratorCell {
    std::string name;
    std::size_t col = 0;  // index into the column metadata
    bool categorical = false;
    std::size_t out_width = 0;  // mixture components or category count
    std::vector<std::string> ancestors;
    std::vector<std::string> direct;
    std::vector<std::string> sources;

    FcParam gates;              // (2 n_hidden + n_noise) -> 4 n_hidden
    Tensor alpha;               // 1 x |ancestors|, absent for sources
    FcParam merge_C, merge_f;   // only when |direct| > 1
    FcParam conv;               // n_hidden -> n_conv
    FcParam out_w, out_p;       // continuous heads, n_conv -> out_width
    FcParam out_o;              // categorical head, n_conv -> out_width
    FcParam in_f;               // encoded block -> n_hidden
    Tensor f_init;              // 1 x n_hidden, sources only
};

// Per-column output blocks of one forward pass, indexed by table column.
struct CellVars {
    bool categorical = false;
    Var w, p, o;

    Var encoded(Tape& t) const { return categorical ? o : t.concat_cols({w, p}); }
};

struct GenPass {
    std::vector<CellVars> by_col;
    std::vector<std::pair<std::string, Var>> leaves;  // bound parameters, forward order
};

namespace detail {

struct Binder {
    Tape& tape;
    bool trainable;
    std::vector<std::pair<std::string, Var>>& leaves;
    std::map<std::string, Var> cache = {};

    // A parameter used by several passes on one tape must be bound to a
    // single leaf so backward accumulates all its contributions.
    Var bind(const std::string& name, const Tensor& t) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        Var v = trainable ? tape.param(t) : tape.constant(t);
        cache.emplace(name, v);
        leaves.emplace_back(name, v);
        return v;
    }
    Var fc(const std::string& prefix, const FcParam& p, Var x) {
        return fully_connected(tape, x, bind(prefix + ".W", p.W), bind(prefix + ".b", p.b));
    }
};

inline std::string route_key(const std::vector<std::string>& sources) {
    std::string k = "gen.noise(";
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (i) k += ",";
        k += sources[i];
    }
    return k + ")";
}

}  // namespace detail

// Standard LSTM update. Gate layout along the 4*n_h parameter width is
// forget | input | candidate | output.
inline std::pair<Var, Var> lstm_step(Tape& t, Var i_t, Var C_prev, Var W, Var b, std::size_t n_h) {
    Var gates = fully_connected(t, i_t, W, b);
    Var fg = t.sigmoid_(t.slice_cols(gates, 0, n_h));
    Var ig = t.sigmoid_(t.slice_cols(gates, n_h, n_h));
    Var gg = t.tanh_(t.slice_cols(gates, 2 * n_h, n_h));
    Var og = t.sigmoid_(t.slice_cols(gates, 3 * n_h, n_h));
    Var C_t = t.add(t.mul(fg, C_prev), t.mul(ig, gg));
    Var h_t = t.mul(og, t.tanh_(C_t));
    return {h_t, C_t};
}

// Softmax-weighted average of all ancestor hidden states.
inline Var attention_mix(Tape& t, const std::vector<Var>& ancestor_h, Var alpha) {
    if (t.val(alpha).rows != 1 || t.val(alpha).cols != ancestor_h.size())
        throw ValidationError("attention: " + std::to_string(ancestor_h.size()) +
                              " ancestor outputs for " + t.val(alpha).shape_str() + " weights");
    Var wts = softmax_rows(t, alpha);
    Var acc;
    for (std::size_t k = 0; k < ancestor_h.size(); ++k) {
        Var term = t.mul(ancestor_h[k], t.slice_cols(wts, k, 1));
        acc = acc.valid() ? t.add(acc, term) : term;
    }
    return acc;
}

class GeneratorNet {
   public:
    GeneratorSizes sizes;
    std::vector<GeneratorCell> cells;  // construction (topological) order
    std::map<std::vector<std::string>, FcParam> noise_fc;

    static GeneratorNet build(const Dag& dag, const std::vector<ColumnMeta>& metas,
                              GeneratorSizes sizes, std::uint64_t seed) {
        sizes.check();
        std::vector<std::string> names;
        for (const auto& m : metas) names.push_back(m.name);
        validate_or_throw(dag, names);

        GeneratorNet net;
        net.sizes = sizes;
        DerivedSets sets = derive_sets(dag);
        std::vector<std::string> order = topo_order(dag, names);
        std::map<std::string, std::size_t> rank;
        for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
        auto by_rank = [&](const std::set<std::string>& s) {
            std::vector<std::string> v(s.begin(), s.end());
            std::sort(v.begin(), v.end(),
                      [&](const std::string& a, const std::string& b) { return rank[a] < rank[b]; });
            return v;
        };

        Rng rng(seed);
        std::size_t n_h = sizes.n_hidden, n_z = sizes.n_noise;
        for (const auto& name : order) {
            const ColumnMeta* meta = nullptr;
            std::size_t col = 0;
            for (std::size_t i = 0; i < metas.size(); ++i)
                if (metas[i].name == name) meta = &metas[i], col = i;
            GeneratorCell c;
            c.name = name;
            c.col = col;
            c.categorical = meta->categorical;
            if (!c.categorical && meta->mixture.n_components == 0)
                throw ValidationError("column " + name + ": mixture not fitted");
            c.out_width = c.categorical ? meta->categories.size() : meta->mixture.n_components;
            c.ancestors = by_rank(sets.ancestors.at(name));
            c.direct = by_rank(sets.direct_ancestors.at(name));
            c.sources.assign(sets.sources.at(name).begin(), sets.sources.at(name).end());

            c.gates = FcParam(2 * n_h + n_z, 4 * n_h, rng);
            if (!c.ancestors.empty()) c.alpha = Tensor(1, c.ancestors.size());
            if (c.direct.size() > 1) {
                c.merge_C = FcParam(c.direct.size() * n_h, n_h, rng);
                c.merge_f = FcParam(c.direct.size() * n_h, n_h, rng);
            }
            c.conv = FcParam(n_h, sizes.n_conv, rng);
            if (c.categorical) {
                c.out_o = FcParam(sizes.n_conv, c.out_width, rng);
                c.in_f = FcParam(c.out_width, n_h, rng);
            } else {
                c.out_w = FcParam(sizes.n_conv, c.out_width, rng);
                c.out_p = FcParam(sizes.n_conv, c.out_width, rng);
                c.in_f = FcParam(2 * c.out_width, n_h, rng);
            }
            if (c.ancestors.empty()) c.f_init = Tensor::glorot(1, n_h, rng);
            if (!c.ancestors.empty() && !net.noise_fc.count(c.sources))
                net.noise_fc.emplace(c.sources, FcParam(c.sources.size() * n_z, n_z, rng));
            net.cells.push_back(std::move(c));
        }
        return net;
    }

    // Emit one forward pass onto the tape. Noise comes from rng; when
    // trainable, parameters are gradient leaves recorded in GenPass::leaves.
    GenPass forward(Tape& t, std::size_t n, Rng& rng, bool trainable) const {
        GenPass pass;
        pass.by_col.resize(cells.size());
        detail::Binder bp{t, trainable, pass.leaves};
        std::size_t n_h = sizes.n_hidden;

        std::map<std::string, Var> draw, h_of, C_of, f_of;
        for (const auto& c : cells)
            if (c.ancestors.empty()) draw[c.name] = t.constant(Tensor::randn(n, sizes.n_noise, rng));

        std::map<std::vector<std::string>, Var> routed;
        for (const auto& c : cells) {
            std::string pre = "gen." + c.name;
            Var z, a, Cprev, fprev;
            if (c.ancestors.empty()) {
                z = draw.at(c.name);
                a = t.constant(Tensor(n, n_h));
                Cprev = t.constant(Tensor(n, n_h));
                Var ones = t.constant(Tensor::from_rows(n, 1, std::vector<double>(n, 1.0)));
                fprev = t.matmul(ones, bp.bind(pre + ".f_init", c.f_init));
            } else {
                auto it = routed.find(c.sources);
                if (it != routed.end()) {
                    z = it->second;
                } else {
                    std::vector<Var> parts;
                    for (const auto& s : c.sources) parts.push_back(draw.at(s));
                    Var cat = parts.size() == 1 ? parts[0] : t.concat_cols(parts);
                    z = bp.fc(detail::route_key(c.sources), noise_fc.at(c.sources), cat);
                    routed.emplace(c.sources, z);
                }
                std::vector<Var> hs;
                for (const auto& u : c.ancestors) hs.push_back(h_of.at(u));
                a = attention_mix(t, hs, bp.bind(pre + ".alpha", c.alpha));
                if (c.direct.size() == 1) {
                    Cprev = C_of.at(c.direct[0]);
                    fprev = f_of.at(c.direct[0]);
                } else {
                    std::vector<Var> cs, fs;
                    for (const auto& u : c.direct) {
                        cs.push_back(C_of.at(u));
                        fs.push_back(f_of.at(u));
                    }
                    Cprev = bp.fc(pre + ".merge_C", c.merge_C, t.concat_cols(cs));
                    fprev = bp.fc(pre + ".merge_f", c.merge_f, t.concat_cols(fs));
                }
            }

            Var i_t = t.concat_cols({fprev, a, z});
            auto [h_t, C_t] = lstm_step(t, i_t, Cprev, bp.bind(pre + ".gates.W", c.gates.W),
                                        bp.bind(pre + ".gates.b", c.gates.b), n_h);
            Var hconv = t.tanh_(bp.fc(pre + ".conv", c.conv, h_t));
            CellVars cv;
            cv.categorical = c.categorical;
            if (c.categorical) {
                cv.o = softmax_rows(t, bp.fc(pre + ".out_o", c.out_o, hconv));
            } else {
                cv.w = t.tanh_(bp.fc(pre + ".out_w", c.out_w, hconv));
                cv.p = softmax_rows(t, bp.fc(pre + ".out_p", c.out_p, hconv));
            }
            Var f_t = bp.fc(pre + ".in_f", c.in_f, cv.encoded(t));
            h_of[c.name] = h_t;
            C_of[c.name] = C_t;
            f_of[c.name] = f_t;
            pass.by_col[c.col] = cv;
        }
        return pass;
    }

    EncodedTable sample(std::size_t n, std::uint64_t seed) const {
        Tape t;
        Rng rng(seed);
        GenPass pass = forward(t, n, rng, false);
        EncodedTable enc;
        enc.n_rows = n;
        for (const auto& cv : pass.by_col) {
            EncodedColumn col;
            col.categorical = cv.categorical;
            if (cv.categorical) {
                col.p = t.val(cv.o);
            } else {
                col.w = t.val(cv.w);
                col.p = t.val(cv.p);
            }
            enc.cols.push_back(std::move(col));
        }
        return enc;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        auto fc = [&](const std::string& prefix, FcParam& p) {
            out.push_back({prefix + ".W", &p.W});
            out.push_back({prefix + ".b", &p.b});
        };
        for (auto& c : cells) {
            std::string pre = "gen." + c.name;
            fc(pre + ".gates", c.gates);
            if (!c.ancestors.empty()) out.push_back({pre + ".alpha", &c.alpha});
            if (c.direct.size() > 1) {
                fc(pre + ".merge_C", c.merge_C);
                fc(pre + ".merge_f", c.merge_f);
            }
            fc(pre + ".conv", c.conv);
            if (c.categorical) {
                fc(pre + ".out_o", c.out_o);
            } else {
                fc(pre + ".out_w", c.out_w);
                fc(pre + ".out_p", c.out_p);
            }
            fc(pre + ".in_f", c.in_f);
            if (c.ancestors.empty()) out.push_back({pre + ".f_init", &c.f_init});
        }
        for (auto& [key, p] : noise_fc) fc(detail::route_key(key), p);
        return out;
    }
};

}  // namespace dagsynth
