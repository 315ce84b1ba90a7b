#pragma once

#include <string>
#include <vector>

#include "dagsynth/generator.hpp"
#include "dagsynth/ops.hpp"

namespace dagsynth {

enum class LossKind { sgan, wgan, wggp };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "sgan") return LossKind::sgan;
    if (s == "wgan") return LossKind::wgan;
    if (s == "wggp") return LossKind::wggp;
    throw ValidationError("unknown loss kind: " + s + " (expected sgan, wgan or wggp)");
}

inline const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::sgan: return "sgan";
        case LossKind::wgan: return "wgan";
        default: return "wggp";
    }
}

constexpr double kLogEps = 1e-12;

// Saturating-discriminator losses on raw scores; the sigmoid lives here, the
// critic itself stays unbounded.
inline Var sgan_d_loss(Tape& t, Var s_real, Var s_synth) {
    Var dr = t.clamp_min(t.sigmoid_(s_real), kLogEps);
    Var df = t.clamp_min(t.sigmoid_(s_synth), kLogEps);
    return t.sub(mean_all(t, t.log_(df)), mean_all(t, t.log_(dr)));
}

inline Var sgan_g_loss(Tape& t, Var s_synth) {
    return t.neg(mean_all(t, t.log_(t.clamp_min(t.sigmoid_(s_synth), kLogEps))));
}

inline Var wgan_d_loss(Tape& t, Var s_real, Var s_synth) {
    return t.sub(mean_all(t, s_synth), mean_all(t, s_real));
}

inline Var wgan_g_loss(Tape& t, Var s_synth) { return t.neg(mean_all(t, s_synth)); }

// mean((||d(sum scores)/d interp||_2 - 1)^2) over the interpolated rows.
// interp must require gradients. The inner backward emits tape ops, so the
// result stays differentiable w.r.t. anything the scorer touched; the scorer
// must therefore build its critic from graph-mode primitives (no fused
// backward paths).
template <typename ScoreFn>
Var gradient_penalty(Tape& t, Var interp, ScoreFn&& score) {
    Var s = score(t, interp);
    Tape::Grads inner = t.backward(t.sum_all(s));
    if (!inner.has(interp))
        throw TensorError("gradient penalty: interpolants unreachable from the critic score");
    Var g = inner.at(interp);
    Var norm = t.sqrt_(t.sum_rows(t.mul(g, g)));
    Var excess = t.add_scalar(norm, -1.0);
    return mean_all(t, t.mul(excess, excess));
}

// Sum of KL(mean original block || mean synthetic block) over every discrete
// block: the p block of each continuous column and the o block of each
// categorical one. Differentiable in the synthetic side.
inline Var kl_term(Tape& t, const std::vector<CellVars>& original,
                   const std::vector<CellVars>& synthetic) {
    if (original.size() != synthetic.size())
        throw ValidationError("kl_term: block count mismatch");
    Var total;
    for (std::size_t i = 0; i < original.size(); ++i) {
        if (original[i].categorical != synthetic[i].categorical)
            throw ValidationError("kl_term: column kind mismatch at block " + std::to_string(i));
        Var po = original[i].categorical ? original[i].o : original[i].p;
        Var qo = synthetic[i].categorical ? synthetic[i].o : synthetic[i].p;
        double np = static_cast<double>(t.val(po).rows);
        double nq = static_cast<double>(t.val(qo).rows);
        Var P = t.scale(t.sum_cols(po), 1.0 / np);
        Var Q = t.scale(t.sum_cols(qo), 1.0 / nq);
        Var lp = t.log_(t.clamp_min(P, kLogEps));
        Var lq = t.log_(t.clamp_min(Q, kLogEps));
        Var term = t.sum_all(t.mul(P, t.sub(lp, lq)));
        total = total.valid() ? t.add(total, term) : term;
    }
    return total;
}

}  // namespace dagsynth
