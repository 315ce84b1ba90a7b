#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dagsynth/generator.hpp"
#include "dagsynth/ops.hpp"
#include "dagsynth/optim.hpp"
#include "dagsynth/rng.hpp"

namespace dagsynth {

enum class Normalization { batch, layer };

// NO: neither side smoothed; OS: original side only; TS: both sides.
enum class Smoothing { NO, OS, TS };

inline Smoothing parse_smoothing(const std::string& s) {
    if (s == "NO") return Smoothing::NO;
    if (s == "OS") return Smoothing::OS;
    if (s == "TS") return Smoothing::TS;
    throw ValidationError("unknown smoothing strategy: " + s + " (expected NO, OS or TS)");
}

inline const char* smoothing_name(Smoothing s) {
    switch (s) {
        case Smoothing::NO: return "NO";
        case Smoothing::OS: return "OS";
        default: return "TS";
    }
}

struct DiscriminatorSpec {
    std::size_t n_layers = 2;      // stacked FC blocks
    std::size_t layer_width = 100; // FC width per block
    Normalization norm = Normalization::batch;
    std::size_t mbd_kernels = 10;  // diversity kernels (B)
    std::size_t mbd_dims = 10;     // channels per kernel (C)
    double gamma = 0.2;            // label-smoothing magnitude

    void check() const {
        if (n_layers < 1) throw ValidationError("discriminator needs at least one layer");
        if (layer_width < 1 || mbd_kernels < 1 || mbd_dims < 1)
            throw ValidationError("discriminator sizes must all be >= 1");
        if (gamma < 0.0) throw ValidationError("smoothing gamma must be >= 0");
    }
};

// One-hot perturbation: add U[0,gamma] per entry and renormalize each row.
// gamma = 0 must return the input untouched (bit-exact identity).
inline Tensor label_smooth(const Tensor& o, double gamma, Rng& rng) {
    if (gamma < 0.0) throw ValidationError("smoothing gamma must be >= 0");
    if (gamma == 0.0) return o;
    Tensor out(o.rows, o.cols);
    for (std::size_t r = 0; r < o.rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < o.cols; ++c) {
            out.at(r, c) = o.at(r, c) + rng.uniform(0.0, gamma);
            sum += out.at(r, c);
        }
        for (std::size_t c = 0; c < o.cols; ++c) out.at(r, c) /= sum;
    }
    return out;
}

// Differentiable variant for generator-side smoothing: the noise is a
// constant, the renormalization stays on the tape.
inline Var label_smooth(Tape& t, Var o, double gamma, Rng& rng) {
    if (gamma < 0.0) throw ValidationError("smoothing gamma must be >= 0");
    if (gamma == 0.0) return o;
    const Tensor& O = t.val(o);
    Tensor u(O.rows, O.cols);
    for (double& v : u.data) v = rng.uniform(0.0, gamma);
    Var shifted = t.add(o, t.constant(std::move(u)));
    return t.divv(shifted, t.sum_rows(shifted));
}

inline std::vector<CellVars> to_cell_vars(Tape& t, const EncodedTable& enc) {
    std::vector<CellVars> out;
    for (const auto& col : enc.cols) {
        CellVars cv;
        cv.categorical = col.categorical;
        if (col.categorical) {
            cv.o = t.constant(col.p);
        } else {
            cv.w = t.constant(col.w);
            cv.p = t.constant(col.p);
        }
        out.push_back(cv);
    }
    return out;
}

// Critic input assembly in table column order: continuous columns contribute
// [w p], categorical ones a (possibly smoothed) o block. w and p are never
// smoothed.
inline Var assemble_input(Tape& t, const std::vector<CellVars>& blocks, bool original_side,
                          Smoothing strategy, double gamma, Rng& rng) {
    bool smooth = strategy == Smoothing::TS || (strategy == Smoothing::OS && original_side);
    std::vector<Var> parts;
    for (const auto& cv : blocks) {
        if (cv.categorical) {
            parts.push_back(smooth ? label_smooth(t, cv.o, gamma, rng) : cv.o);
        } else {
            parts.push_back(cv.w);
            parts.push_back(cv.p);
        }
    }
    return parts.size() == 1 ? parts[0] : t.concat_cols(parts);
}

struct DiscLayer {
    FcParam fc;    // previous width -> layer_width
    Tensor proj;   // layer_width -> kernels*dims, bias-free diversity projection
    Tensor gain, bias;  // normalization affine, width layer_width + kernels
};

class DiscriminatorNet {
   public:
    DiscriminatorSpec spec;
    std::size_t in_width = 0;
    std::vector<DiscLayer> layers;
    FcParam head;  // final width -> 1, unbounded score

    static DiscriminatorNet build(std::size_t in_width, DiscriminatorSpec spec, std::uint64_t seed) {
        spec.check();
        if (in_width < 1) throw ValidationError("discriminator input width must be >= 1");
        DiscriminatorNet net;
        net.spec = spec;
        net.in_width = in_width;
        Rng rng(seed);
        std::size_t prev = in_width;
        for (std::size_t l = 0; l < spec.n_layers; ++l) {
            DiscLayer layer;
            layer.fc = FcParam(prev, spec.layer_width, rng);
            layer.proj = Tensor::glorot(spec.layer_width, spec.mbd_kernels * spec.mbd_dims, rng);
            layer.gain = Tensor(1, spec.layer_width + spec.mbd_kernels, 1.0);
            layer.bias = Tensor(1, spec.layer_width + spec.mbd_kernels);
            net.layers.push_back(std::move(layer));
            prev = spec.layer_width + spec.mbd_kernels;
        }
        net.head = FcParam(prev, 1, rng);
        return net;
    }

    // Per-row unbounded scores (n x 1). graph_vjp selects the re-differentiable
    // diversity backward needed when the score gradient itself is trained.
    // Passing one binder to several score calls shares the parameter leaves.
    Var score(Tape& t, Var l0, detail::Binder& bp, bool graph_vjp = false) const {
        if (t.val(l0).rows < 2)
            throw ValidationError("discriminator needs a batch of at least 2 rows");
        if (t.val(l0).cols != in_width)
            throw TensorError("discriminator input is " + t.val(l0).shape_str() + ", expected cols " +
                              std::to_string(in_width));
        Var x = l0;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            std::string pre = "disc.layer" + std::to_string(l);
            Var a = bp.fc(pre + ".fc", layers[l].fc, x);
            Var M = t.matmul(a, bp.bind(pre + ".proj", layers[l].proj));
            Var div = t.minibatch_features(M, spec.mbd_kernels, spec.mbd_dims, graph_vjp);
            Var cat = t.concat_cols({a, div});
            Var gain = bp.bind(pre + ".norm.gain", layers[l].gain);
            Var bias = bp.bind(pre + ".norm.bias", layers[l].bias);
            Var normed = spec.norm == Normalization::batch ? batch_norm(t, cat, gain, bias)
                                                           : layer_norm(t, cat, gain, bias);
            x = t.leaky_relu(normed, 0.2);
        }
        return bp.fc("disc.head", head, x);
    }

    Var score(Tape& t, Var l0, bool trainable, std::vector<std::pair<std::string, Var>>& leaves,
              bool graph_vjp = false) const {
        detail::Binder bp{t, trainable, leaves};
        return score(t, l0, bp, graph_vjp);
    }

    Var score(Tape& t, Var l0) const {
        std::vector<std::pair<std::string, Var>> leaves;
        return score(t, l0, false, leaves);
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            std::string pre = "disc.layer" + std::to_string(l);
            out.push_back({pre + ".fc.W", &layers[l].fc.W});
            out.push_back({pre + ".fc.b", &layers[l].fc.b});
            out.push_back({pre + ".proj", &layers[l].proj});
            out.push_back({pre + ".norm.gain", &layers[l].gain});
            out.push_back({pre + ".norm.bias", &layers[l].bias});
        }
        out.push_back({"disc.head.W", &head.W});
        out.push_back({"disc.head.b", &head.b});
        return out;
    }
};

}  // namespace dagsynth
