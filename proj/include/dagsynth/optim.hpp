#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagsynth/tensor.hpp"

namespace dagsynth {

// A named master parameter. Training copies masters onto a tape, runs
// backward and applies gradients back here.
struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
};

class Optimizer {
public:
    virtual ~Optimizer() = default;

    void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) {
        if (params.size() != grads.size())
            throw TensorError("optimizer step: " + std::to_string(params.size()) + " params, " +
                              std::to_string(grads.size()) + " grads");
        for (std::size_t i = 0; i < params.size(); ++i) {
            const ParamRef& p = params[i];
            if (!p.tensor->same_shape(grads[i]))
                throw TensorError("optimizer step: grad shape " + grads[i].shape_str() +
                                  " for param " + p.name + " of shape " + p.tensor->shape_str());
            if (!grads[i].all_finite())
                throw NumericError("non-finite gradient for parameter " + p.name);
            apply(p, grads[i]);
        }
    }

    // Serializable per-parameter state plus step counters.
    struct Slot {
        Tensor m; // first moment / running square average
        Tensor v;
        long t = 0;
    };
    std::unordered_map<std::string, Slot>& slots() { return slots_; }
    const std::unordered_map<std::string, Slot>& slots() const { return slots_; }

protected:
    virtual void apply(const ParamRef& p, const Tensor& g) = 0;
    std::unordered_map<std::string, Slot> slots_;
};

// Adam with bias correction.
class Adam : public Optimizer {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    double lr() const { return lr_; }

protected:
    void apply(const ParamRef& p, const Tensor& g) override {
        Slot& s = slots_[p.name];
        if (s.m.size() == 0) {
            s.m = Tensor(g.rows, g.cols);
            s.v = Tensor(g.rows, g.cols);
        }
        s.t += 1;
        double c1 = 1.0 - std::pow(b1_, static_cast<double>(s.t));
        double c2 = 1.0 - std::pow(b2_, static_cast<double>(s.t));
        for (std::size_t k = 0; k < g.data.size(); ++k) {
            double gk = g.data[k];
            s.m.data[k] = b1_ * s.m.data[k] + (1.0 - b1_) * gk;
            s.v.data[k] = b2_ * s.v.data[k] + (1.0 - b2_) * gk * gk;
            double mhat = s.m.data[k] / c1;
            double vhat = s.v.data[k] / c2;
            p.tensor->data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
};

class RmsProp : public Optimizer {
public:
    explicit RmsProp(double lr, double decay = 0.9, double eps = 1e-8)
        : lr_(lr), decay_(decay), eps_(eps) {}

    double lr() const { return lr_; }

protected:
    void apply(const ParamRef& p, const Tensor& g) override {
        Slot& s = slots_[p.name];
        if (s.v.size() == 0) s.v = Tensor(g.rows, g.cols);
        s.t += 1;
        for (std::size_t k = 0; k < g.data.size(); ++k) {
            double gk = g.data[k];
            s.v.data[k] = decay_ * s.v.data[k] + (1.0 - decay_) * gk * gk;
            p.tensor->data[k] -= lr_ * gk / (std::sqrt(s.v.data[k]) + eps_);
        }
    }

private:
    double lr_, decay_, eps_;
};

// Clamp every element into [-c, c]. Idempotent.
inline void clip_weights(const std::vector<ParamRef>& params, double c) {
    if (c <= 0.0) throw ValidationError("clip_weights: bound must be positive");
    for (const ParamRef& p : params)
        for (double& v : p.tensor->data) v = v < -c ? -c : (v > c ? c : v);
}

}  // namespace dagsynth
