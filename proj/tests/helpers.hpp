#pragma once

#include <functional>
#include <vector>

#include "dagsynth/ops.hpp"
#include "dagsynth/rng.hpp"
#include "dagsynth/tensor.hpp"

namespace testing_detail {

using dagsynth::Tape;
using dagsynth::Tensor;
using dagsynth::Var;

// Builds a scalar loss from parameter leaves placed on the given tape.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(t.param(p));
    return t.val(build(t, vars)).item();
}

// Central-difference gradient check. Relative error uses a floored
// denominator so near-zero gradients do not trip on FD roundoff.
inline double max_grad_rel_err(const LossBuilder& build, std::vector<Tensor> params,
                               double h = 1e-6, double floor_ = 1e-3) {
    Tape t;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(t.param(p));
    Var loss = build(t, vars);
    auto grads = t.backward(loss);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor analytic = t.grad_tensor(grads, vars[pi]);
        for (std::size_t k = 0; k < params[pi].data.size(); ++k) {
            double saved = params[pi].data[k];
            params[pi].data[k] = saved + h;
            double up = eval_loss(build, params);
            params[pi].data[k] = saved - h;
            double down = eval_loss(build, params);
            params[pi].data[k] = saved;
            double fd = (up - down) / (2.0 * h);
            double a = analytic.data[k];
            double err = std::fabs(a - fd) / std::max(floor_, std::fabs(a) + std::fabs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, dagsynth::Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace testing_detail
