#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dagsynth/rng.hpp"
#include "dagsynth/tensor.hpp"

namespace dagsynth {

// Fitted per-column mixture used by the continuous encoding (Eq. 20-style
// normalization with scale divisor delta).
struct MixtureModel {
    std::size_t n_components = 0;
    std::vector<double> means;
    std::vector<double> sigmas;
    std::vector<double> weights;
    double delta = 2.0;

    // Posterior responsibilities of x under the point-estimate mixture.
    std::vector<double> posterior(double x) const {
        std::vector<double> lp(n_components);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n_components; ++k) {
            double s = sigmas[k];
            double z = (x - means[k]) / s;
            lp[k] = std::log(weights[k]) - std::log(s) - 0.5 * z * z;
            mx = std::max(mx, lp[k]);
        }
        double total = 0.0;
        for (double& v : lp) {
            v = std::exp(v - mx);
            total += v;
        }
        for (double& v : lp) v /= total;
        return lp;
    }
};

namespace detail {

inline double digamma(double x) {
    // recurrence to push the argument past 6, then the asymptotic series
    double r = 0.0;
    while (x < 6.0) {
        r -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    r += std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return r;
}

// One-dimensional variational Bayesian Gaussian mixture: Dirichlet prior on
// weights, Normal-Gamma on (mean, precision). Extra components collapse to
// negligible weight on their own, which Algorithm-2-style pruning relies on.
class VbGmm {
public:
    VbGmm(const std::vector<double>& x, std::size_t K, Rng& rng) : K_(K) {
        std::size_t n = x.size();
        if (n == 0) throw ValidationError("mixture fit: empty value list");
        if (K_ == 0) throw ValidationError("mixture fit: zero components");
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        m0_ = mean;
        b0_ = std::max(var, 1e-12);
        alpha0_ = 1.0 / static_cast<double>(K_);

        std::vector<double> centers = kmeanspp_centers(x, rng);
        alpha_.assign(K_, 0.0);
        beta_.assign(K_, 0.0);
        m_ = centers;
        a_.assign(K_, 0.0);
        b_.assign(K_, 0.0);

        // hard assignment to the nearest center seeds the first M-step
        std::vector<double> r(n * K_, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = std::fabs(x[i] - centers[0]);
            for (std::size_t k = 1; k < K_; ++k) {
                double d = std::fabs(x[i] - centers[k]);
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            r[i * K_ + best] = 1.0;
        }
        m_step(x, r);

        double prev_ll = -std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 200; ++iter) {
            e_step(x, r);
            m_step(x, r);
            double ll = log_likelihood(x);
            if (std::isfinite(prev_ll) &&
                std::fabs(ll - prev_ll) < 1e-6 * std::max(1.0, std::fabs(prev_ll)))
                break;
            prev_ll = ll;
        }
    }

    std::size_t n_components() const { return K_; }

    std::vector<double> responsibilities(double x) const {
        std::vector<double> lp(K_);
        double asum = 0.0;
        for (double a : alpha_) asum += a;
        double dg_asum = digamma(asum);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K_; ++k) {
            double d = x - m_[k];
            lp[k] = digamma(alpha_[k]) - dg_asum + 0.5 * (digamma(a_[k]) - std::log(b_[k])) -
                    0.5 * (1.0 / beta_[k] + (a_[k] / b_[k]) * d * d);
            mx = std::max(mx, lp[k]);
        }
        double total = 0.0;
        for (double& v : lp) {
            v = std::exp(v - mx);
            total += v;
        }
        for (double& v : lp) v /= total;
        return lp;
    }

    std::size_t predict(double x) const {
        auto r = responsibilities(x);
        return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }

    double weight(std::size_t k) const {
        double asum = 0.0;
        for (double a : alpha_) asum += a;
        return alpha_[k] / asum;
    }
    double mean(std::size_t k) const { return m_[k]; }
    double sigma(std::size_t k) const { return std::max(std::sqrt(b_[k] / a_[k]), 1e-6); }

private:
    std::size_t K_;
    double m0_ = 0.0, b0_ = 1.0, alpha0_ = 1.0, beta0_ = 1.0, a0_ = 1.0;
    std::vector<double> alpha_, beta_, m_, a_, b_;

    std::vector<double> kmeanspp_centers(const std::vector<double>& x, Rng& rng) const {
        std::size_t n = x.size();
        std::vector<double> centers;
        centers.push_back(x[rng.index(n)]);
        std::vector<double> d2(n);
        while (centers.size() < K_) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
                d2[i] = best;
                total += best;
            }
            centers.push_back(total > 0.0 ? x[rng.categorical(d2)] : x[rng.index(n)]);
        }
        return centers;
    }

    void e_step(const std::vector<double>& x, std::vector<double>& r) const {
        std::size_t n = x.size();
        double asum = 0.0;
        for (double a : alpha_) asum += a;
        double dg_asum = digamma(asum);
        std::vector<double> base(K_), prec(K_);
        for (std::size_t k = 0; k < K_; ++k) {
            base[k] = digamma(alpha_[k]) - dg_asum + 0.5 * (digamma(a_[k]) - std::log(b_[k])) -
                      0.5 / beta_[k];
            prec[k] = a_[k] / b_[k];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K_; ++k) {
                double d = x[i] - m_[k];
                double lp = base[k] - 0.5 * prec[k] * d * d;
                r[i * K_ + k] = lp;
                mx = std::max(mx, lp);
            }
            double total = 0.0;
            for (std::size_t k = 0; k < K_; ++k) {
                double v = std::exp(r[i * K_ + k] - mx);
                r[i * K_ + k] = v;
                total += v;
            }
            for (std::size_t k = 0; k < K_; ++k) r[i * K_ + k] /= total;
        }
    }

    void m_step(const std::vector<double>& x, const std::vector<double>& r) {
        std::size_t n = x.size();
        for (std::size_t k = 0; k < K_; ++k) {
            double Nk = 0.0, xbar = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                Nk += r[i * K_ + k];
                xbar += r[i * K_ + k] * x[i];
            }
            xbar = Nk > 1e-12 ? xbar / Nk : m0_;
            double Sk = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = x[i] - xbar;
                Sk += r[i * K_ + k] * d * d;
            }
            Sk = Nk > 1e-12 ? Sk / Nk : 0.0;
            alpha_[k] = alpha0_ + Nk;
            beta_[k] = beta0_ + Nk;
            m_[k] = (beta0_ * m0_ + Nk * xbar) / beta_[k];
            a_[k] = a0_ + 0.5 * Nk;
            b_[k] = b0_ + 0.5 * (Nk * Sk + beta0_ * Nk * (xbar - m0_) * (xbar - m0_) / (beta0_ + Nk));
        }
    }

    double log_likelihood(const std::vector<double>& x) const {
        double asum = 0.0;
        for (double a : alpha_) asum += a;
        double ll = 0.0;
        for (double v : x) {
            double mx = -std::numeric_limits<double>::infinity();
            std::vector<double> lp(K_);
            for (std::size_t k = 0; k < K_; ++k) {
                double s = sigma(k);
                double z = (v - m_[k]) / s;
                lp[k] = std::log(alpha_[k] / asum) - std::log(s) - 0.5 * z * z;
                mx = std::max(mx, lp[k]);
            }
            double acc = 0.0;
            for (double l : lp) acc += std::exp(l - mx);
            ll += mx + std::log(acc);
        }
        return ll / static_cast<double>(x.size());
    }
};

inline std::vector<double> sample_without_replacement(const std::vector<double>& values,
                                                      std::size_t m, Rng& rng) {
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<double> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(values[idx[i]]);
    }
    return out;
}

}  // namespace detail

// Component selection by the sample-fit-prune loop, then a full-column refit.
// N_m starts at min(10, #distinct) and only ever shrinks, so the loop ends.
inline MixtureModel fit_mixture(const std::vector<double>& values, std::uint64_t seed) {
    if (values.empty()) throw ValidationError("fit_mixture: empty column");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("fit_mixture: non-finite value in column");

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;

    Rng rng(seed);
    std::size_t n_m = std::min<std::size_t>(10, distinct);
    while (true) {
        std::size_t sample_size = std::min<std::size_t>(2000, values.size());
        std::vector<double> s = detail::sample_without_replacement(values, sample_size, rng);
        detail::VbGmm fit(s, n_m, rng);
        std::vector<bool> predicted(n_m, false);
        for (double v : s) predicted[fit.predict(v)] = true;
        std::size_t n_pred = 0;
        for (bool p : predicted) n_pred += p ? 1 : 0;
        std::size_t n_weights = 0;
        for (std::size_t k = 0; k < n_m; ++k) n_weights += fit.weight(k) >= 0.01 ? 1 : 0;
        if (n_pred < n_m || n_weights < n_m)
            n_m = std::max<std::size_t>(1, std::min(n_pred, n_weights));
        else
            break;
    }

    detail::VbGmm full(values, n_m, rng);
    MixtureModel model;
    model.n_components = n_m;
    model.delta = 2.0;
    double wsum = 0.0;
    for (std::size_t k = 0; k < n_m; ++k) {
        model.means.push_back(full.mean(k));
        model.sigmas.push_back(full.sigma(k));
        model.weights.push_back(full.weight(k));
        wsum += full.weight(k);
    }
    for (double& w : model.weights) w /= wsum;
    return model;
}

}  // namespace dagsynth
