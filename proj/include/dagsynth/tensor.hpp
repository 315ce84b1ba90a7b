#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dagsynth/rng.hpp"

namespace dagsynth {

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-byte-aligned storage for everything Eigen maps. Keeping every base
// pointer on the same alignment makes vectorized kernels take the same code
// path on every call, so results are bit-reproducible across reruns instead
// of drifting by an ulp with the allocator's mood.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t align{64};

    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), align)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, align); }

    template <class U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
};

using AlignedVec = std::vector<double, AlignedAlloc<double>>;

// Dense row-major matrix of doubles. Rows index batch samples, columns index
// features. Scalars are represented as 1x1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    AlignedVec data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    static Tensor from_rows(std::size_t r, std::size_t c, std::vector<double> values) {
        if (values.size() != r * c)
            throw TensorError("from_rows: " + std::to_string(values.size()) + " values for " +
                              std::to_string(r) + "x" + std::to_string(c));
        Tensor t;
        t.rows = r;
        t.cols = c;
        t.data.assign(values.begin(), values.end());
        return t;
    }

    // Glorot-style uniform init over [-s, s], s = sqrt(6 / (fan_in + fan_out)).
    static Tensor glorot(std::size_t r, std::size_t c, Rng& rng) {
        Tensor t(r, c);
        double s = std::sqrt(6.0 / static_cast<double>(r + c));
        for (double& v : t.data) v = rng.uniform(-s, s);
        return t;
    }

    static Tensor randn(std::size_t r, std::size_t c, Rng& rng) {
        Tensor t(r, c);
        for (double& v : t.data) v = rng.normal();
        return t;
    }

    std::size_t size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double item() const {
        if (size() != 1) throw TensorError("item: tensor is " + shape_str() + ", not scalar");
        return data[0];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_msg(const char* op, const Tensor& a, const Tensor& b) {
    return std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str();
}

}  // namespace dagsynth
