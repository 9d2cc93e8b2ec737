#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "stresskit/errors.hpp"

namespace stresskit::nd {

// Dense row-major tensor. Rank 1 or 2 covers everything in this project;
// batched sequences are kept as (B*T) x C with the block structure tracked by
// the ops that care.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape)) throw ShapeError("tensor data/shape mismatch");
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor row_vector(std::vector<T> d) {
        int n = static_cast<int>(d.size());
        return Tensor({1, n}, std::move(d));
    }
    static Tensor matrix(int r, int c, std::vector<T> d) { return Tensor({r, c}, std::move(d)); }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
    int cols() const { return rank() == 2 ? shape[1] : 1; }

    T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    T at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }
    T& operator[](std::size_t i) { return data[i]; }
    T operator[](std::size_t i) const { return data[i]; }

    const T* row_ptr(int i) const { return data.data() + static_cast<std::size_t>(i) * cols(); }
    T* row_ptr(int i) { return data.data() + static_cast<std::size_t>(i) * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Matrix = Tensor<double>;
using Vector = std::vector<double>;

}  // namespace stresskit::nd

namespace stresskit {
using nd::Matrix;
}
