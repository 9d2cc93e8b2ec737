#include "stresskit/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

// Scalar reference kernels. These define the semantics the SIMD variants are
// equivalence-tested against; keep the loop/reduction order explicit.

namespace stresskit::kernels {
namespace {

template <typename T>
void matmul_nn_s(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Fixed reduction order shared with the AVX2 dot: four interleaved partial
// sums combined as (s0+s1)+(s2+s3), then the remainder appended sequentially.
template <typename T>
T dot_s(const T* a, const T* b, std::size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    T s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
T sum_s(const T* x, std::size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i];
        s1 += x[i + 1];
        s2 += x[i + 2];
        s3 += x[i + 3];
    }
    T s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += x[i];
    return s;
}

template <typename T>
void matmul_nt_s(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            T v = dot_s(arow, b + static_cast<std::size_t>(j) * k, static_cast<std::size_t>(k));
            crow[j] = acc ? crow[j] + v : v;
        }
    }
}

template <typename T>
void matmul_tn_s(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(k) * n, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        const T* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            T av = arow[p];
            T* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void add_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void axpy_s(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_s(T alpha, T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <typename T>
void conv1d_dw_s(const T* x, const T* w, const T* bias, T* out, int t_len, int c, int k, bool acc) {
    const int half = k / 2;
    if (!acc) std::fill(out, out + static_cast<std::size_t>(t_len) * c, T(0));
    if (bias) {
        for (int t = 0; t < t_len; ++t) {
            T* orow = out + static_cast<std::size_t>(t) * c;
            for (int ch = 0; ch < c; ++ch) orow[ch] += bias[ch];
        }
    }
    for (int t = 0; t < t_len; ++t) {
        T* orow = out + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;  // zero padding
            const T* xrow = x + static_cast<std::size_t>(src) * c;
            for (int ch = 0; ch < c; ++ch) orow[ch] += xrow[ch] * w[static_cast<std::size_t>(ch) * k + j];
        }
    }
}

template <typename T>
void conv1d_dw_grad_x_s(const T* dout, const T* w, T* dx, int t_len, int c, int k) {
    const int half = k / 2;
    for (int t = 0; t < t_len; ++t) {
        T* drow = dx + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t - j + half;
            if (src < 0 || src >= t_len) continue;
            const T* grow = dout + static_cast<std::size_t>(src) * c;
            for (int ch = 0; ch < c; ++ch) drow[ch] += grow[ch] * w[static_cast<std::size_t>(ch) * k + j];
        }
    }
}

template <typename T>
void conv1d_dw_grad_w_s(const T* dout, const T* x, T* dw, T* db, int t_len, int c, int k) {
    const int half = k / 2;
    for (int t = 0; t < t_len; ++t) {
        const T* grow = dout + static_cast<std::size_t>(t) * c;
        if (db) {
            for (int ch = 0; ch < c; ++ch) db[ch] += grow[ch];
        }
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;
            const T* xrow = x + static_cast<std::size_t>(src) * c;
            for (int ch = 0; ch < c; ++ch) dw[static_cast<std::size_t>(ch) * k + j] += grow[ch] * xrow[ch];
        }
    }
}

template <typename T>
Ops<T> make_scalar_ops() {
    Ops<T> t;
    t.matmul_nn = &matmul_nn_s<T>;
    t.matmul_nt = &matmul_nt_s<T>;
    t.matmul_tn = &matmul_tn_s<T>;
    t.add = &add_s<T>;
    t.sub = &sub_s<T>;
    t.mul = &mul_s<T>;
    t.axpy = &axpy_s<T>;
    t.scale = &scale_s<T>;
    t.dot = &dot_s<T>;
    t.sum = &sum_s<T>;
    t.conv1d_dw = &conv1d_dw_s<T>;
    t.conv1d_dw_grad_x = &conv1d_dw_grad_x_s<T>;
    t.conv1d_dw_grad_w = &conv1d_dw_grad_w_s<T>;
    return t;
}

}  // namespace

const Ops<float>& scalar_ops_f32() {
    static const Ops<float> t = make_scalar_ops<float>();
    return t;
}

const Ops<double>& scalar_ops_f64() {
    static const Ops<double> t = make_scalar_ops<double>();
    return t;
}

}  // namespace stresskit::kernels
