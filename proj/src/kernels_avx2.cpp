// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma in its own TU; the
// dispatcher only hands these out when CPUID reports support. Reduction
// orders mirror the scalar reference (4 interleaved partials for dot/sum),
// so scalar vs AVX2 differences stay within FMA rounding.

#include "stresskit/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <vector>

namespace stresskit::kernels {
namespace {

// ---------------------------------------------------------------- double ---

inline double hsum4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    // fixed order: (l0+l1) + (h0+h1)
    __m128d l = _mm_hadd_pd(lo, lo);
    __m128d h = _mm_hadd_pd(hi, hi);
    return _mm_cvtsd_f64(_mm_add_sd(l, h));
}

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
    return _mm_cvtss_f32(s);
}

void matmul_nn_d(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            __m256d av = _mm256_set1_pd(arow[p]);
            const double* brow = b + static_cast<std::size_t>(p) * n;
            int j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                __m256d c1 = _mm256_loadu_pd(crow + j + 4);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + 4), c1);
                _mm256_storeu_pd(crow + j, c0);
                _mm256_storeu_pd(crow + j + 4, c1);
            }
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            double avs = arow[p];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

double dot_d(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double s = hsum4(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_d(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum4(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void matmul_nt_d(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double v = dot_d(arow, b + static_cast<std::size_t>(j) * k, static_cast<std::size_t>(k));
            crow[j] = acc ? crow[j] + v : v;
        }
    }
}

void matmul_tn_d(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            __m256d av = _mm256_set1_pd(arow[p]);
            double* crow = c + static_cast<std::size_t>(p) * n;
            int j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            double avs = arow[p];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

void add_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_d(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_d(double alpha, const double* x, double* y, std::size_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_d(double alpha, double* x, std::size_t n) {
    __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

// Depthwise conv vectorizes across channels; weights are transposed to
// tap-major once per call so the inner loads are contiguous.
void conv1d_dw_d(const double* x, const double* w, const double* bias, double* out,
                 int t_len, int c, int k, bool acc) {
    const int half = k / 2;
    std::vector<double> wt(static_cast<std::size_t>(k) * c);
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) wt[static_cast<std::size_t>(j) * c + ch] = w[static_cast<std::size_t>(ch) * k + j];

    if (!acc) std::fill(out, out + static_cast<std::size_t>(t_len) * c, 0.0);
    if (bias) {
        for (int t = 0; t < t_len; ++t) {
            double* orow = out + static_cast<std::size_t>(t) * c;
            int ch = 0;
            for (; ch + 4 <= c; ch += 4)
                _mm256_storeu_pd(orow + ch, _mm256_add_pd(_mm256_loadu_pd(orow + ch), _mm256_loadu_pd(bias + ch)));
            for (; ch < c; ++ch) orow[ch] += bias[ch];
        }
    }
    for (int t = 0; t < t_len; ++t) {
        double* orow = out + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;
            const double* xrow = x + static_cast<std::size_t>(src) * c;
            const double* wrow = wt.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 4 <= c; ch += 4) {
                __m256d o = _mm256_loadu_pd(orow + ch);
                o = _mm256_fmadd_pd(_mm256_loadu_pd(xrow + ch), _mm256_loadu_pd(wrow + ch), o);
                _mm256_storeu_pd(orow + ch, o);
            }
            for (; ch < c; ++ch) orow[ch] += xrow[ch] * wrow[ch];
        }
    }
}

void conv1d_dw_grad_x_d(const double* dout, const double* w, double* dx, int t_len, int c, int k) {
    const int half = k / 2;
    std::vector<double> wt(static_cast<std::size_t>(k) * c);
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) wt[static_cast<std::size_t>(j) * c + ch] = w[static_cast<std::size_t>(ch) * k + j];

    for (int t = 0; t < t_len; ++t) {
        double* drow = dx + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t - j + half;
            if (src < 0 || src >= t_len) continue;
            const double* grow = dout + static_cast<std::size_t>(src) * c;
            const double* wrow = wt.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 4 <= c; ch += 4) {
                __m256d d = _mm256_loadu_pd(drow + ch);
                d = _mm256_fmadd_pd(_mm256_loadu_pd(grow + ch), _mm256_loadu_pd(wrow + ch), d);
                _mm256_storeu_pd(drow + ch, d);
            }
            for (; ch < c; ++ch) drow[ch] += grow[ch] * wrow[ch];
        }
    }
}

void conv1d_dw_grad_w_d(const double* dout, const double* x, double* dw, double* db,
                        int t_len, int c, int k) {
    const int half = k / 2;
    std::vector<double> scratch(static_cast<std::size_t>(k) * c, 0.0);
    for (int t = 0; t < t_len; ++t) {
        const double* grow = dout + static_cast<std::size_t>(t) * c;
        if (db) {
            int ch = 0;
            for (; ch + 4 <= c; ch += 4)
                _mm256_storeu_pd(db + ch, _mm256_add_pd(_mm256_loadu_pd(db + ch), _mm256_loadu_pd(grow + ch)));
            for (; ch < c; ++ch) db[ch] += grow[ch];
        }
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;
            const double* xrow = x + static_cast<std::size_t>(src) * c;
            double* srow = scratch.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 4 <= c; ch += 4) {
                __m256d s = _mm256_loadu_pd(srow + ch);
                s = _mm256_fmadd_pd(_mm256_loadu_pd(grow + ch), _mm256_loadu_pd(xrow + ch), s);
                _mm256_storeu_pd(srow + ch, s);
            }
            for (; ch < c; ++ch) srow[ch] += grow[ch] * xrow[ch];
        }
    }
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) dw[static_cast<std::size_t>(ch) * k + j] += scratch[static_cast<std::size_t>(j) * c + ch];
}

// ----------------------------------------------------------------- float ---

void matmul_nn_f(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            __m256 av = _mm256_set1_ps(arow[p]);
            const float* brow = b + static_cast<std::size_t>(p) * n;
            int j = 0;
            for (; j + 16 <= n; j += 16) {
                __m256 c0 = _mm256_loadu_ps(crow + j);
                __m256 c1 = _mm256_loadu_ps(crow + j + 8);
                c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), c0);
                c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j + 8), c1);
                _mm256_storeu_ps(crow + j, c0);
                _mm256_storeu_ps(crow + j + 8, c1);
            }
            for (; j + 8 <= n; j += 8) {
                __m256 c0 = _mm256_loadu_ps(crow + j);
                c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), c0);
                _mm256_storeu_ps(crow + j, c0);
            }
            float avs = arow[p];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

float dot_f(const float* a, const float* b, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float s = hsum8(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum_f(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void matmul_nt_f(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            float v = dot_f(arow, b + static_cast<std::size_t>(j) * k, static_cast<std::size_t>(k));
            crow[j] = acc ? crow[j] + v : v;
        }
    }
}

void matmul_tn_f(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    if (!acc) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0f);
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        const float* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            __m256 av = _mm256_set1_ps(arow[p]);
            float* crow = c + static_cast<std::size_t>(p) * n;
            int j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 c0 = _mm256_loadu_ps(crow + j);
                c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), c0);
                _mm256_storeu_ps(crow + j, c0);
            }
            float avs = arow[p];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

void add_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_f(float alpha, const float* x, float* y, std::size_t n) {
    __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_f(float alpha, float* x, std::size_t n) {
    __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void conv1d_dw_f(const float* x, const float* w, const float* bias, float* out,
                 int t_len, int c, int k, bool acc) {
    const int half = k / 2;
    std::vector<float> wt(static_cast<std::size_t>(k) * c);
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) wt[static_cast<std::size_t>(j) * c + ch] = w[static_cast<std::size_t>(ch) * k + j];

    if (!acc) std::fill(out, out + static_cast<std::size_t>(t_len) * c, 0.0f);
    if (bias) {
        for (int t = 0; t < t_len; ++t) {
            float* orow = out + static_cast<std::size_t>(t) * c;
            int ch = 0;
            for (; ch + 8 <= c; ch += 8)
                _mm256_storeu_ps(orow + ch, _mm256_add_ps(_mm256_loadu_ps(orow + ch), _mm256_loadu_ps(bias + ch)));
            for (; ch < c; ++ch) orow[ch] += bias[ch];
        }
    }
    for (int t = 0; t < t_len; ++t) {
        float* orow = out + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;
            const float* xrow = x + static_cast<std::size_t>(src) * c;
            const float* wrow = wt.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 8 <= c; ch += 8) {
                __m256 o = _mm256_loadu_ps(orow + ch);
                o = _mm256_fmadd_ps(_mm256_loadu_ps(xrow + ch), _mm256_loadu_ps(wrow + ch), o);
                _mm256_storeu_ps(orow + ch, o);
            }
            for (; ch < c; ++ch) orow[ch] += xrow[ch] * wrow[ch];
        }
    }
}

void conv1d_dw_grad_x_f(const float* dout, const float* w, float* dx, int t_len, int c, int k) {
    const int half = k / 2;
    std::vector<float> wt(static_cast<std::size_t>(k) * c);
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) wt[static_cast<std::size_t>(j) * c + ch] = w[static_cast<std::size_t>(ch) * k + j];
    for (int t = 0; t < t_len; ++t) {
        float* drow = dx + static_cast<std::size_t>(t) * c;
        for (int j = 0; j < k; ++j) {
            int src = t - j + half;
            if (src < 0 || src >= t_len) continue;
            const float* grow = dout + static_cast<std::size_t>(src) * c;
            const float* wrow = wt.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 8 <= c; ch += 8) {
                __m256 d = _mm256_loadu_ps(drow + ch);
                d = _mm256_fmadd_ps(_mm256_loadu_ps(grow + ch), _mm256_loadu_ps(wrow + ch), d);
                _mm256_storeu_ps(drow + ch, d);
            }
            for (; ch < c; ++ch) drow[ch] += grow[ch] * wrow[ch];
        }
    }
}

void conv1d_dw_grad_w_f(const float* dout, const float* x, float* dw, float* db,
                        int t_len, int c, int k) {
    const int half = k / 2;
    std::vector<float> scratch(static_cast<std::size_t>(k) * c, 0.0f);
    for (int t = 0; t < t_len; ++t) {
        const float* grow = dout + static_cast<std::size_t>(t) * c;
        if (db) {
            int ch = 0;
            for (; ch + 8 <= c; ch += 8)
                _mm256_storeu_ps(db + ch, _mm256_add_ps(_mm256_loadu_ps(db + ch), _mm256_loadu_ps(grow + ch)));
            for (; ch < c; ++ch) db[ch] += grow[ch];
        }
        for (int j = 0; j < k; ++j) {
            int src = t + j - half;
            if (src < 0 || src >= t_len) continue;
            const float* xrow = x + static_cast<std::size_t>(src) * c;
            float* srow = scratch.data() + static_cast<std::size_t>(j) * c;
            int ch = 0;
            for (; ch + 8 <= c; ch += 8) {
                __m256 s = _mm256_loadu_ps(srow + ch);
                s = _mm256_fmadd_ps(_mm256_loadu_ps(grow + ch), _mm256_loadu_ps(xrow + ch), s);
                _mm256_storeu_ps(srow + ch, s);
            }
            for (; ch < c; ++ch) srow[ch] += grow[ch] * xrow[ch];
        }
    }
    for (int ch = 0; ch < c; ++ch)
        for (int j = 0; j < k; ++j) dw[static_cast<std::size_t>(ch) * k + j] += scratch[static_cast<std::size_t>(j) * c + ch];
}

}  // namespace

const Ops<double>* avx2_ops_f64() {
    static const Ops<double> t = [] {
        Ops<double> o;
        o.matmul_nn = &matmul_nn_d;
        o.matmul_nt = &matmul_nt_d;
        o.matmul_tn = &matmul_tn_d;
        o.add = &add_d;
        o.sub = &sub_d;
        o.mul = &mul_d;
        o.axpy = &axpy_d;
        o.scale = &scale_d;
        o.dot = &dot_d;
        o.sum = &sum_d;
        o.conv1d_dw = &conv1d_dw_d;
        o.conv1d_dw_grad_x = &conv1d_dw_grad_x_d;
        o.conv1d_dw_grad_w = &conv1d_dw_grad_w_d;
        return o;
    }();
    return &t;
}

const Ops<float>* avx2_ops_f32() {
    static const Ops<float> t = [] {
        Ops<float> o;
        o.matmul_nn = &matmul_nn_f;
        o.matmul_nt = &matmul_nt_f;
        o.matmul_tn = &matmul_tn_f;
        o.add = &add_f;
        o.sub = &sub_f;
        o.mul = &mul_f;
        o.axpy = &axpy_f;
        o.scale = &scale_f;
        o.dot = &dot_f;
        o.sum = &sum_f;
        o.conv1d_dw = &conv1d_dw_f;
        o.conv1d_dw_grad_x = &conv1d_dw_grad_x_f;
        o.conv1d_dw_grad_w = &conv1d_dw_grad_w_f;
        return o;
    }();
    return &t;
}

}  // namespace stresskit::kernels

#else  // !(__AVX2__ && __FMA__)

namespace stresskit::kernels {
const Ops<double>* avx2_ops_f64() { return nullptr; }
const Ops<float>* avx2_ops_f32() { return nullptr; }
}  // namespace stresskit::kernels

#endif
#endif  // x86_64
