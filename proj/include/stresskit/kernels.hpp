#pragma once

#include <cstddef>
#include <string>

namespace stresskit::kernels {

// Dense inner-loop kernels behind the tensor core. Every kernel has a scalar
// reference implementation and (on x86) an AVX2 variant; the backend is picked
// once at runtime from CPUID, overridable via the STRESSKIT_KERNELS env var
// ("scalar" | "avx2") or set_backend(). Within one backend all reduction
// orders are fixed, so results are bit-reproducible run to run.
enum class Backend { scalar, avx2 };

Backend detect_backend();         // CPUID + env override; computed once
Backend active_backend();
void set_backend(Backend b);      // throws ConfigError if unsupported on this CPU
const char* backend_name(Backend b);
bool cpu_supports_avx2();

// All matrices row-major, contiguous. `acc` accumulates into the output
// instead of overwriting it.
template <typename T>
struct Ops {
    // c[m x n] (+)= a[m x k] . b[k x n]
    void (*matmul_nn)(const T* a, const T* b, T* c, int m, int k, int n, bool acc);
    // c[m x n] (+)= a[m x k] . b[n x k]^T
    void (*matmul_nt)(const T* a, const T* b, T* c, int m, int k, int n, bool acc);
    // c[k x n] (+)= a[m x k]^T . b[m x n]
    void (*matmul_tn)(const T* a, const T* b, T* c, int m, int k, int n, bool acc);

    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    void (*sub)(const T* a, const T* b, T* out, std::size_t n);
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n);  // y += alpha*x
    void (*scale)(T alpha, T* x, std::size_t n);
    T (*dot)(const T* a, const T* b, std::size_t n);
    T (*sum)(const T* x, std::size_t n);

    // Depthwise same-padded 1-D convolution over a T_len x C row-major signal.
    // w is C x k (one kernel per channel), bias length C (may be null).
    //   out[t,c] (+)= bias[c] + sum_j x[t + j - k/2, c] * w[c,j]
    void (*conv1d_dw)(const T* x, const T* w, const T* bias, T* out,
                      int t_len, int c, int k, bool acc);
    // dx[t,c] += sum_j dout[t - j + k/2, c] * w[c,j]
    void (*conv1d_dw_grad_x)(const T* dout, const T* w, T* dx, int t_len, int c, int k);
    // dw[c,j] += sum_t dout[t,c] * x[t + j - k/2, c];  db[c] += sum_t dout[t,c]
    void (*conv1d_dw_grad_w)(const T* dout, const T* x, T* dw, T* db, int t_len, int c, int k);
};

template <typename T>
const Ops<T>& ops();

const Ops<float>& scalar_ops_f32();
const Ops<double>& scalar_ops_f64();
#if defined(__x86_64__) || defined(_M_X64)
const Ops<float>* avx2_ops_f32();   // null when not compiled in
const Ops<double>* avx2_ops_f64();
#endif

}  // namespace stresskit::kernels
