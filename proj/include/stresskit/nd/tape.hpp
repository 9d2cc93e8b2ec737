#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stresskit/kernels.hpp"
#include "stresskit/nd/tensor.hpp"
#include "stresskit/rng.hpp"

namespace stresskit::nd {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Reverse-mode tape. Built define-by-run per training step; nodes are stored
// in construction (= topological) order and walked backwards. All heavy
// arithmetic goes through the kernels layer.
template <typename T>
class Tape {
public:
    using Id = int;

    Id constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

    Id leaf(Tensor<T> v, bool requires_grad = true) { return push(std::move(v), requires_grad, nullptr); }

    Id param(Parameter<T>& p) { return push(p.value, true, &p); }

    const Tensor<T>& value(Id id) const { return nodes_[id].value; }
    const Tensor<T>& grad(Id id) const { return nodes_[id].grad; }

    // ---- elementwise / linear algebra -------------------------------------

    Id matmul(Id a, Id b) {
        const auto& A = val(a);
        const auto& B = val(b);
        require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0],
                "matmul shapes " + A.shape_str() + " x " + B.shape_str());
        int m = A.shape[0], k = A.shape[1], n = B.shape[1];
        Tensor<T> out({m, n});
        kernels::ops<T>().matmul_nn(A.data.data(), B.data.data(), out.data.data(), m, k, n, false);
        Id id = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, b, m, k, n](Id self) {
                const auto& g = nodes_[self].grad;
                if (needs(a))
                    kernels::ops<T>().matmul_nt(g.data.data(), val(b).data.data(),
                                                grad_buf(a).data.data(), m, n, k, true);
                if (needs(b))
                    kernels::ops<T>().matmul_tn(val(a).data.data(), g.data.data(),
                                                grad_buf(b).data.data(), m, k, n, true);
            };
        }
        return id;
    }

    Id add(Id a, Id b) {
        require(val(a).same_shape(val(b)), "add shape mismatch");
        Tensor<T> out(val(a).shape);
        kernels::ops<T>().add(val(a).data.data(), val(b).data.data(), out.data.data(), out.numel());
        Id id = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, b](Id self) {
                const auto& g = nodes_[self].grad;
                if (needs(a)) kernels::ops<T>().axpy(T(1), g.data.data(), grad_buf(a).data.data(), g.numel());
                if (needs(b)) kernels::ops<T>().axpy(T(1), g.data.data(), grad_buf(b).data.data(), g.numel());
            };
        }
        return id;
    }

    Id sub(Id a, Id b) {
        require(val(a).same_shape(val(b)), "sub shape mismatch");
        Tensor<T> out(val(a).shape);
        kernels::ops<T>().sub(val(a).data.data(), val(b).data.data(), out.data.data(), out.numel());
        Id id = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, b](Id self) {
                const auto& g = nodes_[self].grad;
                if (needs(a)) kernels::ops<T>().axpy(T(1), g.data.data(), grad_buf(a).data.data(), g.numel());
                if (needs(b)) kernels::ops<T>().axpy(T(-1), g.data.data(), grad_buf(b).data.data(), g.numel());
            };
        }
        return id;
    }

    Id mul(Id a, Id b) {
        require(val(a).same_shape(val(b)), "mul shape mismatch");
        Tensor<T> out(val(a).shape);
        kernels::ops<T>().mul(val(a).data.data(), val(b).data.data(), out.data.data(), out.numel());
        Id id = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, b](Id self) {
                const auto& g = nodes_[self].grad;
                std::size_t n = g.numel();
                if (needs(a)) {
                    auto& da = grad_buf(a);
                    const auto& bv = val(b);
                    for (std::size_t i = 0; i < n; ++i) da.data[i] += g.data[i] * bv.data[i];
                }
                if (needs(b)) {
                    auto& db = grad_buf(b);
                    const auto& av = val(a);
                    for (std::size_t i = 0; i < n; ++i) db.data[i] += g.data[i] * av.data[i];
                }
            };
        }
        return id;
    }

    Id scale(Id a, T c) {
        Tensor<T> out = val(a);
        kernels::ops<T>().scale(c, out.data.data(), out.numel());
        Id id = push(std::move(out), needs(a), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, c](Id self) {
                const auto& g = nodes_[self].grad;
                kernels::ops<T>().axpy(c, g.data.data(), grad_buf(a).data.data(), g.numel());
            };
        }
        return id;
    }

    // out[i,:] = x[i,:] + bias (bias is a length-n or 1 x n tensor)
    Id add_row_bias(Id x, Id bias) {
        const auto& X = val(x);
        const auto& B = val(bias);
        require(X.rank() == 2 && static_cast<int>(B.numel()) == X.shape[1], "add_row_bias width");
        Tensor<T> out = X;
        int m = X.shape[0], n = X.shape[1];
        for (int i = 0; i < m; ++i)
            kernels::ops<T>().axpy(T(1), B.data.data(), out.row_ptr(i), static_cast<std::size_t>(n));
        Id id = push(std::move(out), needs(x) || needs(bias), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, bias, m, n](Id self) {
                const auto& g = nodes_[self].grad;
                if (needs(x)) kernels::ops<T>().axpy(T(1), g.data.data(), grad_buf(x).data.data(), g.numel());
                if (needs(bias)) {
                    auto& db = grad_buf(bias);
                    for (int i = 0; i < m; ++i)
                        kernels::ops<T>().axpy(T(1), g.row_ptr(i), db.data.data(), static_cast<std::size_t>(n));
                }
            };
        }
        return id;
    }

    Id relu(Id x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& y = nodes_[self].value;
                auto& dx = grad_buf(x);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (y.data[i] > T(0)) dx.data[i] += g.data[i];
            };
        }
        return id;
    }

    Id tanh_op(Id x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::tanh(v);
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& y = nodes_[self].value;
                auto& dx = grad_buf(x);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    dx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
            };
        }
        return id;
    }

    Id sigmoid(Id x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& y = nodes_[self].value;
                auto& dx = grad_buf(x);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    dx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
            };
        }
        return id;
    }

    // Row-wise stable softmax over the last dimension of a 2-D tensor.
    Id softmax_rows(Id x) {
        const auto& X = val(x);
        require(X.rank() == 2, "softmax_rows expects 2-D");
        Tensor<T> out = X;
        int m = X.shape[0], n = X.shape[1];
        for (int i = 0; i < m; ++i) {
            T* row = out.row_ptr(i);
            T mx = row[0];
            for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
            T s = 0;
            for (int j = 0; j < n; ++j) {
                row[j] = std::exp(row[j] - mx);
                s += row[j];
            }
            T inv = T(1) / s;
            for (int j = 0; j < n; ++j) row[j] *= inv;
        }
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, m, n](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& y = nodes_[self].value;
                auto& dx = grad_buf(x);
                for (int i = 0; i < m; ++i) {
                    const T* gr = g.row_ptr(i);
                    const T* yr = y.row_ptr(i);
                    T dotgy = kernels::ops<T>().dot(gr, yr, static_cast<std::size_t>(n));
                    T* dr = dx.row_ptr(i);
                    for (int j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dotgy);
                }
            };
        }
        return id;
    }

    // Per-row layer normalization with affine gain/bias (length n each).
    Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
        const auto& X = val(x);
        int m = X.shape[0], n = X.shape[1];
        require(static_cast<int>(val(gain).numel()) == n && static_cast<int>(val(bias).numel()) == n,
                "layer_norm affine width");
        Tensor<T> out({m, n});
        auto xhat = std::make_shared<Tensor<T>>(Tensor<T>({m, n}));
        auto inv_sd = std::make_shared<std::vector<T>>(m);
        const auto& G = val(gain);
        const auto& Bb = val(bias);
        for (int i = 0; i < m; ++i) {
            const T* row = X.row_ptr(i);
            T mean = kernels::ops<T>().sum(row, static_cast<std::size_t>(n)) / T(n);
            T var = 0;
            for (int j = 0; j < n; ++j) {
                T d = row[j] - mean;
                var += d * d;
            }
            var /= T(n);
            T isd = T(1) / std::sqrt(var + eps);
            (*inv_sd)[i] = isd;
            T* xh = xhat->row_ptr(i);
            T* o = out.row_ptr(i);
            for (int j = 0; j < n; ++j) {
                xh[j] = (row[j] - mean) * isd;
                o[j] = xh[j] * G.data[j] + Bb.data[j];
            }
        }
        Id id = push(std::move(out), needs(x) || needs(gain) || needs(bias), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, gain, bias, m, n, xhat, inv_sd](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& G = val(gain);
                for (int i = 0; i < m; ++i) {
                    const T* gr = g.row_ptr(i);
                    const T* xh = xhat->row_ptr(i);
                    if (needs(gain)) {
                        auto& dg = grad_buf(gain);
                        for (int j = 0; j < n; ++j) dg.data[j] += gr[j] * xh[j];
                    }
                    if (needs(bias)) {
                        auto& db = grad_buf(bias);
                        for (int j = 0; j < n; ++j) db.data[j] += gr[j];
                    }
                    if (needs(x)) {
                        // dxhat = g*gain; dx = isd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                        T sum_dxh = 0, sum_dxh_xh = 0;
                        for (int j = 0; j < n; ++j) {
                            T dxh = gr[j] * G.data[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[j];
                        }
                        T inv_n = T(1) / T(n);
                        T isd = (*inv_sd)[i];
                        T* dxr = grad_buf(x).row_ptr(i);
                        for (int j = 0; j < n; ++j) {
                            T dxh = gr[j] * G.data[j];
                            dxr[j] += isd * (dxh - sum_dxh * inv_n - xh[j] * sum_dxh_xh * inv_n);
                        }
                    }
                }
            };
        }
        return id;
    }

    // Depthwise same-padded conv over each block of `block` consecutive rows
    // (one block per window; no leakage across windows in a batch).
    Id depthwise_conv1d(Id x, Id w, Id bias, int block) {
        const auto& X = val(x);
        const auto& W = val(w);
        int rows = X.shape[0], c = X.shape[1];
        int k = W.shape[1];
        require(k % 2 == 1, "conv kernel must be odd");
        require(W.shape[0] == c, "conv weight channels");
        require(rows % block == 0, "conv rows not divisible by block");
        require(static_cast<int>(val(bias).numel()) == c, "conv bias width");
        int nblocks = rows / block;
        Tensor<T> out({rows, c});
        const auto& ops = kernels::ops<T>();
        for (int bi = 0; bi < nblocks; ++bi)
            ops.conv1d_dw(X.row_ptr(bi * block), W.data.data(), val(bias).data.data(),
                          out.row_ptr(bi * block), block, c, k, false);
        Id id = push(std::move(out), needs(x) || needs(w) || needs(bias), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, w, bias, block, c, k, nblocks](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& ops = kernels::ops<T>();
                for (int bi = 0; bi < nblocks; ++bi) {
                    const T* gblock = g.row_ptr(bi * block);
                    if (needs(x))
                        ops.conv1d_dw_grad_x(gblock, val(w).data.data(),
                                             grad_buf(x).row_ptr(bi * block), block, c, k);
                    if (needs(w) || needs(bias))
                        ops.conv1d_dw_grad_w(gblock, val(x).row_ptr(bi * block),
                                             grad_buf(w).data.data(),
                                             needs(bias) ? grad_buf(bias).data.data() : nullptr,
                                             block, c, k);
                }
            };
        }
        return id;
    }

    Id concat_cols(Id a, Id b) {
        const auto& A = val(a);
        const auto& B = val(b);
        require(A.rank() == 2 && B.rank() == 2 && A.shape[0] == B.shape[0], "concat_cols rows");
        int m = A.shape[0], na = A.shape[1], nb = B.shape[1];
        Tensor<T> out({m, na + nb});
        for (int i = 0; i < m; ++i) {
            std::copy(A.row_ptr(i), A.row_ptr(i) + na, out.row_ptr(i));
            std::copy(B.row_ptr(i), B.row_ptr(i) + nb, out.row_ptr(i) + na);
        }
        Id id = push(std::move(out), needs(a) || needs(b), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, b, m, na, nb](Id self) {
                const auto& g = nodes_[self].grad;
                for (int i = 0; i < m; ++i) {
                    if (needs(a))
                        kernels::ops<T>().axpy(T(1), g.row_ptr(i), grad_buf(a).row_ptr(i),
                                               static_cast<std::size_t>(na));
                    if (needs(b))
                        kernels::ops<T>().axpy(T(1), g.row_ptr(i) + na, grad_buf(b).row_ptr(i),
                                               static_cast<std::size_t>(nb));
                }
            };
        }
        return id;
    }

    // Inverted dropout; identity when not training or p == 0.
    Id dropout(Id x, T p, Rng& rng, bool training) {
        if (!training || p <= T(0)) return x;
        require(p < T(1), "dropout p must be < 1");
        const auto& X = val(x);
        auto mask = std::make_shared<std::vector<T>>(X.numel());
        T keep = T(1) - p;
        T inv_keep = T(1) / keep;
        Tensor<T> out = X;
        for (std::size_t i = 0; i < X.numel(); ++i) {
            T m = rng.uniform() < static_cast<double>(keep) ? inv_keep : T(0);
            (*mask)[i] = m;
            out.data[i] *= m;
        }
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, mask](Id self) {
                const auto& g = nodes_[self].grad;
                auto& dx = grad_buf(x);
                for (std::size_t i = 0; i < g.numel(); ++i) dx.data[i] += g.data[i] * (*mask)[i];
            };
        }
        return id;
    }

    // Multi-head attention scores: q,k are (B*T_q) x E and (B*T_k) x E with H
    // heads; output row ((b*H + h)*T_q + tq) holds the T_k scaled dot products.
    Id attn_scores(Id q, Id k, int batch, int t_q, int t_k, int heads) {
        const auto& Q = val(q);
        const auto& K = val(k);
        int e = Q.shape[1];
        require(K.shape[1] == e, "attn q/k width mismatch");
        require(e % heads == 0, "embed dim not divisible by heads");
        require(Q.shape[0] == batch * t_q && K.shape[0] == batch * t_k, "attn rows");
        int dk = e / heads;
        T inv_scale = T(1) / std::sqrt(static_cast<T>(dk));
        Tensor<T> out({batch * heads * t_q, t_k});
        std::vector<T> qh(static_cast<std::size_t>(t_q) * dk), kh(static_cast<std::size_t>(t_k) * dk);
        const auto& ops = kernels::ops<T>();
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                pack_head(Q, b * t_q, t_q, h * dk, dk, qh.data());
                pack_head(K, b * t_k, t_k, h * dk, dk, kh.data());
                T* orow = out.row_ptr((b * heads + h) * t_q);
                ops.matmul_nt(qh.data(), kh.data(), orow, t_q, dk, t_k, false);
                ops.scale(inv_scale, orow, static_cast<std::size_t>(t_q) * t_k);
            }
        }
        Id id = push(std::move(out), needs(q) || needs(k), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, q, k, batch, t_q, t_k, heads, dk, inv_scale](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& ops = kernels::ops<T>();
                std::vector<T> qh(static_cast<std::size_t>(t_q) * dk), kh(static_cast<std::size_t>(t_k) * dk);
                std::vector<T> dqh(static_cast<std::size_t>(t_q) * dk), dkh(static_cast<std::size_t>(t_k) * dk);
                std::vector<T> gs(static_cast<std::size_t>(t_q) * t_k);
                for (int b = 0; b < batch; ++b) {
                    for (int h = 0; h < heads; ++h) {
                        const T* grow = g.row_ptr((b * heads + h) * t_q);
                        std::copy(grow, grow + static_cast<std::size_t>(t_q) * t_k, gs.data());
                        ops.scale(inv_scale, gs.data(), gs.size());
                        if (needs(q)) {
                            pack_head(val(k), b * t_k, t_k, h * dk, dk, kh.data());
                            ops.matmul_nn(gs.data(), kh.data(), dqh.data(), t_q, t_k, dk, false);
                            unpack_head_add(grad_buf(q), b * t_q, t_q, h * dk, dk, dqh.data());
                        }
                        if (needs(k)) {
                            pack_head(val(q), b * t_q, t_q, h * dk, dk, qh.data());
                            ops.matmul_tn(gs.data(), qh.data(), dkh.data(), t_q, t_k, dk, false);
                            unpack_head_add(grad_buf(k), b * t_k, t_k, h * dk, dk, dkh.data());
                        }
                    }
                }
            };
        }
        return id;
    }

    // Applies attention weights ((B*H*T_q) x T_k) to values ((B*T_k) x E).
    Id attn_apply(Id w, Id v, int batch, int t_q, int t_k, int heads) {
        const auto& Wt = val(w);
        const auto& V = val(v);
        int e = V.shape[1];
        int dk = e / heads;
        require(Wt.shape[0] == batch * heads * t_q && Wt.shape[1] == t_k, "attn_apply weight shape");
        require(V.shape[0] == batch * t_k, "attn_apply value rows");
        Tensor<T> out({batch * t_q, e});
        std::vector<T> vh(static_cast<std::size_t>(t_k) * dk), oh(static_cast<std::size_t>(t_q) * dk);
        const auto& ops = kernels::ops<T>();
        for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < heads; ++h) {
                pack_head(V, b * t_k, t_k, h * dk, dk, vh.data());
                ops.matmul_nn(Wt.row_ptr((b * heads + h) * t_q), vh.data(), oh.data(), t_q, t_k, dk, false);
                for (int tq = 0; tq < t_q; ++tq)
                    std::copy(oh.data() + static_cast<std::size_t>(tq) * dk,
                              oh.data() + static_cast<std::size_t>(tq + 1) * dk,
                              out.row_ptr(b * t_q + tq) + h * dk);
            }
        }
        Id id = push(std::move(out), needs(w) || needs(v), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, w, v, batch, t_q, t_k, heads, dk](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& ops = kernels::ops<T>();
                std::vector<T> vh(static_cast<std::size_t>(t_k) * dk), goh(static_cast<std::size_t>(t_q) * dk);
                std::vector<T> dvh(static_cast<std::size_t>(t_k) * dk);
                for (int b = 0; b < batch; ++b) {
                    for (int h = 0; h < heads; ++h) {
                        pack_head(g, b * t_q, t_q, h * dk, dk, goh.data());
                        if (needs(w)) {
                            pack_head(val(v), b * t_k, t_k, h * dk, dk, vh.data());
                            ops.matmul_nt(goh.data(), vh.data(),
                                          grad_buf(w).row_ptr((b * heads + h) * t_q), t_q, dk, t_k, true);
                        }
                        if (needs(v)) {
                            ops.matmul_tn(val(w).row_ptr((b * heads + h) * t_q), goh.data(), dvh.data(),
                                          t_q, t_k, dk, false);
                            unpack_head_add(grad_buf(v), b * t_k, t_k, h * dk, dk, dvh.data());
                        }
                    }
                }
            };
        }
        return id;
    }

    // Softmax over consecutive blocks of `block` rows of an (m x 1) column.
    Id block_softmax_col(Id x, int block) {
        const auto& X = val(x);
        require(X.cols() == 1 && X.shape[0] % block == 0, "block_softmax_col shape");
        int nblocks = X.shape[0] / block;
        Tensor<T> out = X;
        for (int bi = 0; bi < nblocks; ++bi) {
            T* v = out.data.data() + static_cast<std::size_t>(bi) * block;
            T mx = v[0];
            for (int t = 1; t < block; ++t) mx = std::max(mx, v[t]);
            T s = 0;
            for (int t = 0; t < block; ++t) {
                v[t] = std::exp(v[t] - mx);
                s += v[t];
            }
            T inv = T(1) / s;
            for (int t = 0; t < block; ++t) v[t] *= inv;
        }
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, block, nblocks](Id self) {
                const auto& g = nodes_[self].grad;
                const auto& y = nodes_[self].value;
                auto& dx = grad_buf(x);
                for (int bi = 0; bi < nblocks; ++bi) {
                    std::size_t off = static_cast<std::size_t>(bi) * block;
                    T dotgy = 0;
                    for (int t = 0; t < block; ++t) dotgy += g.data[off + t] * y.data[off + t];
                    for (int t = 0; t < block; ++t)
                        dx.data[off + t] += y.data[off + t] * (g.data[off + t] - dotgy);
                }
            };
        }
        return id;
    }

    // Pooled h_b = sum_t a[b,t] * z[b,t,:] over blocks of `block` rows.
    Id block_weighted_sum(Id a, Id z, int block) {
        const auto& A = val(a);
        const auto& Z = val(z);
        require(A.cols() == 1 && A.shape[0] == Z.shape[0] && Z.shape[0] % block == 0,
                "block_weighted_sum shapes");
        int nblocks = Z.shape[0] / block;
        int e = Z.shape[1];
        Tensor<T> out({nblocks, e});
        for (int bi = 0; bi < nblocks; ++bi) {
            T* orow = out.row_ptr(bi);
            for (int t = 0; t < block; ++t) {
                int r = bi * block + t;
                kernels::ops<T>().axpy(A.data[r], Z.row_ptr(r), orow, static_cast<std::size_t>(e));
            }
        }
        Id id = push(std::move(out), needs(a) || needs(z), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, a, z, block, nblocks, e](Id self) {
                const auto& g = nodes_[self].grad;
                for (int bi = 0; bi < nblocks; ++bi) {
                    const T* grow = g.row_ptr(bi);
                    for (int t = 0; t < block; ++t) {
                        int r = bi * block + t;
                        if (needs(a))
                            grad_buf(a).data[r] +=
                                kernels::ops<T>().dot(grow, val(z).row_ptr(r), static_cast<std::size_t>(e));
                        if (needs(z))
                            kernels::ops<T>().axpy(val(a).data[r], grow, grad_buf(z).row_ptr(r),
                                                   static_cast<std::size_t>(e));
                    }
                }
            };
        }
        return id;
    }

    // Adds rows 0..T-1 of a positional table to each length-T block.
    Id add_pos_rows(Id x, Id pos, int block) {
        const auto& X = val(x);
        const auto& P = val(pos);
        require(X.shape[0] % block == 0 && P.shape[0] >= block && P.shape[1] == X.shape[1],
                "positional table too small");
        int nblocks = X.shape[0] / block;
        int e = X.shape[1];
        Tensor<T> out = X;
        for (int bi = 0; bi < nblocks; ++bi)
            for (int t = 0; t < block; ++t)
                kernels::ops<T>().axpy(T(1), P.row_ptr(t), out.row_ptr(bi * block + t),
                                       static_cast<std::size_t>(e));
        Id id = push(std::move(out), needs(x) || needs(pos), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x, pos, block, nblocks, e](Id self) {
                const auto& g = nodes_[self].grad;
                if (needs(x)) kernels::ops<T>().axpy(T(1), g.data.data(), grad_buf(x).data.data(), g.numel());
                if (needs(pos)) {
                    auto& dp = grad_buf(pos);
                    for (int bi = 0; bi < nblocks; ++bi)
                        for (int t = 0; t < block; ++t)
                            kernels::ops<T>().axpy(T(1), g.row_ptr(bi * block + t), dp.row_ptr(t),
                                                   static_cast<std::size_t>(e));
                }
            };
        }
        return id;
    }

    // Mean binary cross-entropy from logits; labels must be 0/1.
    Id bce_with_logits_mean(Id logits, const std::vector<T>& labels) {
        const auto& Z = val(logits);
        require(Z.numel() == labels.size(), "bce label count");
        for (T y : labels)
            if (y != T(0) && y != T(1)) throw ConfigError("bce label outside {0,1}");
        std::size_t n = Z.numel();
        T loss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            T z = Z.data[i];
            T y = labels[i];
            // max(z,0) - z*y + log1p(exp(-|z|))
            loss += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
        loss /= static_cast<T>(n);
        Tensor<T> out({1});
        out.data[0] = loss;
        Id id = push(std::move(out), needs(logits), nullptr);
        if (node(id).requires_grad) {
            auto lab = std::make_shared<std::vector<T>>(labels);
            node(id).backprop = [this, logits, lab, n](Id self) {
                T g = nodes_[self].grad.data[0] / static_cast<T>(n);
                auto& dz = grad_buf(logits);
                const auto& Z = val(logits);
                for (std::size_t i = 0; i < n; ++i) {
                    T s = T(1) / (T(1) + std::exp(-Z.data[i]));
                    dz.data[i] += g * (s - (*lab)[i]);
                }
            };
        }
        return id;
    }

    Id sum_all(Id x) {
        Tensor<T> out({1});
        out.data[0] = kernels::ops<T>().sum(val(x).data.data(), val(x).numel());
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            node(id).backprop = [this, x](Id self) {
                T g = nodes_[self].grad.data[0];
                auto& dx = grad_buf(x);
                for (auto& v : dx.data) v += g;
            };
        }
        return id;
    }

    Id mean_all(Id x) { return scale(sum_all(x), T(1) / static_cast<T>(val(x).numel())); }

    // Fixed random-projection reduction to a scalar; used by gradient checks.
    Id weighted_sum(Id x, const std::vector<T>& weights) {
        require(val(x).numel() == weights.size(), "weighted_sum size");
        Tensor<T> out({1});
        out.data[0] = kernels::ops<T>().dot(val(x).data.data(), weights.data(), weights.size());
        Id id = push(std::move(out), needs(x), nullptr);
        if (node(id).requires_grad) {
            auto w = std::make_shared<std::vector<T>>(weights);
            node(id).backprop = [this, x, w](Id self) {
                T g = nodes_[self].grad.data[0];
                kernels::ops<T>().axpy(g, w->data(), grad_buf(x).data.data(), w->size());
            };
        }
        return id;
    }

    // ---- backward ----------------------------------------------------------

    void backward(Id root) {
        require(val(root).numel() == 1, "backward root must be scalar");
        grad_buf(root).data[0] = T(1);
        for (Id i = root; i >= 0; --i) {
            Node& nd = nodes_[i];
            if (!nd.requires_grad || nd.grad.data.empty()) continue;
            if (nd.backprop) nd.backprop(i);
            if (nd.bound) {
                kernels::ops<T>().axpy(T(1), nd.grad.data.data(), nd.bound->grad.data.data(),
                                       nd.grad.numel());
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // lazily allocated
        bool requires_grad = false;
        Parameter<T>* bound = nullptr;
        std::function<void(Id)> backprop;
    };

    std::vector<Node> nodes_;

    Node& node(Id id) { return nodes_[id]; }
    const Tensor<T>& val(Id id) const { return nodes_[id].value; }
    bool needs(Id id) const { return nodes_[id].requires_grad; }

    Tensor<T>& grad_buf(Id id) {
        Node& nd = nodes_[id];
        if (nd.grad.data.empty()) nd.grad = Tensor<T>::zeros(nd.value.shape);
        return nd.grad;
    }

    Id push(Tensor<T> v, bool requires_grad, Parameter<T>* bound) {
        Node nd;
        nd.value = std::move(v);
        nd.requires_grad = requires_grad;
        nd.bound = bound;
        nodes_.push_back(std::move(nd));
        return static_cast<Id>(nodes_.size() - 1);
    }

    static void pack_head(const Tensor<T>& src, int row0, int nrows, int col0, int ncols, T* dst) {
        for (int r = 0; r < nrows; ++r)
            std::copy(src.row_ptr(row0 + r) + col0, src.row_ptr(row0 + r) + col0 + ncols,
                      dst + static_cast<std::size_t>(r) * ncols);
    }

    void unpack_head_add(Tensor<T>& dst, int row0, int nrows, int col0, int ncols, const T* src) {
        for (int r = 0; r < nrows; ++r) {
            T* d = dst.row_ptr(row0 + r) + col0;
            const T* s = src + static_cast<std::size_t>(r) * ncols;
            for (int c = 0; c < ncols; ++c) d[c] += s[c];
        }
    }

    static void require(bool ok, const std::string& what) {
        if (!ok) throw ShapeError(what);
    }
};

}  // namespace stresskit::nd
