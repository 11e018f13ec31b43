// Copyright 2026 the n4mc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "n4mc/qmath.hpp"
#include "n4mc/tensor.hpp"

namespace n4mc {

namespace detail {

// Blocked matmul kernels with optional row strides (ld* = distance between
// logical rows; 0 picks the packed default). Every output element
// accumulates over k in ascending order regardless of tiling or worker
// count, so results are bitwise reproducible.

// C[M,N] (+)= A[M,K] * B[K,N]
template <class T>
void mm_nn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate,
           int64_t lda = 0, int64_t ldb = 0, int64_t ldc = 0) {
    if (lda == 0) lda = K;
    if (ldb == 0) ldb = N;
    if (ldc == 0) ldc = N;
    constexpr int64_t MB = 8;
    const int64_t NT = 1024;
    const int64_t mblocks = (M + MB - 1) / MB;
    parallel_for_chunks(mblocks, [&](int64_t mb0, int64_t mb1) {
        for (int64_t mb = mb0; mb < mb1; ++mb) {
            const int64_t m0 = mb * MB;
            const int64_t mc = std::min(MB, M - m0);
            if (!accumulate) {
                for (int64_t j = 0; j < mc; ++j)
                    for (int64_t n = 0; n < N; ++n) C[(m0 + j) * ldc + n] = T(0);
            }
            for (int64_t n0 = 0; n0 < N; n0 += NT) {
                const int64_t nt = std::min(NT, N - n0);
                for (int64_t k = 0; k < K; ++k) {
                    const T* brow = B + k * ldb + n0;
                    for (int64_t j = 0; j < mc; ++j) {
                        T a = A[(m0 + j) * lda + k];
                        T* crow = C + (m0 + j) * ldc + n0;
                        for (int64_t n = 0; n < nt; ++n) crow[n] += a * brow[n];
                    }
                }
            }
        }
    });
}

// C[M,N] (+)= A^T * B with A stored [K,M]
template <class T>
void mm_tn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate,
           int64_t lda = 0, int64_t ldb = 0, int64_t ldc = 0) {
    if (lda == 0) lda = M;
    if (ldb == 0) ldb = N;
    if (ldc == 0) ldc = N;
    constexpr int64_t MB = 8;
    const int64_t NT = 1024;
    const int64_t mblocks = (M + MB - 1) / MB;
    parallel_for_chunks(mblocks, [&](int64_t mb0, int64_t mb1) {
        for (int64_t mb = mb0; mb < mb1; ++mb) {
            const int64_t m0 = mb * MB;
            const int64_t mc = std::min(MB, M - m0);
            if (!accumulate) {
                for (int64_t j = 0; j < mc; ++j)
                    for (int64_t n = 0; n < N; ++n) C[(m0 + j) * ldc + n] = T(0);
            }
            for (int64_t n0 = 0; n0 < N; n0 += NT) {
                const int64_t nt = std::min(NT, N - n0);
                for (int64_t k = 0; k < K; ++k) {
                    const T* brow = B + k * ldb + n0;
                    const T* acol = A + k * lda + m0;
                    for (int64_t j = 0; j < mc; ++j) {
                        T a = acol[j];
                        T* crow = C + (m0 + j) * ldc + n0;
                        for (int64_t n = 0; n < nt; ++n) crow[n] += a * brow[n];
                    }
                }
            }
        }
    });
}

// C[M,N] (+)= A * B^T with B stored [N,K]; contiguous row dots. The n-block
// stays outer so the active B rows remain cache resident across all of A.
template <class T>
void mm_nt(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool accumulate,
           int64_t lda = 0, int64_t ldb = 0, int64_t ldc = 0) {
    if (lda == 0) lda = K;
    if (ldb == 0) ldb = K;
    if (ldc == 0) ldc = N;
    constexpr int64_t NB = 8;
    for (int64_t n0 = 0; n0 < N; n0 += NB) {
        const int64_t nb = std::min(NB, N - n0);
        parallel_for_chunks(M, [&](int64_t m0, int64_t m1) {
            for (int64_t m = m0; m < m1; ++m) {
                const T* arow = A + m * lda;
                for (int64_t j = 0; j < nb; ++j) {
                    const T* __restrict brow = B + (n0 + j) * ldb;
                    const T* __restrict ar = arow;
                    // Sixteen independent accumulation lanes hide FMA latency
                    // and vectorize; the lane structure is fixed, so results
                    // stay reproducible.
                    T lanes[16] = {};
                    int64_t k = 0;
                    for (; k + 16 <= K; k += 16) {
                        for (int t = 0; t < 16; ++t) lanes[t] += ar[k + t] * brow[k + t];
                    }
                    T tail = T(0);
                    for (; k < K; ++k) tail += ar[k] * brow[k];
                    T acc = T(0);
                    for (int t = 0; t < 16; ++t) acc += lanes[t];
                    acc += tail;
                    T* cptr = C + m * ldc + n0 + j;
                    *cptr = accumulate ? *cptr + acc : acc;
                }
            }
        });
    }
}

}  // namespace detail

// Affine map over the last axis: out = x @ W^T + b, with W [out,in].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[1])
        throw ValidationError("linear: shape mismatch (x last dim " +
                              std::to_string(xs.empty() ? -1 : xs.back()) + ", W in dim " +
                              std::to_string(ws.size() == 2 ? ws[1] : -1) + ")");
    const int64_t in = ws[1], out_dim = ws[0];
    const int64_t rows = x.numel() / in;
    if (b.defined() && b.numel() != out_dim) throw ValidationError("linear: bias size mismatch");

    std::vector<int> out_shape = xs;
    out_shape.back() = static_cast<int>(out_dim);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    detail::mm_nt(x.value().data(), w.value().data(), out.value().data(), rows, in, out_dim, false);
    if (b.defined()) {
        T* ov = out.value().data();
        const T* bv = b.value().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t o = 0; o < out_dim; ++o) ov[r * out_dim + o] += bv[o];
    }

    bool need = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    if (need) {
        auto xn = x.node();
        auto wn = w.node();
        auto bn = b.defined() ? b.node() : nullptr;
        auto on = out.node();
        on->requires_grad = true;
        on->parents = {xn, wn};
        if (bn) on->parents.push_back(bn);
        on->backprop = [xn, wn, bn, rows, in, out_dim](TensorNode<T>& o) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                detail::mm_nn(o.grad.data(), wn->value.data(), xn->grad.data(), rows, out_dim, in,
                              true);
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                detail::mm_tn(o.grad.data(), xn->value.data(), wn->grad.data(), out_dim, rows, in,
                              true);
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < out_dim; ++c) bn->grad[c] += o.grad[r * out_dim + c];
            }
        };
    }
    return out;
}

// Batched matmul: a [..., M, K] x b [..., K, N] with identical leading dims.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || as.size() != bs.size()) throw ValidationError("matmul: rank mismatch");
    for (size_t i = 0; i + 2 < as.size(); ++i)
        if (as[i] != bs[i]) throw ValidationError("matmul: batch dims mismatch");
    const int64_t M = as[as.size() - 2], K = as.back();
    if (bs[bs.size() - 2] != K) throw ValidationError("matmul: inner dim mismatch");
    const int64_t N = bs.back();
    int64_t batch = 1;
    for (size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];

    std::vector<int> out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(static_cast<int>(N));
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (int64_t bi = 0; bi < batch; ++bi) {
        detail::mm_nn(a.value().data() + bi * M * K, b.value().data() + bi * K * N,
                      out.value().data() + bi * M * N, M, K, N, false);
    }
    if (a.requires_grad() || b.requires_grad()) {
        auto an = a.node();
        auto bn = b.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an, bn};
        out.node()->backprop = [an, bn, batch, M, K, N](TensorNode<T>& o) {
            for (int64_t bi = 0; bi < batch; ++bi) {
                const T* go = o.grad.data() + bi * M * N;
                if (an->requires_grad) {
                    an->ensure_grad();
                    // gA = gO * B^T; B stored [K,N], so rows of B^T are
                    // columns... use mm_nt with B reinterpreted row-major in K:
                    // gA[m,k] = sum_n gO[m,n] * B[k,n]
                    detail::mm_nt(go, bn->value.data() + bi * K * N,
                                  an->grad.data() + bi * M * K, M, N, K, true);
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    detail::mm_tn(an->value.data() + bi * M * K, go, bn->grad.data() + bi * K * N,
                                  K, M, N, true);
                }
            }
        };
    }
    return out;
}

namespace detail {

struct ConvDims {
    int B, C, D, H, W, O, kd, kh, kw, Do, Ho, Wo, stride, padding;
    int64_t in_voxels() const { return static_cast<int64_t>(D) * H * W; }
    int64_t out_voxels() const { return static_cast<int64_t>(Do) * Ho * Wo; }
    int64_t patch() const { return static_cast<int64_t>(C) * kd * kh * kw; }
};

// im2col for a z-slab of output planes [zo0, zo1): col[patch][cols] with
// cols = (zo1-zo0)*Ho*Wo, laid out row-major by patch element.
template <class T>
void fill_col(const T* x, const ConvDims& d, int zo0, int zo1, T* col) {
    const int64_t cols = static_cast<int64_t>(zo1 - zo0) * d.Ho * d.Wo;
    parallel_for(static_cast<int64_t>(d.C) * d.kd * d.kh * d.kw, [&](int64_t row) {
        const int dx = static_cast<int>(row % d.kw);
        const int dy = static_cast<int>((row / d.kw) % d.kh);
        const int dz = static_cast<int>((row / (d.kw * d.kh)) % d.kd);
        const int c = static_cast<int>(row / (static_cast<int64_t>(d.kw) * d.kh * d.kd));
        T* crow = col + row * cols;
        const T* xc = x + static_cast<int64_t>(c) * d.in_voxels();
        int64_t i = 0;
        for (int zo = zo0; zo < zo1; ++zo) {
            const int zi = zo * d.stride - d.padding + dz;
            for (int yo = 0; yo < d.Ho; ++yo) {
                const int yi = yo * d.stride - d.padding + dy;
                if (zi < 0 || zi >= d.D || yi < 0 || yi >= d.H) {
                    for (int xo = 0; xo < d.Wo; ++xo) crow[i++] = T(0);
                    continue;
                }
                const T* xrow = xc + (static_cast<int64_t>(zi) * d.H + yi) * d.W;
                if (d.stride == 1) {
                    const int base = -d.padding + dx;
                    for (int xo = 0; xo < d.Wo; ++xo) {
                        const int xi = xo + base;
                        crow[i++] = (xi >= 0 && xi < d.W) ? xrow[xi] : T(0);
                    }
                } else {
                    for (int xo = 0; xo < d.Wo; ++xo) {
                        const int xi = xo * d.stride - d.padding + dx;
                        crow[i++] = (xi >= 0 && xi < d.W) ? xrow[xi] : T(0);
                    }
                }
            }
        }
    });
}

// Scatter-add of a column-gradient slab back into the input gradient.
// Parallel over channels; rows within a channel are processed in order.
template <class T>
void col2im_add(const T* col, const ConvDims& d, int zo0, int zo1, T* gx) {
    const int64_t cols = static_cast<int64_t>(zo1 - zo0) * d.Ho * d.Wo;
    parallel_for(d.C, [&](int64_t c) {
        T* gxc = gx + c * d.in_voxels();
        for (int dz = 0; dz < d.kd; ++dz)
            for (int dy = 0; dy < d.kh; ++dy)
                for (int dx = 0; dx < d.kw; ++dx) {
                    const int64_t row = ((c * d.kd + dz) * d.kh + dy) * d.kw + dx;
                    const T* crow = col + row * cols;
                    int64_t i = 0;
                    for (int zo = zo0; zo < zo1; ++zo) {
                        const int zi = zo * d.stride - d.padding + dz;
                        for (int yo = 0; yo < d.Ho; ++yo) {
                            const int yi = yo * d.stride - d.padding + dy;
                            if (zi < 0 || zi >= d.D || yi < 0 || yi >= d.H) {
                                i += d.Wo;
                                continue;
                            }
                            T* gxrow = gxc + (static_cast<int64_t>(zi) * d.H + yi) * d.W;
                            for (int xo = 0; xo < d.Wo; ++xo) {
                                const int xi = xo * d.stride - d.padding + dx;
                                if (xi >= 0 && xi < d.W) gxrow[xi] += crow[i];
                                ++i;
                            }
                        }
                    }
                }
    });
}

inline int conv_slab_planes(const ConvDims& d) {
    // Keep the column buffer near 32 MB.
    const int64_t per_plane = d.patch() * static_cast<int64_t>(d.Ho) * d.Wo * sizeof(float);
    int64_t planes = per_plane > 0 ? (32ll << 20) / per_plane : d.Do;
    return static_cast<int>(std::clamp<int64_t>(planes, 1, d.Do));
}

}  // namespace detail

// 3-D cross-correlation. x [B,C,D,H,W], w [O,C,kd,kh,kw], b [O] (optional:
// pass a default-constructed tensor to skip). 1x1x1 stride-1 kernels use the
// matmul path directly; everything else goes through slab-wise im2col.
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1,
                 int padding = 0) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5 || ws.size() != 5)
        throw ValidationError("conv3d: expects x[B,C,D,H,W], w[O,C,kd,kh,kw]");
    if (xs[1] != ws[1])
        throw ValidationError("conv3d: channel mismatch (input C=" + std::to_string(xs[1]) +
                              ", weight C=" + std::to_string(ws[1]) + ")");
    detail::ConvDims d;
    d.B = xs[0];
    d.C = xs[1];
    d.D = xs[2];
    d.H = xs[3];
    d.W = xs[4];
    d.O = ws[0];
    d.kd = ws[2];
    d.kh = ws[3];
    d.kw = ws[4];
    d.stride = stride;
    d.padding = padding;
    d.Do = (d.D + 2 * padding - d.kd) / stride + 1;
    d.Ho = (d.H + 2 * padding - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * padding - d.kw) / stride + 1;
    if (d.Do <= 0 || d.Ho <= 0 || d.Wo <= 0)
        throw ValidationError("conv3d: kernel does not fit input");
    if (b.defined() && b.numel() != d.O) throw ValidationError("conv3d: bias size mismatch");

    const bool pointwise =
        d.kd == 1 && d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0;

    Tensor<T> out = Tensor<T>::zeros({d.B, d.O, d.Do, d.Ho, d.Wo});
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    T* ov = out.value().data();
    const int64_t in_voxels = d.in_voxels();
    const int64_t out_voxels = d.out_voxels();

    if (pointwise) {
        for (int bi = 0; bi < d.B; ++bi)
            detail::mm_nn(wv, xv + static_cast<int64_t>(bi) * d.C * in_voxels,
                          ov + static_cast<int64_t>(bi) * d.O * out_voxels, d.O, d.C, in_voxels,
                          false);
    } else {
        const int slab = detail::conv_slab_planes(d);
        std::vector<T> col(d.patch() * static_cast<int64_t>(slab) * d.Ho * d.Wo);
        for (int bi = 0; bi < d.B; ++bi) {
            const T* xb = xv + static_cast<int64_t>(bi) * d.C * in_voxels;
            for (int zo0 = 0; zo0 < d.Do; zo0 += slab) {
                const int zo1 = std::min(d.Do, zo0 + slab);
                const int64_t cols = static_cast<int64_t>(zo1 - zo0) * d.Ho * d.Wo;
                detail::fill_col(xb, d, zo0, zo1, col.data());
                // Output rows (one per channel) are strided by the full
                // spatial volume; write the slab in place.
                detail::mm_nn(wv, col.data(),
                              ov + static_cast<int64_t>(bi) * d.O * out_voxels +
                                  static_cast<int64_t>(zo0) * d.Ho * d.Wo,
                              d.O, d.patch(), cols, false, 0, 0, out_voxels);
            }
        }
    }
    if (b.defined()) {
        const T* bv = b.value().data();
        for (int bi = 0; bi < d.B; ++bi)
            for (int o = 0; o < d.O; ++o) {
                T* orow = ov + (static_cast<int64_t>(bi) * d.O + o) * out_voxels;
                T bias = bv[o];
                for (int64_t i = 0; i < out_voxels; ++i) orow[i] += bias;
            }
    }

    bool need = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    if (need) {
        auto xn = x.node();
        auto wn = w.node();
        auto bn = b.defined() ? b.node() : nullptr;
        auto on = out.node();
        on->requires_grad = true;
        on->parents = {xn, wn};
        if (bn) on->parents.push_back(bn);
        on->backprop = [=](TensorNode<T>& o) {
            const T* go = o.grad.data();
            if (pointwise) {
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    for (int bi = 0; bi < d.B; ++bi)
                        detail::mm_tn(wn->value.data(),
                                      go + static_cast<int64_t>(bi) * d.O * out_voxels,
                                      xn->grad.data() + static_cast<int64_t>(bi) * d.C * in_voxels,
                                      d.C, d.O, in_voxels, true);
                }
                if (wn->requires_grad) {
                    wn->ensure_grad();
                    for (int bi = 0; bi < d.B; ++bi)
                        detail::mm_nt(go + static_cast<int64_t>(bi) * d.O * out_voxels,
                                      xn->value.data() + static_cast<int64_t>(bi) * d.C * in_voxels,
                                      wn->grad.data(), d.O, in_voxels, d.C, true);
                }
            } else {
                const int slab = detail::conv_slab_planes(d);
                std::vector<T> col(d.patch() * static_cast<int64_t>(slab) * d.Ho * d.Wo);
                if (xn->requires_grad) xn->ensure_grad();
                if (wn->requires_grad) wn->ensure_grad();
                for (int bi = 0; bi < d.B; ++bi) {
                    const T* xb = xn->value.data() + static_cast<int64_t>(bi) * d.C * in_voxels;
                    for (int zo0 = 0; zo0 < d.Do; zo0 += slab) {
                        const int zo1 = std::min(d.Do, zo0 + slab);
                        const int64_t cols = static_cast<int64_t>(zo1 - zo0) * d.Ho * d.Wo;
                        // gO slab viewed with a per-channel row stride.
                        const T* go_slab = go + static_cast<int64_t>(bi) * d.O * out_voxels +
                                           static_cast<int64_t>(zo0) * d.Ho * d.Wo;
                        if (wn->requires_grad) {
                            detail::fill_col(xb, d, zo0, zo1, col.data());
                            // gW += gO_slab [O x cols] * col^T
                            detail::mm_nt(go_slab, col.data(), wn->grad.data(), d.O, cols,
                                          d.patch(), true, out_voxels, cols, 0);
                        }
                        if (xn->requires_grad) {
                            // gcol = W^T * gO_slab, then scatter back.
                            detail::mm_tn(wn->value.data(), go_slab, col.data(), d.patch(), d.O,
                                          cols, false, 0, out_voxels, cols);
                            detail::col2im_add(col.data(), d, zo0, zo1,
                                               xn->grad.data() +
                                                   static_cast<int64_t>(bi) * d.C * in_voxels);
                        }
                    }
                }
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int bi = 0; bi < d.B; ++bi)
                    for (int o = 0; o < d.O; ++o) {
                        double acc = 0.0;
                        const T* goc = go + (static_cast<int64_t>(bi) * d.O + o) * out_voxels;
                        for (int64_t i = 0; i < out_voxels; ++i) acc += static_cast<double>(goc[i]);
                        bn->grad[o] += static_cast<T>(acc);
                    }
            }
        };
    }
    return out;
}

// Depthwise 3-D convolution, stride 1, size-preserving padding.
// x [B,C,D,H,W], w [C,kd,kh,kw].
template <class T>
Tensor<T> depthwise_conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int padding) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 5 || ws.size() != 4 || xs[1] != ws[0])
        throw ValidationError("depthwise_conv3d: expects x[B,C,D,H,W], w[C,kd,kh,kw]");
    const int B = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4];
    const int kd = ws[1], kh = ws[2], kw = ws[3];
    if (D + 2 * padding - kd + 1 != D || H + 2 * padding - kh + 1 != H ||
        W + 2 * padding - kw + 1 != W)
        throw ValidationError("depthwise_conv3d: padding must preserve the spatial size");

    const int64_t voxels = static_cast<int64_t>(D) * H * W;
    const int p = padding;

    // Shared accumulation loop: out(b,c) += corr(x(b,c), w(c)). Captures by
    // value: the backward pass invokes it after this frame is gone.
    auto run = [=](const T* src, const T* wgt, T* dst, bool zero_init, const T* bias) {
        parallel_for(static_cast<int64_t>(B) * C * D, [&](int64_t idx) {
            const int zo = static_cast<int>(idx % D);
            const int c = static_cast<int>((idx / D) % C);
            const int bi = static_cast<int>(idx / (static_cast<int64_t>(D) * C));
            const T* xc = src + (static_cast<int64_t>(bi) * C + c) * voxels;
            const T* wc = wgt + static_cast<int64_t>(c) * kd * kh * kw;
            T* orow = dst + (static_cast<int64_t>(bi) * C + c) * voxels +
                      static_cast<int64_t>(zo) * H * W;
            if (zero_init) {
                T init = bias ? bias[c] : T(0);
                for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) orow[i] = init;
            }
            for (int dz = 0; dz < kd; ++dz) {
                int zi = zo - p + dz;
                if (zi < 0 || zi >= D) continue;
                for (int dy = 0; dy < kh; ++dy) {
                    for (int yo = 0; yo < H; ++yo) {
                        int yi = yo - p + dy;
                        if (yi < 0 || yi >= H) continue;
                        const T* xrow = xc + (static_cast<int64_t>(zi) * H + yi) * W;
                        T* dstrow = orow + static_cast<int64_t>(yo) * W;
                        for (int dx = 0; dx < kw; ++dx) {
                            T wv = wc[(dz * kh + dy) * kw + dx];
                            int lo = std::max(0, p - dx);
                            int hi = std::min(W, W + p - dx);
                            const T* s = xrow - p + dx;
                            for (int xo = lo; xo < hi; ++xo) dstrow[xo] += wv * s[xo];
                        }
                    }
                }
            }
        });
    };

    Tensor<T> out = Tensor<T>::zeros(xs);
    run(x.value().data(), w.value().data(), out.value().data(), true,
        b.defined() ? b.value().data() : nullptr);

    bool need = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    if (need) {
        auto xn = x.node();
        auto wn = w.node();
        auto bn = b.defined() ? b.node() : nullptr;
        auto on = out.node();
        on->requires_grad = true;
        on->parents = {xn, wn};
        if (bn) on->parents.push_back(bn);
        on->backprop = [=](TensorNode<T>& o) {
            const T* go = o.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                // gX = corr(gO, flip(w)): reuse the forward loop with a
                // flipped kernel, then accumulate.
                std::vector<T> wflip(wn->value.size());
                for (int c = 0; c < C; ++c)
                    for (int dz = 0; dz < kd; ++dz)
                        for (int dy = 0; dy < kh; ++dy)
                            for (int dx = 0; dx < kw; ++dx)
                                wflip[(static_cast<int64_t>(c) * kd + (kd - 1 - dz)) * kh * kw +
                                      (kh - 1 - dy) * kw + (kw - 1 - dx)] =
                                    wn->value[(static_cast<int64_t>(c) * kd + dz) * kh * kw +
                                              dy * kw + dx];
                std::vector<T> tmp(xn->value.size());
                run(go, wflip.data(), tmp.data(), true, nullptr);
                T* gx = xn->grad.data();
                for (size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                T* gw = wn->grad.data();
                parallel_for(static_cast<int64_t>(C) * kd, [&](int64_t idx) {
                    const int dz = static_cast<int>(idx % kd);
                    const int c = static_cast<int>(idx / kd);
                    for (int dy = 0; dy < kh; ++dy)
                        for (int dx = 0; dx < kw; ++dx) {
                            double acc = 0.0;
                            for (int bi = 0; bi < B; ++bi) {
                                const T* goc = go + (static_cast<int64_t>(bi) * C + c) * voxels;
                                const T* xc = xn->value.data() +
                                              (static_cast<int64_t>(bi) * C + c) * voxels;
                                for (int zo = 0; zo < D; ++zo) {
                                    int zi = zo - p + dz;
                                    if (zi < 0 || zi >= D) continue;
                                    for (int yo = 0; yo < H; ++yo) {
                                        int yi = yo - p + dy;
                                        if (yi < 0 || yi >= H) continue;
                                        const T* gorow =
                                            goc + (static_cast<int64_t>(zo) * H + yo) * W;
                                        const T* xrow =
                                            xc + (static_cast<int64_t>(zi) * H + yi) * W;
                                        int lo = std::max(0, p - dx);
                                        int hi = std::min(W, W + p - dx);
                                        const T* s = xrow - p + dx;
                                        T lanes[4] = {};
                                        int xo = lo;
                                        for (; xo + 4 <= hi; xo += 4)
                                            for (int t = 0; t < 4; ++t)
                                                lanes[t] += gorow[xo + t] * s[xo + t];
                                        T rest = T(0);
                                        for (; xo < hi; ++xo) rest += gorow[xo] * s[xo];
                                        acc += static_cast<double>((lanes[0] + lanes[1]) +
                                                                   (lanes[2] + lanes[3]) + rest);
                                    }
                                }
                            }
                            gw[(static_cast<int64_t>(c) * kd + dz) * kh * kw + dy * kw + dx] +=
                                static_cast<T>(acc);
                        }
                });
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (int bi = 0; bi < B; ++bi)
                    for (int c = 0; c < C; ++c) {
                        double acc = 0.0;
                        const T* goc = go + (static_cast<int64_t>(bi) * C + c) * voxels;
                        for (int64_t i = 0; i < voxels; ++i) acc += static_cast<double>(goc[i]);
                        bn->grad[c] += static_cast<T>(acc);
                    }
            }
        };
    }
    return out;
}

// Last-axis standardization then affine.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    const auto& xs = x.shape();
    const int64_t d = xs.back();
    if (gamma.numel() != d || beta.numel() != d)
        throw ValidationError("layer_norm: gamma/beta size mismatch");
    const int64_t rows = x.numel() / d;
    Tensor<T> out = Tensor<T>::zeros(xs);
    std::vector<T> inv_std(rows), means(rows);
    const T* xv = x.value().data();
    const T* gv = gamma.value().data();
    const T* bv = beta.value().data();
    T* ov = out.value().data();
    parallel_for_chunks(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* row = xv + r * d;
            double m = 0.0;
            for (int64_t i = 0; i < d; ++i) m += static_cast<double>(row[i]);
            m /= d;
            double var = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                double dv = static_cast<double>(row[i]) - m;
                var += dv * dv;
            }
            var /= d;
            T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            means[r] = static_cast<T>(m);
            inv_std[r] = istd;
            T* orow = ov + r * d;
            for (int64_t i = 0; i < d; ++i) orow[i] = (row[i] - means[r]) * istd * gv[i] + bv[i];
        }
    });
    bool need = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    if (need) {
        auto xn = x.node();
        auto gn = gamma.node();
        auto bn = beta.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn, gn, bn};
        out.node()->backprop = [xn, gn, bn, rows, d, means, inv_std](TensorNode<T>& o) {
            const T* go = o.grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                const T* gor = go + r * d;
                const T* xr = xn->value.data() + r * d;
                T istd = inv_std[r], m = means[r];
                if (gn->requires_grad || bn->requires_grad) {
                    if (gn->requires_grad) gn->ensure_grad();
                    if (bn->requires_grad) bn->ensure_grad();
                    for (int64_t i = 0; i < d; ++i) {
                        T xhat = (xr[i] - m) * istd;
                        if (gn->requires_grad) gn->grad[i] += gor[i] * xhat;
                        if (bn->requires_grad) bn->grad[i] += gor[i];
                    }
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int64_t i = 0; i < d; ++i) {
                        T gg = gor[i] * gn->value[i];
                        T xhat = (xr[i] - m) * istd;
                        sum_g += static_cast<double>(gg);
                        sum_gx += static_cast<double>(gg) * xhat;
                    }
                    T mg = static_cast<T>(sum_g / d);
                    T mgx = static_cast<T>(sum_gx / d);
                    T* gxr = xn->grad.data() + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        T gg = gor[i] * gn->value[i];
                        T xhat = (xr[i] - m) * istd;
                        gxr[i] += (gg - mg - xhat * mgx) * istd;
                    }
                }
            }
        };
    }
    return out;
}

// Softmax over the last axis with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
    const auto& xs = x.shape();
    const int64_t d = xs.back();
    const int64_t rows = x.numel() / d;
    Tensor<T> out = Tensor<T>::zeros(xs);
    const T* xv = x.value().data();
    T* ov = out.value().data();
    parallel_for_chunks(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* row = xv + r * d;
            T mx = row[0];
            for (int64_t i = 1; i < d; ++i) mx = std::max(mx, row[i]);
            double denom = 0.0;
            T* orow = ov + r * d;
            for (int64_t i = 0; i < d; ++i) {
                double e = std::exp(static_cast<double>(row[i] - mx));
                orow[i] = static_cast<T>(e);
                denom += e;
            }
            T inv = static_cast<T>(1.0 / denom);
            for (int64_t i = 0; i < d; ++i) orow[i] *= inv;
        }
    });
    if (x.requires_grad()) {
        auto xn = x.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn};
        out.node()->backprop = [xn, rows, d](TensorNode<T>& o) {
            xn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = o.value.data() + r * d;
                const T* g = o.grad.data() + r * d;
                double dotgy = 0.0;
                for (int64_t i = 0; i < d; ++i) dotgy += static_cast<double>(g[i]) * y[i];
                T* gx = xn->grad.data() + r * d;
                for (int64_t i = 0; i < d; ++i) gx[i] += y[i] * (g[i] - static_cast<T>(dotgy));
            }
        };
    }
    return out;
}

// Scaled dot-product attention with per-head splitting and a final output
// projection: out = concat_heads(softmax(q k^T / sqrt(dh)) v) @ Wo^T + bo.
// q/k/v are already projected [B,T,L].
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               int heads, const Tensor<T>& wo, const Tensor<T>& bo) {
    const auto& qs = q.shape();
    if (qs.size() != 3) throw ValidationError("multi_head_attention: expects [B,T,L]");
    const int B = qs[0], Tq = qs[1], L = qs[2];
    if (L % heads != 0)
        throw ValidationError("multi_head_attention: width " + std::to_string(L) +
                              " not divisible by " + std::to_string(heads) + " heads");
    const int Tk = k.shape()[1];
    const int dh = L / heads;

    auto split = [&](const Tensor<T>& t, int Tt) {
        // [B,T,L] -> [B,heads,T,dh]
        return permute(reshape(t, {B, Tt, heads, dh}), {0, 2, 1, 3});
    };
    Tensor<T> qh = split(q, Tq), kh = split(k, Tk), vh = split(v, Tk);
    Tensor<T> scores = matmul(qh, permute(kh, {0, 1, 3, 2}));
    scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    Tensor<T> attn = softmax(scores);
    Tensor<T> ctx = matmul(attn, vh);  // [B,h,Tq,dh]
    Tensor<T> merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, Tq, L});
    return linear(merged, wo, bo);
}

namespace detail {

// space(b, c, d*r+dz, h*r+dy, w*r+dx) = packed(b, c*r^3 + (dz*r+dy)*r+dx, d,h,w)
template <class T, bool kToSpace>
void shuffle_move(const T* from, T* to, int B, int C, int D, int H, int W, int r) {
    const int64_t in_voxels = static_cast<int64_t>(D) * H * W;
    const int r3 = r * r * r;
    parallel_for(static_cast<int64_t>(B) * C * r3, [&](int64_t idx) {
        const int sub = static_cast<int>(idx % r3);
        const int c = static_cast<int>((idx / r3) % C);
        const int b = static_cast<int>(idx / (static_cast<int64_t>(r3) * C));
        const int dx = sub % r, dy = (sub / r) % r, dz = sub / (r * r);
        const int64_t packed_off = (static_cast<int64_t>(b) * C * r3 + c * r3 + sub) * in_voxels;
        const int64_t space_base = (static_cast<int64_t>(b) * C + c) * in_voxels * r3;
        for (int d = 0; d < D; ++d)
            for (int h = 0; h < H; ++h) {
                const int64_t srow =
                    space_base +
                    ((static_cast<int64_t>(d) * r + dz) * (H * r) + h * r + dy) *
                        (static_cast<int64_t>(W) * r) +
                    dx;
                const int64_t prow = packed_off + (static_cast<int64_t>(d) * H + h) * W;
                if constexpr (kToSpace) {
                    for (int w = 0; w < W; ++w) to[srow + static_cast<int64_t>(w) * r] = from[prow + w];
                } else {
                    for (int w = 0; w < W; ++w) to[prow + w] = from[srow + static_cast<int64_t>(w) * r];
                }
            }
    });
}

}  // namespace detail

// Channel-to-space rearrangement: [B, C*r^3, D,H,W] -> [B, C, D*r, H*r, W*r],
// channel-major within each r^3 block. Exactly invertible.
template <class T>
Tensor<T> pixel_shuffle3d(const Tensor<T>& x, int r) {
    const auto& xs = x.shape();
    if (xs.size() != 5) throw ValidationError("pixel_shuffle3d: expects [B,C,D,H,W]");
    const int r3 = r * r * r;
    if (xs[1] % r3 != 0)
        throw ValidationError("pixel_shuffle3d: channels " + std::to_string(xs[1]) +
                              " not divisible by r^3=" + std::to_string(r3));
    if (r == 1) {
        Tensor<T> out = reshape(x, xs);
        return out;
    }
    const int B = xs[0], C = xs[1] / r3, D = xs[2], H = xs[3], W = xs[4];
    Tensor<T> out = Tensor<T>::zeros({B, C, D * r, H * r, W * r});
    detail::shuffle_move<T, true>(x.value().data(), out.value().data(), B, C, D, H, W, r);
    if (x.requires_grad()) {
        auto xn = x.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn};
        out.node()->backprop = [xn, B, C, D, H, W, r](TensorNode<T>& o) {
            xn->ensure_grad();
            // Pure permutation: gather the gradient back through a scratch.
            std::vector<T> tmp(xn->value.size());
            detail::shuffle_move<T, false>(o.grad.data(), tmp.data(), B, C, D, H, W, r);
            for (size_t i = 0; i < tmp.size(); ++i) xn->grad[i] += tmp[i];
        };
    }
    return out;
}

template <class T>
Tensor<T> pixel_unshuffle3d(const Tensor<T>& x, int r) {
    const auto& xs = x.shape();
    if (xs.size() != 5) throw ValidationError("pixel_unshuffle3d: expects [B,C,D,H,W]");
    if (xs[2] % r || xs[3] % r || xs[4] % r)
        throw ValidationError("pixel_unshuffle3d: spatial dims not divisible by r");
    if (r == 1) return reshape(x, xs);
    const int B = xs[0], C = xs[1], D = xs[2] / r, H = xs[3] / r, W = xs[4] / r;
    Tensor<T> out = Tensor<T>::zeros({B, C * r * r * r, D, H, W});
    detail::shuffle_move<T, false>(x.value().data(), out.value().data(), B, C, D, H, W, r);
    if (x.requires_grad()) {
        auto xn = x.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn};
        out.node()->backprop = [xn, B, C, D, H, W, r](TensorNode<T>& o) {
            xn->ensure_grad();
            std::vector<T> tmp(xn->value.size());
            detail::shuffle_move<T, true>(o.grad.data(), tmp.data(), B, C, D, H, W, r);
            for (size_t i = 0; i < tmp.size(); ++i) xn->grad[i] += tmp[i];
        };
    }
    return out;
}

// Straight-through fake quantization on the tensor's own [min,max] lattice.
template <class T>
Tensor<T> fake_quantize(const Tensor<T>& x, int bits = 8) {
    if (bits != 8) throw ValidationError("fake_quantize: only 8-bit supported");
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const int64_t n = x.numel();
    const T* xv = x.value().data();
    T* ov = out.value().data();
    T mn = xv[0], mx = xv[0];
    for (int64_t i = 1; i < n; ++i) {
        mn = std::min(mn, xv[i]);
        mx = std::max(mx, xv[i]);
    }
    if (mx == mn) {
        for (int64_t i = 0; i < n; ++i) ov[i] = xv[i];
    } else {
        QuantLattice q = make_lattice(static_cast<float>(mn), static_cast<float>(mx), bits);
        for (int64_t i = 0; i < n; ++i)
            ov[i] =
                static_cast<T>(dequantize_value(quantize_value(static_cast<float>(xv[i]), q), q));
    }
    if (x.requires_grad()) {
        auto xn = x.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn};
        out.node()->backprop = [xn](TensorNode<T>& o) {
            xn->ensure_grad();
            // Straight-through: min/max come from the tensor itself, so every
            // element is in range.
            for (int64_t i = 0; i < o.numel(); ++i) xn->grad[i] += o.grad[i];
        };
    }
    return out;
}

// Valid mean filter of width w along one spatial axis of [C,D,H,W].
template <class T>
Tensor<T> box_filter1d(const Tensor<T>& x, int axis, int w) {
    const auto& xs = x.shape();
    if (xs.size() != 4 || axis < 1 || axis > 3) throw ValidationError("box_filter1d: bad input");
    const int64_t len = xs[axis];
    if (w < 1 || w > len) throw ValidationError("box_filter1d: bad window");
    std::vector<int> out_shape = xs;
    out_shape[axis] = static_cast<int>(len - w + 1);
    const int64_t out_len = out_shape[axis];

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xs[i];
    for (int i = axis + 1; i < 4; ++i) inner *= xs[i];

    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* xv = x.value().data();
    T* ov = out.value().data();
    const T invw = static_cast<T>(1.0 / w);
    parallel_for(outer, [&](int64_t o) {
        const T* xo = xv + o * len * inner;
        T* oo = ov + o * out_len * inner;
        for (int64_t j = 0; j < out_len; ++j)
            for (int64_t i = 0; i < inner; ++i) {
                T acc = T(0);
                for (int t = 0; t < w; ++t) acc += xo[(j + t) * inner + i];
                oo[j * inner + i] = acc * invw;
            }
    });
    if (x.requires_grad()) {
        auto xn = x.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn};
        out.node()->backprop = [xn, outer, inner, len, out_len, w, invw](TensorNode<T>& o) {
            xn->ensure_grad();
            const T* go = o.grad.data();
            T* gx = xn->grad.data();
            parallel_for(outer, [&](int64_t ou) {
                const T* goo = go + ou * out_len * inner;
                T* gxo = gx + ou * len * inner;
                for (int64_t pos = 0; pos < len; ++pos) {
                    int64_t j_lo = std::max<int64_t>(0, pos - w + 1);
                    int64_t j_hi = std::min<int64_t>(out_len - 1, pos);
                    for (int64_t i = 0; i < inner; ++i) {
                        T acc = T(0);
                        for (int64_t j = j_lo; j <= j_hi; ++j) acc += goo[j * inner + i];
                        gxo[pos * inner + i] += acc * invw;
                    }
                }
            });
        };
    }
    return out;
}

}  // namespace n4mc
