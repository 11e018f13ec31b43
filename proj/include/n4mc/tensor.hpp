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

// Dense float tensors with reverse-mode differentiation. Values are
// immutable once produced by an op; gradients accumulate into leaf tensors
// during backward(), which visits each node exactly once. The double
// instantiation exists for finite-difference shadow checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "n4mc/common.hpp"
#include "n4mc/parallel.hpp"

namespace n4mc {

template <class T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value.assign(n->numel(), T(0));
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        if (static_cast<int64_t>(data.size()) != n->numel())
            throw ValidationError("Tensor::from: data size does not match shape");
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return n_->shape; }
    int64_t numel() const { return n_->numel(); }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool b) { n_->requires_grad = b; }

    std::vector<T>& value() { return n_->value; }
    const std::vector<T>& value() const { return n_->value; }
    std::vector<T>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    const std::vector<T>& grad() const { return n_->grad; }

    T item() const {
        if (numel() != 1) throw ValidationError("Tensor::item on non-scalar");
        return n_->value[0];
    }

    void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

    std::shared_ptr<TensorNode<T>> node() const { return n_; }

private:
    std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <class T>
void topo_visit(TensorNode<T>* node, std::unordered_set<TensorNode<T>*>& seen,
                std::vector<TensorNode<T>*>& order) {
    // Iterative DFS; post-order gives children before parents.
    struct Frame {
        TensorNode<T>* n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node, 0});
    seen.insert(node);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            TensorNode<T>* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
}

}  // namespace detail

// Reverse-mode pass from a scalar root.
template <class T>
void backward(const Tensor<T>& root) {
    if (root.numel() != 1) throw ValidationError("backward: root must be scalar");
    if (!root.requires_grad()) return;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<TensorNode<T>*> order;
    detail::topo_visit(root.node().get(), seen, order);
    root.node()->ensure_grad();
    root.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

namespace detail {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        auto fmt = [](const std::vector<int>& s) {
            std::string r = "[";
            for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
            return r + "]";
        };
        throw ValidationError(std::string(op) + ": shape mismatch " + fmt(a.shape()) + " vs " +
                              fmt(b.shape()));
    }
}

template <class T, class Fwd, class Bwd>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                             Bwd bwd) {
    check_same_shape(a, b, name);
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const int64_t n = a.numel();
    const T* av = a.value().data();
    const T* bv = b.value().data();
    T* ov = out.value().data();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
    if (a.requires_grad() || b.requires_grad()) {
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        on->requires_grad = true;
        on->parents = {an, bn};
        on->backprop = [an, bn, bwd](TensorNode<T>& o) {
            const int64_t n = o.numel();
            bool need_a = an->requires_grad, need_b = bn->requires_grad;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                T ga = 0, gb = 0;
                bwd(an->value[i], bn->value[i], o.value[i], o.grad[i], ga, gb);
                if (need_a) an->grad[i] += ga;
                if (need_b) bn->grad[i] += gb;
            }
        };
    }
    return out;
}

template <class T, class Fwd, class Dfdx>
Tensor<T> unary_elementwise(const Tensor<T>& a, Fwd fwd, Dfdx dfdx) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const int64_t n = a.numel();
    const T* av = a.value().data();
    T* ov = out.value().data();
    for (int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, dfdx](TensorNode<T>& o) {
            an->ensure_grad();
            const int64_t n = o.numel();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += o.grad[i] * dfdx(an->value[i], o.value[i]);
        };
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        a, b, "add", [](T x, T y) { return x + y; },
        [](T, T, T, T g, T& ga, T& gb) {
            ga = g;
            gb = g;
        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        a, b, "sub", [](T x, T y) { return x - y; },
        [](T, T, T, T g, T& ga, T& gb) {
            ga = g;
            gb = -g;
        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        a, b, "mul", [](T x, T y) { return x * y; },
        [](T x, T y, T, T g, T& ga, T& gb) {
            ga = g * y;
            gb = g * x;
        });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        a, b, "div", [](T x, T y) { return x / y; },
        [](T x, T y, T, T g, T& ga, T& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
    return detail::unary_elementwise<T>(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> abs_t(const Tensor<T>& a) {
    return detail::unary_elementwise<T>(
        a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> tanh_t(const Tensor<T>& a) {
    return detail::unary_elementwise<T>(
        a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

namespace detail {

// Vectorizable expf (Cephes split): |rel err| ~ 1e-7 over the clamped range.
inline float fast_expf(float x) {
    x = std::min(87.0f, std::max(-87.0f, x));
    float z = x * 1.44269504088896341f;
    float n = std::floor(z + 0.5f);
    x -= n * 0.693359375f;
    x -= n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * x + 1.3981999507e-3f;
    p = p * x + 8.3334519073e-3f;
    p = p * x + 4.1665795894e-2f;
    p = p * x + 1.6666665459e-1f;
    p = p * x + 5.0000001201e-1f;
    float r = p * x * x + x + 1.0f;
    union {
        uint32_t u;
        float f;
    } s;
    s.u = static_cast<uint32_t>(static_cast<int>(n) + 127) << 23;
    return r * s.f;
}

// Abramowitz-Stegun 7.1.26: |abs err| <= 1.5e-7, i.e. float precision.
inline float fast_erff(float x) {
    float ax = std::abs(x);
    float t = 1.0f / (1.0f + 0.3275911f * ax);
    float poly =
        t * (0.254829592f +
             t * (-0.284496736f + t * (1.421413741f + t * (-1.453152027f + t * 1.061405429f))));
    float y = 1.0f - poly * fast_expf(-ax * ax);
    return x < 0.0f ? -y : y;
}

template <class T>
T erf_precise(T x) {
    if constexpr (sizeof(T) == 4) return fast_erff(x);
    else return std::erf(x);
}

template <class T>
T exp_precise(T x) {
    if constexpr (sizeof(T) == 4) return fast_expf(x);
    else return std::exp(x);
}

}  // namespace detail

// Exact Gaussian-CDF form x * Phi(x), evaluated to the tensor's precision.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    return detail::unary_elementwise<T>(
        a,
        [](T x) {
            constexpr T inv_sqrt2 = T(0.70710678118654752440);
            return T(0.5) * x * (T(1) + detail::erf_precise<T>(x * inv_sqrt2));
        },
        [](T x, T) {
            constexpr T inv_sqrt2 = T(0.70710678118654752440);
            constexpr T inv_sqrt2pi = T(0.39894228040143267794);
            T phi = T(0.5) * (T(1) + detail::erf_precise<T>(x * inv_sqrt2));
            T pdf = detail::exp_precise<T>(T(-0.5) * x * x) * inv_sqrt2pi;
            return phi + x * pdf;
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * s;
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, s](TensorNode<T>& o) {
            an->ensure_grad();
            for (int64_t i = 0; i < o.numel(); ++i) an->grad[i] += o.grad[i] * s;
        };
    }
    return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + s;
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an](TensorNode<T>& o) {
            an->ensure_grad();
            for (int64_t i = 0; i < o.numel(); ++i) an->grad[i] += o.grad[i];
        };
    }
    return out;
}

// Sum of all elements (double accumulation) -> scalar.
template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.value()) acc += static_cast<double>(v);
    Tensor<T> out = Tensor<T>::from({1}, {static_cast<T>(acc)});
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an](TensorNode<T>& o) {
            an->ensure_grad();
            T g = o.grad[0];
            for (auto& gv : an->grad) gv += g;
        };
    }
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    const int64_t n = a.numel();
    double acc = 0.0;
    for (T v : a.value()) acc += static_cast<double>(v);
    Tensor<T> out = Tensor<T>::from({1}, {static_cast<T>(acc / n)});
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, n](TensorNode<T>& o) {
            an->ensure_grad();
            T g = o.grad[0] / static_cast<T>(n);
            for (auto& gv : an->grad) gv += g;
        };
    }
    return out;
}

// v broadcast over leading axes of x; v.shape must be a suffix of x.shape
// (or a single element, broadcast everywhere).
template <class T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& v) {
    const int64_t nv = v.numel();
    const int64_t nx = x.numel();
    bool scalar_v = nv == 1;
    if (!scalar_v) {
        const auto& xs = x.shape();
        const auto& vs = v.shape();
        if (vs.size() > xs.size() || nx % nv != 0)
            throw ValidationError("add_broadcast: incompatible shapes");
        for (size_t i = 0; i < vs.size(); ++i) {
            if (vs[vs.size() - 1 - i] != xs[xs.size() - 1 - i])
                throw ValidationError("add_broadcast: v is not a suffix of x");
        }
    }
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xv = x.value().data();
    const T* vv = v.value().data();
    T* ov = out.value().data();
    for (int64_t i = 0; i < nx; ++i) ov[i] = xv[i] + vv[scalar_v ? 0 : i % nv];
    if (x.requires_grad() || v.requires_grad()) {
        auto xn = x.node();
        auto vn = v.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn, vn};
        out.node()->backprop = [xn, vn, nv, scalar_v](TensorNode<T>& o) {
            const int64_t n = o.numel();
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) xn->grad[i] += o.grad[i];
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) vn->grad[scalar_v ? 0 : i % nv] += o.grad[i];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& v) {
    const int64_t nv = v.numel();
    const int64_t nx = x.numel();
    bool scalar_v = nv == 1;
    if (!scalar_v) {
        const auto& xs = x.shape();
        const auto& vs = v.shape();
        if (vs.size() > xs.size() || nx % nv != 0)
            throw ValidationError("mul_broadcast: incompatible shapes");
        for (size_t i = 0; i < vs.size(); ++i) {
            if (vs[vs.size() - 1 - i] != xs[xs.size() - 1 - i])
                throw ValidationError("mul_broadcast: v is not a suffix of x");
        }
    }
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xv = x.value().data();
    const T* vv = v.value().data();
    T* ov = out.value().data();
    for (int64_t i = 0; i < nx; ++i) ov[i] = xv[i] * vv[scalar_v ? 0 : i % nv];
    if (x.requires_grad() || v.requires_grad()) {
        auto xn = x.node();
        auto vn = v.node();
        out.node()->requires_grad = true;
        out.node()->parents = {xn, vn};
        out.node()->backprop = [xn, vn, nv, scalar_v](TensorNode<T>& o) {
            const int64_t n = o.numel();
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    xn->grad[i] += o.grad[i] * vn->value[scalar_v ? 0 : i % nv];
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    vn->grad[scalar_v ? 0 : i % nv] += o.grad[i] * xn->value[i];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != a.numel()) throw ValidationError("reshape: element count mismatch");
    Tensor<T> out = Tensor<T>::from(std::move(shape), a.value());
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an](TensorNode<T>& o) {
            an->ensure_grad();
            for (int64_t i = 0; i < o.numel(); ++i) an->grad[i] += o.grad[i];
        };
    }
    return out;
}

namespace detail {

// Odometer walk over the output index space; the input offset follows by
// stride deltas, so there is no division in the inner loop. apply(out_index,
// in_index) runs once per element in ascending output order.
template <class Fn>
void permute_walk(const std::vector<int>& out_shape, const std::vector<int64_t>& map_strides,
                  Fn&& apply) {
    const int r = static_cast<int>(out_shape.size());
    int64_t n = 1;
    for (int d : out_shape) n *= d;
    if (n == 0) return;
    std::vector<int64_t> counter(r, 0);
    int64_t ii = 0;
    for (int64_t oi = 0; oi < n; ++oi) {
        apply(oi, ii);
        for (int i = r - 1; i >= 0; --i) {
            ii += map_strides[i];
            if (++counter[i] < out_shape[i]) break;
            ii -= map_strides[i] * out_shape[i];
            counter[i] = 0;
        }
    }
}

}  // namespace detail

template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    const auto& s = a.shape();
    const int r = static_cast<int>(s.size());
    if (static_cast<int>(axes.size()) != r) throw ValidationError("permute: rank mismatch");
    std::vector<int> out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = s[axes[i]];

    std::vector<int64_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * s[i + 1];
    std::vector<int64_t> map_strides(r);
    for (int i = 0; i < r; ++i) map_strides[i] = in_strides[axes[i]];

    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* av = a.value().data();
    T* ov = out.value().data();
    detail::permute_walk(out_shape, map_strides,
                         [&](int64_t oi, int64_t ii) { ov[oi] = av[ii]; });
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, out_shape, map_strides](TensorNode<T>& o) {
            an->ensure_grad();
            T* ga = an->grad.data();
            const T* go = o.grad.data();
            detail::permute_walk(out_shape, map_strides,
                                 [&](int64_t oi, int64_t ii) { ga[ii] += go[oi]; });
        };
    }
    return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ValidationError("concat: empty input");
    const auto& s0 = parts[0].shape();
    const int r = static_cast<int>(s0.size());
    if (axis < 0 || axis >= r) throw ValidationError("concat: bad axis");
    std::vector<int> out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (static_cast<int>(s.size()) != r) throw ValidationError("concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis && s[i] != s0[i]) throw ValidationError("concat: shape mismatch");
        out_shape[axis] += s[axis];
    }
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (int i = axis + 1; i < r; ++i) inner *= s0[i];

    Tensor<T> out = Tensor<T>::zeros(out_shape);
    T* ov = out.value().data();
    const int64_t out_axis = out_shape[axis];
    int64_t offset = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        const int64_t pa = p.shape()[axis];
        const T* pv = p.value().data();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t j = 0; j < pa * inner; ++j)
                ov[(o * out_axis + offset) * inner + j] = pv[o * pa * inner + j];
        offset += pa;
        any_grad = any_grad || p.requires_grad();
    }
    if (any_grad) {
        auto on = out.node();
        on->requires_grad = true;
        std::vector<std::shared_ptr<TensorNode<T>>> parents;
        std::vector<int64_t> sizes;
        for (const auto& p : parts) {
            parents.push_back(p.node());
            sizes.push_back(p.shape()[axis]);
        }
        on->parents = parents;
        on->backprop = [parents, sizes, outer, inner, out_axis](TensorNode<T>& o) {
            int64_t offset = 0;
            for (size_t pi = 0; pi < parents.size(); ++pi) {
                auto& pn = parents[pi];
                const int64_t pa = sizes[pi];
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (int64_t ou = 0; ou < outer; ++ou)
                        for (int64_t j = 0; j < pa * inner; ++j)
                            pn->grad[ou * pa * inner + j] +=
                                o.grad[(ou * out_axis + offset) * inner + j];
                }
                offset += pa;
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& a, int start, int len) {
    const auto& s = a.shape();
    const int last = s.back();
    if (start < 0 || len <= 0 || start + len > last) throw ValidationError("slice_last: bad range");
    std::vector<int> out_shape = s;
    out_shape.back() = len;
    const int64_t rows = a.numel() / last;
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j) out.value()[r * len + j] = a.value()[r * last + start + j];
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, rows, len, last, start](TensorNode<T>& o) {
            an->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < len; ++j) an->grad[r * last + start + j] += o.grad[r * len + j];
        };
    }
    return out;
}

// Max over axis 0 of a 2-D tensor [R, C] -> [C]; ties take the first row.
template <class T>
Tensor<T> max_rows(const Tensor<T>& a) {
    const auto& s = a.shape();
    if (s.size() != 2) throw ValidationError("max_rows: expects a 2-D tensor");
    const int64_t R = s[0], C = s[1];
    if (R < 1) throw ValidationError("max_rows: empty input");
    Tensor<T> out = Tensor<T>::zeros({static_cast<int>(C)});
    std::vector<int64_t> arg(C, 0);
    for (int64_t c = 0; c < C; ++c) {
        T best = a.value()[c];
        int64_t bi = 0;
        for (int64_t r = 1; r < R; ++r) {
            T v = a.value()[r * C + c];
            if (v > best) {
                best = v;
                bi = r;
            }
        }
        out.value()[c] = best;
        arg[c] = bi;
    }
    if (a.requires_grad()) {
        auto an = a.node();
        out.node()->requires_grad = true;
        out.node()->parents = {an};
        out.node()->backprop = [an, arg, C](TensorNode<T>& o) {
            an->ensure_grad();
            for (int64_t c = 0; c < C; ++c) an->grad[arg[c] * C + c] += o.grad[c];
        };
    }
    return out;
}

}  // namespace n4mc
