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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "n4mc/optim.hpp"
#include "n4mc/rng.hpp"
#include "n4mc/tensor.hpp"
#include "n4mc/tensor_ops.hpp"

using namespace n4mc;
using n4mc::testing::gradcheck;

// ---------------------------------------------------------------- examples

TEST_CASE("conv3d: 1x1x1 identity kernel") {
    Rng rng(1);
    std::vector<float> data(2 * 1 * 3 * 3 * 3);
    for (auto& v : data) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from({2, 1, 3, 3, 3}, data);
    auto w = Tensor<float>::from({1, 1, 1, 1, 1}, {1.0f});
    auto b = Tensor<float>::from({1}, {0.0f});
    auto y = conv3d(x, w, b);
    CHECK(y.value() == data);
}

TEST_CASE("conv3d: all-ones 3^3 kernel on constant input") {
    std::vector<float> data(1 * 1 * 5 * 5 * 5, 7.0f);
    auto x = Tensor<float>::from({1, 1, 5, 5, 5}, data);
    auto w = Tensor<float>::from({1, 1, 3, 3, 3}, std::vector<float>(27, 1.0f));
    auto y = conv3d(x, w, Tensor<float>(), 1, 1);
    // Interior voxel: full 27-tap support.
    const auto& ys = y.shape();
    CHECK(ys == std::vector<int>{1, 1, 5, 5, 5});
    int64_t mid = (2 * 5 + 2) * 5 + 2;
    CHECK(y.value()[mid] == doctest::Approx(189.0f));
}

TEST_CASE("conv3d: matches a direct 7-loop reference") {
    Rng rng(42);
    const int B = 2, C = 1, D = 4, H = 4, W = 4, O = 3, K = 3;
    std::vector<float> xd(B * C * D * H * W), wd(O * C * K * K * K), bd(O);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : wd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : bd) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from({B, C, D, H, W}, xd);
    auto w = Tensor<float>::from({O, C, K, K, K}, wd);
    auto b = Tensor<float>::from({O}, bd);

    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            auto y = conv3d(x, w, b, stride, pad);
            const int Do = (D + 2 * pad - K) / stride + 1;
            for (int bi = 0; bi < B; ++bi)
                for (int o = 0; o < O; ++o)
                    for (int zo = 0; zo < Do; ++zo)
                        for (int yo = 0; yo < Do; ++yo)
                            for (int xo = 0; xo < Do; ++xo) {
                                double acc = bd[o];
                                for (int c = 0; c < C; ++c)
                                    for (int dz = 0; dz < K; ++dz)
                                        for (int dy = 0; dy < K; ++dy)
                                            for (int dx = 0; dx < K; ++dx) {
                                                int zi = zo * stride - pad + dz;
                                                int yi = yo * stride - pad + dy;
                                                int xi = xo * stride - pad + dx;
                                                if (zi < 0 || zi >= D || yi < 0 || yi >= H ||
                                                    xi < 0 || xi >= W)
                                                    continue;
                                                acc += wd[((o * C + c) * K + dz) * K * K + dy * K +
                                                          dx] *
                                                       xd[((bi * C + c) * D + zi) * H * W + yi * W +
                                                          xi];
                                            }
                                float got = y.value()[((bi * O + o) * Do + zo) * Do * Do + yo * Do +
                                                      xo];
                                CHECK(got == doctest::Approx(acc).epsilon(1e-5));
                            }
        }
    }
}

TEST_CASE("conv3d: shape mismatch lists shapes") {
    auto x = Tensor<float>::from({1, 2, 3, 3, 3}, std::vector<float>(54, 0.0f));
    auto w = Tensor<float>::from({1, 3, 1, 1, 1}, std::vector<float>(3, 0.0f));
    CHECK_THROWS_WITH_AS(conv3d(x, w, Tensor<float>()), doctest::Contains("channel mismatch"),
                         ValidationError);
}

TEST_CASE("linear: identity weight") {
    auto x = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
    auto w = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
    auto b = Tensor<float>::from({2}, {0, 0});
    auto y = linear(x, w, b);
    CHECK(y.value() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("linear: [[1,1]] weight sums") {
    auto x = Tensor<float>::from({2}, {2, 3});
    auto w = Tensor<float>::from({1, 2}, {1, 1});
    auto b = Tensor<float>::from({1}, {0});
    auto y = linear(x, w, b);
    CHECK(y.value()[0] == doctest::Approx(5.0f));
}

TEST_CASE("linear: random case vs matmul oracle") {
    Rng rng(9);
    std::vector<float> xd(5 * 8), wd(3 * 8), bd(3);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : wd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : bd) v = static_cast<float>(rng.uniform(-1, 1));
    auto y = linear(Tensor<float>::from({5, 8}, xd), Tensor<float>::from({3, 8}, wd),
                    Tensor<float>::from({3}, bd));
    for (int r = 0; r < 5; ++r)
        for (int o = 0; o < 3; ++o) {
            double acc = bd[o];
            for (int i = 0; i < 8; ++i) acc += xd[r * 8 + i] * wd[o * 8 + i];
            CHECK(y.value()[r * 3 + o] == doctest::Approx(acc).epsilon(1e-6));
        }
}

TEST_CASE("layer_norm: constant vector maps to beta") {
    auto x = Tensor<float>::from({4}, {3, 3, 3, 3});
    auto g = Tensor<float>::from({4}, {1, 1, 1, 1});
    auto b = Tensor<float>::from({4}, {0, 0, 0, 0});
    auto y = layer_norm(x, g, b);
    for (float v : y.value()) CHECK(std::abs(v) <= 1e-6f);
}

TEST_CASE("layer_norm: two-point standardization") {
    auto x = Tensor<float>::from({2}, {1, 3});
    auto g = Tensor<float>::from({2}, {1, 1});
    auto b = Tensor<float>::from({2}, {0, 0});
    auto y = layer_norm(x, g, b, 1e-12f);
    CHECK(y.value()[0] == doctest::Approx(-1.0f).epsilon(1e-5));
    CHECK(y.value()[1] == doctest::Approx(1.0f).epsilon(1e-5));
}

TEST_CASE("layer_norm: statistics on random rows") {
    Rng rng(17);
    const int R = 20, D = 64;
    std::vector<float> xd(R * D);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-3, 3));
    auto y = layer_norm(Tensor<float>::from({R, D}, xd),
                        Tensor<float>::from({D}, std::vector<float>(D, 1.0f)),
                        Tensor<float>::from({D}, std::vector<float>(D, 0.0f)));
    for (int r = 0; r < R; ++r) {
        double m = 0, v2 = 0;
        for (int i = 0; i < D; ++i) m += y.value()[r * D + i];
        m /= D;
        for (int i = 0; i < D; ++i) {
            double d = y.value()[r * D + i] - m;
            v2 += d * d;
        }
        v2 /= D;
        CHECK(std::abs(m) <= 1e-6);
        CHECK(std::abs(v2 - 1.0) <= 1e-4);
    }
}

TEST_CASE("gelu: fixed points and asymptote") {
    auto x = Tensor<float>::from({3}, {0.0f, 10.0f, -1.0f});
    auto y = gelu(x);
    CHECK(y.value()[0] == 0.0f);
    CHECK(y.value()[1] == doctest::Approx(10.0f).epsilon(1e-6));
    // erf oracle at -1: x * 0.5*(1+erf(-1/sqrt(2)))
    double expect = -1.0 * 0.5 * (1.0 + std::erf(-1.0 / std::sqrt(2.0)));
    CHECK(y.value()[2] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("pixel_shuffle3d: r=1 identity") {
    Rng rng(3);
    std::vector<float> xd(2 * 4 * 2 * 2 * 2);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from({2, 4, 2, 2, 2}, xd);
    auto y = pixel_shuffle3d(x, 1);
    CHECK(y.value() == xd);
}

TEST_CASE("pixel_shuffle3d: 8 channels to a 2x2x2 block") {
    std::vector<float> xd(8);
    for (int i = 0; i < 8; ++i) xd[i] = static_cast<float>(i);
    auto y = pixel_shuffle3d(Tensor<float>::from({1, 8, 1, 1, 1}, xd), 2);
    CHECK(y.shape() == std::vector<int>{1, 1, 2, 2, 2});
    std::vector<float> sorted = y.value();
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == xd);  // each channel value appears exactly once
    // Channel-major: channel index c = ((dz*2)+dy)*2+dx lands at (dz,dy,dx).
    CHECK(y.value()[0] == 0.0f);
    CHECK(y.value()[7] == 7.0f);
}

TEST_CASE("pixel_shuffle3d: unshuffle inverts shuffle") {
    Rng rng(5);
    std::vector<float> xd(1 * 16 * 3 * 2 * 2);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from({1, 16, 3, 2, 2}, xd);
    auto y = pixel_unshuffle3d(pixel_shuffle3d(x, 2), 2);
    CHECK(y.value() == xd);
}

TEST_CASE("multi_head_attention: T=1 reduces to the output projection") {
    Rng rng(11);
    const int L = 6, heads = 2;
    std::vector<float> qd(L), kd(L), vd(L), wd(L * L), bd(L);
    for (auto& v : qd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : kd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : vd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : wd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : bd) v = static_cast<float>(rng.uniform(-1, 1));
    auto out = multi_head_attention(Tensor<float>::from({1, 1, L}, qd),
                                    Tensor<float>::from({1, 1, L}, kd),
                                    Tensor<float>::from({1, 1, L}, vd), heads,
                                    Tensor<float>::from({L, L}, wd), Tensor<float>::from({L}, bd));
    for (int o = 0; o < L; ++o) {
        double acc = bd[o];
        for (int i = 0; i < L; ++i) acc += wd[o * L + i] * vd[i];
        CHECK(out.value()[o] == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("multi_head_attention: identical keys give uniform weights") {
    Rng rng(13);
    const int Tn = 5, L = 4, heads = 2;
    std::vector<float> qd(Tn * L), kone(L), vd(Tn * L);
    for (auto& v : qd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : kone) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : vd) v = static_cast<float>(rng.uniform(-1, 1));
    std::vector<float> kd(Tn * L);
    for (int t = 0; t < Tn; ++t)
        for (int i = 0; i < L; ++i) kd[t * L + i] = kone[i];
    // Identity projection exposes the attention average directly.
    std::vector<float> wid(L * L, 0.0f);
    for (int i = 0; i < L; ++i) wid[i * L + i] = 1.0f;
    auto out = multi_head_attention(Tensor<float>::from({1, Tn, L}, qd),
                                    Tensor<float>::from({1, Tn, L}, kd),
                                    Tensor<float>::from({1, Tn, L}, vd), heads,
                                    Tensor<float>::from({L, L}, wid),
                                    Tensor<float>::from({L}, std::vector<float>(L, 0.0f)));
    for (int t = 0; t < Tn; ++t)
        for (int i = 0; i < L; ++i) {
            double avg = 0.0;
            for (int s = 0; s < Tn; ++s) avg += vd[s * L + i];
            avg /= Tn;
            CHECK(std::abs(out.value()[t * L + i] - avg) <= 1e-6);
        }
}

TEST_CASE("multi_head_attention: explicit softmax oracle") {
    Rng rng(21);
    const int B = 1, Tn = 3, L = 4, heads = 2, dh = L / heads;
    std::vector<float> qd(B * Tn * L), kd(B * Tn * L), vd(B * Tn * L), wid(L * L, 0.0f);
    for (auto& v : qd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : kd) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : vd) v = static_cast<float>(rng.uniform(-1, 1));
    for (int i = 0; i < L; ++i) wid[i * L + i] = 1.0f;
    auto out = multi_head_attention(Tensor<float>::from({B, Tn, L}, qd),
                                    Tensor<float>::from({B, Tn, L}, kd),
                                    Tensor<float>::from({B, Tn, L}, vd), heads,
                                    Tensor<float>::from({L, L}, wid),
                                    Tensor<float>::from({L}, std::vector<float>(L, 0.0f)));
    for (int h = 0; h < heads; ++h)
        for (int t = 0; t < Tn; ++t) {
            std::vector<double> scores(Tn);
            for (int s = 0; s < Tn; ++s) {
                double acc = 0.0;
                for (int i = 0; i < dh; ++i)
                    acc += qd[t * L + h * dh + i] * kd[s * L + h * dh + i];
                scores[s] = acc / std::sqrt(static_cast<double>(dh));
            }
            double mx = *std::max_element(scores.begin(), scores.end());
            double denom = 0.0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                denom += s;
            }
            for (int i = 0; i < dh; ++i) {
                double acc = 0.0;
                for (int s = 0; s < Tn; ++s) acc += scores[s] / denom * vd[s * L + h * dh + i];
                CHECK(std::abs(out.value()[t * L + h * dh + i] - acc) <= 1e-5);
            }
        }
}

TEST_CASE("softmax: rows sum to one") {
    Rng rng(7);
    std::vector<float> xd(16 * 9);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-5, 5));
    auto y = softmax(Tensor<float>::from({16, 9}, xd));
    for (int r = 0; r < 16; ++r) {
        double s = 0.0;
        for (int c = 0; c < 9; ++c) s += y.value()[r * 9 + c];
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("fake_quantize: lattice fixed point and idempotence") {
    // Values already on the 8-bit lattice over [0, 255].
    std::vector<float> xd;
    for (int i = 0; i < 256; ++i) xd.push_back(static_cast<float>(i));
    auto y = fake_quantize(Tensor<float>::from({256}, xd));
    CHECK(y.value() == xd);

    Rng rng(23);
    std::vector<float> rd(1000);
    for (auto& v : rd) v = static_cast<float>(rng.uniform(-3, 7));
    auto once = fake_quantize(Tensor<float>::from({1000}, rd));
    auto twice = fake_quantize(once);
    CHECK(twice.value() == once.value());
}

TEST_CASE("fake_quantize: max error at most half a step") {
    Rng rng(29);
    std::vector<float> xd(4096);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-2, 5));
    auto y = fake_quantize(Tensor<float>::from({4096}, xd));
    float mn = *std::min_element(xd.begin(), xd.end());
    float mx = *std::max_element(xd.begin(), xd.end());
    double step = (static_cast<double>(mx) - mn) / 255.0;
    for (size_t i = 0; i < xd.size(); ++i)
        CHECK(std::abs(y.value()[i] - xd[i]) <= step / 2 + 1e-7);
}

TEST_CASE("fake_quantize: straight-through backward") {
    Rng rng(31);
    std::vector<float> xd(64);
    for (auto& v : xd) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor<float>::from({64}, xd, true);
    backward(sum(fake_quantize(x)));
    for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("fake_quantize: constant tensor unchanged") {
    auto x = Tensor<float>::from({5}, std::vector<float>(5, 3.25f));
    auto y = fake_quantize(x);
    CHECK(y.value() == x.value());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamStore store;
    auto& t = store.create("w", {4}, {1, 2, 3, 4});
    store.zero_grads();
    Adam opt;
    opt.step(store.params(), 0.01);
    CHECK(t.value() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("adam: constant gradient converges to -sign(g) * lr per step") {
    ParamStore store;
    auto& t = store.create("w", {2}, {0, 0});
    Adam opt;
    float before0 = 0, before1 = 0;
    for (int i = 0; i < 400; ++i) {
        t.grad()[0] = 3.0f;
        t.grad()[1] = -0.5f;
        before0 = t.value()[0];
        before1 = t.value()[1];
        opt.step(store.params(), 0.01);
    }
    CHECK(t.value()[0] - before0 == doctest::Approx(-0.01).epsilon(1e-3));
    CHECK(t.value()[1] - before1 == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adam: quadratic convergence") {
    ParamStore store;
    auto& t = store.create("x", {1}, {1.0f});
    Adam opt;
    for (int i = 0; i < 500; ++i) {
        store.zero_grads();
        t.grad()[0] = 2.0f * t.value()[0];
        opt.step(store.params(), 0.01);
    }
    CHECK(std::abs(t.value()[0]) < 0.05f);
}

TEST_CASE("adam: NaN gradient names the parameter") {
    ParamStore store;
    store.create("enc.w", {1}, {1.0f});
    store.params()[0].tensor.grad()[0] = std::nanf("");
    Adam opt;
    CHECK_THROWS_WITH_AS(opt.step(store.params(), 0.01), doctest::Contains("enc.w"),
                         ValidationError);
}

TEST_CASE("lr_at: schedule endpoints") {
    CHECK(lr_at(0, 1000, 0.001, 1e-5, 0.2) == 0.0);
    CHECK(lr_at(200, 1000, 0.001, 1e-5, 0.2) == doctest::Approx(0.001));
    CHECK(lr_at(1000, 1000, 0.001, 1e-5, 0.2) == doctest::Approx(1e-5));
    // Monotone decay after warmup.
    double prev = lr_at(200, 1000, 0.001, 1e-5, 0.2);
    for (int s = 201; s <= 1000; s += 20) {
        double cur = lr_at(s, 1000, 0.001, 1e-5, 0.2);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("backward: double consumer accumulates both contributions") {
    auto x = Tensor<float>::from({3}, {1, 2, 3}, true);
    auto y = add(mul(x, x), x);  // x^2 + x -> dy/dx = 2x + 1
    backward(sum(y));
    for (int i = 0; i < 3; ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0f * x.value()[i] + 1.0f));
}

TEST_CASE("backward: each node visited once (grad correct on diamond)") {
    auto x = Tensor<float>::from({1}, {2.0f}, true);
    auto a = mul(x, x);       // x^2
    auto b = add(a, a);       // 2 x^2 -> d/dx = 4x = 8
    backward(sum(b));
    CHECK(x.grad()[0] == doctest::Approx(8.0f));
}

// ----------------------------------------------------------- grad checks

TEST_CASE("gradcheck: elementwise ops") {
    N4MC_GRADCHECK("add", std::vector<std::vector<int>>({{7}, {7}}), add(xs[0], xs[1]));
    N4MC_GRADCHECK("sub", std::vector<std::vector<int>>({{7}, {7}}), sub(xs[0], xs[1]));
    N4MC_GRADCHECK("mul", std::vector<std::vector<int>>({{7}, {7}}), mul(xs[0], xs[1]));
    N4MC_GRADCHECK("neg", std::vector<std::vector<int>>({{7}}), neg(xs[0]));
    N4MC_GRADCHECK("tanh", std::vector<std::vector<int>>({{7}}), tanh_t(xs[0]));
    N4MC_GRADCHECK("gelu", std::vector<std::vector<int>>({{7}}), gelu(xs[0]));
    N4MC_GRADCHECK("mean", std::vector<std::vector<int>>({{9}}), mean(xs[0]));
    N4MC_GRADCHECK("add_scalar", std::vector<std::vector<int>>({{5}}),
                   add_scalar(xs[0], decltype(xs[0].item())(0.7)));
}

TEST_CASE("gradcheck: div and abs away from singularities") {
    gradcheck(
        "div", {{6}, {6}},
        [](std::vector<Tensor<double>>& xs) {
            return div(xs[0], add_scalar(abs_t(xs[1]), 1.0));
        },
        [](std::vector<Tensor<float>>& xs) {
            return div(xs[0], add_scalar(abs_t(xs[1]), 1.0f));
        });
    gradcheck(
        "abs", {{6}},
        [](std::vector<Tensor<double>>& xs) { return abs_t(add_scalar(xs[0], 4.0)); },
        [](std::vector<Tensor<float>>& xs) { return abs_t(add_scalar(xs[0], 4.0f)); });
}

TEST_CASE("gradcheck: broadcast ops") {
    N4MC_GRADCHECK("add_broadcast", std::vector<std::vector<int>>({{4, 3}, {3}}),
                   add_broadcast(xs[0], xs[1]));
    N4MC_GRADCHECK("mul_broadcast", std::vector<std::vector<int>>({{4, 3}, {3}}),
                   mul_broadcast(xs[0], xs[1]));
    N4MC_GRADCHECK("mul_broadcast_scalar", std::vector<std::vector<int>>({{6}, {1}}),
                   mul_broadcast(xs[0], xs[1]));
}

TEST_CASE("gradcheck: shape ops") {
    N4MC_GRADCHECK("reshape", std::vector<std::vector<int>>({{2, 6}}),
                   reshape(xs[0], {3, 4}));
    N4MC_GRADCHECK("permute", std::vector<std::vector<int>>({{2, 3, 4}}),
                   permute(xs[0], {2, 0, 1}));
    N4MC_GRADCHECK("concat0", std::vector<std::vector<int>>({{2, 3}, {1, 3}}),
                   concat(std::vector{xs[0], xs[1]}, 0));
    N4MC_GRADCHECK("concat1", std::vector<std::vector<int>>({{2, 3}, {2, 2}}),
                   concat(std::vector{xs[0], xs[1]}, 1));
    N4MC_GRADCHECK("slice_last", std::vector<std::vector<int>>({{3, 6}}),
                   slice_last(xs[0], 1, 3));
}

TEST_CASE("gradcheck: max_rows at generic points") {
    N4MC_GRADCHECK("max_rows", std::vector<std::vector<int>>({{5, 4}}), max_rows(xs[0]));
}

TEST_CASE("gradcheck: linear and matmul") {
    N4MC_GRADCHECK("linear", std::vector<std::vector<int>>({{4, 5}, {3, 5}, {3}}),
                   linear(xs[0], xs[1], xs[2]));
    N4MC_GRADCHECK("matmul", std::vector<std::vector<int>>({{2, 3, 4}, {2, 4, 2}}),
                   matmul(xs[0], xs[1]));
}

TEST_CASE("gradcheck: conv3d variants") {
    N4MC_GRADCHECK("conv3d_pointwise",
                   std::vector<std::vector<int>>({{1, 3, 2, 2, 2}, {4, 3, 1, 1, 1}, {4}}),
                   conv3d(xs[0], xs[1], xs[2]));
    gradcheck(
        "conv3d_3x3_pad", {{1, 2, 4, 4, 4}, {2, 2, 3, 3, 3}, {2}},
        [](std::vector<Tensor<double>>& xs) { return conv3d(xs[0], xs[1], xs[2], 1, 1); },
        [](std::vector<Tensor<float>>& xs) { return conv3d(xs[0], xs[1], xs[2], 1, 1); });
    gradcheck(
        "conv3d_stride2", {{1, 1, 4, 4, 4}, {2, 1, 2, 2, 2}, {2}},
        [](std::vector<Tensor<double>>& xs) { return conv3d(xs[0], xs[1], xs[2], 2, 0); },
        [](std::vector<Tensor<float>>& xs) { return conv3d(xs[0], xs[1], xs[2], 2, 0); });
    gradcheck(
        "depthwise_conv3d", {{1, 2, 3, 3, 3}, {2, 3, 3, 3}, {2}},
        [](std::vector<Tensor<double>>& xs) { return depthwise_conv3d(xs[0], xs[1], xs[2], 1); },
        [](std::vector<Tensor<float>>& xs) { return depthwise_conv3d(xs[0], xs[1], xs[2], 1); });
}

TEST_CASE("gradcheck: layer_norm, softmax, attention") {
    N4MC_GRADCHECK("layer_norm", std::vector<std::vector<int>>({{3, 6}, {6}, {6}}),
                   layer_norm(xs[0], xs[1], xs[2]));
    N4MC_GRADCHECK("softmax", std::vector<std::vector<int>>({{4, 5}}), softmax(xs[0]));
    N4MC_GRADCHECK("attention",
                   std::vector<std::vector<int>>(
                       {{1, 3, 4}, {1, 3, 4}, {1, 3, 4}, {4, 4}, {4}}),
                   multi_head_attention(xs[0], xs[1], xs[2], 2, xs[3], xs[4]));
}

TEST_CASE("gradcheck: pixel shuffle and box filter") {
    N4MC_GRADCHECK("pixel_shuffle3d", std::vector<std::vector<int>>({{1, 8, 2, 2, 2}}),
                   pixel_shuffle3d(xs[0], 2));
    N4MC_GRADCHECK("box_filter_z", std::vector<std::vector<int>>({{2, 5, 3, 3}}),
                   box_filter1d(xs[0], 1, 3));
    N4MC_GRADCHECK("box_filter_x", std::vector<std::vector<int>>({{2, 3, 3, 5}}),
                   box_filter1d(xs[0], 3, 3));
}

TEST_CASE("gradcheck: sum") {
    N4MC_GRADCHECK("sum", std::vector<std::vector<int>>({{11}}), sum(xs[0]));
    N4MC_GRADCHECK("scale", std::vector<std::vector<int>>({{11}}),
                   scale(xs[0], decltype(xs[0].item())(1.3)));
}
