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

#include "fixtures.hpp"
#include "n4mc/models.hpp"
#include "n4mc/rng.hpp"
#include "n4mc/training.hpp"
#include "n4mc/voxelize.hpp"

using namespace n4mc;

namespace {

Tensor<float> random_grid_tensor(int k, uint64_t seed, double lo = -1, double hi = 1) {
    Rng rng(seed);
    std::vector<float> v(static_cast<size_t>(4) * k * k * k);
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return Tensor<float>::from({1, 4, k, k, k}, std::move(v));
}

// Direct sliding-window SSIM in double precision.
double ssim_oracle(const Tensor<float>& a, const Tensor<float>& b, int w = 7) {
    const auto& s = a.shape();
    const int C = s[1], D = s[2], H = s[3], W = s[4];
    const double C1 = 0.0004, C2 = 0.0036;
    const int64_t voxels = static_cast<int64_t>(D) * H * W;
    double total = 0;
    int64_t count = 0;
    for (int c = 0; c < C; ++c) {
        const float* av = a.value().data() + c * voxels;
        const float* bv = b.value().data() + c * voxels;
        for (int z = 0; z + w <= D; ++z)
            for (int y = 0; y + w <= H; ++y)
                for (int x = 0; x + w <= W; ++x) {
                    double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                    for (int dz = 0; dz < w; ++dz)
                        for (int dy = 0; dy < w; ++dy)
                            for (int dx = 0; dx < w; ++dx) {
                                double va = av[(static_cast<int64_t>(z + dz) * H + y + dy) * W + x + dx];
                                double vb = bv[(static_cast<int64_t>(z + dz) * H + y + dy) * W + x + dx];
                                ma += va;
                                mb += vb;
                                maa += va * va;
                                mbb += vb * vb;
                                mab += va * vb;
                            }
                    double n = w * w * w;
                    ma /= n;
                    mb /= n;
                    double vxx = maa / n - ma * ma;
                    double vyy = mbb / n - mb * mb;
                    double vxy = mab / n - ma * mb;
                    total += (2 * ma * mb + C1) * (2 * vxy + C2) /
                             ((ma * ma + mb * mb + C1) * (vxx + vyy + C2));
                    ++count;
                }
    }
    return total / count;
}

std::vector<TsdfDefGrid> fixture_grids(int frames, int k) {
    auto meshes = testing::deforming_sequence(frames, 1);
    auto [norm, tf] = normalize_sequence(meshes);
    std::vector<TsdfDefGrid> grids;
    for (const auto& m : norm) grids.push_back(compute_tsdf_def(m, k));
    return grids;
}

}  // namespace

TEST_CASE("ssim3d: identical inputs give exactly 1") {
    auto a = random_grid_tensor(12, 3);
    auto b = Tensor<float>::from(a.shape(), a.value());
    CHECK(ssim3d(a, b).item() == 1.0f);
}

TEST_CASE("ssim3d: anti-correlated inputs are negative") {
    auto a = random_grid_tensor(12, 5);
    std::vector<float> nv(a.value().size());
    for (size_t i = 0; i < nv.size(); ++i) nv[i] = -a.value()[i];
    auto b = Tensor<float>::from(a.shape(), std::move(nv));
    CHECK(ssim3d(a, b).item() < 0.0f);
}

TEST_CASE("ssim3d: matches the sliding-window oracle") {
    auto a = random_grid_tensor(14, 7);
    auto b = random_grid_tensor(14, 8);
    double oracle = ssim_oracle(a, b);
    CHECK(std::abs(ssim3d(a, b).item() - oracle) <= 1e-5);
}

TEST_CASE("ssim3d: shape mismatch") {
    CHECK_THROWS_AS(ssim3d(random_grid_tensor(12, 1), random_grid_tensor(14, 2)), ValidationError);
}

TEST_CASE("reconstruction_loss: zero for identical inputs") {
    auto t = random_grid_tensor(12, 9);
    auto that = Tensor<float>::from(t.shape(), t.value());
    LossWeights w;
    CHECK(reconstruction_loss(that, t, w).item() == 0.0f);
}

TEST_CASE("reconstruction_loss: pure-L1 on a constant offset") {
    auto t = random_grid_tensor(12, 11, -0.4, 0.4);
    std::vector<float> shifted(t.value().size());
    const float delta = 0.125f;
    for (size_t i = 0; i < shifted.size(); ++i) shifted[i] = t.value()[i] + delta;
    auto that = Tensor<float>::from(t.shape(), std::move(shifted));
    LossWeights w;
    w.lambda_mask = 0;
    w.lambda_ssim = 0;
    w.lambda_l1 = 1.0f;
    CHECK(reconstruction_loss(that, t, w).item() == doctest::Approx(delta).epsilon(1e-6));
}

TEST_CASE("reconstruction_loss: matches term-by-term oracle") {
    auto t = random_grid_tensor(14, 13);
    auto that = random_grid_tensor(14, 14);
    LossWeights w;
    w.lambda_l1 = 0.7f;
    w.lambda_mask = 1.3f;
    w.lambda_ssim = 0.4f;
    w.alpha_mask = 0.5f;

    const int64_t n = t.numel();
    const int64_t voxels = n / 4;
    double l1 = 0;
    for (int64_t i = 0; i < n; ++i) l1 += std::abs(that.value()[i] - t.value()[i]);
    l1 /= n;
    double masked = 0;
    int64_t count = 0;
    for (int64_t v = 0; v < voxels; ++v) {
        if (std::abs(t.value()[v]) < w.alpha_mask) {
            ++count;
            for (int c = 0; c < 4; ++c)
                masked += std::abs(that.value()[c * voxels + v] - t.value()[c * voxels + v]);
        }
    }
    masked /= static_cast<double>(4 * count);
    double sterm = 1.0 - ssim_oracle(that, t);
    double expect = w.lambda_l1 * l1 + w.lambda_mask * masked + w.lambda_ssim * sterm;
    // float32 forward against the double oracle
    CHECK(std::abs(reconstruction_loss(that, t, w).item() - expect) <= 1e-5);
}

TEST_CASE("reconstruction_loss: mask comes from the ground truth only") {
    auto t = random_grid_tensor(12, 15, -0.3, 0.3);
    // Ground truth channel 0 partially outside the band.
    auto tv = t.value();
    const int64_t voxels = t.numel() / 4;
    for (int64_t v = 0; v < voxels; v += 2) tv[v] = 0.9f;  // outside alpha=0.5
    auto truth = Tensor<float>::from(t.shape(), tv);

    auto base = random_grid_tensor(12, 16, -0.3, 0.3);
    LossWeights w;
    w.lambda_l1 = 0;
    w.lambda_ssim = 0;
    LossBreakdown b1;
    reconstruction_loss(base, truth, w, &b1);

    // Perturb the prediction only at voxels OUTSIDE the ground-truth band.
    auto pv = base.value();
    for (int64_t v = 0; v < voxels; ++v)
        if (std::abs(truth.value()[v]) >= w.alpha_mask)
            for (int c = 0; c < 4; ++c) pv[c * voxels + v] += 0.5f;
    LossBreakdown b2;
    reconstruction_loss(Tensor<float>::from(base.shape(), pv), truth, w, &b2);
    CHECK(b1.mask == doctest::Approx(b2.mask).epsilon(1e-12));
}

TEST_CASE("reconstruction_loss: empty mask contributes zero") {
    auto t = random_grid_tensor(12, 17);
    auto tv = t.value();
    const int64_t voxels = t.numel() / 4;
    for (int64_t v = 0; v < voxels; ++v) tv[v] = 0.99f;  // nothing under alpha
    auto truth = Tensor<float>::from(t.shape(), tv);
    LossWeights w;
    w.lambda_l1 = 0;
    w.lambda_ssim = 0;
    LossBreakdown b;
    reconstruction_loss(random_grid_tensor(12, 18), truth, w, &b);
    CHECK(b.mask == 0.0);
}

TEST_CASE("reconstruction_loss: all-zero weights rejected") {
    LossWeights w;
    w.lambda_l1 = w.lambda_mask = w.lambda_ssim = 0;
    auto t = random_grid_tensor(12, 19);
    CHECK_THROWS_AS(reconstruction_loss(t, t, w), ValidationError);
}

TEST_CASE("build_groups: N=11 n=5") {
    auto groups = build_groups(11, 5);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].start == 0);
    CHECK(groups[0].end == 5);
    CHECK(groups[0].intermediates == std::vector<int>{1, 2, 3, 4});
    CHECK(groups[1].start == 5);
    CHECK(groups[1].end == 10);
    CHECK(groups[1].intermediates == std::vector<int>{6, 7, 8, 9});
}

TEST_CASE("build_groups: N=7 n=5 partial group") {
    auto groups = build_groups(7, 5);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].start == 0);
    CHECK(groups[0].end == 5);
    CHECK(groups[1].start == 5);
    CHECK(groups[1].end == 6);
    CHECK(groups[1].intermediates.empty());
}

TEST_CASE("build_groups: alpha values for n=5") {
    auto groups = build_groups(11, 5);
    std::vector<double> expect = {0.2, 0.4, 0.6, 0.8};
    for (size_t i = 0; i < 4; ++i)
        CHECK(groups[0].alphas[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("build_groups: every frame covered exactly once; adjacent keys shared") {
    for (int N : {5, 8, 12, 23}) {
        for (int n : {2, 3, 4, 7}) {
            auto groups = build_groups(N, n);
            std::vector<int> cover(N, 0);
            for (const auto& g : groups) {
                ++cover[g.start];
                ++cover[g.end];
                for (int t : g.intermediates) cover[t] += 2;  // counted once as intermediate
            }
            // Keys shared by two adjacent groups count twice except the ends.
            CHECK(cover[0] == 1);
            CHECK(cover[N - 1] == 1);
            for (int i = 1; i + 1 < N; ++i) CHECK(cover[i] == 2);
            for (size_t g = 0; g + 1 < groups.size(); ++g)
                CHECK(groups[g].end == groups[g + 1].start);
        }
    }
}

TEST_CASE("train_autoencoder: finite history and seed determinism") {
    auto grids = fixture_grids(2, 32);
    TrainingPlan plan;
    plan.stage_a_steps = 6;
    plan.batch = 1;
    plan.seed = 42;
    LossWeights w;

    auto cfg = ModelConfig::for_resolution(32);
    Encoder e1(cfg, derive_seed(plan.seed, "enc"));
    Decoder d1(cfg, derive_seed(plan.seed, "dec"));
    auto h1 = train_autoencoder(e1, d1, grids, plan, w);
    REQUIRE(h1.steps.size() == 6);
    for (const auto& s : h1.steps) CHECK(std::isfinite(s.total));

    Encoder e2(cfg, derive_seed(plan.seed, "enc"));
    Decoder d2(cfg, derive_seed(plan.seed, "dec"));
    auto h2 = train_autoencoder(e2, d2, grids, plan, w);
    for (size_t i = 0; i < h1.steps.size(); ++i) {
        CHECK(h1.steps[i].total == h2.steps[i].total);
        CHECK(h1.steps[i].l1 == h2.steps[i].l1);
    }
}

TEST_CASE("train_interpolator: decoder frozen bitwise; empty groups contribute nothing") {
    const int k = 32, N = 4;
    auto grids = fixture_grids(N, k);
    auto cfg = ModelConfig::for_resolution(k);
    Encoder enc(cfg, 1);
    Decoder dec(cfg, 2);
    LatentMapper mapper(cfg, 3);
    Interpolator interp(cfg, 4);

    std::vector<FeatureTensor> feats;
    for (const auto& g : grids) feats.push_back(enc.encode(g));

    TrackingConfig tc;
    tc.p = 16;
    tc.grid_resolution = 32;
    auto meshes = testing::deforming_sequence(N, 1);
    auto [norm, tf] = normalize_sequence(meshes);
    auto centers = track_sequence(norm, tc);

    dec.params().set_trainable(false);
    auto dec_before = dec.params().at("out.w").tensor.value();

    TrainingPlan plan;
    plan.stage_b_steps = 4;
    plan.finetune_steps = 0;
    plan.group_size = 2;  // groups (0,[1],2), (2,[3]... N=4 keys {0,2,3}: (2,[],3) skipped
    plan.seed = 7;
    StageBInputs in;
    in.features = &feats;
    in.centers = &centers;
    in.grids = &grids;
    LossWeights w;
    auto h = train_interpolator(mapper, interp, dec, in, plan, w);
    REQUIRE(h.steps.size() == 4);
    for (const auto& s : h.steps) CHECK(std::isfinite(s.total));

    CHECK(dec.params().at("out.w").tensor.value() == dec_before);

    // Unfrozen decoder is rejected.
    dec.params().set_trainable(true);
    CHECK_THROWS_AS(train_interpolator(mapper, interp, dec, in, plan, w), ValidationError);
}

TEST_CASE("train_interpolator: fixed seed reproducibility") {
    const int k = 32, N = 3;
    auto grids = fixture_grids(N, k);
    auto cfg = ModelConfig::for_resolution(k);
    Encoder enc(cfg, 11);
    std::vector<FeatureTensor> feats;
    for (const auto& g : grids) feats.push_back(enc.encode(g));
    TrackingConfig tc;
    tc.p = 12;
    tc.grid_resolution = 32;
    auto meshes = testing::deforming_sequence(N, 1);
    auto [norm, tf] = normalize_sequence(meshes);
    auto centers = track_sequence(norm, tc);

    TrainingPlan plan;
    plan.stage_b_steps = 3;
    plan.finetune_steps = 0;
    plan.group_size = 2;
    plan.seed = 99;
    StageBInputs in;
    in.features = &feats;
    in.centers = &centers;
    in.grids = &grids;
    LossWeights w;

    std::vector<double> totals[2];
    for (int run = 0; run < 2; ++run) {
        Decoder dec(cfg, 12);
        dec.params().set_trainable(false);
        LatentMapper mapper(cfg, 13);
        Interpolator interp(cfg, 14);
        auto h = train_interpolator(mapper, interp, dec, in, plan, w);
        for (const auto& s : h.steps) totals[run].push_back(s.total);
    }
    CHECK(totals[0] == totals[1]);
}

TEST_CASE("history CSV export") {
    TrainHistory h;
    h.steps.push_back({0, 1.5, 0.5, 0.75, 0.25, 1e-3});
    h.steps.push_back({1, 1.2, 0.4, 0.6, 0.2, 9e-4});
    auto path = testing::temp_dir("n4mc_training_tests") + "/hist.csv";
    write_history_csv(path, h);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,total,l1,mask,ssim,lr");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
}
