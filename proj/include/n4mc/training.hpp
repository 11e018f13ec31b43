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

#include <functional>

#include "n4mc/models.hpp"
#include "n4mc/tracking.hpp"

namespace n4mc {

struct LossWeights {
    float lambda_l1 = 1.0f;
    float lambda_mask = 2.0f;
    float lambda_ssim = 0.5f;
    float alpha_mask = 0.5f;  // near-surface threshold in normalized TSDF units
};

struct TrainingPlan {
    int stage_a_steps = 20000;
    int stage_b_steps = 10000;
    int finetune_steps = 500;  // stage-B tail on quantized key features
    int batch = 2;             // frames per stage-A step
    int group_size = 5;
    uint64_t seed = 0;
    double base_lr = 1e-3;
    double min_lr = 1e-5;
    double warmup_fraction = 0.2;
};

struct LossBreakdown {
    int64_t step = 0;
    double total = 0, l1 = 0, mask = 0, ssim = 0;
    double lr = 0;
};

// Mean local SSIM over 7^3 valid windows, per channel, box weighting,
// constants from dynamic range L = 2.
Tensor<float> ssim3d(const Tensor<float>& a, const Tensor<float>& b, int window = 7);

// lambda_l1 * mean|d| + lambda_mask * masked-mean|d| + lambda_ssim * (1-SSIM)
// with the mask taken from the GROUND-TRUTH channel 0 (|T0| < alpha). An
// empty mask contributes zero.
Tensor<float> reconstruction_loss(const Tensor<float>& that, const Tensor<float>& truth,
                                  const LossWeights& w, LossBreakdown* breakdown = nullptr);

struct FrameGroup {
    int start = 0, end = 0;
    std::vector<int> intermediates;
    std::vector<double> alphas;  // (t - s) / (e - s) per intermediate
};

// Key frames at 0, n, 2n, ...; the last frame is always a key frame.
std::vector<FrameGroup> build_groups(int frame_count, int group_size);

struct TrainHistory {
    std::vector<LossBreakdown> steps;
    double final_loss() const { return steps.empty() ? 0.0 : steps.back().total; }
};

void write_history_csv(const std::string& path, const TrainHistory& history);

// Stage A: joint encoder/decoder optimization on
// decode(fake_quantize(encode(T))). Deterministic per plan.seed.
TrainHistory train_autoencoder(Encoder& encoder, Decoder& decoder,
                               const std::vector<TsdfDefGrid>& grids, const TrainingPlan& plan,
                               const LossWeights& w,
                               const std::function<void(int64_t)>& on_step = {});

struct StageBInputs {
    const std::vector<FeatureTensor>* features = nullptr;        // training features
    const std::vector<FeatureTensor>* quantized_features = nullptr;  // fine-tune tail
    const VolumeCenters* centers = nullptr;
    const std::vector<TsdfDefGrid>* grids = nullptr;  // targets
    bool zero_latent = false;  // ablation: replace z with zeros everywhere
};

// Stage B: mapper + interpolation transformer against a frozen decoder.
// Throws if any decoder parameter is still trainable.
TrainHistory train_interpolator(LatentMapper& mapper, Interpolator& interp, Decoder& decoder,
                                const StageBInputs& in, const TrainingPlan& plan,
                                const LossWeights& w,
                                const std::function<void(int64_t)>& on_step = {});

// Mean evaluation-mode loss over every intermediate frame (no noise, no
// gradient); used by the ablation and group-size checks.
double eval_interpolation_loss(const LatentMapper& mapper, const Interpolator& interp,
                               const Decoder& decoder, const StageBInputs& in, int group_size,
                               const LossWeights& w);

}  // namespace n4mc
