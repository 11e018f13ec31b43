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

#include "n4mc/training.hpp"

#include <cmath>
#include <fstream>

namespace n4mc {

Tensor<float> ssim3d(const Tensor<float>& a, const Tensor<float>& b, int window) {
    if (a.shape() != b.shape()) throw ValidationError("ssim3d: shape mismatch");
    const auto& s = a.shape();
    if (s.size() != 5 || s[0] != 1) throw ValidationError("ssim3d: expects [1,C,D,H,W]");
    const float C1 = 0.0004f;  // (0.01 * L)^2, L = 2
    const float C2 = 0.0036f;  // (0.03 * L)^2

    auto x = reshape(a, {s[1], s[2], s[3], s[4]});
    auto y = reshape(b, {s[1], s[2], s[3], s[4]});
    auto box = [&](Tensor<float> t) {
        t = box_filter1d(t, 1, window);
        t = box_filter1d(t, 2, window);
        t = box_filter1d(t, 3, window);
        return t;
    };
    auto mx = box(x);
    auto my = box(y);
    auto mxx = box(mul(x, x));
    auto myy = box(mul(y, y));
    auto mxy = box(mul(x, y));

    auto vx = sub(mxx, mul(mx, mx));
    auto vy = sub(myy, mul(my, my));
    auto cxy = sub(mxy, mul(mx, my));

    auto num = mul(add_scalar(scale(mul(mx, my), 2.0f), C1), add_scalar(scale(cxy, 2.0f), C2));
    auto den = mul(add_scalar(add(mul(mx, mx), mul(my, my)), C1), add_scalar(add(vx, vy), C2));
    return mean(div(num, den));
}

Tensor<float> reconstruction_loss(const Tensor<float>& that, const Tensor<float>& truth,
                                  const LossWeights& w, LossBreakdown* breakdown) {
    if (that.shape() != truth.shape()) throw ValidationError("reconstruction_loss: shape mismatch");
    if (!(w.lambda_l1 > 0 || w.lambda_mask > 0 || w.lambda_ssim > 0))
        throw ValidationError("reconstruction_loss: at least one lambda must be positive");
    const auto& s = that.shape();
    const int64_t voxels = static_cast<int64_t>(s[2]) * s[3] * s[4];

    Tensor<float> diff = abs_t(sub(that, truth));
    Tensor<float> l1 = mean(diff);

    // Near-surface mask from the ground-truth TSDF channel, broadcast over
    // all four channels.
    std::vector<float> mask(truth.numel(), 0.0f);
    int64_t count = 0;
    for (int64_t i = 0; i < voxels; ++i) {
        if (std::abs(truth.value()[i]) < w.alpha_mask) {
            for (int c = 0; c < 4; ++c) mask[c * voxels + i] = 1.0f;
            ++count;
        }
    }
    Tensor<float> mask_term;
    if (count > 0) {
        Tensor<float> m = Tensor<float>::from(s, std::move(mask));
        mask_term = scale(sum(mul(diff, m)), 1.0f / static_cast<float>(4 * count));
    } else {
        mask_term = Tensor<float>::scalar(0.0f);
    }

    Tensor<float> ssim_term = add_scalar(neg(ssim3d(that, truth)), 1.0f);

    Tensor<float> total = add(add(scale(l1, w.lambda_l1), scale(mask_term, w.lambda_mask)),
                              scale(ssim_term, w.lambda_ssim));
    if (breakdown) {
        breakdown->l1 = l1.item();
        breakdown->mask = mask_term.item();
        breakdown->ssim = ssim_term.item();
        breakdown->total = total.item();
    }
    return total;
}

std::vector<FrameGroup> build_groups(int frame_count, int group_size) {
    if (frame_count < 2) throw ValidationError("build_groups: need at least 2 frames");
    if (group_size < 2) throw ValidationError("build_groups: group size must be >= 2");
    std::vector<int> keys;
    for (int i = 0; i < frame_count - 1; i += group_size) keys.push_back(i);
    keys.push_back(frame_count - 1);

    std::vector<FrameGroup> groups;
    for (size_t g = 0; g + 1 < keys.size(); ++g) {
        FrameGroup fg;
        fg.start = keys[g];
        fg.end = keys[g + 1];
        for (int t = fg.start + 1; t < fg.end; ++t) {
            fg.intermediates.push_back(t);
            fg.alphas.push_back(static_cast<double>(t - fg.start) / (fg.end - fg.start));
        }
        groups.push_back(std::move(fg));
    }
    return groups;
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "step,total,l1,mask,ssim,lr\n";
    for (const auto& h : history.steps) {
        out << h.step << ',' << h.total << ',' << h.l1 << ',' << h.mask << ',' << h.ssim << ','
            << h.lr << '\n';
    }
}

namespace {

std::vector<Parameter*> gather(std::initializer_list<ParamStore*> stores) {
    std::vector<Parameter*> all;
    for (auto* s : stores)
        for (auto& p : s->params()) all.push_back(&p);
    return all;
}

class AdamOverPointers {
public:
    void step(std::vector<Parameter*>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(0.9, t_);
        const double bc2 = 1.0 - std::pow(0.999, t_);
        if (state_.size() != params.size()) state_.resize(params.size());
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = *params[pi];
            if (!p.tensor.requires_grad()) continue;
            auto& g = p.tensor.grad();
            auto& v = p.tensor.value();
            auto& st = state_[pi];
            if (st.m.size() != v.size()) {
                st.m.assign(v.size(), 0.0f);
                st.v.assign(v.size(), 0.0f);
            }
            for (size_t i = 0; i < v.size(); ++i) {
                float gi = g[i];
                if (std::isnan(gi))
                    throw ValidationError("NaN gradient in parameter '" + p.name + "'");
                st.m[i] = static_cast<float>(0.9 * st.m[i] + 0.1 * gi);
                st.v[i] = static_cast<float>(0.999 * st.v[i] + 0.001 * static_cast<double>(gi) * gi);
                double mhat = st.m[i] / bc1;
                double vhat = st.v[i] / bc2;
                v[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + 1e-8));
            }
        }
    }

private:
    struct State {
        std::vector<float> m, v;
    };
    std::vector<State> state_;
    int64_t t_ = 0;
};

}  // namespace

TrainHistory train_autoencoder(Encoder& encoder, Decoder& decoder,
                               const std::vector<TsdfDefGrid>& grids, const TrainingPlan& plan,
                               const LossWeights& w, const std::function<void(int64_t)>& on_step) {
    if (grids.empty()) throw ValidationError("train_autoencoder: empty grid list");
    for (const auto& g : grids)
        if (g.k != grids[0].k)
            throw ValidationError("train_autoencoder: mixed grid resolutions");

    std::vector<Tensor<float>> targets;
    targets.reserve(grids.size());
    for (const auto& g : grids) targets.push_back(grid_to_tensor(g));

    auto params = gather({&encoder.params(), &decoder.params()});
    AdamOverPointers adam;
    Rng pick(derive_seed(plan.seed, "stageA.batch"));
    TrainHistory history;

    const int batch = std::max(1, plan.batch);
    for (int64_t step = 0; step < plan.stage_a_steps; ++step) {
        double lr = lr_at(step, plan.stage_a_steps, plan.base_lr, plan.min_lr,
                          plan.warmup_fraction);
        for (auto* p : params) p->tensor.zero_grad();

        LossBreakdown avg;
        avg.step = step;
        avg.lr = lr;
        for (int b = 0; b < batch; ++b) {
            int idx = static_cast<int>(pick.uniform_int(grids.size()));
            Tensor<float> f = encoder.forward(targets[idx]);
            Tensor<float> fq = fake_quantize(f);
            Tensor<float> out = decoder.forward(fq);
            LossBreakdown part;
            Tensor<float> loss = reconstruction_loss(out, targets[idx], w, &part);
            backward(scale(loss, 1.0f / batch));
            avg.total += part.total / batch;
            avg.l1 += part.l1 / batch;
            avg.mask += part.mask / batch;
            avg.ssim += part.ssim / batch;
        }
        if (!std::isfinite(avg.total))
            throw ValidationError("train_autoencoder: NaN loss at step " + std::to_string(step));
        adam.step(params, lr);
        history.steps.push_back(avg);
        if (on_step) on_step(step);
    }
    return history;
}

namespace {

double run_stage_b(LatentMapper& mapper, Interpolator& interp, Decoder& decoder,
                   const StageBInputs& in, const std::vector<FeatureTensor>& feats,
                   const TrainingPlan& plan, const LossWeights& w, int64_t steps,
                   int64_t step_offset, AdamOverPointers& adam, std::vector<Parameter*>& params,
                   Rng& noise, TrainHistory& history, int64_t total_schedule_steps,
                   const std::function<void(int64_t)>& on_step) {
    const auto& centers = *in.centers;
    const auto& grids = *in.grids;
    auto groups = build_groups(static_cast<int>(grids.size()), plan.group_size);
    std::vector<const FrameGroup*> active;
    for (const auto& g : groups)
        if (!g.intermediates.empty()) active.push_back(&g);
    if (active.empty())
        throw ValidationError("train_interpolator: no group has intermediate frames");

    std::vector<Tensor<float>> targets;
    for (const auto& g : grids) targets.push_back(grid_to_tensor(g));

    Tensor<float> zero_z;

    double last = 0.0;
    for (int64_t step = 0; step < steps; ++step) {
        int64_t sched_step = step_offset + step;
        double lr = lr_at(sched_step, total_schedule_steps, plan.base_lr, plan.min_lr,
                          plan.warmup_fraction);
        for (auto* p : params) p->tensor.zero_grad();
        const FrameGroup& g = *active[sched_step % active.size()];

        Tensor<float> fs = feature_to_tensor(feats[g.start]);
        Tensor<float> fe = feature_to_tensor(feats[g.end]);
        LossBreakdown avg;
        avg.step = sched_step;
        avg.lr = lr;
        const float inv = 1.0f / static_cast<float>(g.intermediates.size());
        for (size_t i = 0; i < g.intermediates.size(); ++i) {
            int t = g.intermediates[i];
            Tensor<float> z;
            if (in.zero_latent) {
                z = Tensor<float>::zeros({mapper.params().at("ln.g").tensor.shape()[0]});
            } else {
                z = mapper.forward(centers.row(g.start), centers.row(t), centers.row(g.end),
                                   g.alphas[i], &noise);
            }
            Tensor<float> fhat = interp.forward(fs, fe, z, g.alphas[i]);
            Tensor<float> out = decoder.forward(fhat);
            LossBreakdown part;
            Tensor<float> loss = reconstruction_loss(out, targets[t], w, &part);
            backward(scale(loss, inv));
            avg.total += part.total * inv;
            avg.l1 += part.l1 * inv;
            avg.mask += part.mask * inv;
            avg.ssim += part.ssim * inv;
        }
        if (!std::isfinite(avg.total))
            throw ValidationError("train_interpolator: NaN loss at step " +
                                  std::to_string(sched_step));
        adam.step(params, lr);
        history.steps.push_back(avg);
        last = avg.total;
        if (on_step) on_step(sched_step);
    }
    return last;
}

}  // namespace

TrainHistory train_interpolator(LatentMapper& mapper, Interpolator& interp, Decoder& decoder,
                                const StageBInputs& in, const TrainingPlan& plan,
                                const LossWeights& w,
                                const std::function<void(int64_t)>& on_step) {
    if (!in.features || !in.centers || !in.grids)
        throw ValidationError("train_interpolator: missing inputs");
    for (const auto& p : decoder.params().params())
        if (p.tensor.requires_grad())
            throw ValidationError("train_interpolator: decoder parameter '" + p.name +
                                  "' is still trainable; freeze the decoder first");

    auto params = gather({&mapper.params(), &interp.params()});
    AdamOverPointers adam;
    Rng noise(derive_seed(plan.seed, "stageB.noise"));
    TrainHistory history;
    int64_t total = plan.stage_b_steps + (in.quantized_features ? plan.finetune_steps : 0);

    run_stage_b(mapper, interp, decoder, in, *in.features, plan, w, plan.stage_b_steps, 0, adam,
                params, noise, history, total, on_step);
    if (in.quantized_features && plan.finetune_steps > 0) {
        // Close the train/deploy gap on the exact features the container
        // stores.
        run_stage_b(mapper, interp, decoder, in, *in.quantized_features, plan, w,
                    plan.finetune_steps, plan.stage_b_steps, adam, params, noise, history, total,
                    on_step);
    }
    return history;
}

double eval_interpolation_loss(const LatentMapper& mapper, const Interpolator& interp,
                               const Decoder& decoder, const StageBInputs& in, int group_size,
                               const LossWeights& w) {
    const auto& feats = in.quantized_features ? *in.quantized_features : *in.features;
    const auto& grids = *in.grids;
    auto groups = build_groups(static_cast<int>(grids.size()), group_size);
    double total = 0.0;
    int64_t count = 0;
    for (const auto& g : groups) {
        if (g.intermediates.empty()) continue;
        Tensor<float> fs = feature_to_tensor(feats[g.start]);
        Tensor<float> fe = feature_to_tensor(feats[g.end]);
        for (size_t i = 0; i < g.intermediates.size(); ++i) {
            int t = g.intermediates[i];
            Tensor<float> z;
            if (in.zero_latent) {
                z = Tensor<float>::zeros(
                    {const_cast<LatentMapper&>(mapper).params().at("ln.g").tensor.shape()[0]});
            } else {
                z = mapper.forward(in.centers->row(g.start), in.centers->row(t),
                                   in.centers->row(g.end), g.alphas[i]);
            }
            Tensor<float> fhat = interp.forward(fs, fe, z, g.alphas[i]);
            Tensor<float> out = decoder.forward(fhat);
            LossBreakdown part;
            reconstruction_loss(out, grid_to_tensor(grids[t]), w, &part);
            total += part.total;
            ++count;
        }
    }
    return count ? total / count : 0.0;
}

}  // namespace n4mc
