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

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "n4mc/rng.hpp"
#include "n4mc/tensor.hpp"

namespace n4mc {

struct Parameter {
    std::string name;
    Tensor<float> tensor;
    bool quantized = false;  // trained through fake-quantized weights
    int bits = 8;
};

// Ordered, uniquely named parameter registry for one model component.
class ParamStore {
public:
    Tensor<float>& create(const std::string& name, std::vector<int> shape,
                          std::vector<float> data, bool quantized = false) {
        for (const auto& p : params_)
            if (p.name == name) throw ValidationError("duplicate parameter name: " + name);
        Parameter p;
        p.name = name;
        p.tensor = Tensor<float>::from(std::move(shape), std::move(data), true);
        p.quantized = quantized;
        params_.push_back(std::move(p));
        return params_.back().tensor;
    }

    // Kaiming-style uniform over fan_in.
    Tensor<float>& create_uniform(const std::string& name, std::vector<int> shape, int64_t fan_in,
                                  Rng& rng, bool quantized = false) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
        std::vector<float> data(n);
        for (auto& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
        return create(name, std::move(shape), std::move(data), quantized);
    }

    Tensor<float>& create_zeros(const std::string& name, std::vector<int> shape,
                                bool quantized = false) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return create(name, std::move(shape), std::vector<float>(n, 0.0f), quantized);
    }

    Tensor<float>& create_full(const std::string& name, std::vector<int> shape, float v,
                               bool quantized = false) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return create(name, std::move(shape), std::vector<float>(n, v), quantized);
    }

    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }

    Parameter& at(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return p;
        throw ValidationError("unknown parameter: " + name);
    }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    void set_trainable(bool trainable) {
        for (auto& p : params_) p.tensor.set_requires_grad(trainable);
    }

    // Ordered (name, shape, float32 LE data) records with a fingerprint.
    void save(const std::string& path, uint64_t fingerprint) const;
    void load(const std::string& path, uint64_t fingerprint);

private:
    std::vector<Parameter> params_;
};

// Linear warmup to base_lr over warmup_fraction*total, then cosine decay to
// min_lr at total_steps.
inline double lr_at(int64_t step, int64_t total_steps, double base_lr, double min_lr,
                    double warmup_fraction) {
    if (step < 0 || step > total_steps) throw ValidationError("lr_at: step outside [0, total]");
    double warm = warmup_fraction * static_cast<double>(total_steps);
    if (warm > 0 && step < warm) return base_lr * static_cast<double>(step) / warm;
    if (total_steps == warm) return base_lr;
    double t = (static_cast<double>(step) - warm) / (static_cast<double>(total_steps) - warm);
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(3.14159265358979323846 * t));
}

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // One update over every trainable parameter with an accumulated gradient.
    void step(std::vector<Parameter>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = params[pi];
            if (!p.tensor.requires_grad()) continue;
            auto& g = p.tensor.grad();
            auto& v = p.tensor.value();
            if (state_.size() <= pi) state_.resize(params.size());
            auto& st = state_[pi];
            if (st.m.size() != v.size()) {
                st.m.assign(v.size(), 0.0f);
                st.v.assign(v.size(), 0.0f);
            }
            for (size_t i = 0; i < v.size(); ++i) {
                float gi = g[i];
                if (std::isnan(gi))
                    throw ValidationError("NaN gradient in parameter '" + p.name + "'");
                st.m[i] = static_cast<float>(beta1_ * st.m[i] + (1.0 - beta1_) * gi);
                st.v[i] = static_cast<float>(beta2_ * st.v[i] + (1.0 - beta2_) * gi * gi);
                double mhat = st.m[i] / bc1;
                double vhat = st.v[i] / bc2;
                v[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    struct State {
        std::vector<float> m, v;
    };
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<State> state_;
};

}  // namespace n4mc
