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

#include <optional>

#include "n4mc/optim.hpp"
#include "n4mc/tensor_ops.hpp"
#include "n4mc/voxelize.hpp"

namespace n4mc {

// Embedded feature F: voxel-major rows, channel innermost ([z][y][x][c],
// i.e. a [k'^3, d] matrix).
struct FeatureTensor {
    int kprime = 0;
    int d = 0;
    std::vector<float> data;

    int64_t voxels() const { return static_cast<int64_t>(kprime) * kprime * kprime; }
};

struct ModelConfig {
    int k = 64;       // TSDF-Def resolution
    int kprime = 4;   // feature spatial dim
    int d = 64;       // feature channels
    int stem_stride = 2;
    std::vector<int> enc_channels;  // per stage
    std::vector<int> enc_blocks;    // per stage
    std::vector<int> dec_schedule;  // head width + upsample module outputs
    int dec_upsamples = 4;          // log2(k / kprime)

    int lambda_width = 16;  // transformer width
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int ff_ratio = 4;
    int voxel_hidden = 64;
    int latent_dim = 32;
    int time_bands = 16;
    int pointnet_dim = 128;

    // Supported k: 32 (scaled-down test variant), 64, 128, 256.
    static ModelConfig for_resolution(int k, int lambda_width = 0);

    uint64_t fingerprint() const;
    double voxel_size() const { return 2.0 / (k - 1); }
};

// [sin(2^b pi a), cos(2^b pi a)] pairs for b = 0..bands-1.
std::vector<float> time_embedding(double alpha, int bands = 16);

// TsdfDefGrid ([z][y][x][c]) <-> [1,4,D,H,W] tensor.
Tensor<float> grid_to_tensor(const TsdfDefGrid& grid, bool requires_grad = false);
TsdfDefGrid tensor_to_grid(const Tensor<float>& t, float tau);

Tensor<float> feature_to_tensor(const FeatureTensor& f, bool requires_grad = false);
FeatureTensor tensor_to_feature(const Tensor<float>& t, int kprime, int d);

// ConvNeXt-style encoder E_theta. Not stored in the bitstream.
class Encoder {
public:
    Encoder(const ModelConfig& cfg, uint64_t seed);

    // grid tensor [1,4,k,k,k] -> features [V, d]
    Tensor<float> forward(const Tensor<float>& grid) const;
    FeatureTensor encode(const TsdfDefGrid& grid) const;

    ParamStore& params() { return store_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    ParamStore store_;
};

// Quantization-aware upsampling decoder D_psi. Streamed in the bitstream.
class Decoder {
public:
    Decoder(const ModelConfig& cfg, uint64_t seed);

    // features [V, d] -> grid tensor [1,4,k,k,k] (tanh TSDF head, clamped
    // deformation heads)
    Tensor<float> forward(const Tensor<float>& features) const;
    TsdfDefGrid decode(const FeatureTensor& f, float tau) const;

    ParamStore& params() { return store_; }

private:
    ModelConfig cfg_;
    ParamStore store_;
};

// PointNet-style center encoder Phi plus the fusion MLP f_omega. Encoder
// side only; never stored.
class LatentMapper {
public:
    LatentMapper(const ModelConfig& cfg, uint64_t seed);

    // Shared per-point MLP + max pool -> pointnet_dim descriptor.
    Tensor<float> point_encode(const std::vector<Vec3>& points) const;

    // z_latent from (start, target, end) centers and the temporal index.
    // noise_rng enables the training-time Gaussian perturbation.
    Tensor<float> forward(const std::vector<Vec3>& cs, const std::vector<Vec3>& ct,
                          const std::vector<Vec3>& ce, double alpha, Rng* noise_rng = nullptr) const;

    ParamStore& params() { return store_; }

private:
    ModelConfig cfg_;
    ParamStore store_;
};

// Latent-conditioned cross-attention interpolation transformer I_phi.
// Streamed in the bitstream; every linear layer trains through
// fake-quantized weights.
class Interpolator {
public:
    Interpolator(const ModelConfig& cfg, uint64_t seed);

    // Fs, Fe: [V,d] (no grad needed); z: [latent_dim] tensor; t in (0,1).
    Tensor<float> forward(const Tensor<float>& fs, const Tensor<float>& fe,
                          const Tensor<float>& z, double t) const;
    FeatureTensor interpolate(const FeatureTensor& fs, const FeatureTensor& fe,
                              const std::vector<float>& z, double t) const;

    ParamStore& params() { return store_; }

    // Forward invocation counter (decode-path instrumentation).
    mutable int64_t invocations = 0;

private:
    Tensor<float> encoder_layer(Tensor<float> x, int layer) const;
    Tensor<float> decoder_layer(Tensor<float> x, const Tensor<float>& mem, int layer) const;

    ModelConfig cfg_;
    ParamStore store_;
};

}  // namespace n4mc
