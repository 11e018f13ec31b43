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

#include <vector>

#include "n4mc/common.hpp"
#include "n4mc/qmath.hpp"

namespace n4mc {

// Per-tensor affine 8-bit quantization. Reconstruction reproduces
// training-time fake quantization exactly (same lattice math).
struct QuantizedBlob {
    int bits = 8;
    float scale = 0.0f;   // 0 for constant tensors
    float offset = 0.0f;
    std::vector<int> shape;
    std::vector<uint8_t> symbols;

    int64_t count() const { return static_cast<int64_t>(symbols.size()); }
};

QuantizedBlob quantize_tensor(const std::vector<float>& data, std::vector<int> shape,
                              int bits = 8);
std::vector<float> dequantize_tensor(const QuantizedBlob& blob);

}  // namespace n4mc
