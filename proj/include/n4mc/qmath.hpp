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

// One affine quantization lattice shared by training-time fake quantization
// and pack-time symbol coding, so the weights the decoder trains against are
// exactly the weights it later loads. Reconstruction happens in double and
// rounds once, which also makes the mapping idempotent.

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace n4mc {

struct QuantLattice {
    float offset = 0.0f;  // min of the tensor
    float scale = 0.0f;   // (max - min) / (2^bits - 1); 0 for constant tensors
    int levels = 256;
};

inline QuantLattice make_lattice(float mn, float mx, int bits) {
    QuantLattice q;
    q.levels = (1 << bits);
    q.offset = mn;
    q.scale = static_cast<float>((static_cast<double>(mx) - static_cast<double>(mn)) /
                                 static_cast<double>(q.levels - 1));
    return q;
}

inline uint32_t quantize_value(float x, const QuantLattice& q) {
    if (q.scale == 0.0f) return 0;
    double t = (static_cast<double>(x) - static_cast<double>(q.offset)) /
               static_cast<double>(q.scale);
    long long s = std::llround(t);
    if (s < 0) s = 0;
    if (s > q.levels - 1) s = q.levels - 1;
    return static_cast<uint32_t>(s);
}

inline float dequantize_value(uint32_t sym, const QuantLattice& q) {
    return static_cast<float>(static_cast<double>(q.offset) +
                              static_cast<double>(sym) * static_cast<double>(q.scale));
}

}  // namespace n4mc
