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

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "n4mc/mesh.hpp"

namespace n4mc::testing {

inline std::string temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(dir);
    return dir.string();
}

// Sphere with a sign-reversing translation: intermediate motion is not
// inferable from group endpoints when grouped with n=4 (frames 0/4/8 are all
// at x=0 while the path bumps +x then -x).
inline std::vector<TriangleMesh> bump_sequence(int frames = 12, double radius = 0.35,
                                               double amplitude = 0.22, int subdiv = 2) {
    std::vector<TriangleMesh> seq;
    for (int i = 0; i < frames; ++i) {
        double phase = 2.0 * 3.14159265358979323846 * i / 8.0;
        double x = amplitude * std::sin(phase);
        seq.push_back(make_icosphere(subdiv, radius, {x, 0.0, 0.0}));
    }
    return seq;
}

// Smoothly translating and inflating sphere used by the end-to-end tests.
inline std::vector<TriangleMesh> deforming_sequence(int frames = 12, int subdiv = 2) {
    std::vector<TriangleMesh> seq;
    for (int i = 0; i < frames; ++i) {
        double t = static_cast<double>(i) / (frames - 1);
        double r = 0.3 + 0.15 * t;
        double x = 0.25 * std::sin(2.0 * 3.14159265358979323846 * t);
        seq.push_back(make_icosphere(subdiv, r, {x, 0.0, 0.0}));
    }
    return seq;
}

inline std::vector<TriangleMesh> translating_sequence(int frames, const Vec3& step,
                                                      double radius = 0.4, int subdiv = 2,
                                                      const Vec3& start = {-0.3, 0.0, 0.0}) {
    std::vector<TriangleMesh> seq;
    for (int i = 0; i < frames; ++i) {
        seq.push_back(make_icosphere(subdiv, radius, start + step * static_cast<double>(i)));
    }
    return seq;
}

}  // namespace n4mc::testing
