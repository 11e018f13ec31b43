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

#include <array>
#include <vector>

#include "n4mc/common.hpp"
#include "n4mc/vec3.hpp"

namespace n4mc {

// Triangle-only mesh. Indices are 0-based in memory; OBJ's 1-based indices
// are converted in the I/O layer. Normals are derived on demand.
class TriangleMesh {
public:
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    TriangleMesh() = default;
    TriangleMesh(std::vector<Vec3> v, std::vector<std::array<int, 3>> f);

    bool empty() const { return vertices.empty() || faces.empty(); }

    // Throws ValidationError on out-of-range or fully collapsed faces.
    void validate() const;

    Aabb bounds() const;
    double area() const;

    Vec3 face_normal(int f) const;      // unit, zero for degenerate faces
    double face_area(int f) const;

    // Area-weighted average of incident face normals, unit length.
    const std::vector<Vec3>& vertex_normals() const;

    void invalidate_cache() { vnormals_.clear(); }

private:
    mutable std::vector<Vec3> vnormals_;
};

// Uniform similarity transform into the canonical cube: x' = (x - center) * scale.
struct NormalizationTransform {
    Vec3 center{0, 0, 0};
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
    Vec3 invert(const Vec3& p) const { return p / scale + center; }
};

// One shared transform from the union bounding box of all frames; the longest
// axis maps to [-0.95, 0.95]. Throws on an empty sequence or degenerate box.
std::pair<std::vector<TriangleMesh>, NormalizationTransform> normalize_sequence(
    const std::vector<TriangleMesh>& frames, double margin = 0.95);

struct SurfaceSample {
    Vec3 point;
    Vec3 normal;
};

// Area-weighted uniform surface samples, deterministic per seed.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, int64_t count, uint64_t seed);

// Icosphere fixture generator shared by tests and docs (subdivisions=1 gives
// the classic 42-vertex / 80-face sphere).
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = {0, 0, 0});

// Axis-aligned box from 12 triangles with outward orientation.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

}  // namespace n4mc
