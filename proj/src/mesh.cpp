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

#include "n4mc/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "n4mc/rng.hpp"

namespace n4mc {

TriangleMesh::TriangleMesh(std::vector<Vec3> v, std::vector<std::array<int, 3>> f)
    : vertices(std::move(v)), faces(std::move(f)) {
    validate();
}

void TriangleMesh::validate() const {
    const int n = static_cast<int>(vertices.size());
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= n) {
                throw ValidationError("face " + std::to_string(f) + " references vertex " +
                                      std::to_string(t[k]) + " outside [0, " + std::to_string(n) + ")");
            }
        }
        if (t[0] == t[1] && t[1] == t[2]) {
            throw ValidationError("face " + std::to_string(f) + " is degenerate (three identical indices)");
        }
    }
}

Aabb TriangleMesh::bounds() const {
    Aabb box;
    for (const auto& v : vertices) box.expand(v);
    return box;
}

Vec3 TriangleMesh::face_normal(int f) const {
    const auto& t = faces[f];
    Vec3 n = cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]);
    return normalized(n);
}

double TriangleMesh::face_area(int f) const {
    const auto& t = faces[f];
    return 0.5 * norm(cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]));
}

double TriangleMesh::area() const {
    double a = 0.0;
    for (size_t f = 0; f < faces.size(); ++f) a += face_area(static_cast<int>(f));
    return a;
}

const std::vector<Vec3>& TriangleMesh::vertex_normals() const {
    if (vnormals_.size() == vertices.size()) return vnormals_;
    vnormals_.assign(vertices.size(), Vec3{0, 0, 0});
    for (const auto& t : faces) {
        Vec3 n = cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]);
        // |n| = 2*area, which is exactly the weighting we want.
        vnormals_[t[0]] += n;
        vnormals_[t[1]] += n;
        vnormals_[t[2]] += n;
    }
    for (auto& n : vnormals_) {
        double len = norm(n);
        n = len > 0.0 ? n / len : Vec3{0, 0, 1};
    }
    return vnormals_;
}

std::pair<std::vector<TriangleMesh>, NormalizationTransform> normalize_sequence(
    const std::vector<TriangleMesh>& frames, double margin) {
    if (frames.empty()) throw ValidationError("normalize_sequence: empty sequence");
    Aabb box;
    for (const auto& m : frames) {
        if (m.empty()) throw ValidationError("normalize_sequence: empty frame");
        box.expand(m.bounds());
    }
    Vec3 ext = box.extent();
    double longest = std::max({ext.x, ext.y, ext.z});
    if (!(longest > 0.0)) throw ValidationError("normalize_sequence: degenerate bounding box (zero extent)");

    NormalizationTransform tf;
    tf.center = box.center();
    tf.scale = margin / (0.5 * longest);

    std::vector<TriangleMesh> out;
    out.reserve(frames.size());
    for (const auto& m : frames) {
        TriangleMesh nm;
        nm.vertices.reserve(m.vertices.size());
        for (const auto& v : m.vertices) nm.vertices.push_back(tf.apply(v));
        nm.faces = m.faces;
        out.push_back(std::move(nm));
    }
    return {std::move(out), tf};
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, int64_t count, uint64_t seed) {
    if (count < 1) throw ValidationError("sample_surface: count must be >= 1");
    const size_t nf = mesh.faces.size();
    std::vector<double> cum(nf);
    double total = 0.0;
    for (size_t f = 0; f < nf; ++f) {
        total += mesh.face_area(static_cast<int>(f));
        cum[f] = total;
    }
    if (!(total > 0.0)) throw ValidationError("sample_surface: zero-area mesh");

    Rng rng(seed);
    std::vector<SurfaceSample> samples;
    samples.reserve(count);
    for (int64_t i = 0; i < count; ++i) {
        double r = rng.uniform() * total;
        size_t f = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
        if (f >= nf) f = nf - 1;
        const auto& t = mesh.faces[f];
        double u = rng.uniform();
        double v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        samples.push_back({a + (b - a) * u + (c - a) * v, mesh.face_normal(static_cast<int>(f))});
    }
    return samples;
}

TriangleMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& v : verts) v = normalized(v);
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            verts.push_back(normalized((verts[a] + verts[b]) * 0.5));
            int idx = static_cast<int>(verts.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    for (auto& v : verts) v = v * radius + center;
    return TriangleMesh(std::move(verts), std::move(faces));
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
    std::vector<Vec3> v = {
        {lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
        {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z},
    };
    std::vector<std::array<int, 3>> f = {
        {0, 2, 1}, {0, 3, 2},  // z = lo
        {4, 5, 6}, {4, 6, 7},  // z = hi
        {0, 1, 5}, {0, 5, 4},  // y = lo
        {3, 6, 2}, {3, 7, 6},  // y = hi
        {0, 4, 7}, {0, 7, 3},  // x = lo
        {1, 2, 6}, {1, 6, 5},  // x = hi
    };
    return TriangleMesh(std::move(v), std::move(f));
}

}  // namespace n4mc
