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

#include "n4mc/mesh.hpp"

namespace n4mc {

// Closest point on triangle (a,b,c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Signed solid angle of triangle (a,b,c) seen from origin-relative point p,
// in units of full spheres (i.e. already divided by 4*pi).
double triangle_winding(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Midpoint-split AABB tree over mesh triangles. Supports exact closest-point
// queries and both exact and dipole-accelerated winding numbers.
class MeshBvh {
public:
    explicit MeshBvh(const TriangleMesh& mesh);

    struct Hit {
        Vec3 point;
        double dist2 = 0.0;
        int triangle = -1;
    };

    Hit closest_point(const Vec3& p) const;
    double distance(const Vec3& p) const;

    // Exact solid-angle sum over all triangles.
    double winding_exact(const Vec3& p) const;

    // Barill-style second-order multipole approximation; nodes farther than
    // beta * radius are approximated. Agrees with exact within ~1e-3 at
    // beta = 2.3.
    double winding_fast(const Vec3& p, double beta = 2.3) const;

    const TriangleMesh& mesh() const { return *mesh_; }

private:
    struct Node {
        Aabb box;
        // Multipole data for the fast winding number.
        Vec3 centroid{0, 0, 0};     // area-weighted centroid
        Vec3 normal{0, 0, 0};       // sum of area-weighted normals
        double moment[3][3] = {};   // sum of a_t * n_t (x) (c_t - centroid)
        double radius = 0.0;        // max distance from centroid to any tri vertex
        int left = -1, right = -1;  // internal nodes
        int first = 0, count = 0;   // leaves (indices into order_)
    };

    int build(int first, int count);
    double winding_node(int node, const Vec3& p, double beta2) const;

    const TriangleMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<int> order_;
    std::vector<Vec3> tri_centroids_;
};

}  // namespace n4mc
