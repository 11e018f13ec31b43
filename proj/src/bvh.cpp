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

#include "n4mc/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace n4mc {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        double v = d1 / (d1 - d3);
        return a + ab * v;
    }

    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        double w = d2 / (d2 - d6);
        return a + ac * w;
    }

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return a + ab * v + ac * w;
}

double triangle_winding(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Van Oosterom & Strackee solid angle.
    Vec3 ra = a - p, rb = b - p, rc = c - p;
    double la = norm(ra), lb = norm(rb), lc = norm(rc);
    double det = dot(ra, cross(rb, rc));
    double denom = la * lb * lc + dot(ra, rb) * lc + dot(rb, rc) * la + dot(rc, ra) * lb;
    if (det == 0.0 && denom <= 0.0) {
        // Query lies in the triangle plane (or on a degenerate triangle):
        // the principal value of the solid angle is 0.
        return 0.0;
    }
    return 2.0 * std::atan2(det, denom) / (4.0 * std::numbers::pi);
}

MeshBvh::MeshBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    const int nt = static_cast<int>(mesh.faces.size());
    order_.resize(nt);
    tri_centroids_.resize(nt);
    for (int i = 0; i < nt; ++i) {
        order_[i] = i;
        const auto& f = mesh.faces[i];
        tri_centroids_[i] =
            (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    }
    nodes_.reserve(2 * nt);
    if (nt > 0) build(0, nt);
}

int MeshBvh::build(int first, int count) {
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({});

    Aabb box;
    Vec3 weighted_centroid{0, 0, 0}, normal_sum{0, 0, 0};
    double area_sum = 0.0;
    for (int i = first; i < first + count; ++i) {
        const auto& f = mesh_->faces[order_[i]];
        const Vec3& a = mesh_->vertices[f[0]];
        const Vec3& b = mesh_->vertices[f[1]];
        const Vec3& c = mesh_->vertices[f[2]];
        box.expand(a);
        box.expand(b);
        box.expand(c);
        Vec3 n2 = cross(b - a, c - a);  // 2 * area * unit normal
        double area = 0.5 * norm(n2);
        normal_sum += n2 * 0.5;
        weighted_centroid += (a + b + c) / 3.0 * area;
        area_sum += area;
    }
    Node node;
    node.box = box;
    node.normal = normal_sum;
    node.centroid = area_sum > 0.0 ? weighted_centroid / area_sum : box.center();
    double r2 = 0.0;
    for (int i = first; i < first + count; ++i) {
        const auto& f = mesh_->faces[order_[i]];
        for (int k = 0; k < 3; ++k) r2 = std::max(r2, norm2(mesh_->vertices[f[k]] - node.centroid));
        // Second-order moment about the node centroid (triangle centroids
        // stand in for the exact per-triangle integral).
        const Vec3& a = mesh_->vertices[f[0]];
        const Vec3& b = mesh_->vertices[f[1]];
        const Vec3& c = mesh_->vertices[f[2]];
        Vec3 an = cross(b - a, c - a) * 0.5;  // area-weighted normal
        Vec3 dc = (a + b + c) / 3.0 - node.centroid;
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) node.moment[r][s] += an[r] * dc[s];
    }
    node.radius = std::sqrt(r2);

    const int kLeafSize = 4;
    if (count <= kLeafSize) {
        node.first = first;
        node.count = count;
        nodes_[idx] = node;
        return idx;
    }

    Vec3 ext = box.extent();
    int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](int lhs, int rhs) {
                         double la = tri_centroids_[lhs][axis], ra = tri_centroids_[rhs][axis];
                         if (la != ra) return la < ra;
                         return lhs < rhs;  // deterministic tie-break
                     });

    node.left = build(first, mid - first);
    node.right = build(mid, first + count - mid);
    nodes_[idx] = node;
    return idx;
}

MeshBvh::Hit MeshBvh::closest_point(const Vec3& p) const {
    Hit best;
    best.dist2 = 1e300;
    if (nodes_.empty()) return best;

    // Explicit stack, near child first.
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        int ni = stack[--top];
        const Node& n = nodes_[ni];
        if (n.box.dist2(p) >= best.dist2) continue;
        if (n.left < 0) {
            for (int i = n.first; i < n.first + n.count; ++i) {
                int t = order_[i];
                const auto& f = mesh_->faces[t];
                Vec3 q = closest_point_on_triangle(p, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                                   mesh_->vertices[f[2]]);
                double d2 = norm2(q - p);
                if (d2 < best.dist2 || (d2 == best.dist2 && t < best.triangle)) {
                    best.dist2 = d2;
                    best.point = q;
                    best.triangle = t;
                }
            }
        } else {
            double dl = nodes_[n.left].box.dist2(p);
            double dr = nodes_[n.right].box.dist2(p);
            if (dl < dr) {
                stack[top++] = n.right;
                stack[top++] = n.left;
            } else {
                stack[top++] = n.left;
                stack[top++] = n.right;
            }
        }
    }
    return best;
}

double MeshBvh::distance(const Vec3& p) const { return std::sqrt(closest_point(p).dist2); }

double MeshBvh::winding_exact(const Vec3& p) const {
    double w = 0.0;
    for (size_t t = 0; t < mesh_->faces.size(); ++t) {
        const auto& f = mesh_->faces[t];
        w += triangle_winding(p, mesh_->vertices[f[0]], mesh_->vertices[f[1]], mesh_->vertices[f[2]]);
    }
    return w;
}

double MeshBvh::winding_node(int ni, const Vec3& p, double beta2) const {
    const Node& n = nodes_[ni];
    Vec3 r = n.centroid - p;
    double d2 = norm2(r);
    if (d2 > beta2 * n.radius * n.radius && d2 > 0.0) {
        double d = std::sqrt(d2);
        double inv3 = 1.0 / (d2 * d);
        double first = dot(r, n.normal) * inv3;
        // Gradient term: J_ij = delta_ij/d^3 - 3 r_i r_j / d^5, contracted
        // with the node moment.
        double trace = n.moment[0][0] + n.moment[1][1] + n.moment[2][2];
        double rMr = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) rMr += r[i] * n.moment[i][j] * r[j];
        double second = trace * inv3 - 3.0 * rMr * inv3 / d2;
        return (first + second) / (4.0 * std::numbers::pi);
    }
    if (n.left < 0) {
        double w = 0.0;
        for (int i = n.first; i < n.first + n.count; ++i) {
            const auto& f = mesh_->faces[order_[i]];
            w += triangle_winding(p, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                  mesh_->vertices[f[2]]);
        }
        return w;
    }
    return winding_node(n.left, p, beta2) + winding_node(n.right, p, beta2);
}

double MeshBvh::winding_fast(const Vec3& p, double beta) const {
    if (nodes_.empty()) return 0.0;
    return winding_node(0, p, beta * beta);
}

}  // namespace n4mc
