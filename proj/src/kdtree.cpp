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

#include "n4mc/kdtree.hpp"

#include <algorithm>

namespace n4mc {

KdTree::KdTree(const std::vector<Vec3>& points) : pts_(points) {
    order_.resize(pts_.size());
    for (size_t i = 0; i < pts_.size(); ++i) order_[i] = static_cast<int>(i);
    if (!pts_.empty()) build(0, static_cast<int>(pts_.size()));
}

int KdTree::build(int first, int count) {
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Node node;
    const int kLeafSize = 8;
    if (count <= kLeafSize) {
        node.first = first;
        node.count = count;
        nodes_[idx] = node;
        return idx;
    }
    Aabb box;
    for (int i = first; i < first + count; ++i) box.expand(pts_[order_[i]]);
    Vec3 ext = box.extent();
    int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](int a, int b) {
                         double va = pts_[a][axis], vb = pts_[b][axis];
                         if (va != vb) return va < vb;
                         return a < b;
                     });
    node.axis = axis;
    node.split = pts_[order_[mid]][axis];
    node.left = build(first, mid - first);
    node.right = build(mid, first + count - mid);
    nodes_[idx] = node;
    return idx;
}

KdTree::Result KdTree::nearest(const Vec3& q) const {
    Result best;
    best.dist2 = 1e300;
    if (nodes_.empty()) return best;
    // Iterative traversal; near side first. The <= bound keeps exploring on
    // exact ties so the lowest-index rule holds.
    struct Frame {
        int node;
        double plane_dist2;
    };
    Frame stack[96];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        Frame f = stack[--top];
        if (f.plane_dist2 > best.dist2) continue;
        const Node& n = nodes_[f.node];
        if (n.axis < 0) {
            for (int i = n.first; i < n.first + n.count; ++i) {
                int p = order_[i];
                double d2 = norm2(pts_[p] - q);
                if (d2 < best.dist2 || (d2 == best.dist2 && p < best.index)) {
                    best.dist2 = d2;
                    best.index = p;
                }
            }
            continue;
        }
        double delta = q[n.axis] - n.split;
        int near = delta < 0.0 ? n.left : n.right;
        int far = delta < 0.0 ? n.right : n.left;
        stack[top++] = {far, delta * delta};
        stack[top++] = {near, 0.0};
    }
    return best;
}

std::vector<KdTree::Result> KdTree::knn(const Vec3& q, int k, int exclude) const {
    std::vector<Result> heap;  // max-heap by (dist2, index)
    auto cmp = [](const Result& a, const Result& b) {
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        return a.index < b.index;
    };
    if (nodes_.empty() || k <= 0) return heap;

    struct Frame {
        int node;
        double plane_dist2;
    };
    Frame stack[96];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        Frame f = stack[--top];
        if (static_cast<int>(heap.size()) == k && f.plane_dist2 > heap.front().dist2) continue;
        const Node& n = nodes_[f.node];
        if (n.axis < 0) {
            for (int i = n.first; i < n.first + n.count; ++i) {
                int p = order_[i];
                if (p == exclude) continue;
                Result r{p, norm2(pts_[p] - q)};
                if (static_cast<int>(heap.size()) < k) {
                    heap.push_back(r);
                    std::push_heap(heap.begin(), heap.end(), cmp);
                } else if (cmp(r, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), cmp);
                    heap.back() = r;
                    std::push_heap(heap.begin(), heap.end(), cmp);
                }
            }
            continue;
        }
        double delta = q[n.axis] - n.split;
        int near = delta < 0.0 ? n.left : n.right;
        int far = delta < 0.0 ? n.right : n.left;
        stack[top++] = {far, delta * delta};
        stack[top++] = {near, 0.0};
    }
    std::sort_heap(heap.begin(), heap.end(), cmp);
    return heap;
}

}  // namespace n4mc
