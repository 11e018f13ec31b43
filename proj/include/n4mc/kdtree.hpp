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

#include "n4mc/vec3.hpp"

namespace n4mc {

// Static 3-d tree for nearest-neighbor queries over point sets. Exact ties
// resolve to the lowest point index so results are reproducible.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points);

    struct Result {
        int index = -1;
        double dist2 = 0.0;
    };

    Result nearest(const Vec3& q) const;

    // k nearest neighbors (excluding `exclude` if >= 0), closest first;
    // ties again favor the lower index.
    std::vector<Result> knn(const Vec3& q, int k, int exclude = -1) const;

    size_t size() const { return pts_.size(); }

private:
    struct Node {
        int axis = -1;        // -1 for leaves
        double split = 0.0;
        int left = -1, right = -1;
        int first = 0, count = 0;
    };

    int build(int first, int count);

    std::vector<Vec3> pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace n4mc
