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

#include "n4mc/mesh.hpp"
#include "n4mc/voxelize.hpp"

namespace n4mc {

// Case topology extracted from the sign pattern of channel 0 (inside = value
// strictly below iso-level 0). Vertex positions are NOT stored; they follow
// from the current TSDF values and deformations, which is what makes the
// extraction differentiable once the topology is frozen.
struct DmcTopology {
    // Output vertex on the lattice edge a->b; a is the lexicographically
    // lower lattice point, so interpolation direction is canonical.
    struct EdgeVertex {
        int ax, ay, az;
        int bx, by, bz;
    };
    std::vector<EdgeVertex> vertices;
    std::vector<std::array<int, 3>> triangles;
};

DmcTopology dmc_topology(const TsdfDefGrid& grid);

// Positions for a frozen topology: each corner sits at lattice + deformation,
// edge crossings linearly interpolate the deformed corner positions by TSDF.
TriangleMesh dmc_evaluate(const TsdfDefGrid& grid, const DmcTopology& topo);

// Marching cubes over the deformed lattice. All-positive or all-negative
// grids yield an empty mesh.
TriangleMesh deformable_marching_cubes(const TsdfDefGrid& grid);

}  // namespace n4mc
