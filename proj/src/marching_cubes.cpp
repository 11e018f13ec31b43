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

#include "n4mc/marching_cubes.hpp"

#include <unordered_map>

namespace n4mc {

namespace {

#include "mc_tables.inc"

// Corner offsets matching the lookup tables (Bourke ordering).
const int kCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
    {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1},
};

// Edge -> corner pair.
const int kEdgeCorners[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

}  // namespace

DmcTopology dmc_topology(const TsdfDefGrid& grid) {
    const int k = grid.k;
    DmcTopology topo;
    if (k < 2) return topo;

    // lattice point id * 3 + axis -> output vertex index
    std::unordered_map<int64_t, int> edge_vertex;
    auto point_id = [k](int x, int y, int z) {
        return (static_cast<int64_t>(z) * k + y) * k + x;
    };

    int corner_xyz[8][3];
    int edge_local[12];
    for (int iz = 0; iz + 1 < k; ++iz) {
        for (int iy = 0; iy + 1 < k; ++iy) {
            for (int ix = 0; ix + 1 < k; ++ix) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    corner_xyz[c][0] = ix + kCorner[c][0];
                    corner_xyz[c][1] = iy + kCorner[c][1];
                    corner_xyz[c][2] = iz + kCorner[c][2];
                    float v = grid.at(corner_xyz[c][0], corner_xyz[c][1], corner_xyz[c][2], 0);
                    if (v < 0.0f) cube |= 1 << c;
                }
                int mask = kEdgeTable[cube];
                if (mask == 0) continue;

                for (int e = 0; e < 12; ++e) {
                    if (!(mask & (1 << e))) continue;
                    const int* a = corner_xyz[kEdgeCorners[e][0]];
                    const int* b = corner_xyz[kEdgeCorners[e][1]];
                    // Canonical direction: lower lattice point first, so every
                    // cube sharing this edge interpolates identically.
                    int64_t ida = point_id(a[0], a[1], a[2]);
                    int64_t idb = point_id(b[0], b[1], b[2]);
                    const int* lo = a;
                    const int* hi = b;
                    if (idb < ida) {
                        std::swap(ida, idb);
                        lo = b;
                        hi = a;
                    }
                    int axis = hi[0] != lo[0] ? 0 : (hi[1] != lo[1] ? 1 : 2);
                    int64_t key = ida * 3 + axis;
                    auto it = edge_vertex.find(key);
                    if (it == edge_vertex.end()) {
                        DmcTopology::EdgeVertex ev{lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]};
                        topo.vertices.push_back(ev);
                        it = edge_vertex.emplace(key, static_cast<int>(topo.vertices.size()) - 1).first;
                    }
                    edge_local[e] = it->second;
                }

                for (const int* t = kTriTable[cube]; *t != -1; t += 3) {
                    topo.triangles.push_back({edge_local[t[0]], edge_local[t[1]], edge_local[t[2]]});
                }
            }
        }
    }
    return topo;
}

TriangleMesh dmc_evaluate(const TsdfDefGrid& grid, const DmcTopology& topo) {
    const double h = grid.voxel_size();
    TriangleMesh mesh;
    mesh.vertices.resize(topo.vertices.size());
    for (size_t i = 0; i < topo.vertices.size(); ++i) {
        const auto& ev = topo.vertices[i];
        double va = grid.at(ev.ax, ev.ay, ev.az, 0);
        double vb = grid.at(ev.bx, ev.by, ev.bz, 0);
        double t = va / (va - vb);
        Vec3 pa{-1.0 + h * ev.ax + grid.at(ev.ax, ev.ay, ev.az, 1),
                -1.0 + h * ev.ay + grid.at(ev.ax, ev.ay, ev.az, 2),
                -1.0 + h * ev.az + grid.at(ev.ax, ev.ay, ev.az, 3)};
        Vec3 pb{-1.0 + h * ev.bx + grid.at(ev.bx, ev.by, ev.bz, 1),
                -1.0 + h * ev.by + grid.at(ev.bx, ev.by, ev.bz, 2),
                -1.0 + h * ev.bz + grid.at(ev.bx, ev.by, ev.bz, 3)};
        mesh.vertices[i] = pa + (pb - pa) * t;
    }
    mesh.faces = topo.triangles;
    return mesh;
}

TriangleMesh deformable_marching_cubes(const TsdfDefGrid& grid) {
    return dmc_evaluate(grid, dmc_topology(grid));
}

}  // namespace n4mc
