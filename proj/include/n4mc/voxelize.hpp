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

#include <cstdint>
#include <string>
#include <vector>

#include "n4mc/bvh.hpp"
#include "n4mc/mesh.hpp"

namespace n4mc {

// Regular lattice over the canonical cube: grid point (ix,iy,iz) sits at
// (-1,-1,-1) + spacing*(ix,iy,iz), corners exactly on +/-1.
struct VoxelGridSpec {
    int k = 64;

    double spacing() const { return 2.0 / (k - 1); }
    Vec3 position(int ix, int iy, int iz) const {
        double h = spacing();
        return {-1.0 + h * ix, -1.0 + h * iy, -1.0 + h * iz};
    }
    int64_t index(int ix, int iy, int iz) const {
        return (static_cast<int64_t>(iz) * k + iy) * k + ix;
    }
    int64_t point_count() const { return static_cast<int64_t>(k) * k * k; }
};

// TSDF + per-voxel deformation. values layout: [iz][iy][ix][c] with c in
// {tsdf, dx, dy, dz}; tsdf normalized to [-1,1] by tau, deformations in
// canonical units and bounded by half a voxel.
struct TsdfDefGrid {
    int k = 0;
    float tau = 0.0f;
    std::vector<float> values;

    double voxel_size() const { return 2.0 / (k - 1); }
    int64_t idx(int ix, int iy, int iz) const {
        return ((static_cast<int64_t>(iz) * k + iy) * k + ix) * 4;
    }
    float& at(int ix, int iy, int iz, int c) { return values[idx(ix, iy, iz) + c]; }
    float at(int ix, int iy, int iz, int c) const { return values[idx(ix, iy, iz) + c]; }
};

// Default truncation band: three voxel widths.
inline double default_tau(int k) { return 3.0 * 2.0 / (k - 1); }

// Generalized winding number at each query point. Exact triangle summation;
// `accelerated` switches to the BVH dipole approximation (agrees within 1e-3).
std::vector<double> winding_number(const TriangleMesh& mesh, const std::vector<Vec3>& points,
                                   bool accelerated = false);

// IF(x) = 1 where winding > mu, evaluated at all grid points. Uses the
// accelerated winding path.
std::vector<uint8_t> occupancy(const TriangleMesh& mesh, const VoxelGridSpec& spec, double mu = 0.5);

// Analytic TSDF-Def initialization: exact point-to-triangle distances, sign
// from occupancy, deformation channels zero. Requires a normalized mesh.
TsdfDefGrid compute_tsdf_def(const TriangleMesh& mesh, int k, double tau = 0.0);

// Debug dump: 16-byte header (magic "TSDG", u32 k, f32 tau, 4 zero bytes)
// followed by k^3*4 little-endian float32 in [iz][iy][ix][c] order.
void save_grid(const TsdfDefGrid& grid, const std::string& path);
TsdfDefGrid load_grid(const std::string& path);

}  // namespace n4mc
