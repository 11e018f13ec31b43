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

#include <optional>
#include <string>
#include <vector>

#include "n4mc/mesh.hpp"

namespace n4mc {

struct TrackingConfig {
    int p = 2000;                  // tracked volume centers
    double mu = 0.5;               // winding threshold for occupancy
    double lloyd_tol = 1e-3;       // stop when max center movement drops below
    int knn = 8;                   // rigidity graph degree
    double rigidity_weight = 1.0;
    int max_iters = 100;
    uint64_t seed = 0;
    // Coarse occupancy is enough for tracking regardless of codec resolution.
    int grid_resolution = 64;
};

// Temporally corresponded center trajectories: index j refers to the same
// tracked volume in every frame.
struct VolumeCenters {
    int frames = 0;
    int p = 0;
    std::vector<Vec3> positions;  // frames * p, row-major by frame

    Vec3& at(int frame, int j) { return positions[static_cast<size_t>(frame) * p + j]; }
    const Vec3& at(int frame, int j) const {
        return positions[static_cast<size_t>(frame) * p + j];
    }
    std::vector<Vec3> row(int frame) const {
        return {positions.begin() + static_cast<size_t>(frame) * p,
                positions.begin() + static_cast<size_t>(frame + 1) * p};
    }
};

// p distinct occupied-voxel sites, Lloyd-relaxed over the occupied voxel set.
// energy_history, when given, records the Lloyd energy (sum of squared
// voxel-to-center distances) after every assignment.
std::vector<Vec3> seed_centers(const TriangleMesh& mesh, const TrackingConfig& cfg,
                               std::vector<double>* energy_history = nullptr);

// One tracking step: linear extrapolation from (prev2, prev) followed by
// descent on the data + pairwise-rigidity energy over the new frame.
std::vector<Vec3> track_next(const std::vector<Vec3>& prev,
                             const std::vector<Vec3>* prev2, const TriangleMesh& mesh,
                             const TrackingConfig& cfg);

VolumeCenters track_sequence(const std::vector<TriangleMesh>& meshes, const TrackingConfig& cfg);

// Cache format: magic "VCTR", u32 frames, u32 p, frames*p*3 float32 LE.
void save_centers(const VolumeCenters& centers, const std::string& path);
VolumeCenters load_centers(const std::string& path);

// Occupied-voxel positions of the tracking grid, in lattice index order.
std::vector<Vec3> occupied_voxel_positions(const TriangleMesh& mesh, const TrackingConfig& cfg);

}  // namespace n4mc
