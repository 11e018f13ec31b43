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

#include "n4mc/marching_cubes.hpp"
#include "n4mc/voxelize.hpp"

namespace n4mc {

struct RefineStats {
    double initial_chamfer = 0.0;
    double final_chamfer = 0.0;
    int accepted_steps = 0;
};

// Gradient refinement of the deformation channels (and in-band TSDF values,
// sign-preserving) against the target surface. Marching-cubes topology is
// frozen from the input sign pattern; the loss is the symmetric chamfer
// distance between extracted vertices and surface samples of `mesh`.
// Backtracking line search accepts only non-increasing steps. Deformations
// stay inside +/- 0.5 voxel via a tanh reparameterization.
TsdfDefGrid refine_tsdf_def(const TsdfDefGrid& grid, const TriangleMesh& mesh, int iterations,
                            double step, RefineStats* stats = nullptr);

}  // namespace n4mc
