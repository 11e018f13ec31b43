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

#include "n4mc/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "n4mc/kdtree.hpp"
#include "n4mc/parallel.hpp"
#include "n4mc/rng.hpp"
#include "n4mc/voxelize.hpp"

namespace n4mc {

std::vector<Vec3> occupied_voxel_positions(const TriangleMesh& mesh, const TrackingConfig& cfg) {
    VoxelGridSpec spec{cfg.grid_resolution};
    auto occ = occupancy(mesh, spec, cfg.mu);
    std::vector<Vec3> pts;
    for (int iz = 0; iz < spec.k; ++iz)
        for (int iy = 0; iy < spec.k; ++iy)
            for (int ix = 0; ix < spec.k; ++ix)
                if (occ[spec.index(ix, iy, iz)]) pts.push_back(spec.position(ix, iy, iz));
    return pts;
}

namespace {

// Nearest-center assignment for every voxel; ties resolve to the lowest
// center index inside KdTree.
std::vector<int> assign_voxels(const std::vector<Vec3>& voxels, const std::vector<Vec3>& centers) {
    KdTree tree(centers);
    std::vector<int> assign(voxels.size());
    parallel_for(static_cast<int64_t>(voxels.size()),
                 [&](int64_t i) { assign[i] = tree.nearest(voxels[i]).index; });
    return assign;
}

double lloyd_energy(const std::vector<Vec3>& voxels, const std::vector<Vec3>& centers,
                    const std::vector<int>& assign) {
    double e = 0.0;
    for (size_t i = 0; i < voxels.size(); ++i) e += norm2(voxels[i] - centers[assign[i]]);
    return e;
}

// Cluster centroids; empty clusters keep their center.
std::vector<Vec3> cluster_centroids(const std::vector<Vec3>& voxels,
                                    const std::vector<Vec3>& centers,
                                    const std::vector<int>& assign) {
    std::vector<Vec3> sum(centers.size(), Vec3{0, 0, 0});
    std::vector<int64_t> count(centers.size(), 0);
    for (size_t i = 0; i < voxels.size(); ++i) {
        sum[assign[i]] += voxels[i];
        ++count[assign[i]];
    }
    std::vector<Vec3> out(centers.size());
    for (size_t j = 0; j < centers.size(); ++j)
        out[j] = count[j] > 0 ? sum[j] / static_cast<double>(count[j]) : centers[j];
    return out;
}

}  // namespace

std::vector<Vec3> seed_centers(const TriangleMesh& mesh, const TrackingConfig& cfg,
                               std::vector<double>* energy_history) {
    if (cfg.p < 1) throw ValidationError("seed_centers: p must be >= 1");
    auto voxels = occupied_voxel_positions(mesh, cfg);
    if (static_cast<int>(voxels.size()) < cfg.p) {
        throw ValidationError("seed_centers: only " + std::to_string(voxels.size()) +
                              " occupied voxels for p=" + std::to_string(cfg.p) + " centers");
    }
    Rng rng(derive_seed(cfg.seed, "seed_centers"));
    auto picks = rng.sample_without_replacement(static_cast<int64_t>(voxels.size()), cfg.p);
    std::vector<Vec3> centers(cfg.p);
    for (int j = 0; j < cfg.p; ++j) centers[j] = voxels[picks[j]];

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        auto assign = assign_voxels(voxels, centers);
        if (energy_history) energy_history->push_back(lloyd_energy(voxels, centers, assign));
        auto next = cluster_centroids(voxels, centers, assign);
        double moved = 0.0;
        for (int j = 0; j < cfg.p; ++j) moved = std::max(moved, norm(next[j] - centers[j]));
        centers = std::move(next);
        if (moved < cfg.lloyd_tol) break;
    }
    return centers;
}

std::vector<Vec3> track_next(const std::vector<Vec3>& prev, const std::vector<Vec3>* prev2,
                             const TriangleMesh& mesh, const TrackingConfig& cfg) {
    const int p = static_cast<int>(prev.size());
    if (p == 0) throw ValidationError("track_next: empty previous centers");
    auto voxels = occupied_voxel_positions(mesh, cfg);
    if (voxels.empty()) throw ValidationError("track_next: empty occupancy in the new frame");
    KdTree voxel_tree(voxels);

    // Linear extrapolation initializer.
    std::vector<Vec3> centers(p);
    for (int j = 0; j < p; ++j) {
        centers[j] = prev2 ? prev[j] + (prev[j] - (*prev2)[j]) : prev[j];
    }

    // Rigidity graph frozen from the previous frame.
    KdTree prev_tree(prev);
    std::vector<std::vector<std::pair<int, double>>> edges(p);
    for (int j = 0; j < p; ++j) {
        auto nn = prev_tree.knn(prev[j], std::min(cfg.knn, p - 1), j);
        for (const auto& r : nn) edges[j].emplace_back(r.index, std::sqrt(r.dist2));
    }

    const double w = cfg.rigidity_weight;
    auto energy = [&](const std::vector<Vec3>& c, const std::vector<Vec3>& targets) {
        double e = 0.0;
        for (int j = 0; j < p; ++j) e += norm2(c[j] - targets[j]);
        for (int j = 0; j < p; ++j)
            for (const auto& [l, d0] : edges[j]) {
                double len = norm(c[j] - c[l]);
                e += w * (len - d0) * (len - d0);
            }
        return e;
    };

    auto compute_targets = [&](const std::vector<Vec3>& c) {
        auto assign = assign_voxels(voxels, c);
        auto targets = cluster_centroids(voxels, c, assign);
        // Empty clusters get pulled toward the closest occupied voxel instead
        // of staying put.
        std::vector<uint8_t> has(p, 0);
        for (int a : assign) has[a] = 1;
        for (int j = 0; j < p; ++j)
            if (!has[j]) targets[j] = voxels[voxel_tree.nearest(c[j]).index];
        return targets;
    };

    std::vector<Vec3> grad(p);
    std::vector<Vec3> trial(p);
    double best_energy = 1e300;
    int stale_rounds = 0;

    for (int outer = 0; outer < cfg.max_iters; ++outer) {
        auto targets = compute_targets(centers);
        double e = energy(centers, targets);

        // Descend to (near) convergence for these fixed targets. A step of
        // 0.25 is exact for the data term alone (gradient 2(c-t)); the line
        // search handles the rigidity coupling.
        double cur_step = 0.25;
        for (int inner = 0; inner < 50; ++inner) {
            for (int j = 0; j < p; ++j) grad[j] = (centers[j] - targets[j]) * 2.0;
            for (int j = 0; j < p; ++j)
                for (const auto& [l, d0] : edges[j]) {
                    Vec3 r = centers[j] - centers[l];
                    double len = norm(r);
                    if (len < 1e-12) continue;
                    Vec3 g = r * (2.0 * w * (len - d0) / len);
                    grad[j] += g;
                    grad[l] -= g;
                }
            bool accepted = false;
            double eta = cur_step;
            for (int ls = 0; ls < 10; ++ls) {
                for (int j = 0; j < p; ++j) trial[j] = centers[j] - grad[j] * eta;
                double e_try = energy(trial, targets);
                if (e_try <= e) {
                    double gain = e - e_try;
                    centers.swap(trial);
                    e = e_try;
                    cur_step = std::min(eta * 1.5, 0.5);
                    accepted = gain > 1e-9;
                    break;
                }
                eta *= 0.5;
            }
            if (!accepted) break;
        }

        // Converged when a full target refresh stops paying off.
        if (best_energy - e < 1e-6) {
            if (++stale_rounds >= 2) break;
        } else {
            stale_rounds = 0;
        }
        best_energy = std::min(best_energy, e);
    }
    return centers;
}

VolumeCenters track_sequence(const std::vector<TriangleMesh>& meshes, const TrackingConfig& cfg) {
    if (meshes.empty()) throw ValidationError("track_sequence: empty sequence");
    VolumeCenters out;
    out.frames = static_cast<int>(meshes.size());
    out.p = cfg.p;
    out.positions.reserve(static_cast<size_t>(out.frames) * cfg.p);

    auto row0 = seed_centers(meshes[0], cfg);
    out.positions.insert(out.positions.end(), row0.begin(), row0.end());
    std::vector<Vec3> prev = std::move(row0), prev2;
    for (int i = 1; i < out.frames; ++i) {
        auto row = track_next(prev, i >= 2 ? &prev2 : nullptr, meshes[i], cfg);
        out.positions.insert(out.positions.end(), row.begin(), row.end());
        prev2 = std::move(prev);
        prev = std::move(row);
    }
    return out;
}

void save_centers(const VolumeCenters& centers, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    char magic[4] = {'V', 'C', 'T', 'R'};
    uint32_t n = static_cast<uint32_t>(centers.frames), p = static_cast<uint32_t>(centers.p);
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&p), 4);
    for (const auto& v : centers.positions) {
        float xyz[3] = {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
        out.write(reinterpret_cast<const char*>(xyz), 12);
    }
    if (!out) throw IoError("write failed: " + path);
}

VolumeCenters load_centers(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    uint32_t n = 0, p = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, "VCTR", 4) != 0)
        throw FormatError(path + ": not a VCTR centers file");
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&p), 4);
    VolumeCenters out;
    out.frames = static_cast<int>(n);
    out.p = static_cast<int>(p);
    out.positions.resize(static_cast<size_t>(n) * p);
    for (auto& v : out.positions) {
        float xyz[3];
        if (!in.read(reinterpret_cast<char*>(xyz), 12))
            throw FormatError(path + ": truncated VCTR file");
        v = {xyz[0], xyz[1], xyz[2]};
    }
    return out;
}

}  // namespace n4mc
