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

#include "n4mc/refine.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "n4mc/kdtree.hpp"
#include "n4mc/mesh.hpp"

namespace n4mc {

namespace {

struct LatticeParams {
    // Stable order of all lattice points the frozen topology touches.
    std::vector<int64_t> point_ids;
    std::unordered_map<int64_t, int> slot;  // point id -> params row
    // Per point: 3 deformation params (tanh-space) + 1 magnitude param
    // (sigmoid-space); sign and band membership are frozen.
    std::vector<double> def_u;   // 3 per point
    std::vector<double> mag_w;   // 1 per point
    std::vector<double> sign;    // +/-1, frozen
    std::vector<uint8_t> in_band;
};

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LatticeParams collect_params(const TsdfDefGrid& grid, const DmcTopology& topo) {
    const int k = grid.k;
    const double h = grid.voxel_size();
    LatticeParams lp;
    auto add_point = [&](int x, int y, int z) {
        int64_t id = (static_cast<int64_t>(z) * k + y) * k + x;
        if (lp.slot.count(id)) return;
        lp.slot.emplace(id, static_cast<int>(lp.point_ids.size()));
        lp.point_ids.push_back(id);
        double v = grid.at(x, y, z, 0);
        double s = v < 0.0 ? -1.0 : 1.0;
        double mag = std::clamp(std::abs(v), 1e-4, 1.0 - 1e-4);
        lp.sign.push_back(s);
        lp.mag_w.push_back(logit(mag));
        lp.in_band.push_back(std::abs(v) < 1.0f ? 1 : 0);
        for (int c = 0; c < 3; ++c) {
            double d = grid.at(x, y, z, c + 1);
            double t = std::clamp(d / (0.5 * h), -0.999, 0.999);
            lp.def_u.push_back(std::atanh(t));
        }
    };
    for (const auto& ev : topo.vertices) {
        add_point(ev.ax, ev.ay, ev.az);
        add_point(ev.bx, ev.by, ev.bz);
    }
    return lp;
}

void write_back(const LatticeParams& lp, TsdfDefGrid& grid) {
    const int k = grid.k;
    const double h = grid.voxel_size();
    for (size_t i = 0; i < lp.point_ids.size(); ++i) {
        int64_t id = lp.point_ids[i];
        int x = static_cast<int>(id % k);
        int y = static_cast<int>((id / k) % k);
        int z = static_cast<int>(id / (static_cast<int64_t>(k) * k));
        if (lp.in_band[i]) {
            grid.at(x, y, z, 0) = static_cast<float>(lp.sign[i] * sigmoid(lp.mag_w[i]));
        }
        for (int c = 0; c < 3; ++c) {
            grid.at(x, y, z, c + 1) = static_cast<float>(0.5 * h * std::tanh(lp.def_u[i * 3 + c]));
        }
    }
}

struct ChamferEval {
    double loss = 0.0;
    std::vector<Vec3> grad_vertices;  // filled only when requested
};

ChamferEval chamfer(const std::vector<Vec3>& verts, const std::vector<Vec3>& samples,
                    const KdTree& sample_tree, bool with_grad) {
    ChamferEval ev;
    if (with_grad) ev.grad_vertices.assign(verts.size(), Vec3{0, 0, 0});
    const double wv = 1.0 / static_cast<double>(verts.size());
    const double ws = 1.0 / static_cast<double>(samples.size());

    for (size_t i = 0; i < verts.size(); ++i) {
        auto nn = sample_tree.nearest(verts[i]);
        ev.loss += wv * nn.dist2;
        if (with_grad) ev.grad_vertices[i] += (verts[i] - samples[nn.index]) * (2.0 * wv);
    }
    KdTree vert_tree(verts);
    for (size_t i = 0; i < samples.size(); ++i) {
        auto nn = vert_tree.nearest(samples[i]);
        ev.loss += ws * nn.dist2;
        if (with_grad) ev.grad_vertices[nn.index] += (verts[nn.index] - samples[i]) * (2.0 * ws);
    }
    return ev;
}

}  // namespace

TsdfDefGrid refine_tsdf_def(const TsdfDefGrid& grid, const TriangleMesh& mesh, int iterations,
                            double step, RefineStats* stats) {
    TsdfDefGrid out = grid;
    DmcTopology topo = dmc_topology(grid);
    if (topo.vertices.empty()) throw ValidationError("refine_tsdf_def: empty DMC output");
    if (iterations <= 0) {
        if (stats) *stats = {};
        return out;
    }

    LatticeParams lp = collect_params(grid, topo);
    const int k = grid.k;
    const double h = grid.voxel_size();

    int64_t sample_count =
        std::clamp<int64_t>(2 * static_cast<int64_t>(topo.vertices.size()), 1000, 20000);
    auto surf = sample_surface(mesh, sample_count, 0x5EEDull);
    std::vector<Vec3> samples;
    samples.reserve(surf.size());
    for (const auto& s : surf) samples.push_back(s.point);
    KdTree sample_tree(samples);

    // Forward: vertex positions from current params, plus the pieces needed
    // for backprop.
    struct VertCache {
        int pa_slot, pb_slot;
        double t, va, vb;
        Vec3 pa, pb;
    };
    std::vector<VertCache> cache(topo.vertices.size());

    auto value_at = [&](int slot) {
        double v = lp.sign[slot] * sigmoid(lp.mag_w[slot]);
        return v;
    };
    auto position_at = [&](int slot, int64_t id) {
        int x = static_cast<int>(id % k);
        int y = static_cast<int>((id / k) % k);
        int z = static_cast<int>(id / (static_cast<int64_t>(k) * k));
        return Vec3{-1.0 + h * x + 0.5 * h * std::tanh(lp.def_u[slot * 3 + 0]),
                    -1.0 + h * y + 0.5 * h * std::tanh(lp.def_u[slot * 3 + 1]),
                    -1.0 + h * z + 0.5 * h * std::tanh(lp.def_u[slot * 3 + 2])};
    };

    auto forward = [&](std::vector<Vec3>& verts) {
        verts.resize(topo.vertices.size());
        for (size_t i = 0; i < topo.vertices.size(); ++i) {
            const auto& evx = topo.vertices[i];
            int64_t ida = (static_cast<int64_t>(evx.az) * k + evx.ay) * k + evx.ax;
            int64_t idb = (static_cast<int64_t>(evx.bz) * k + evx.by) * k + evx.bx;
            int sa = lp.slot.at(ida), sb = lp.slot.at(idb);
            double va = value_at(sa), vb = value_at(sb);
            double t = va / (va - vb);
            Vec3 pa = position_at(sa, ida), pb = position_at(sb, idb);
            verts[i] = pa + (pb - pa) * t;
            cache[i] = {sa, sb, t, va, vb, pa, pb};
        }
    };

    std::vector<Vec3> verts;
    forward(verts);
    ChamferEval ev = chamfer(verts, samples, sample_tree, false);
    double loss = ev.loss;
    if (stats) {
        stats->initial_chamfer = loss;
        stats->accepted_steps = 0;
    }

    const size_t np = lp.point_ids.size();
    std::vector<double> grad_def(np * 3), grad_mag(np);
    double cur_step = step;

    for (int iter = 0; iter < iterations; ++iter) {
        // Gradient at the current point.
        forward(verts);
        ChamferEval g = chamfer(verts, samples, sample_tree, true);
        std::fill(grad_def.begin(), grad_def.end(), 0.0);
        std::fill(grad_mag.begin(), grad_mag.end(), 0.0);
        for (size_t i = 0; i < verts.size(); ++i) {
            const Vec3& gv = g.grad_vertices[i];
            const VertCache& c = cache[i];
            // Through positions.
            for (int ax = 0; ax < 3; ++ax) {
                double ga = gv[ax] * (1.0 - c.t);
                double gb = gv[ax] * c.t;
                double ua = lp.def_u[c.pa_slot * 3 + ax];
                double ub = lp.def_u[c.pb_slot * 3 + ax];
                double ta = std::tanh(ua), tb = std::tanh(ub);
                grad_def[c.pa_slot * 3 + ax] += ga * 0.5 * h * (1.0 - ta * ta);
                grad_def[c.pb_slot * 3 + ax] += gb * 0.5 * h * (1.0 - tb * tb);
            }
            // Through the interpolation parameter.
            double gt = dot(gv, c.pb - c.pa);
            double denom = (c.va - c.vb) * (c.va - c.vb);
            double dt_dva = -c.vb / denom;
            double dt_dvb = c.va / denom;
            if (lp.in_band[c.pa_slot]) {
                double sa = sigmoid(lp.mag_w[c.pa_slot]);
                grad_mag[c.pa_slot] += gt * dt_dva * lp.sign[c.pa_slot] * sa * (1.0 - sa);
            }
            if (lp.in_band[c.pb_slot]) {
                double sb = sigmoid(lp.mag_w[c.pb_slot]);
                grad_mag[c.pb_slot] += gt * dt_dvb * lp.sign[c.pb_slot] * sb * (1.0 - sb);
            }
        }

        // Backtracking line search on the true loss.
        auto def_backup = lp.def_u;
        auto mag_backup = lp.mag_w;
        bool accepted = false;
        double eta = cur_step;
        for (int ls = 0; ls < 12; ++ls) {
            for (size_t i = 0; i < np * 3; ++i) lp.def_u[i] = def_backup[i] - eta * grad_def[i];
            for (size_t i = 0; i < np; ++i) lp.mag_w[i] = mag_backup[i] - eta * grad_mag[i];
            forward(verts);
            double trial = chamfer(verts, samples, sample_tree, false).loss;
            if (trial <= loss) {
                loss = trial;
                accepted = true;
                cur_step = std::min(eta * 1.5, step * 16.0);
                if (stats) ++stats->accepted_steps;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) {
            lp.def_u = def_backup;
            lp.mag_w = mag_backup;
            break;
        }
    }

    if (stats) stats->final_chamfer = loss;
    write_back(lp, out);
    return out;
}

}  // namespace n4mc
