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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "mc_oracle.hpp"
#include "n4mc/bvh.hpp"
#include "n4mc/marching_cubes.hpp"
#include "n4mc/mesh.hpp"
#include "n4mc/rng.hpp"
#include "n4mc/voxelize.hpp"

using namespace n4mc;

TEST_CASE("winding: enclosed point of a sphere is 1") {
    TriangleMesh m = make_icosphere(2, 1.0);
    auto w = winding_number(m, {{0, 0, 0}});
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("winding: far exterior point is 0") {
    TriangleMesh m = make_icosphere(2, 1.0);
    auto w = winding_number(m, {{10, 0, 0}});
    CHECK(std::abs(w[0]) <= 1e-3);
}

TEST_CASE("winding: cube face point is 1/2") {
    TriangleMesh m = make_box({-1, -1, -1}, {1, 1, 1});
    // Strictly inside one face triangle, coplanar with the +z face.
    auto w = winding_number(m, {{0.25, 0.37, 1.0}});
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("winding: fast agrees with exact within 1e-3") {
    TriangleMesh m = make_icosphere(3, 0.6, {0.1, -0.05, 0.0});
    std::vector<Vec3> pts;
    Rng rng(11);
    for (int i = 0; i < 500; ++i)
        pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto exact = winding_number(m, pts, false);
    auto fast = winding_number(m, pts, true);
    double maxdiff = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) maxdiff = std::max(maxdiff, std::abs(exact[i] - fast[i]));
    CHECK(maxdiff <= 1e-3);
}

TEST_CASE("winding: NaN query rejected") {
    TriangleMesh m = make_icosphere(1);
    CHECK_THROWS_AS(winding_number(m, {{std::nan(""), 0, 0}}), ValidationError);
}

TEST_CASE("occupancy: sphere volume within 3%") {
    const int k = 32;
    TriangleMesh m = make_icosphere(3, 0.5);
    VoxelGridSpec spec{k};
    auto occ = occupancy(m, spec, 0.5);
    int64_t count = std::count(occ.begin(), occ.end(), uint8_t(1));
    double voxel_volume = std::pow(spec.spacing(), 3);
    double expected = 4.0 / 3.0 * 3.14159265358979323846 * 0.5 * 0.5 * 0.5 / voxel_volume;
    CHECK(std::abs(count - expected) / expected < 0.03);
}

TEST_CASE("occupancy: empty region is all zeros") {
    TriangleMesh m = make_icosphere(1, 0.1, {0.8, 0.8, 0.8});
    VoxelGridSpec spec{16};
    auto occ = occupancy(m, spec, 0.5);
    // Far corner opposite the sphere.
    for (int iz = 0; iz < 8; ++iz)
        for (int iy = 0; iy < 8; ++iy)
            for (int ix = 0; ix < 8; ++ix) CHECK(occ[spec.index(ix, iy, iz)] == 0);
}

TEST_CASE("occupancy: matches analytic sphere SDF sign away from surface") {
    const int k = 32;
    const double r = 0.5;
    TriangleMesh m = make_icosphere(3, r);
    VoxelGridSpec spec{k};
    auto occ = occupancy(m, spec, 0.5);
    double h = spec.spacing();
    for (int iz = 0; iz < k; ++iz)
        for (int iy = 0; iy < k; ++iy)
            for (int ix = 0; ix < k; ++ix) {
                double sdf = norm(spec.position(ix, iy, iz)) - r;
                if (std::abs(sdf) <= h) continue;
                CHECK(occ[spec.index(ix, iy, iz)] == (sdf < 0 ? 1 : 0));
            }
}

TEST_CASE("tsdf: deep interior clamps to -1") {
    TriangleMesh m = make_icosphere(3, 0.5);
    TsdfDefGrid g = compute_tsdf_def(m, 32);
    // Grid point nearest the origin: distance 0.5 >> tau.
    int mid = 15;  // position -1 + 15*h, h = 2/31 -> -0.0323; inside
    CHECK(g.at(mid, mid, mid, 0) == doctest::Approx(-1.0));
}

TEST_CASE("tsdf: zero crossing at the surface") {
    // Box face exactly on a lattice plane: k=33 puts x=0.5 on the grid for
    // h = 2/32 = 0.0625... it does not; use a box aligned to grid points.
    const int k = 33;
    VoxelGridSpec spec{k};
    double h = spec.spacing();
    double face = -1.0 + 24 * h;
    TriangleMesh box = make_box({-0.5, -0.5, -0.5}, {face, 0.5, 0.5});
    TsdfDefGrid g = compute_tsdf_def(box, k);
    // Grid points on the +x face (interior band of the face) are zero.
    int iy = k / 2, iz = k / 2;
    CHECK(std::abs(g.at(24, iy, iz, 0)) <= 1e-3 * spec.spacing() / g.tau + 1e-6);
}

TEST_CASE("tsdf: analytic sphere SDF within the band") {
    const int k = 32;
    const double r = 0.5;
    TriangleMesh m = make_icosphere(4, r);  // fine tessellation: geometry error ~2.4e-4*r
    TsdfDefGrid g = compute_tsdf_def(m, k);
    VoxelGridSpec spec{k};
    Rng rng(5);
    int checked = 0;
    for (int trial = 0; trial < 4000 && checked < 200; ++trial) {
        int ix = static_cast<int>(rng.uniform_int(k));
        int iy = static_cast<int>(rng.uniform_int(k));
        int iz = static_cast<int>(rng.uniform_int(k));
        double sdf = norm(spec.position(ix, iy, iz)) - r;
        if (std::abs(sdf) > 0.9 * g.tau) continue;  // stay inside the band
        ++checked;
        double got = g.at(ix, iy, iz, 0) * g.tau;
        CHECK(std::abs(got - sdf) <= 1e-3);
    }
    CHECK(checked >= 100);
}

TEST_CASE("tsdf: mesh outside the canonical cube errors") {
    TriangleMesh m = make_icosphere(1, 2.0);
    CHECK_THROWS_AS(compute_tsdf_def(m, 32), ValidationError);
}

TEST_CASE("dmc: zero deformation equals reference marching cubes bitwise") {
    TriangleMesh m = make_icosphere(2, 0.55, {0.07, -0.03, 0.11});
    TsdfDefGrid g = compute_tsdf_def(m, 24);
    TriangleMesh ours = deformable_marching_cubes(g);
    TriangleMesh ref = testing::reference_marching_cubes(g);
    CHECK(testing::same_triangle_soup(ours, ref));
}

TEST_CASE("dmc: sphere vertices within one voxel of the analytic sphere") {
    const int k = 64;
    const double r = 0.5;
    TriangleMesh m = make_icosphere(4, r);
    TsdfDefGrid g = compute_tsdf_def(m, k);
    TriangleMesh out = deformable_marching_cubes(g);
    REQUIRE(!out.empty());
    double h = g.voxel_size();
    for (const auto& v : out.vertices) CHECK(std::abs(norm(v) - r) <= h);
}

TEST_CASE("dmc: uniform deformation translates the output") {
    TriangleMesh m = make_icosphere(2, 0.45);
    TsdfDefGrid g = compute_tsdf_def(m, 24);
    TriangleMesh base = deformable_marching_cubes(g);

    const float delta = 0.4f * static_cast<float>(g.voxel_size());
    TsdfDefGrid shifted = g;
    for (int64_t i = 0; i < static_cast<int64_t>(shifted.values.size()); i += 4)
        shifted.values[i + 1] = delta;
    TriangleMesh moved = deformable_marching_cubes(shifted);

    REQUIRE(moved.vertices.size() == base.vertices.size());
    CHECK(moved.faces == base.faces);
    double err = 0.0;
    for (size_t i = 0; i < base.vertices.size(); ++i) {
        Vec3 expect = base.vertices[i] + Vec3{delta, 0, 0};
        err = std::max(err, norm(moved.vertices[i] - expect));
    }
    CHECK(err <= 1e-6);
}

TEST_CASE("dmc: all-positive grid gives an empty mesh") {
    TsdfDefGrid g;
    g.k = 8;
    g.tau = static_cast<float>(default_tau(8));
    g.values.assign(8 * 8 * 8 * 4, 0.0f);
    for (int64_t i = 0; i < 8 * 8 * 8; ++i) g.values[i * 4] = 1.0f;
    TriangleMesh out = deformable_marching_cubes(g);
    CHECK(out.vertices.empty());
    CHECK(out.faces.empty());
}

TEST_CASE("dmc: outward orientation on a sphere") {
    TriangleMesh m = make_icosphere(3, 0.5);
    TsdfDefGrid g = compute_tsdf_def(m, 32);
    TriangleMesh out = deformable_marching_cubes(g);
    REQUIRE(!out.empty());
    int outward = 0, total = 0;
    for (size_t f = 0; f < out.faces.size(); ++f) {
        const auto& t = out.faces[f];
        Vec3 c = (out.vertices[t[0]] + out.vertices[t[1]] + out.vertices[t[2]]) / 3.0;
        if (out.face_area(static_cast<int>(f)) < 1e-12) continue;
        ++total;
        if (dot(out.face_normal(static_cast<int>(f)), normalized(c)) > 0) ++outward;
    }
    CHECK(outward == total);
}

TEST_CASE("tsdf sign matches occupancy complement away from surface") {
    const int k = 24;
    TriangleMesh m = make_icosphere(3, 0.45, {0.1, 0.0, 0.0});
    TsdfDefGrid g = compute_tsdf_def(m, k);
    VoxelGridSpec spec{k};
    auto occ = occupancy(m, spec, 0.5);
    MeshBvh bvh(m);
    double h = spec.spacing();
    for (int iz = 0; iz < k; ++iz)
        for (int iy = 0; iy < k; ++iy)
            for (int ix = 0; ix < k; ++ix) {
                if (bvh.distance(spec.position(ix, iy, iz)) <= h) continue;
                bool inside = g.at(ix, iy, iz, 0) < 0;
                CHECK(inside == (occ[spec.index(ix, iy, iz)] == 1));
            }
}

TEST_CASE("tsdg dump roundtrip") {
    TriangleMesh m = make_icosphere(2, 0.4);
    TsdfDefGrid g = compute_tsdf_def(m, 16);
    auto path = testing::temp_dir("n4mc_voxel_tests") + "/grid.tsdg";
    save_grid(g, path);
    TsdfDefGrid r = load_grid(path);
    CHECK(r.k == g.k);
    CHECK(r.tau == g.tau);
    CHECK(r.values == g.values);
}
