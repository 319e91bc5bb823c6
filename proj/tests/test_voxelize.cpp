#include <catch2/catch_amalgamated.hpp>

#include "aneusim/shapes.hpp"
#include "aneusim/voxel_grid.hpp"
#include <sstream>

using namespace aneusim;

namespace {

// Brute-force point-in-cube oracle for the unit cube classification case.
bool in_unit_cube(const Vec3& p) {
    return p.x > 0 && p.x < 1 && p.y > 0 && p.y < 1 && p.z > 0 && p.z < 1;
}

}  // namespace

TEST_CASE("unit cube at h=0.25 classifies 64 interior cells") {
    auto cube = unit_cube_mesh();
    DiskSpec inlet{{0.0, 0.5, 0.5}, {1, 0, 0}, 10.0};
    DiskSpec outlet{{1.0, 0.5, 0.5}, {1, 0, 0}, 10.0};
    auto g = voxelize(cube, 0.25, inlet, outlet);

    std::int64_t interior = 0, oracle = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                if (g.cell[g.idx(i, j, k)] != CellClass::Exterior) ++interior;
                if (in_unit_cube(g.center(i, j, k))) ++oracle;
            }
    REQUIRE(oracle == 64);
    REQUIRE(interior == 64);
    REQUIRE(g.count(CellClass::InletFace) == 16);
    REQUIRE(g.count(CellClass::OutletFace) == 16);
    REQUIRE(g.count(CellClass::Fluid) == 8);
    REQUIRE(g.count(CellClass::Wall) == 24);
}

TEST_CASE("sphere voxel volume within 2% of analytic") {
    // Radius 0.5 sphere, fine grid; interior volume approximates pi/6.
    auto mesh = icosphere_mesh({0.0137, 0.0071, -0.0233}, 0.5, 3);
    DiskSpec inlet{{0.0137, 0.0071, -0.5233}, {0, 0, 1}, 0.25};
    DiskSpec outlet{{0.0137, 0.0071, 0.4767}, {0, 0, 1}, 0.25};
    auto g = voxelize(mesh, 0.02, inlet, outlet);
    double exact = M_PI / 6.0;
    REQUIRE(std::abs(g.interior_volume() - exact) / exact < 0.02);
}

TEST_CASE("voxel volume converges to mesh volume with order >= 0.9") {
    auto mesh = icosphere_mesh({0.0137, 0.0071, -0.0233}, 0.5, 3);
    double vmesh = mesh.signed_volume();
    std::vector<double> hs = {0.1, 0.07, 0.05, 0.035, 0.025, 0.0175};
    std::vector<double> errs;
    for (double h : hs) {
        DiskSpec inlet{{0.0137, 0.0071, -0.5233}, {0, 0, 1}, 4 * h};
        DiskSpec outlet{{0.0137, 0.0071, 0.4767}, {0, 0, 1}, 4 * h};
        auto g = voxelize(mesh, h, inlet, outlet);
        errs.push_back(std::abs(g.interior_volume() - vmesh));
    }
    // Least-squares slope of log(err) vs log(h).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(hs.size());
    for (int i = 0; i < n; ++i) {
        double x = std::log(hs[i]), y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    std::ostringstream msg;
    for (double e : errs) msg << e << ' ';
    INFO("errors " << msg.str() << "slope " << slope);
    REQUIRE(slope >= 0.9);
}

TEST_CASE("classification is deterministic across thread counts") {
    auto mesh = icosphere_mesh({0.0137, 0.0071, -0.0233}, 0.5, 2);
    DiskSpec inlet{{0.0137, 0.0071, -0.5233}, {0, 0, 1}, 0.2};
    DiskSpec outlet{{0.0137, 0.0071, 0.4767}, {0, 0, 1}, 0.2};
    set_threads(1);
    auto g1 = voxelize(mesh, 0.03, inlet, outlet);
    set_threads(2);
    auto g2 = voxelize(mesh, 0.03, inlet, outlet);
    set_threads(1);
    REQUIRE(g1.cell == g2.cell);
}

TEST_CASE("too-coarse grid on a small vessel is rejected") {
    auto tube = tube_mesh({0, 0, 0}, {5, 0, 0}, 0.5, 24, 4);
    DiskSpec inlet{{0, 0, 0}, {1, 0, 0}, 0.5};
    DiskSpec outlet{{5, 0, 0}, {1, 0, 0}, 0.5};
    try {
        voxelize(tube, 10.0, inlet, outlet);
        FAIL("expected ResolutionTooCoarse");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::ResolutionTooCoarse);
    }
}

TEST_CASE("disconnected domain is rejected") {
    // Outlet disk placed on a wall that no fluid path reaches (radius too
    // small to tag any boundary cell as outlet).
    auto cube = unit_cube_mesh();
    DiskSpec inlet{{0.0, 0.5, 0.5}, {1, 0, 0}, 10.0};
    DiskSpec outlet{{0.5, 0.5, 2.5}, {0, 0, 1}, 0.01};
    try {
        voxelize(cube, 0.1, inlet, outlet);
        FAIL("expected DisconnectedDomain");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::DisconnectedDomain);
    }
}

TEST_CASE("hemispherical bump sac volume within 3% of analytic") {
    // Flat-walled channel with a sphere centered on the top wall: the sac
    // above the wall plane is exactly a hemisphere.
    double r = 2.0, h = 0.02;
    Vec3 lo{-3, -3, -2}, hi{3, 3, 0};
    auto geom = implicit_union(implicit_box(lo, hi), implicit_sphere({0, 0, 0}, r));
    DiskSpec inlet{{-3, 0, -1}, {1, 0, 0}, 10.0};
    DiskSpec outlet{{3, 0, -1}, {1, 0, 0}, 10.0};
    auto g = voxelize(geom, h, inlet, outlet);
    OstiumSpec ostium{{0, 0, 0}, {0, 0, 1}, r * 1.2};
    tag_sac_inplace(g, ostium);
    double exact = 0.5 * (4.0 / 3.0) * M_PI * r * r * r;
    INFO("sac " << g.sac_volume() << " exact " << exact);
    REQUIRE(std::abs(g.sac_volume() - exact) / exact < 0.03);

    // Mask hygiene on the same grid.
    for (std::int64_t id = 0; id < g.ncells(); ++id) {
        if (g.sac_mask[id]) REQUIRE(g.cell[id] != CellClass::Exterior);
        if (g.dome_wall_mask[id]) REQUIRE(g.cell[id] == CellClass::Wall);
    }
}

TEST_CASE("ostium plane outside the domain tags nothing") {
    auto cube = unit_cube_mesh();
    DiskSpec inlet{{0.0, 0.5, 0.5}, {1, 0, 0}, 10.0};
    DiskSpec outlet{{1.0, 0.5, 0.5}, {1, 0, 0}, 10.0};
    auto g = voxelize(cube, 0.1, inlet, outlet);
    OstiumSpec ostium{{0.5, 0.5, 5.0}, {0, 0, 1}, 1.0};
    try {
        tag_sac_inplace(g, ostium);
        FAIL("expected EmptySac");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::EmptySac);
    }
}

TEST_CASE("flipped ostium normal selects the parent-vessel side") {
    double r = 1.0, h = 0.05;
    auto geom = implicit_union(implicit_box({-2, -2, -1.5}, {2, 2, 0}), implicit_sphere({0, 0, 0}, r));
    DiskSpec inlet{{-2, 0, -0.75}, {1, 0, 0}, 10.0};
    DiskSpec outlet{{2, 0, -0.75}, {1, 0, 0}, 10.0};
    auto g = voxelize(geom, h, inlet, outlet);
    auto sac_up = tag_sac(g, {{0, 0, 0}, {0, 0, 1}, 1.5});
    auto sac_down = tag_sac(g, {{0, 0, 0}, {0, 0, -1}, 10.0});
    // Documented sign convention: the flipped normal tags the box side.
    REQUIRE(sac_down.sac_volume() > 5.0 * sac_up.sac_volume());
}
