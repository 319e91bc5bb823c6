#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "aneusim/shapes.hpp"
#include "aneusim/surface_mesh.hpp"

using namespace aneusim;

namespace {
std::string tmp_path(const std::string& name) {
    return std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") + "/" + name;
}
}  // namespace

TEST_CASE("ascii stl unit cube round-trips with analytic volume") {
    auto cube = unit_cube_mesh();
    REQUIRE(cube.faces.size() == 12);
    REQUIRE(cube.signed_volume() == Catch::Approx(1.0));

    auto path = tmp_path("cube.stl");
    save_stl_ascii(cube, path);
    auto back = load_surface(path, MeshFormat::StlAscii);
    REQUIRE(back.faces.size() == 12);
    REQUIRE(back.signed_volume() == Catch::Approx(1.0));
}

TEST_CASE("binary stl round-trip") {
    auto sphere = icosphere_mesh({0, 0, 0}, 1.0, 1);
    auto path = tmp_path("sphere.stl");
    save_stl_binary(sphere, path);
    REQUIRE(guess_format(path) == MeshFormat::StlBinary);
    auto back = load_surface(path, MeshFormat::StlBinary);
    REQUIRE(back.faces.size() == sphere.faces.size());
    REQUIRE(back.signed_volume() == Catch::Approx(sphere.signed_volume()).epsilon(1e-5));
}

TEST_CASE("obj icosphere volume approaches analytic sphere volume") {
    auto sphere = icosphere_mesh({0, 0, 0}, 1.0, 2);
    auto path = tmp_path("sphere.obj");
    save_obj(sphere, path);
    auto back = load_surface(path, MeshFormat::Obj);

    // Independent oracle: sum of signed tetrahedra against the origin.
    double vol = 0.0;
    for (const auto& f : back.faces) {
        const Vec3 &a = back.vertices[f[0]], &b = back.vertices[f[1]], &c = back.vertices[f[2]];
        vol += dot(a, cross(b, c)) / 6.0;
    }
    double exact = 4.0 * M_PI / 3.0;
    REQUIRE(std::abs(vol - exact) / exact < 0.05);
    REQUIRE(back.signed_volume() == Catch::Approx(vol));
}

TEST_CASE("deleted facet is rejected as not watertight") {
    auto cube = unit_cube_mesh();
    cube.faces.pop_back();
    auto path = tmp_path("open_cube.stl");
    save_stl_ascii(cube, path);
    try {
        load_surface(path, MeshFormat::StlAscii);
        FAIL("expected NotWatertight");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::NotWatertight);
    }
}

TEST_CASE("inverted orientation is rejected") {
    auto cube = unit_cube_mesh();
    for (auto& f : cube.faces) std::swap(f[0], f[1]);
    auto path = tmp_path("inv_cube.stl");
    save_stl_ascii(cube, path);
    try {
        load_surface(path, MeshFormat::StlAscii);
        FAIL("expected InvertedOrientation");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::InvertedOrientation);
    }
}

TEST_CASE("malformed file is a parse error") {
    auto path = tmp_path("garbage.stl");
    std::ofstream(path) << "this is not a mesh\n";
    try {
        load_surface(path, MeshFormat::StlAscii);
        FAIL("expected ParseError");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::Parse);
    }
}

TEST_CASE("tube mesh is watertight with expected area") {
    auto tube = tube_mesh({0, 0, 0}, {10, 0, 0}, 1.5, 48, 12);
    auto path = tmp_path("tube.stl");
    save_stl_binary(tube, path);
    auto back = load_surface(path, MeshFormat::StlBinary);
    double exact = M_PI * sq(1.5) * 10.0;
    REQUIRE(std::abs(back.signed_volume() - exact) / exact < 0.01);
}
