#include <catch2/catch_amalgamated.hpp>

#include "aneusim/deploy.hpp"
#include "aneusim/shapes.hpp"

using namespace aneusim;

namespace {

// Z-shaped rod whose first and third segments are parallel at distance d.
CoilState parallel_segment_rod(double d) {
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {1, d, 0}, {0, d, 0}};
    auto s = make_rod_from_curve(pts, 0.05, 0.25, 4.0);
    return s;
}

}  // namespace

TEST_CASE("segments outside the contact radius feel no force") {
    auto s = parallel_segment_rod(1.5 * 0.25);
    RodMaterial m;
    ObstacleSet obs;
    auto f = contact_forces(s, m, obs);
    for (const auto& v : f) REQUIRE(norm(v) < 1e-14);
}

TEST_CASE("overlapping parallel segments obey Newton's third law") {
    auto s = parallel_segment_rod(0.8 * 0.25);
    RodMaterial m;
    ObstacleSet obs;
    auto f = contact_forces(s, m, obs);
    Vec3 sum{};
    double mag = 0.0;
    for (const auto& v : f) {
        sum += v;
        mag += norm(v);
    }
    REQUIRE(mag > 0.0);
    REQUIRE(norm(sum) <= 1e-12 * mag);
    // Normal directions: segment 0 pushed toward -y, segment 2 toward +y.
    REQUIRE(f[0].y < 0.0);
    REQUIRE(f[3].y > 0.0);
}

TEST_CASE("sliding wall contact obeys the Coulomb slip law") {
    std::vector<Vec3> pts = {{0, 0, 0.4 * 0.25}, {5, 0, 5.0}};
    auto s = make_rod_from_curve(pts, 0.05, 0.25, 4.0);
    s.v[0] = {2.0, 0, 0};  // well above the stick threshold
    RodMaterial m;
    m.mu_friction = 0.3;
    ObstacleSet obs;
    obs.walls.push_back([](const Vec3& p) { return p.z; });  // allowed above z=0
    auto f = contact_forces(s, m, obs);
    double fn = f[0].z;
    Vec3 ft{f[0].x, f[0].y, 0};
    REQUIRE(fn > 0.0);
    REQUIRE(norm(ft) == Catch::Approx(0.3 * fn).epsilon(1e-9));
    REQUIRE(ft.x < 0.0);  // opposes sliding
    REQUIRE(norm(f[1]) < 1e-14);
}

TEST_CASE("stick regime scales the tangential force below mu*Fn") {
    std::vector<Vec3> pts = {{0, 0, 0.1}, {5, 0, 5.0}};
    auto s = make_rod_from_curve(pts, 0.05, 0.25, 4.0);
    s.v[0] = {0.5e-3, 0, 0};  // half the stick threshold
    RodMaterial m;
    m.mu_friction = 0.3;
    ObstacleSet obs;
    obs.walls.push_back([](const Vec3& p) { return p.z; });
    auto f = contact_forces(s, m, obs);
    double fn = f[0].z;
    REQUIRE(norm(Vec3{f[0].x, f[0].y, 0}) == Catch::Approx(0.5 * 0.3 * fn).epsilon(1e-9));
}

TEST_CASE("straight coil deploys straight in an unbounded domain") {
    CoilSpec spec;
    spec.shape = RestShape::Straight;
    spec.total_length = 10.0;
    spec.edge_length = 0.5;
    spec.d1 = 0.05;
    spec.d2 = 0.25;
    spec.d3 = 4.0;
    RodMaterial m;
    ObstacleSet obs;
    InsertionSpec ins;
    ins.tip_point = {0, 0, 0};
    ins.tip_direction = {1, 0, 0};
    ins.feed_rate = 25.0;
    auto r = deploy(spec, m, obs, ins);
    REQUIRE(r.converged);
    REQUIRE(static_cast<int>(r.events.size()) == r.state.n());
    double len = 0.0;
    for (int j = 0; j < r.state.n_edges(); ++j) len += norm(r.state.edge(j));
    REQUIRE(len == Catch::Approx(10.0).epsilon(0.01));
    for (const auto& p : r.state.x) REQUIRE(std::sqrt(sq(p.y) + sq(p.z)) < 0.02);
}

TEST_CASE("helical coil fills a large cavity within its envelope") {
    CoilSpec spec;
    spec.shape = RestShape::SphericalHelix;
    spec.total_length = 60.0;
    spec.edge_length = 0.5;
    spec.d2 = 0.25;
    spec.d3 = 4.0;
    RodMaterial m;
    ObstacleSet obs;
    obs.walls.push_back(wall_from_implicit(implicit_sphere({0, 0, 0}, 3.0)));
    InsertionSpec ins;
    ins.tip_point = {-2.4, 0, 0};
    ins.tip_direction = {1, 0, 0};
    ins.feed_rate = 10.0;
    DeployOptions opt;
    opt.max_time = 25.0;
    auto r = deploy(spec, m, obs, ins, opt);
    double diam = 0.0;
    for (int i = 0; i < r.state.n(); ++i)
        for (int j = i + 1; j < r.state.n(); ++j)
            diam = std::max(diam, norm(r.state.x[i] - r.state.x[j]));
    INFO("bounding diameter " << diam);
    REQUIRE(diam <= 4.0 * 1.05);
}

TEST_CASE("coil in an undersized sphere conforms to the wall") {
    CoilSpec spec;
    spec.shape = RestShape::SphericalHelix;
    spec.total_length = 40.0;
    spec.edge_length = 0.5;
    spec.d2 = 0.25;
    spec.d3 = 4.0;
    RodMaterial m;
    ObstacleSet obs;
    const double sphere_r = 1.5;
    obs.walls.push_back(wall_from_implicit(implicit_sphere({0, 0, 0}, sphere_r)));
    InsertionSpec ins;
    ins.tip_point = {-(sphere_r - 0.3), 0, 0};
    ins.tip_direction = {1, 0, 0};
    ins.feed_rate = 10.0;
    DeployOptions opt;
    opt.max_time = 25.0;
    auto r = deploy(spec, m, obs, ins, opt);
    double worst = 0.0;
    for (const auto& p : r.state.x) worst = std::max(worst, norm(p));
    INFO("max radius " << worst);
    REQUIRE(worst <= sphere_r - 0.25 / 2.0 + 0.05 * 0.25 + 1e-6);

    // Non-adjacent segments keep the wire clearance up to penalty compliance.
    double min_dist = 1e300;
    for (int j = 0; j + 1 < r.state.n_edges(); ++j)
        for (int k = j + 2; k < r.state.n_edges(); ++k) {
            double tj, tk;
            detail::closest_segment_segment(r.state.x[j], r.state.x[j + 1], r.state.x[k],
                                            r.state.x[k + 1], tj, tk);
            min_dist = std::min(min_dist, norm(r.state.x[j] + (r.state.x[j + 1] - r.state.x[j]) * tj -
                                               (r.state.x[k] + (r.state.x[k + 1] - r.state.x[k]) * tk)));
        }
    INFO("min pair distance " << min_dist);
    REQUIRE(min_dist >= 0.95 * 0.25);
}

TEST_CASE("deploy event log is stable and ordered") {
    CoilSpec spec;
    spec.shape = RestShape::Straight;
    spec.total_length = 5.0;
    spec.edge_length = 0.5;
    RodMaterial m;
    ObstacleSet obs;
    InsertionSpec ins;
    ins.tip_point = {0, 0, 0};
    auto r1 = deploy(spec, m, obs, ins);
    auto r2 = deploy(spec, m, obs, ins);
    REQUIRE(format_deploy_log(r1) == format_deploy_log(r2));
    for (std::size_t i = 1; i < r1.events.size(); ++i)
        REQUIRE(r1.events[i].t >= r1.events[i - 1].t);
}
