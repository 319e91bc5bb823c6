#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "aneusim/flow.hpp"

using namespace aneusim;

namespace {

WaveformSpec constant_inlet(double cm_per_s) {
    WaveformSpec w;
    w.role = WaveformSpec::Role::InletVelocity;
    w.offset = cm_per_s;
    return w;
}

WaveformSpec constant_outlet(double mmhg) {
    WaveformSpec w;
    w.role = WaveformSpec::Role::OutletPressure;
    w.offset = mmhg;
    return w;
}

}  // namespace

TEST_CASE("waveform evaluation matches the direct sum") {
    auto inlet = preset_inlet_waveform();
    // Independent oracle: offset + sum A_k sin(phase_k) at t = 0.
    REQUIRE(waveform_eval(inlet, 0.0) == Catch::Approx(14.095369285987097).epsilon(1e-12));

    WaveformSpec zeroed = inlet;
    for (auto& t : zeroed.terms) t.amplitude = 0.0;
    REQUIRE(waveform_eval(zeroed, 0.37) == Catch::Approx(19.59));

    WaveformSpec pressure_offset_only;
    pressure_offset_only.role = WaveformSpec::Role::OutletPressure;
    pressure_offset_only.offset = 75.07;
    REQUIRE(waveform_eval(pressure_offset_only, 1.23) == Catch::Approx(75.07));
}

TEST_CASE("rest state with zero inlet stays at rest") {
    auto g = make_channel_grid(12, 8, 1, 0.2, {}, false);
    FlowBc bc;
    bc.inlet = constant_inlet(0.0);
    bc.outlet = constant_outlet(0.0);
    FlowSolver solver(g, FluidProps{}, bc);
    for (int s = 0; s < 20; ++s) solver.step(1e-4);
    REQUIRE(solver.velocity().max_abs() == 0.0);
}

TEST_CASE("free-slip walls carry exactly zero normal velocity") {
    auto g = make_channel_grid(16, 10, 6, 0.2);
    FlowBc bc;
    bc.inlet = constant_inlet(0.5);
    bc.outlet = constant_outlet(0.0);
    FlowSolver solver(g, FluidProps{}, bc);
    solver.advance(0.05);
    const auto& u = solver.velocity();
    std::int64_t walls = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j <= g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                bool lo_flow = g.is_flow(g.at(i, j - 1, k));
                bool hi_flow = g.is_flow(g.at(i, j, k));
                if (lo_flow != hi_flow && g.at(i, j - 1, k) != CellClass::InletFace &&
                    g.at(i, j, k) != CellClass::InletFace &&
                    g.at(i, j - 1, k) != CellClass::OutletFace &&
                    g.at(i, j, k) != CellClass::OutletFace) {
                    REQUIRE(u.y[u.yi(i, j, k)] == 0.0);
                    ++walls;
                }
            }
    REQUIRE(walls > 0);
}

TEST_CASE("poiseuille channel develops the analytic profile") {
    // 64 fluid cells across, plane 2-D channel.
    const int ny = 64, nx = 96;
    const double h = 0.1, H = ny * h;
    auto g = make_channel_grid(nx, ny, 1, h, {}, false);
    FlowBc bc;
    bc.inlet = constant_inlet(0.25);  // 2.5 mm/s mean
    bc.outlet = constant_outlet(0.0);
    bc.wall = FlowBc::WallMode::NoSlip;
    FlowSolver solver(g, FluidProps{}, bc);
    solver.advance(3.0);

    const auto& u = solver.velocity();
    int i_probe = nx - 12;
    double mean = 0.0, peak = 0.0;
    for (int j = 1; j <= ny; ++j) {
        double v = u.x[u.xi(i_probe, j, 1 - 1)];
        mean += v;
        peak = std::max(peak, v);
    }
    mean /= ny;
    INFO("peak/mean " << peak / mean);
    REQUIRE(std::abs(peak / mean - 1.5) < 0.02 * 1.5);

    // Post-projection divergence and global mass balance.
    REQUIRE(solver.max_divergence_scaled() <= 1e-8);
    double qin = solver.inlet_flux(), qout = solver.outlet_flux();
    REQUIRE(std::abs(qin - qout) / qin <= 1e-6);

    // Wall-adjacent shear rate vs the analytic wall value 6 U / H.
    auto gamma = solver.shear_rate();
    double expect = 6.0 * mean / H;
    double got = gamma[g.idx(i_probe, 1, 0)];
    INFO("gamma " << got << " expect " << expect);
    REQUIRE(std::abs(got - expect) / expect < 0.10);
}

TEST_CASE("darcy slab produces the analytic pressure drop") {
    const int nx = 40, ny = 8;
    const double h = 0.2;
    auto g = make_channel_grid(nx, ny, 1, h, {}, false);
    FlowBc bc;
    bc.inlet = constant_inlet(1.0);  // 10 mm/s plug
    bc.outlet = constant_outlet(0.0);
    bc.wall = FlowBc::WallMode::FreeSlip;
    FlowSolver solver(g, FluidProps{}, bc);

    // Slab of viscous resistance spanning the channel.
    std::vector<double> phi(g.ncells(), 1.0), ia(g.ncells(), 0.0);
    const int i0 = 16, i1 = 26;  // 10 cells -> 2 mm
    const double k_res = 5.0;    // 1/mm^2
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = i0; i < i1; ++i) ia[g.idx(i, j, k)] = k_res;
    solver.set_porous_fields(phi, ia);
    solver.advance(1.5);

    const double U = 10.0;
    double nu = FluidProps{}.nu_mm();
    double expect = nu * (i1 - i0) * h * U * k_res;  // kinematic pressure drop
    int jmid = g.ny / 2, kmid = 0;
    double q_up = solver.pressure_kinematic()[g.idx(i0 - 3, jmid, kmid)];
    double q_dn = solver.pressure_kinematic()[g.idx(i1 + 2, jmid, kmid)];
    INFO("drop " << q_up - q_dn << " expect " << expect);
    REQUIRE(std::abs((q_up - q_dn) - expect) / expect < 0.02);

    // Velocity inside the slab survives (Brinkman, not blockage).
    const auto& u = solver.velocity();
    REQUIRE(u.x[u.xi(21, jmid, kmid)] == Catch::Approx(U).epsilon(0.01));
}

TEST_CASE("decaying vortex converges with order >= 1 in dt") {
    const int n = 32;
    const double h = 0.15, L = n * h;
    const double a = M_PI / L;
    FluidProps props;
    double nu = props.nu_mm();

    auto init = [&](FlowSolver& solver, const VoxelGrid& g) {
        auto& u = solver.velocity();
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i <= g.nx; ++i) {
                    double x = g.origin.x + i * h, y = g.origin.y + (j + 0.5) * h;
                    if (g.is_flow(g.at(i - 1, j, k)) && g.is_flow(g.at(i, j, k)))
                        u.x[u.xi(i, j, k)] = std::sin(a * x) * std::cos(a * y);
                }
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j <= g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    double x = g.origin.x + (i + 0.5) * h, y = g.origin.y + j * h;
                    if (g.is_flow(g.at(i, j - 1, k)) && g.is_flow(g.at(i, j, k)))
                        u.y[u.yi(i, j, k)] = -std::cos(a * x) * std::sin(a * y);
                }
    };

    const double T = 0.02;
    double dt0 = 0.3 * h * h / (6.0 * nu);
    std::vector<FaceField> results;
    for (int lvl = 0; lvl < 4; ++lvl) {
        auto g = make_box_grid(n, n, 1, h, {}, false);
        FlowBc bc;
        FlowSolver solver(g, props, bc);
        solver.set_reference_speed(1.0);
        init(solver, g);
        double dt = dt0 / (1 << lvl);
        int steps = static_cast<int>(std::round(T / dt));
        for (int s = 0; s < steps; ++s) solver.step(dt);
        results.push_back(solver.velocity());
    }
    auto diff = [&](const FaceField& A, const FaceField& B) {
        double e = 0.0;
        for (std::size_t i = 0; i < A.x.size(); ++i) e += sq(A.x[i] - B.x[i]);
        for (std::size_t i = 0; i < A.y.size(); ++i) e += sq(A.y[i] - B.y[i]);
        return std::sqrt(e);
    };
    double e1 = diff(results[0], results[3]);
    double e2 = diff(results[1], results[3]);
    double order = std::log2(e1 / e2);
    INFO("e1 " << e1 << " e2 " << e2 << " order " << order);
    REQUIRE(order >= 1.0);
}

TEST_CASE("cycles snapshot at peak systole") {
    auto g = make_channel_grid(10, 6, 1, 0.3, {}, false);
    FlowBc bc;
    bc.inlet = preset_inlet_waveform();
    // Narrow tube with the physiologic waveform is overkill; scale it down.
    bc.inlet.offset = 1.0;
    for (auto& t : bc.inlet.terms) t.amplitude *= 0.05;
    bc.outlet = constant_outlet(0.0);
    FlowSolver solver(g, FluidProps{}, bc);
    auto rec = run_cycles(solver, bc.inlet, 2, kCardiacPeriod, 5);
    REQUIRE(rec.peaks.size() == 2);
    REQUIRE(rec.replay.size() == 5);
    double tp0 = peak_time_in_cycle(bc.inlet, 0.0, kCardiacPeriod);
    REQUIRE(std::abs(rec.peaks[0].t - tp0) < 1e-6);
    REQUIRE(rec.peaks[1].t > rec.peaks[0].t);

    // Constant waveform ties break to the cycle start.
    WaveformSpec flat = constant_inlet(1.0);
    REQUIRE(peak_time_in_cycle(flat, 0.5, 1.0) == Catch::Approx(0.5));

    FlowSolver solver2(g, FluidProps{}, bc);
    try {
        run_cycles(solver2, bc.inlet, 0, kCardiacPeriod);
        FAIL("expected Config error");
    } catch (const SimError& e) {
        REQUIRE(e.kind == ErrKind::Config);
    }
}

TEST_CASE("shear rate of simple fields") {
    auto g = make_box_grid(10, 10, 1, 0.1, {}, false);
    FlowBc bc;
    FlowSolver solver(g, FluidProps{}, bc);
    auto& u = solver.velocity();

    SECTION("uniform velocity has zero shear") {
        // Fill every x-face (including wall-normal ones) to make the field
        // strictly uniform for the stencil.
        for (auto& v : u.x) v = 3.0;
        auto gamma = solver.shear_rate();
        for (int j = 3; j < 8; ++j) REQUIRE(gamma[g.idx(5, j, 0)] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("linear shear u_x = G y") {
        const double G = 7.0;
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i <= g.nx; ++i) {
                    double y = g.origin.y + (j + 0.5) * 0.1;
                    u.x[u.xi(i, j, k)] = G * y;
                }
        auto gamma = solver.shear_rate();
        for (int j = 2; j < 9; ++j) REQUIRE(gamma[g.idx(5, j, 0)] == Catch::Approx(G).epsilon(1e-9));
    }
}

TEST_CASE("flow stepping is bit-deterministic across thread counts") {
    auto run = [](int threads) {
        set_threads(threads);
        auto g = make_channel_grid(20, 12, 4, 0.2);
        FlowBc bc;
        bc.inlet = constant_inlet(1.0);
        bc.outlet = constant_outlet(2.0);
        FlowSolver solver(g, FluidProps{}, bc);
        solver.advance(0.02);
        set_threads(1);
        return solver.velocity();
    };
    auto u1 = run(1), u2 = run(2);
    REQUIRE(std::memcmp(u1.x.data(), u2.x.data(), u1.x.size() * 8) == 0);
    REQUIRE(std::memcmp(u1.y.data(), u2.y.data(), u1.y.size() * 8) == 0);
    REQUIRE(std::memcmp(u1.z.data(), u2.z.data(), u1.z.size() * 8) == 0);
}
