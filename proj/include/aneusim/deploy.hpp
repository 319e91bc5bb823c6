#pragma once

#include <deque>
#include <sstream>

#include "aneusim/contact.hpp"

namespace aneusim {

inline double stable_dt(const CoilState& s, const RodMaterial& m, const ObstacleSet& obs) {
    double dt = rod_stable_dt(s, m);
    double k_c = contact_stiffness(obs, s, m);
    double m_min = 1e300;
    for (int i = 0; i < s.n(); ++i) m_min = std::min(m_min, s.vertex_mass(m, i));
    dt = std::min(dt, 0.5 * std::sqrt(m_min / k_c));
    return dt;
}

// One damped symplectic Euler step: velocities from forces, then positions
// from the new velocities. Only released vertices move; a vertex index can be
// designated as kinematically driven (the feed) and keeps its velocity.
inline void step_symplectic(CoilState& s, const RodMaterial& m, const ObstacleSet& obs, double dt,
                            int driven = -1) {
    if (!(dt > 0)) throw SimError(ErrKind::Config, "dt must be positive");
    if (dt > stable_dt(s, m, obs) * (1.0 + 1e-12))
        throw SimError(ErrKind::CflViolated, "rod time step exceeds the stability bound");
    int nv = s.active_vertices();
    int ne = s.active_edges();
    if (nv == 0) return;

    RodForces rf = rod_forces(s, m);
    std::vector<Vec3> fc = contact_forces(s, m, obs, dt);
    double lmin = *std::min_element(s.rest_len.begin(), s.rest_len.end());
    for (int i = 0; i < nv; ++i) {
        if (i == driven) continue;
        double mass = s.vertex_mass(m, i);
        Vec3 f_total = rf.f[i] + fc[i] - s.v[i] * (m.damping * mass);
        s.v[i] += f_total * (dt / mass);
        if (!(norm(s.v[i]) * dt < 4.0 * lmin) || !std::isfinite(norm2(s.v[i])))
            throw SimError(ErrKind::Instability, "rod velocity blow-up at vertex " +
                                                     std::to_string(i));
    }
    for (int j = 0; j < ne; ++j) {
        double inertia = s.edge_inertia(m, j);
        double t_total = rf.torque[j] - s.w[j] * (m.damping * inertia);
        s.w[j] += t_total * (dt / inertia);
        if (!std::isfinite(s.w[j])) throw SimError(ErrKind::Instability, "twist rate blow-up");
    }
    for (int i = 0; i < nv; ++i) s.x[i] += s.v[i] * dt;
    for (int j = 0; j < ne; ++j) s.phi[j] += s.w[j] * dt;
    s.transport_frames();
}

struct CoilSpec {
    double total_length = 100.0;  // mm
    double d1 = 0.05, d2 = 0.25, d3 = 4.0;
    RestShape shape = RestShape::SphericalHelix;
    int n_vertices = 0;          // 0 -> from edge_length
    double edge_length = 0.5;    // mm
    double arc_radius = 0.0;
};

struct InsertionSpec {
    Vec3 tip_point;
    Vec3 tip_direction{1, 0, 0};
    double feed_rate = 25.0;  // mm/s
};

struct DeployOptions {
    double dt = 0.0;             // 0 -> 0.8x stability bound
    double ke_tol = 1e-4;        // nN*mm
    double settle_speed = 0.05;  // mm/s; coil counts as settled below this
    double max_time = 120.0;     // s of rod dynamics
    double stall_windows = 50;   // consecutive compressed checks before giving up
};

struct DeployEvent {
    int index;
    double t;
    double energy;
};

struct DeployResult {
    CoilState state;
    std::vector<DeployEvent> events;
    double end_time = 0.0;
    bool converged = false;
};

inline std::string format_deploy_log(const DeployResult& r) {
    std::ostringstream os;
    char line[128];
    for (const auto& e : r.events) {
        std::snprintf(line, sizeof(line), "release %d t=%.6e E=%.6e\n", e.index, e.t, e.energy);
        os << line;
    }
    std::snprintf(line, sizeof(line), "end t=%.6e converged=%d\n", r.end_time,
                  r.converged ? 1 : 0);
    os << line;
    return os.str();
}

// Feeds the rod vertex by vertex at the catheter tip and relaxes the damped
// dynamics until the kinetic energy drops below tolerance.
inline DeployResult deploy(const CoilSpec& spec, const RodMaterial& m, const ObstacleSet& obs,
                           const InsertionSpec& ins, const DeployOptions& opt = {}) {
    m.validate();
    int n = spec.n_vertices > 0
                ? spec.n_vertices
                : std::max(2, static_cast<int>(std::round(spec.total_length / spec.edge_length)) + 1);
    CoilState s = make_rest_shape(spec.shape, spec.total_length, n, spec.d1, spec.d2, spec.d3,
                                  spec.arc_radius);
    Vec3 dir = normalized(ins.tip_direction);
    for (auto& p : s.x) p = ins.tip_point;
    for (auto& vv : s.v) vv = Vec3{};
    s.released = 0;

    DeployResult out;
    double dt = opt.dt > 0 ? opt.dt : 0.8 * stable_dt(s, m, obs);
    double t = 0.0;

    auto release_next = [&](double now) {
        int r = s.released;
        s.x[r] = ins.tip_point;
        s.v[r] = dir * ins.feed_rate;
        if (r >= 1) {
            int j = r - 1;  // newly active edge
            Vec3 e = s.x[r] - s.x[j];
            Vec3 tg = norm(e) > 1e-12 ? normalized(e) : -dir;
            Vec3 u = j >= 1 ? parallel_transport(s.ref_u[j - 1], cross(s.ref_u[j - 1], s.ref_v[j - 1]), tg)
                            : any_orthogonal(tg);
            u = normalized(u - tg * dot(u, tg));
            s.ref_u[j] = u;
            s.ref_v[j] = cross(tg, u);
            s.phi[j] = j >= 1 ? s.phi[j - 1] : 0.0;
            s.w[j] = 0.0;
        }
        s.released = r + 1;
        s.update_ref_twist();
        out.events.push_back({r, now, rod_energy(s, m)});
    };

    release_next(0.0);
    int stall_strikes = 0;
    std::int64_t step_count = 0;
    const std::int64_t check_every = std::max<std::int64_t>(
        16, static_cast<std::int64_t>((spec.total_length / (n - 1)) / ins.feed_rate / dt / 4));
    while (t < opt.max_time) {
        // The newest vertex is fed kinematically until its edge reaches rest
        // length, then it hands over to the dynamics.
        int driven = s.released < n ? s.released - 1 : -1;
        if (driven >= 0 && norm(s.x[driven] - ins.tip_point) >= s.rest_len[driven]) {
            release_next(t);
            driven = s.released < n ? s.released - 1 : -1;
        }
        if (driven >= 0) s.v[driven] = dir * ins.feed_rate;
        step_symplectic(s, m, obs, dt, driven);
        t += dt;
        ++step_count;
        if (s.released == n && step_count % 32 == 0) {
            double vmax = 0.0;
            for (int i = 0; i < n; ++i) vmax = std::max(vmax, norm(s.v[i]));
            if (s.kinetic_energy(m) < opt.ke_tol || vmax < opt.settle_speed) {
                out.converged = true;
                break;
            }
        }
        // Feed blockage shows up as sustained compression of the edges just
        // behind the feed point while the rest of the rod has gone quiet.
        if (driven >= 1 && step_count % check_every == 0) {
            double ratio = 1.0;
            int j0 = std::max(0, driven - 3);
            for (int j = j0; j < driven; ++j)
                ratio = std::min(ratio, norm(s.edge(j)) / s.rest_len[j]);
            if (ratio < 0.5)
                ++stall_strikes;
            else
                stall_strikes = 0;
            if (stall_strikes >= static_cast<int>(opt.stall_windows))
                throw SimError(ErrKind::StallDetected,
                               "feed blocked at vertex " + std::to_string(s.released));
        }
    }
    out.end_time = t;
    out.state = std::move(s);
    return out;
}

}  // namespace aneusim
