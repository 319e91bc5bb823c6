#pragma once

#include <numeric>

#include "aneusim/core.hpp"

namespace aneusim {

// Parameters of one coil micro-wire. Unit system: mm, s, nN, with the
// consistent mass unit mg (1 nN = 1 mg*mm/s^2).
struct RodMaterial {
    double alpha_stretch = 2.0e3;                 // inextensibility penalty (nN)
    std::array<double, 3> B{8.0, 0.0, 8.0};       // bending matrix b11, b12, b22 (nN*mm^2)
    double beta_twist = 6.0;                      // torsion stiffness (nN*mm^2)
    double damping = 40.0;                        // mass-proportional damping (1/s)
    double mass_per_len = 0.05;                   // mg/mm
    double mu_friction = 0.2;

    void validate() const {
        if (!(alpha_stretch > 0) || !(beta_twist > 0) || !(damping > 0) || !(mass_per_len > 0))
            throw SimError(ErrKind::Config, "rod material parameters must be positive");
        if (!(B[0] > 0) || !(B[0] * B[2] - B[1] * B[1] > 0))
            throw SimError(ErrKind::Config, "bending matrix must be symmetric positive definite");
        if (mu_friction < 0) throw SimError(ErrKind::Config, "friction coefficient must be >= 0");
    }
    double bending_eig_max() const {
        double tr = B[0] + B[2], det = B[0] * B[2] - B[1] * B[1];
        return 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det)));
    }
};

// Discrete rod state. Edges j connect x[j] -> x[j+1]; phi[j] twists the
// stored reference frame (ref_u[j], ref_v[j]) into the material frame.
// Frames are carried by the integrator via parallel transport and treated as
// constants inside energy/force evaluations.
struct CoilState {
    std::vector<Vec3> x;
    std::vector<double> phi;        // per edge
    std::vector<Vec3> ref_u, ref_v; // per edge, orthonormal with the tangent
    std::vector<double> ref_twist;  // per interior vertex pair (size n-2), frame holonomy

    std::vector<double> rest_len;                  // per edge
    std::vector<std::array<double, 2>> rest_kappa; // per interior vertex (size n-2)
    std::vector<double> rest_twist;                // per interior vertex (size n-2)

    std::vector<Vec3> v;       // vertex velocities
    std::vector<double> w;     // twist rates per edge
    double d1 = 0.05, d2 = 0.25, d3 = 4.0;  // wire core / wire / envelope diameters (mm)
    int released = 0;          // vertices already fed out of the catheter

    int n() const { return static_cast<int>(x.size()); }
    int n_edges() const { return n() - 1; }
    Vec3 edge(int j) const { return x[j + 1] - x[j]; }

    // Prefix of the rod that participates in dynamics.
    int active_vertices() const { return released; }
    int active_edges() const { return std::max(0, released - 1); }

    void validate() const {
        if (n() < 2) throw SimError(ErrKind::Config, "rod needs at least 2 vertices");
        if (!(d1 > 0 && d1 < d2 && d2 < d3))
            throw SimError(ErrKind::Config, "coil radii must satisfy 0 < D1 < D2 < D3");
        if (released < 0 || released > n())
            throw SimError(ErrKind::Config, "released vertex count out of range");
        for (double l : rest_len)
            if (!(l > 0)) throw SimError(ErrKind::Config, "rest edge lengths must be positive");
    }

    Vec3 material_d1(int j) const {
        return ref_u[j] * std::cos(phi[j]) + ref_v[j] * std::sin(phi[j]);
    }
    Vec3 material_d2(int j) const {
        return ref_u[j] * -std::sin(phi[j]) + ref_v[j] * std::cos(phi[j]);
    }

    double vertex_mass(const RodMaterial& m, int i) const {
        double l = 0.0;
        if (i > 0) l += rest_len[i - 1];
        if (i < n_edges()) l += rest_len[i];
        return 0.5 * l * m.mass_per_len;
    }
    double edge_inertia(const RodMaterial& m, int j) const {
        // Length-scale twist inertia keeps the twist wave speed comparable to
        // the translational one, so a single step bound covers both.
        return m.mass_per_len * rest_len[j] * sq(rest_len[j]) / 12.0;
    }

    double kinetic_energy(const RodMaterial& m) const {
        double e = 0.0;
        for (int i = 0; i < released; ++i) e += 0.5 * vertex_mass(m, i) * norm2(v[i]);
        for (int j = 0; j < active_edges(); ++j) e += 0.5 * edge_inertia(m, j) * sq(w[j]);
        return e;
    }

    // Re-derive frames from current geometry by parallel transport along the
    // rod and refresh the holonomy角 ref_twist. Used after integration steps.
    void transport_frames() {
        int ne = active_edges();
        for (int j = 0; j < ne; ++j) {
            Vec3 e = edge(j);
            double len = norm(e);
            if (len <= 0.0) throw SimError(ErrKind::DegenerateEdge, "zero-length edge");
            Vec3 t_new = e / len;
            Vec3 t_old = cross(ref_u[j], ref_v[j]);  // frames stay orthonormal
            Vec3 u = parallel_transport(ref_u[j], normalized(t_old), t_new);
            u = normalized(u - t_new * dot(u, t_new));
            ref_u[j] = u;
            ref_v[j] = cross(t_new, u);
        }
        update_ref_twist();
    }

    void update_ref_twist() {
        int ne = active_edges();
        if (static_cast<int>(ref_twist.size()) != std::max(0, n() - 2))
            ref_twist.assign(std::max(0, n() - 2), 0.0);
        for (int i = 1; i + 1 <= ne; ++i) {
            Vec3 t0 = normalized(edge(i - 1)), t1 = normalized(edge(i));
            Vec3 ut = parallel_transport(ref_u[i - 1], t0, t1);
            double c = dot(ut, ref_u[i]);
            double s = dot(cross(ut, ref_u[i]), t1);
            ref_twist[i - 1] = std::atan2(s, c);
        }
    }

    void rigid_transform(const Vec3& axis, double angle, const Vec3& translation) {
        Vec3 a = normalized(axis);
        for (auto& p : x) p = rotate_about(p, a, angle) + translation;
        for (auto& u : ref_u) u = rotate_about(u, a, angle);
        for (auto& vv : ref_v) vv = rotate_about(vv, a, angle);
        for (auto& vel : v) vel = rotate_about(vel, a, angle);
    }
};

// Total twist across interior vertex i (difference of material twist angles
// plus the reference-frame holonomy).
inline double rod_twist(const CoilState& s, int i) {
    return s.phi[i] - s.phi[i - 1] + s.ref_twist[i - 1];
}

inline std::array<double, 2> rod_kappa(const CoilState& s, int i, Vec3* kb_out = nullptr) {
    Vec3 e0 = s.edge(i - 1), e1 = s.edge(i);
    double denom = s.rest_len[i - 1] * s.rest_len[i] + dot(e0, e1);
    if (denom <= 0.0)
        throw SimError(ErrKind::DegenerateEdge, "edges fold back onto each other");
    Vec3 kb = cross(e0, e1) * (2.0 / denom);
    if (kb_out) *kb_out = kb;
    Vec3 m1 = (s.material_d1(i - 1) + s.material_d1(i)) * 0.5;
    Vec3 m2 = (s.material_d2(i - 1) + s.material_d2(i)) * 0.5;
    return {dot(kb, m2), -dot(kb, m1)};
}

// Strain energy: stretch penalty + bending + torsion.
inline double rod_energy(const CoilState& s, const RodMaterial& m) {
    int ne = s.active_edges();
    double e_total = 0.0;
    for (int j = 0; j < ne; ++j) {
        double len = norm(s.edge(j));
        if (len <= 0.0) throw SimError(ErrKind::DegenerateEdge, "zero-length edge");
        e_total += 0.5 * m.alpha_stretch * sq(len / s.rest_len[j] - 1.0) * s.rest_len[j];
    }
    for (int i = 1; i + 1 <= ne; ++i) {
        auto k = rod_kappa(s, i);
        double dk0 = k[0] - s.rest_kappa[i - 1][0];
        double dk1 = k[1] - s.rest_kappa[i - 1][1];
        double den = s.rest_len[i - 1] + s.rest_len[i];
        e_total += (m.B[0] * dk0 * dk0 + 2.0 * m.B[1] * dk0 * dk1 + m.B[2] * dk1 * dk1) / den;
        double dt_tw = rod_twist(s, i) - s.rest_twist[i - 1];
        e_total += m.beta_twist * sq(dt_tw) / den;
    }
    return e_total;
}

struct RodForces {
    std::vector<Vec3> f;        // -dE/dx per vertex
    std::vector<double> torque; // -dE/dphi per edge
};

inline RodForces rod_forces(const CoilState& s, const RodMaterial& m) {
    RodForces out;
    out.f.assign(s.n(), Vec3{});
    out.torque.assign(s.n_edges(), 0.0);
    int ne = s.active_edges();

    for (int j = 0; j < ne; ++j) {
        Vec3 e = s.edge(j);
        double len = norm(e);
        if (len <= 0.0) throw SimError(ErrKind::DegenerateEdge, "zero-length edge");
        Vec3 g = e * (m.alpha_stretch * (len / s.rest_len[j] - 1.0) / len);
        out.f[j] += g;
        out.f[j + 1] -= g;
    }

    for (int i = 1; i + 1 <= ne; ++i) {
        Vec3 e0 = s.edge(i - 1), e1 = s.edge(i);
        double denom = s.rest_len[i - 1] * s.rest_len[i] + dot(e0, e1);
        Vec3 kb = cross(e0, e1) * (2.0 / denom);
        Vec3 d1a = s.material_d1(i - 1), d1b = s.material_d1(i);
        Vec3 d2a = s.material_d2(i - 1), d2b = s.material_d2(i);
        Vec3 m1 = (d1a + d1b) * 0.5, m2 = (d2a + d2b) * 0.5;
        double k0 = dot(kb, m2), k1 = -dot(kb, m1);
        double den = s.rest_len[i - 1] + s.rest_len[i];
        double dk0 = k0 - s.rest_kappa[i - 1][0];
        double dk1 = k1 - s.rest_kappa[i - 1][1];
        // dE/dkappa
        double g0 = 2.0 * (m.B[0] * dk0 + m.B[1] * dk1) / den;
        double g1 = 2.0 * (m.B[1] * dk0 + m.B[2] * dk1) / den;

        // dkappa/de with the frames held fixed:
        //   d(kb)/de0 . delta = (-2 e1 x delta - kb (e1 . delta)) / denom
        //   d(kb)/de1 . delta = ( 2 e0 x delta - kb (e0 . delta)) / denom
        Vec3 dk0_de0 = (cross(m2, e1) * -2.0 - e1 * k0) / denom;
        Vec3 dk0_de1 = (cross(m2, e0) * 2.0 - e0 * k0) / denom;
        Vec3 dk1_de0 = (cross(m1, e1) * 2.0 - e1 * k1) / denom;
        Vec3 dk1_de1 = (cross(m1, e0) * -2.0 - e0 * k1) / denom;

        Vec3 dE_de0 = dk0_de0 * g0 + dk1_de0 * g1;
        Vec3 dE_de1 = dk0_de1 * g0 + dk1_de1 * g1;
        out.f[i - 1] += dE_de0;
        out.f[i] -= dE_de0;
        out.f[i] += dE_de1;
        out.f[i + 1] -= dE_de1;

        // Frame rotation by phi couples bending into the edge torques:
        // d(d1)/dphi = d2, d(d2)/dphi = -d1.
        out.torque[i - 1] -= g0 * (-0.5 * dot(kb, d1a)) + g1 * (-0.5 * dot(kb, d2a));
        out.torque[i] -= g0 * (-0.5 * dot(kb, d1b)) + g1 * (-0.5 * dot(kb, d2b));

        double gt = 2.0 * m.beta_twist * (rod_twist(s, i) - s.rest_twist[i - 1]) / den;
        out.torque[i - 1] += gt;   // -dE/dphi_{i-1} = +gt
        out.torque[i] -= gt;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rest-shape construction
// ---------------------------------------------------------------------------

// Builds a rod whose rest quantities reproduce `points` exactly (zero energy
// in that pose). Frames are zero-twist transported along the curve.
inline CoilState make_rod_from_curve(const std::vector<Vec3>& points, double d1, double d2,
                                     double d3) {
    if (points.size() < 2) throw SimError(ErrKind::Config, "rest curve needs >= 2 points");
    CoilState s;
    s.x = points;
    s.d1 = d1;
    s.d2 = d2;
    s.d3 = d3;
    int n = s.n(), ne = s.n_edges();
    s.phi.assign(ne, 0.0);
    s.v.assign(n, Vec3{});
    s.w.assign(ne, 0.0);
    s.rest_len.resize(ne);
    s.ref_u.resize(ne);
    s.ref_v.resize(ne);
    for (int j = 0; j < ne; ++j) {
        Vec3 e = s.edge(j);
        s.rest_len[j] = norm(e);
        if (s.rest_len[j] <= 0.0)
            throw SimError(ErrKind::DegenerateEdge, "rest curve has coincident points");
        Vec3 t = e / s.rest_len[j];
        if (j == 0) {
            s.ref_u[0] = any_orthogonal(t);
        } else {
            Vec3 t_prev = normalized(s.edge(j - 1));
            Vec3 u = parallel_transport(s.ref_u[j - 1], t_prev, t);
            s.ref_u[j] = normalized(u - t * dot(u, t));
        }
        s.ref_v[j] = cross(t, s.ref_u[j]);
    }
    s.released = n;
    s.update_ref_twist();
    s.rest_kappa.resize(std::max(0, n - 2));
    s.rest_twist.assign(std::max(0, n - 2), 0.0);
    for (int i = 1; i <= n - 2; ++i) {
        s.rest_kappa[i - 1] = rod_kappa(s, i);
        s.rest_twist[i - 1] = rod_twist(s, i);
    }
    s.validate();
    return s;
}

enum class RestShape { Straight, Arc, SphericalHelix };

namespace detail {

inline std::vector<Vec3> resample_arclength(const std::vector<Vec3>& fine, int n_points) {
    std::vector<double> cum(fine.size(), 0.0);
    for (std::size_t i = 1; i < fine.size(); ++i) cum[i] = cum[i - 1] + norm(fine[i] - fine[i - 1]);
    double total = cum.back();
    std::vector<Vec3> out;
    out.reserve(n_points);
    std::size_t seg = 0;
    for (int k = 0; k < n_points; ++k) {
        double target = total * k / (n_points - 1);
        while (seg + 1 < cum.size() && cum[seg + 1] < target) ++seg;
        double t = (cum[seg + 1] > cum[seg]) ? (target - cum[seg]) / (cum[seg + 1] - cum[seg]) : 0.0;
        out.push_back(fine[seg] + (fine[seg + 1] - fine[seg]) * t);
    }
    return out;
}

inline std::vector<Vec3> spherical_spiral(double radius, double turns, int n_fine) {
    std::vector<Vec3> pts;
    pts.reserve(n_fine);
    for (int i = 0; i < n_fine; ++i) {
        double t = static_cast<double>(i) / (n_fine - 1);
        double theta = M_PI * (0.08 + 0.84 * t);  // keep away from the poles
        double psi = turns * 2.0 * M_PI * t;
        pts.push_back({radius * std::sin(theta) * std::cos(psi),
                       radius * std::sin(theta) * std::sin(psi), radius * std::cos(theta)});
    }
    return pts;
}

inline double polyline_length(const std::vector<Vec3>& p) {
    double l = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) l += norm(p[i] - p[i - 1]);
    return l;
}

}  // namespace detail

inline CoilState make_rest_shape(RestShape kind, double total_length, int n_vertices, double d1,
                                 double d2, double d3, double arc_radius = 0.0) {
    if (n_vertices < 2) throw SimError(ErrKind::Config, "need at least 2 vertices");
    std::vector<Vec3> pts;
    switch (kind) {
        case RestShape::Straight: {
            for (int i = 0; i < n_vertices; ++i)
                pts.push_back({total_length * i / (n_vertices - 1), 0, 0});
            break;
        }
        case RestShape::Arc: {
            double R = arc_radius > 0 ? arc_radius : total_length / M_PI;
            double angle = total_length / R;
            for (int i = 0; i < n_vertices; ++i) {
                double a = angle * i / (n_vertices - 1);
                pts.push_back({R * std::sin(a), R * (1.0 - std::cos(a)), 0});
            }
            break;
        }
        case RestShape::SphericalHelix: {
            double R = d3 / 2.0;
            // Pick the number of turns so the spiral length matches.
            double turns = std::max(1.0, total_length / (2.0 * M_PI * R));
            for (int it = 0; it < 30; ++it) {
                double len = detail::polyline_length(detail::spherical_spiral(R, turns, 4096));
                double err = len - total_length;
                if (std::abs(err) < 1e-9 * total_length) break;
                turns *= total_length / len;
            }
            pts = detail::resample_arclength(detail::spherical_spiral(R, turns, 8192), n_vertices);
            break;
        }
    }
    if (kind == RestShape::SphericalHelix)
        return make_rod_from_curve(pts, d1, d2, d3);
    pts = detail::resample_arclength(pts, n_vertices);
    return make_rod_from_curve(pts, d1, d2, d3);
}

// Step bound of the explicit integrator (spring period based).
inline double rod_stable_dt(const CoilState& s, const RodMaterial& m) {
    double lmin = *std::min_element(s.rest_len.begin(), s.rest_len.end());
    double k = std::max({m.alpha_stretch, m.bending_eig_max() / sq(lmin), m.beta_twist / sq(lmin)});
    return 0.5 * std::sqrt(m.mass_per_len * sq(lmin) / k);
}

}  // namespace aneusim
