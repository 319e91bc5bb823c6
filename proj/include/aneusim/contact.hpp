#pragma once

#include <memory>
#include <unordered_map>

#include "aneusim/rod.hpp"
#include "aneusim/surface_mesh.hpp"
#include "aneusim/voxel_grid.hpp"

namespace aneusim {

// ---------------------------------------------------------------------------
// Signed-distance grid derived from a watertight mesh (positive inside).
// Band cells get exact point-triangle distances, the rest is filled by
// chamfer sweeps; plenty for penalty contact.
// ---------------------------------------------------------------------------

namespace detail {

inline double point_triangle_dist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return norm(p - a);
    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return norm(p - b);
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return norm(p - (a + ab * (d1 / (d1 - d3))));
    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return norm(p - c);
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return norm(p - (a + ac * (d2 / (d2 - d6))));
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return norm(p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))));
    double denom = 1.0 / (va + vb + vc);
    return norm(p - (a + ab * (vb * denom) + ac * (vc * denom)));
}

}  // namespace detail

struct SdfGrid {
    Vec3 origin;
    double h = 0.0;
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> d;  // positive inside

    int idx(int i, int j, int k) const { return (k * ny + j) * nx + i; }
    double sample(const Vec3& p) const {
        double fx = (p.x - origin.x) / h - 0.5;
        double fy = (p.y - origin.y) / h - 0.5;
        double fz = (p.z - origin.z) / h - 0.5;
        int i = static_cast<int>(std::floor(fx)), j = static_cast<int>(std::floor(fy)),
            k = static_cast<int>(std::floor(fz));
        double tx = fx - i, ty = fy - j, tz = fz - k;
        auto cl = [&](int a, int n) { return std::max(0, std::min(n - 1, a)); };
        double acc = 0.0;
        for (int dk = 0; dk < 2; ++dk)
            for (int dj = 0; dj < 2; ++dj)
                for (int di = 0; di < 2; ++di) {
                    double wgt = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty) * (dk ? tz : 1 - tz);
                    acc += wgt * d[idx(cl(i + di, nx), cl(j + dj, ny), cl(k + dk, nz))];
                }
        return acc;
    }
};

inline SdfGrid make_sdf_grid(const SurfaceMesh& mesh, double h) {
    SdfGrid s;
    AlignedBox box = mesh.bounds();
    s.h = h;
    s.origin = box.lo - Vec3{3 * h, 3 * h, 3 * h};
    Vec3 ext = box.hi - s.origin + Vec3{3 * h, 3 * h, 3 * h};
    s.nx = static_cast<int>(std::ceil(ext.x / h));
    s.ny = static_cast<int>(std::ceil(ext.y / h));
    s.nz = static_cast<int>(std::ceil(ext.z / h));

    VoxelGrid g;  // geometry carrier for the parity votes
    g.origin = s.origin;
    g.h = h;
    g.nx = s.nx;
    g.ny = s.ny;
    g.nz = s.nz;
    std::vector<signed char> vote(std::int64_t(s.nx) * s.ny * s.nz, 0);
    for (int axis = 0; axis < 3; ++axis) detail::parity_votes(mesh, g, axis, vote);

    const double big = 1e30;
    s.d.assign(vote.size(), big);
    // Exact distances in a band around each triangle.
    for (const auto& f : mesh.faces) {
        const Vec3 &a = mesh.vertices[f[0]], &b = mesh.vertices[f[1]], &c = mesh.vertices[f[2]];
        AlignedBox tb;
        tb.expand(a);
        tb.expand(b);
        tb.expand(c);
        int ilo = std::max(0, static_cast<int>(std::floor((tb.lo.x - s.origin.x) / h - 1.5)));
        int jlo = std::max(0, static_cast<int>(std::floor((tb.lo.y - s.origin.y) / h - 1.5)));
        int klo = std::max(0, static_cast<int>(std::floor((tb.lo.z - s.origin.z) / h - 1.5)));
        int ihi = std::min(s.nx - 1, static_cast<int>(std::ceil((tb.hi.x - s.origin.x) / h + 0.5)));
        int jhi = std::min(s.ny - 1, static_cast<int>(std::ceil((tb.hi.y - s.origin.y) / h + 0.5)));
        int khi = std::min(s.nz - 1, static_cast<int>(std::ceil((tb.hi.z - s.origin.z) / h + 0.5)));
        for (int k = klo; k <= khi; ++k)
            for (int j = jlo; j <= jhi; ++j)
                for (int i = ilo; i <= ihi; ++i) {
                    Vec3 p = s.origin + Vec3{(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
                    double dd = detail::point_triangle_dist(p, a, b, c);
                    double& cur = s.d[s.idx(i, j, k)];
                    if (dd < cur) cur = dd;
                }
    }
    // Chamfer fill of the far field.
    auto sweep = [&](bool forward) {
        int i0 = forward ? 0 : s.nx - 1, i1 = forward ? s.nx : -1, di = forward ? 1 : -1;
        for (int k = i0 == 0 ? 0 : s.nz - 1; forward ? k < s.nz : k >= 0; k += di)
            for (int j = forward ? 0 : s.ny - 1; forward ? j < s.ny : j >= 0; j += di)
                for (int i = i0; i != i1; i += di) {
                    double& cur = s.d[s.idx(i, j, k)];
                    for (const auto& o : VoxelGrid::neighbor_offsets()) {
                        int ii = i + o[0], jj = j + o[1], kk = k + o[2];
                        if (ii < 0 || ii >= s.nx || jj < 0 || jj >= s.ny || kk < 0 || kk >= s.nz)
                            continue;
                        cur = std::min(cur, s.d[s.idx(ii, jj, kk)] + h);
                    }
                }
    };
    sweep(true);
    sweep(false);
    sweep(true);
    for (std::size_t c = 0; c < s.d.size(); ++c)
        if (vote[c] <= 0) s.d[c] = -s.d[c];
    return s;
}

// ---------------------------------------------------------------------------
// Obstacles. Wall functions return a signed distance that is positive where
// the rod centerline is allowed; contact sets in when the value drops below
// the query radius.
// ---------------------------------------------------------------------------

using WallFn = std::function<double(const Vec3&)>;

inline WallFn wall_from_sdf(SdfGrid grid) {
    auto shared = std::make_shared<SdfGrid>(std::move(grid));
    return [shared](const Vec3& p) { return shared->sample(p); };
}

inline WallFn wall_from_implicit(const Implicit& geom) {
    auto sd = geom.sd;
    return [sd](const Vec3& p) { return sd(p); };
}

// Generalized cylinder the rod must stay out of (stent scaffold surrogate):
// positive outside the capsule chain.
inline WallFn containment_cylinder(std::vector<Vec3> centerline, std::vector<double> radii) {
    if (centerline.size() < 2 || radii.size() != centerline.size())
        throw SimError(ErrKind::Config, "containment cylinder needs matched centerline/radii");
    return [centerline = std::move(centerline), radii = std::move(radii)](const Vec3& p) {
        double best = 1e300;
        for (std::size_t j = 0; j + 1 < centerline.size(); ++j) {
            Vec3 a = centerline[j], b = centerline[j + 1];
            Vec3 ab = b - a;
            double t = norm2(ab) > 0 ? std::clamp(dot(p - a, ab) / norm2(ab), 0.0, 1.0) : 0.0;
            double r = radii[j] + t * (radii[j + 1] - radii[j]);
            best = std::min(best, norm(p - (a + ab * t)) - r);
        }
        return best;
    };
}

struct ObstacleSet {
    std::vector<WallFn> walls;
    std::vector<CoilState> frozen_coils;
    double stiffness = 0.0;      // nN/mm; 0 picks 10x the elastic stiffness scale
    double damping_ratio = 0.7;  // normal-velocity damping relative to critical
    double stick_speed = 1e-3;   // mm/s threshold between stick and slip

    double wall_distance(const Vec3& p) const {
        double d = 1e300;
        for (const auto& w : walls) d = std::min(d, w(p));
        return d;
    }
};

inline double contact_stiffness(const ObstacleSet& obs, const CoilState& s, const RodMaterial& m) {
    if (obs.stiffness > 0) return obs.stiffness;
    double lmin = *std::min_element(s.rest_len.begin(), s.rest_len.end());
    double k = std::max({m.alpha_stretch / lmin, m.bending_eig_max() / (lmin * lmin * lmin),
                         m.beta_twist / (lmin * lmin * lmin)});
    return 10.0 * k;
}

namespace detail {

inline void closest_segment_segment(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2,
                                    double& sOut, double& tOut) {
    Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
    double a = norm2(d1), e = norm2(d2), f = dot(d2, r);
    double sc = 0, tc = 0;
    if (a <= 1e-30 && e <= 1e-30) {
        sOut = tOut = 0;
        return;
    }
    if (a <= 1e-30) {
        tc = std::clamp(f / e, 0.0, 1.0);
    } else {
        double c = dot(d1, r);
        if (e <= 1e-30) {
            sc = std::clamp(-c / a, 0.0, 1.0);
        } else {
            double b = dot(d1, d2), denom = a * e - b * b;
            sc = denom > 1e-30 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            tc = (b * sc + f) / e;
            if (tc < 0) {
                tc = 0;
                sc = std::clamp(-c / a, 0.0, 1.0);
            } else if (tc > 1) {
                tc = 1;
                sc = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    sOut = sc;
    tOut = tc;
}

struct SegmentHash {
    double cell;
    std::unordered_map<std::uint64_t, std::vector<int>> map;
    static std::uint64_t key(int i, int j, int k) {
        return (std::uint64_t(std::uint32_t(i)) << 42) ^ (std::uint64_t(std::uint32_t(j)) << 21) ^
               std::uint64_t(std::uint32_t(k));
    }
    void insert(int id, const Vec3& a, const Vec3& b, double pad) {
        AlignedBox box;
        box.expand(a);
        box.expand(b);
        int ilo = static_cast<int>(std::floor((box.lo.x - pad) / cell));
        int jlo = static_cast<int>(std::floor((box.lo.y - pad) / cell));
        int klo = static_cast<int>(std::floor((box.lo.z - pad) / cell));
        int ihi = static_cast<int>(std::floor((box.hi.x + pad) / cell));
        int jhi = static_cast<int>(std::floor((box.hi.y + pad) / cell));
        int khi = static_cast<int>(std::floor((box.hi.z + pad) / cell));
        for (int k = klo; k <= khi; ++k)
            for (int j = jlo; j <= jhi; ++j)
                for (int i = ilo; i <= ihi; ++i) map[key(i, j, k)].push_back(id);
    }
};

}  // namespace detail

// Coulomb friction with a linear stick regularization: below stick_speed the
// tangential force ramps from 0 to mu*|Fn|, above it slips at exactly
// mu*|Fn|. force_cap, when positive, bounds the magnitude so one explicit
// step cannot reverse the relative sliding velocity.
inline Vec3 coulomb_tangential(const Vec3& v_rel, const Vec3& n_hat, double fn_mag, double mu,
                               double stick_speed, double force_cap = 0.0) {
    if (mu <= 0.0 || fn_mag <= 0.0) return {};
    Vec3 vt = v_rel - n_hat * dot(v_rel, n_hat);
    double speed = norm(vt);
    if (speed < 1e-300) return {};
    double mag = speed >= stick_speed ? mu * fn_mag : mu * fn_mag * (speed / stick_speed);
    if (force_cap > 0.0) mag = std::min(mag, force_cap);
    return vt * (-mag / speed);
}

// Penalty + Coulomb stick-slip forces from walls, previously placed coils and
// rod self-contact. Rod segments keep a clearance of d2 from each other and
// d2/2 from walls. Pass the integrator step as dt to activate the friction
// force cap; dt = 0 evaluates the raw friction law.
inline std::vector<Vec3> contact_forces(const CoilState& s, const RodMaterial& m,
                                        const ObstacleSet& obs, double dt = 0.0) {
    std::vector<Vec3> f(s.n(), Vec3{});
    int nv = s.active_vertices();
    int ne = s.active_edges();
    if (nv == 0) return f;
    double k_c = contact_stiffness(obs, s, m);
    double wall_r = s.d2 / 2.0;
    const double grad_h = 1e-4;
    double mass_typ = m.mass_per_len *
                      std::accumulate(s.rest_len.begin(), s.rest_len.end(), 0.0) / s.n_edges();
    double c_n = 2.0 * obs.damping_ratio * std::sqrt(k_c * mass_typ);

    for (int i = 0; i < nv; ++i) {
        double cap = dt > 0.0 ? 0.5 * s.vertex_mass(m, i) * norm(s.v[i]) / dt : 0.0;
        for (const auto& wallfn : obs.walls) {
            double d = wallfn(s.x[i]);
            if (d >= wall_r) continue;
            Vec3 g{(wallfn(s.x[i] + Vec3{grad_h, 0, 0}) - wallfn(s.x[i] - Vec3{grad_h, 0, 0})),
                   (wallfn(s.x[i] + Vec3{0, grad_h, 0}) - wallfn(s.x[i] - Vec3{0, grad_h, 0})),
                   (wallfn(s.x[i] + Vec3{0, 0, grad_h}) - wallfn(s.x[i] - Vec3{0, 0, grad_h}))};
            double gn = norm(g);
            if (gn < 1e-12) continue;
            Vec3 n_hat = g / gn;
            double fn = std::max(0.0, k_c * (wall_r - d) - c_n * dot(s.v[i], n_hat));
            f[i] += n_hat * fn + coulomb_tangential(s.v[i], n_hat, fn, m.mu_friction,
                                                    obs.stick_speed, cap);
        }
    }

    // Candidate segment pairs via a uniform spatial hash sized by d2.
    struct Seg {
        Vec3 a, b, va, vb;
        int owner;  // -1 self, otherwise frozen coil index
        int index;
    };
    std::vector<Seg> segs;
    for (int j = 0; j < ne; ++j)
        segs.push_back({s.x[j], s.x[j + 1], s.v[j], s.v[j + 1], -1, j});
    int n_self = static_cast<int>(segs.size());
    for (std::size_t c = 0; c < obs.frozen_coils.size(); ++c) {
        const CoilState& o = obs.frozen_coils[c];
        for (int j = 0; j < o.active_edges(); ++j)
            segs.push_back({o.x[j], o.x[j + 1], Vec3{}, Vec3{}, static_cast<int>(c), j});
    }
    double max_len = s.d2;
    for (const auto& sg : segs) max_len = std::max(max_len, norm(sg.b - sg.a));
    detail::SegmentHash hash{std::max(s.d2, max_len), {}};
    for (int id = 0; id < static_cast<int>(segs.size()); ++id)
        hash.insert(id, segs[id].a, segs[id].b, s.d2);

    std::vector<int> seen(segs.size(), -1);
    for (int j = 0; j < n_self; ++j) {
        const Seg& sj = segs[j];
        AlignedBox box;
        box.expand(sj.a);
        box.expand(sj.b);
        std::vector<int> cands;
        int ilo = static_cast<int>(std::floor((box.lo.x - s.d2) / hash.cell));
        int jlo = static_cast<int>(std::floor((box.lo.y - s.d2) / hash.cell));
        int klo = static_cast<int>(std::floor((box.lo.z - s.d2) / hash.cell));
        int ihi = static_cast<int>(std::floor((box.hi.x + s.d2) / hash.cell));
        int jhi = static_cast<int>(std::floor((box.hi.y + s.d2) / hash.cell));
        int khi = static_cast<int>(std::floor((box.hi.z + s.d2) / hash.cell));
        for (int kk = klo; kk <= khi; ++kk)
            for (int jj = jlo; jj <= jhi; ++jj)
                for (int ii = ilo; ii <= ihi; ++ii) {
                    auto it = hash.map.find(detail::SegmentHash::key(ii, jj, kk));
                    if (it == hash.map.end()) continue;
                    for (int k : it->second) {
                        if (k <= j && segs[k].owner < 0) continue;       // handle each pair once
                        if (segs[k].owner < 0 && k - j < 2) continue;    // skip adjacent segments
                        if (seen[k] == j) continue;
                        seen[k] = j;
                        cands.push_back(k);
                    }
                }
        std::sort(cands.begin(), cands.end());
        for (int k : cands) {
            const Seg& sk = segs[k];
            double tj, tk;
            detail::closest_segment_segment(sj.a, sj.b, sk.a, sk.b, tj, tk);
            Vec3 pj = sj.a + (sj.b - sj.a) * tj;
            Vec3 pk = sk.a + (sk.b - sk.a) * tk;
            Vec3 dvec = pj - pk;
            double dist = norm(dvec);
            if (dist >= s.d2 || dist < 1e-12) continue;
            Vec3 n_hat = dvec / dist;
            Vec3 vj = sj.va + (sj.vb - sj.va) * tj;
            Vec3 vk = sk.va + (sk.vb - sk.va) * tk;
            double fn = std::max(0.0, k_c * (s.d2 - dist) - c_n * dot(vj - vk, n_hat));
            double cap = dt > 0.0 ? 0.25 * mass_typ * norm(vj - vk) / dt : 0.0;
            Vec3 force = n_hat * fn +
                         coulomb_tangential(vj - vk, n_hat, fn, m.mu_friction, obs.stick_speed,
                                            cap);
            f[sj.index] += force * (1.0 - tj);
            f[sj.index + 1] += force * tj;
            if (sk.owner < 0) {
                f[sk.index] -= force * (1.0 - tk);
                f[sk.index + 1] -= force * tk;
            }
        }
    }
    return f;
}

}  // namespace aneusim
