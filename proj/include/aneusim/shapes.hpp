#pragma once

#include <functional>
#include <map>

#include "aneusim/surface_mesh.hpp"

namespace aneusim {

// ---------------------------------------------------------------------------
// Procedural watertight meshes
// ---------------------------------------------------------------------------

inline SurfaceMesh box_mesh(const Vec3& lo, const Vec3& hi) {
    SurfaceMesh m;
    m.vertices = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
                  {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
    m.faces = {{0, 2, 1}, {0, 3, 2},   // z = lo
               {4, 5, 6}, {4, 6, 7},   // z = hi
               {0, 1, 5}, {0, 5, 4},   // y = lo
               {3, 7, 6}, {3, 6, 2},   // y = hi
               {0, 4, 7}, {0, 7, 3},   // x = lo
               {1, 2, 6}, {1, 6, 5}};  // x = hi
    return m;
}

inline SurfaceMesh unit_cube_mesh() { return box_mesh({0, 0, 0}, {1, 1, 1}); }

inline SurfaceMesh icosphere_mesh(const Vec3& center, double radius, int subdiv) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                           {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                           {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p = normalized(p);
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int s = 0; s < subdiv; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            int idx = static_cast<int>(v.size());
            v.push_back(normalized(v[a] + v[b]));
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> nf;
        nf.reserve(f.size() * 4);
        for (const auto& tri : f) {
            int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
            nf.push_back({tri[0], a, c});
            nf.push_back({tri[1], b, a});
            nf.push_back({tri[2], c, b});
            nf.push_back({a, b, c});
        }
        f = std::move(nf);
    }
    SurfaceMesh m;
    m.vertices.reserve(v.size());
    for (const auto& p : v) m.vertices.push_back(center + p * radius);
    m.faces = std::move(f);
    return m;
}

// Capped straight tube from p0 to p1, flat end caps.
inline SurfaceMesh tube_mesh(const Vec3& p0, const Vec3& p1, double radius, int nseg = 32,
                             int nax = 8) {
    Vec3 axis = p1 - p0;
    double len = norm(axis);
    Vec3 t = axis / len;
    Vec3 u = any_orthogonal(t);
    Vec3 w = cross(t, u);
    SurfaceMesh m;
    for (int a = 0; a <= nax; ++a) {
        Vec3 c = p0 + t * (len * a / nax);
        for (int s = 0; s < nseg; ++s) {
            double ang = 2.0 * M_PI * s / nseg;
            m.vertices.push_back(c + (u * std::cos(ang) + w * std::sin(ang)) * radius);
        }
    }
    auto ring = [&](int a, int s) { return a * nseg + (s % nseg); };
    for (int a = 0; a < nax; ++a)
        for (int s = 0; s < nseg; ++s) {
            m.faces.push_back({ring(a, s), ring(a + 1, s + 1), ring(a + 1, s)});
            m.faces.push_back({ring(a, s), ring(a, s + 1), ring(a + 1, s + 1)});
        }
    int c0 = static_cast<int>(m.vertices.size());
    m.vertices.push_back(p0);
    int c1 = static_cast<int>(m.vertices.size());
    m.vertices.push_back(p1);
    for (int s = 0; s < nseg; ++s) {
        m.faces.push_back({c0, ring(0, s + 1), ring(0, s)});
        m.faces.push_back({c1, ring(nax, s), ring(nax, s + 1)});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Implicit geometries for the built-in vessel phantoms. sd() is an
// approximate signed distance, positive inside the fluid region; the sign is
// exact, magnitudes near the surface are good enough for contact queries.
// ---------------------------------------------------------------------------

struct Implicit {
    std::function<double(const Vec3&)> sd;
    AlignedBox box;
    bool inside(const Vec3& p) const { return sd(p) > 0.0; }
};

inline Implicit implicit_box(const Vec3& lo, const Vec3& hi) {
    Implicit g;
    g.box.expand(lo);
    g.box.expand(hi);
    g.sd = [lo, hi](const Vec3& p) {
        double d = 1e300;
        for (int a = 0; a < 3; ++a) d = std::min(d, std::min(p[a] - lo[a], hi[a] - p[a]));
        return d;
    };
    return g;
}

inline Implicit implicit_sphere(const Vec3& c, double r) {
    Implicit g;
    g.box.expand(c - Vec3{r, r, r});
    g.box.expand(c + Vec3{r, r, r});
    g.sd = [c, r](const Vec3& p) { return r - norm(p - c); };
    return g;
}

inline Implicit implicit_tube(const Vec3& p0, const Vec3& p1, double r) {
    Vec3 t = normalized(p1 - p0);
    double len = norm(p1 - p0);
    Implicit g;
    for (const Vec3& e : {p0, p1}) {
        g.box.expand(e - Vec3{r, r, r});
        g.box.expand(e + Vec3{r, r, r});
    }
    g.sd = [p0, t, len, r](const Vec3& p) {
        double a = dot(p - p0, t);
        double rho = norm(p - p0 - t * a);
        return std::min({r - rho, a, len - a});
    };
    return g;
}

inline Implicit implicit_union(Implicit a, Implicit b) {
    Implicit g;
    g.box = a.box;
    g.box.expand(b.box.lo);
    g.box.expand(b.box.hi);
    g.sd = [a = std::move(a), b = std::move(b)](const Vec3& p) {
        return std::max(a.sd(p), b.sd(p));
    };
    return g;
}

// Straight tube along +x with a spherical sac on top (+z). neck_offset = 0
// puts the sphere center on the tube surface (hemispherical bump); larger
// values push it out and narrow the neck.
struct SacPhantom {
    Implicit geom;
    Vec3 inlet_center, outlet_center;
    Vec3 axis{1, 0, 0};
    double tube_radius = 0.0;
    Vec3 ostium_point;        // on the tube surface below the sac
    Vec3 ostium_normal{0, 0, 1};
    double sac_radius = 0.0;
};

inline SacPhantom tube_with_sac_phantom(double tube_radius, double tube_length, double sac_radius,
                                        double neck_offset) {
    SacPhantom ph;
    Vec3 p0{0, 0, 0}, p1{tube_length, 0, 0};
    Vec3 sac_center{tube_length / 2.0, 0, tube_radius + neck_offset};
    ph.geom = implicit_union(implicit_tube(p0, p1, tube_radius),
                             implicit_sphere(sac_center, sac_radius));
    ph.inlet_center = p0;
    ph.outlet_center = p1;
    ph.tube_radius = tube_radius;
    ph.sac_radius = sac_radius;
    ph.ostium_point = {tube_length / 2.0, 0, tube_radius};
    return ph;
}

inline SacPhantom straight_tube_phantom(double tube_radius, double tube_length) {
    SacPhantom ph;
    Vec3 p0{0, 0, 0}, p1{tube_length, 0, 0};
    ph.geom = implicit_tube(p0, p1, tube_radius);
    ph.inlet_center = p0;
    ph.outlet_center = p1;
    ph.tube_radius = tube_radius;
    ph.ostium_point = {tube_length / 2.0, 0, 0};
    ph.ostium_normal = {1, 0, 0};
    return ph;
}

}  // namespace aneusim
