#pragma once

#include <algorithm>
#include <deque>
#include <optional>

#include "aneusim/shapes.hpp"
#include "aneusim/surface_mesh.hpp"

namespace aneusim {

enum class CellClass : std::uint8_t { Exterior = 0, Fluid, Wall, InletFace, OutletFace, Device };

inline const char* to_string(CellClass c) {
    switch (c) {
        case CellClass::Exterior: return "Exterior";
        case CellClass::Fluid: return "Fluid";
        case CellClass::Wall: return "Wall";
        case CellClass::InletFace: return "InletFace";
        case CellClass::OutletFace: return "OutletFace";
        case CellClass::Device: return "Device";
    }
    return "?";
}

// Oriented disk used to mark inlet/outlet patches on the voxelized surface.
struct DiskSpec {
    Vec3 center;
    Vec3 normal;  // need not be unit; normalized on use
    double radius = 0.0;
};

// Ostium plane separating sac from parent vessel; normal points into the dome.
struct OstiumSpec {
    Vec3 point;
    Vec3 normal;
    double radius_bound = 1e30;  // seed cells must lie within this radius of `point`
};

struct VoxelGrid {
    Vec3 origin;
    double h = 0.0;
    int nx = 0, ny = 0, nz = 0;
    std::vector<CellClass> cell;
    std::vector<std::uint8_t> sac_mask;
    std::vector<std::uint8_t> dome_wall_mask;

    std::int64_t ncells() const { return std::int64_t(nx) * ny * nz; }
    int idx(int i, int j, int k) const { return (k * ny + j) * nx + i; }
    void unpack(int id, int& i, int& j, int& k) const {
        i = id % nx;
        j = (id / nx) % ny;
        k = id / (nx * ny);
    }
    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < nx && j >= 0 && j < ny && k >= 0 && k < nz;
    }
    Vec3 center(int i, int j, int k) const {
        return origin + Vec3{(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
    }
    Vec3 center(int id) const {
        int i, j, k;
        unpack(id, i, j, k);
        return center(i, j, k);
    }
    CellClass at(int i, int j, int k) const {
        return in_bounds(i, j, k) ? cell[idx(i, j, k)] : CellClass::Exterior;
    }
    bool is_inside_class(CellClass c) const { return c != CellClass::Exterior; }
    bool is_flow(CellClass c) const { return c == CellClass::Fluid || c == CellClass::Device; }
    bool is_flow(int id) const { return is_flow(cell[id]); }

    std::int64_t count(CellClass c) const {
        return std::count(cell.begin(), cell.end(), c);
    }
    // Volume of all cells inside the vessel surface (staircase solid volume).
    double interior_volume() const {
        std::int64_t n = 0;
        for (auto c : cell)
            if (c != CellClass::Exterior) ++n;
        return n * h * h * h;
    }
    double fluid_volume() const {
        std::int64_t n = 0;
        for (auto c : cell)
            if (is_flow(c)) ++n;
        return n * h * h * h;
    }
    double sac_volume() const {
        std::int64_t n = std::count(sac_mask.begin(), sac_mask.end(), std::uint8_t(1));
        return n * h * h * h;
    }

    static const std::array<std::array<int, 3>, 6>& neighbor_offsets() {
        static const std::array<std::array<int, 3>, 6> off = {
            {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
        return off;
    }
};

namespace detail {

// Parity of axis-aligned ray crossings per cell center. For each axis, rays
// are cast along that axis through every transverse cell-center line. A ray
// that grazes an edge or vertex within eps abstains for its whole line; the
// remaining axes vote. vote[id] accumulates +1 (inside) / -1 (outside) per
// valid axis.
inline void parity_votes(const SurfaceMesh& mesh, const VoxelGrid& g, int axis,
                         std::vector<signed char>& vote) {
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    int n[3] = {g.nx, g.ny, g.nz};
    int n1 = n[a1], n2 = n[a2], na = n[axis];
    const double h = g.h;
    const double eps = 1e-9 * std::max({1.0, std::abs(g.origin.x) + g.nx * h,
                                        std::abs(g.origin.y) + g.ny * h,
                                        std::abs(g.origin.z) + g.nz * h});

    // Bin triangles by transverse cell lines they may cross.
    std::vector<std::vector<int>> bins(std::size_t(n1) * n2);
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const auto& tri = mesh.faces[f];
        double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
        for (int v : tri) {
            const Vec3& p = mesh.vertices[v];
            lo1 = std::min(lo1, p[a1]);
            hi1 = std::max(hi1, p[a1]);
            lo2 = std::min(lo2, p[a2]);
            hi2 = std::max(hi2, p[a2]);
        }
        int b1lo = std::max(0, static_cast<int>(std::floor((lo1 - g.origin[a1]) / h - 0.5)));
        int b1hi = std::min(n1 - 1, static_cast<int>(std::ceil((hi1 - g.origin[a1]) / h - 0.5)));
        int b2lo = std::max(0, static_cast<int>(std::floor((lo2 - g.origin[a2]) / h - 0.5)));
        int b2hi = std::min(n2 - 1, static_cast<int>(std::ceil((hi2 - g.origin[a2]) / h - 0.5)));
        for (int c2 = b2lo; c2 <= b2hi; ++c2)
            for (int c1 = b1lo; c1 <= b1hi; ++c1) bins[std::size_t(c2) * n1 + c1].push_back(f);
    }

    parallel_for(std::int64_t(n1) * n2, [&](std::int64_t line) {
        int c1 = static_cast<int>(line % n1), c2 = static_cast<int>(line / n1);
        double q1 = g.origin[a1] + (c1 + 0.5) * h;
        double q2 = g.origin[a2] + (c2 + 0.5) * h;
        std::vector<double> hits;
        bool degenerate = false;
        for (int f : bins[line]) {
            const auto& tri = mesh.faces[f];
            const Vec3 &A = mesh.vertices[tri[0]], &B = mesh.vertices[tri[1]],
                       &C = mesh.vertices[tri[2]];
            // 2-D orientation tests in the transverse plane.
            double ax = A[a1] - q1, ay = A[a2] - q2;
            double bx = B[a1] - q1, by = B[a2] - q2;
            double cx = C[a1] - q1, cy = C[a2] - q2;
            double d0 = ax * by - ay * bx;
            double d1 = bx * cy - by * cx;
            double d2 = cx * ay - cy * ax;
            double scale = std::max({std::abs(ax), std::abs(ay), std::abs(bx), std::abs(by),
                                     std::abs(cx), std::abs(cy), 1e-30});
            double tol = eps * scale;
            bool pos = d0 > tol && d1 > tol && d2 > tol;
            bool neg = d0 < -tol && d1 < -tol && d2 < -tol;
            if (!pos && !neg) {
                // Near an edge/vertex in projection: either a miss or a graze.
                bool strictly_out = (d0 < -tol || d1 < -tol || d2 < -tol) &&
                                    (d0 > tol || d1 > tol || d2 > tol);
                if (strictly_out) continue;
                if (std::abs(d0) <= tol || std::abs(d1) <= tol || std::abs(d2) <= tol) {
                    degenerate = true;
                    break;
                }
                continue;
            }
            double denom = d0 + d1 + d2;
            double t = (d1 * A[axis] + d2 * B[axis] + d0 * C[axis]) / denom;
            hits.push_back(t);
        }
        if (degenerate) return;  // abstain: vote stays untouched on this line
        std::sort(hits.begin(), hits.end());
        for (int ca = 0; ca < na; ++ca) {
            double q = g.origin[axis] + (ca + 0.5) * h;
            std::size_t below = std::lower_bound(hits.begin(), hits.end(), q) - hits.begin();
            int ijk[3];
            ijk[axis] = ca;
            ijk[a1] = c1;
            ijk[a2] = c2;
            int id = g.idx(ijk[0], ijk[1], ijk[2]);
            vote[id] += (below % 2 == 1) ? +1 : -1;
        }
    });
}

inline void classify_and_connect(VoxelGrid& g, const DiskSpec& inlet, const DiskSpec& outlet) {
    Vec3 n_in = normalized(inlet.normal), n_out = normalized(outlet.normal);
    auto in_disk = [&](const Vec3& c, const DiskSpec& d, const Vec3& n) {
        Vec3 r = c - d.center;
        double ax = dot(r, n);
        if (std::abs(ax) > g.h * 1.0001) return false;
        return norm(r - n * ax) <= d.radius;
    };
    // Boundary layer: inside cells face-adjacent to the exterior.
    std::vector<int> boundary;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                int id = g.idx(i, j, k);
                if (g.cell[id] != CellClass::Fluid) continue;
                bool edge = false;
                for (const auto& o : VoxelGrid::neighbor_offsets())
                    if (g.at(i + o[0], j + o[1], k + o[2]) == CellClass::Exterior) edge = true;
                if (edge) boundary.push_back(id);
            }
    for (int id : boundary) {
        Vec3 c = g.center(id);
        if (in_disk(c, inlet, n_in))
            g.cell[id] = CellClass::InletFace;
        else if (in_disk(c, outlet, n_out))
            g.cell[id] = CellClass::OutletFace;
        else
            g.cell[id] = CellClass::Wall;
    }

    // Inlet patch must resolve the opening.
    int lo[3] = {1 << 30, 1 << 30, 1 << 30}, hi[3] = {-1, -1, -1};
    std::int64_t n_inlet = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                if (g.cell[g.idx(i, j, k)] == CellClass::InletFace) {
                    ++n_inlet;
                    int ijk[3] = {i, j, k};
                    for (int a = 0; a < 3; ++a) {
                        lo[a] = std::min(lo[a], ijk[a]);
                        hi[a] = std::max(hi[a], ijk[a]);
                    }
                }
    if (n_inlet == 0)
        throw SimError(ErrKind::ResolutionTooCoarse, "no cells resolved inside the inlet disk");
    int spans[3] = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
    std::sort(spans, spans + 3);
    if (spans[1] < 3)
        throw SimError(ErrKind::ResolutionTooCoarse,
                       "fewer than 3 cells across the inlet disk (span " +
                           std::to_string(spans[1]) + ")");

    // Flood fill through Fluid from cells adjacent to the inlet patch;
    // unreachable pockets are carved out of the domain.
    std::vector<std::uint8_t> reach(g.ncells(), 0);
    std::deque<int> queue;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                int id = g.idx(i, j, k);
                if (g.cell[id] != CellClass::Fluid) continue;
                for (const auto& o : VoxelGrid::neighbor_offsets())
                    if (g.at(i + o[0], j + o[1], k + o[2]) == CellClass::InletFace) {
                        if (!reach[id]) {
                            reach[id] = 1;
                            queue.push_back(id);
                        }
                    }
            }
    bool outlet_reached = false;
    while (!queue.empty()) {
        int id = queue.front();
        queue.pop_front();
        int i, j, k;
        g.unpack(id, i, j, k);
        for (const auto& o : VoxelGrid::neighbor_offsets()) {
            int ii = i + o[0], jj = j + o[1], kk = k + o[2];
            if (!g.in_bounds(ii, jj, kk)) continue;
            int nid = g.idx(ii, jj, kk);
            if (g.cell[nid] == CellClass::OutletFace) outlet_reached = true;
            if (g.cell[nid] == CellClass::Fluid && !reach[nid]) {
                reach[nid] = 1;
                queue.push_back(nid);
            }
        }
    }
    if (!outlet_reached)
        throw SimError(ErrKind::DisconnectedDomain, "no fluid path from inlet to outlet");
    for (std::int64_t id = 0; id < g.ncells(); ++id)
        if (g.cell[id] == CellClass::Fluid && !reach[id]) g.cell[id] = CellClass::Exterior;
}

template <class InsideFn>
VoxelGrid voxelize_classified(const AlignedBox& box, double h, const DiskSpec& inlet,
                              const DiskSpec& outlet, InsideFn&& fill_inside) {
    if (h <= 0.0) throw SimError(ErrKind::Config, "grid spacing must be positive");
    VoxelGrid g;
    g.h = h;
    g.origin = box.lo - Vec3{h, h, h};
    Vec3 ext = box.hi - g.origin + Vec3{h, h, h};
    g.nx = std::max(1, static_cast<int>(std::ceil(ext.x / h)));
    g.ny = std::max(1, static_cast<int>(std::ceil(ext.y / h)));
    g.nz = std::max(1, static_cast<int>(std::ceil(ext.z / h)));
    if (g.ncells() > (std::int64_t(1) << 27))
        throw SimError(ErrKind::Config, "voxel grid exceeds 2^27 cells; increase spacing");
    g.cell.assign(g.ncells(), CellClass::Exterior);
    g.sac_mask.assign(g.ncells(), 0);
    g.dome_wall_mask.assign(g.ncells(), 0);
    fill_inside(g);
    classify_and_connect(g, inlet, outlet);
    return g;
}

}  // namespace detail

inline VoxelGrid voxelize(const SurfaceMesh& mesh, double h, const DiskSpec& inlet,
                          const DiskSpec& outlet) {
    return detail::voxelize_classified(mesh.bounds(), h, inlet, outlet, [&](VoxelGrid& g) {
        std::vector<signed char> vote(g.ncells(), 0);
        for (int axis = 0; axis < 3; ++axis) detail::parity_votes(mesh, g, axis, vote);
        std::vector<int> undecided;
        for (std::int64_t id = 0; id < g.ncells(); ++id) {
            if (vote[id] > 0)
                g.cell[id] = CellClass::Fluid;
            else if (vote[id] == 0)
                undecided.push_back(static_cast<int>(id));
        }
        // Cells on grazing lines: take the majority of decided neighbors,
        // sweeping until stable (they sit on the surface either way).
        bool changed = true;
        while (!undecided.empty() && changed) {
            changed = false;
            std::vector<int> rest;
            for (int id : undecided) {
                int i, j, k;
                g.unpack(id, i, j, k);
                int in = 0, out = 0;
                for (const auto& o : VoxelGrid::neighbor_offsets()) {
                    int ii = i + o[0], jj = j + o[1], kk = k + o[2];
                    if (!g.in_bounds(ii, jj, kk)) {
                        ++out;
                        continue;
                    }
                    int nid = g.idx(ii, jj, kk);
                    if (std::find(undecided.begin(), undecided.end(), nid) != undecided.end())
                        continue;
                    if (g.cell[nid] == CellClass::Fluid)
                        ++in;
                    else
                        ++out;
                }
                if (in > out) {
                    g.cell[id] = CellClass::Fluid;
                    changed = true;
                } else if (out > in) {
                    changed = true;  // stays Exterior
                } else {
                    rest.push_back(id);
                    continue;
                }
            }
            undecided = std::move(rest);
        }
        // Persistent ties sit on the surface; mark them Fluid and let the
        // inlet flood fill keep or carve them.
        for (int id : undecided) g.cell[id] = CellClass::Fluid;
    });
}

inline VoxelGrid voxelize(const Implicit& geom, double h, const DiskSpec& inlet,
                          const DiskSpec& outlet) {
    return detail::voxelize_classified(geom.box, h, inlet, outlet, [&](VoxelGrid& g) {
        parallel_for(g.ncells(), [&](std::int64_t id) {
            if (geom.inside(g.center(static_cast<int>(id))))
                g.cell[id] = CellClass::Fluid;
        });
    });
}

// Tags the aneurysm sac: flow cells on the dome side of the ostium plane that
// are reachable from the ostium disk without re-crossing the plane, plus the
// adjacent wall cells as the dome wall.
inline void tag_sac_inplace(VoxelGrid& g, const OstiumSpec& ostium) {
    Vec3 n = normalized(ostium.normal);
    std::fill(g.sac_mask.begin(), g.sac_mask.end(), 0);
    std::fill(g.dome_wall_mask.begin(), g.dome_wall_mask.end(), 0);
    std::deque<int> queue;
    for (std::int64_t id = 0; id < g.ncells(); ++id) {
        if (!g.is_flow(g.cell[id])) continue;
        Vec3 r = g.center(static_cast<int>(id)) - ostium.point;
        double s = dot(r, n);
        if (s <= 0.0 || s > g.h) continue;
        if (norm(r - n * s) > ostium.radius_bound) continue;
        g.sac_mask[id] = 1;
        queue.push_back(static_cast<int>(id));
    }
    while (!queue.empty()) {
        int id = queue.front();
        queue.pop_front();
        int i, j, k;
        g.unpack(id, i, j, k);
        for (const auto& o : VoxelGrid::neighbor_offsets()) {
            int ii = i + o[0], jj = j + o[1], kk = k + o[2];
            if (!g.in_bounds(ii, jj, kk)) continue;
            int nid = g.idx(ii, jj, kk);
            if (g.sac_mask[nid] || !g.is_flow(g.cell[nid])) continue;
            if (dot(g.center(nid) - ostium.point, n) <= 0.0) continue;
            g.sac_mask[nid] = 1;
            queue.push_back(nid);
        }
    }
    std::int64_t n_sac = std::count(g.sac_mask.begin(), g.sac_mask.end(), std::uint8_t(1));
    if (n_sac == 0) throw SimError(ErrKind::EmptySac, "ostium plane tags no sac cells");
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                int id = g.idx(i, j, k);
                if (g.cell[id] != CellClass::Wall) continue;
                for (const auto& o : VoxelGrid::neighbor_offsets()) {
                    int ii = i + o[0], jj = j + o[1], kk = k + o[2];
                    if (g.in_bounds(ii, jj, kk) && g.sac_mask[g.idx(ii, jj, kk)]) {
                        g.dome_wall_mask[id] = 1;
                        break;
                    }
                }
            }
}

inline VoxelGrid tag_sac(VoxelGrid g, const OstiumSpec& ostium) {
    tag_sac_inplace(g, ostium);
    return g;
}

// Hand-built grids for verification setups.

// Closed box: wall shell around an nx x ny x nz fluid core. With
// wall_z = false the z direction has no wall cells (planar 2-D setups; that
// boundary behaves as exact free slip).
inline VoxelGrid make_box_grid(int nx, int ny, int nz, double h, const Vec3& origin = {},
                               bool wall_z = true) {
    VoxelGrid g;
    g.h = h;
    int pz = wall_z ? 1 : 0;
    g.origin = origin - Vec3{h, h, pz * h};
    g.nx = nx + 2;
    g.ny = ny + 2;
    g.nz = nz + 2 * pz;
    g.cell.assign(g.ncells(), CellClass::Wall);
    g.sac_mask.assign(g.ncells(), 0);
    g.dome_wall_mask.assign(g.ncells(), 0);
    for (int k = pz; k < pz + nz; ++k)
        for (int j = 1; j <= ny; ++j)
            for (int i = 1; i <= nx; ++i) g.cell[g.idx(i, j, k)] = CellClass::Fluid;
    return g;
}

// Straight channel along x: inlet layer, outlet layer, wall shell in y and
// optionally z.
inline VoxelGrid make_channel_grid(int nx, int ny, int nz, double h, const Vec3& origin = {},
                                   bool wall_z = true) {
    VoxelGrid g;
    g.h = h;
    int pz = wall_z ? 1 : 0;
    g.origin = origin - Vec3{h, h, pz * h};
    g.nx = nx + 2;
    g.ny = ny + 2;
    g.nz = nz + 2 * pz;
    g.cell.assign(g.ncells(), CellClass::Wall);
    g.sac_mask.assign(g.ncells(), 0);
    g.dome_wall_mask.assign(g.ncells(), 0);
    for (int k = pz; k < pz + nz; ++k)
        for (int j = 1; j <= ny; ++j) {
            for (int i = 1; i <= nx; ++i) g.cell[g.idx(i, j, k)] = CellClass::Fluid;
            g.cell[g.idx(0, j, k)] = CellClass::InletFace;
            g.cell[g.idx(nx + 1, j, k)] = CellClass::OutletFace;
        }
    return g;
}

}  // namespace aneusim
