#pragma once

#include "aneusim/voxel_grid.hpp"

namespace aneusim {

// Staggered (MAC) face-velocity storage. x-faces carry the x-component at
// (i-1/2, j, k) for i in [0, nx], and likewise for y and z.
struct FaceField {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> x, y, z;

    FaceField() = default;
    explicit FaceField(const VoxelGrid& g) : nx(g.nx), ny(g.ny), nz(g.nz) {
        x.assign(std::size_t(nx + 1) * ny * nz, 0.0);
        y.assign(std::size_t(nx) * (ny + 1) * nz, 0.0);
        z.assign(std::size_t(nx) * ny * (nz + 1), 0.0);
    }
    std::size_t xi(int i, int j, int k) const { return (std::size_t(k) * ny + j) * (nx + 1) + i; }
    std::size_t yi(int i, int j, int k) const { return (std::size_t(k) * (ny + 1) + j) * nx + i; }
    std::size_t zi(int i, int j, int k) const { return (std::size_t(k) * ny + j) * nx + i; }

    double max_abs() const {
        double m = 0.0;
        for (double v : x) m = std::max(m, std::abs(v));
        for (double v : y) m = std::max(m, std::abs(v));
        for (double v : z) m = std::max(m, std::abs(v));
        return m;
    }
    void fill(double v) {
        std::fill(x.begin(), x.end(), v);
        std::fill(y.begin(), y.end(), v);
        std::fill(z.begin(), z.end(), v);
    }
    bool same_shape(const FaceField& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
};

inline FaceField lerp(const FaceField& a, const FaceField& b, double w) {
    FaceField r = a;
    for (std::size_t i = 0; i < r.x.size(); ++i) r.x[i] += w * (b.x[i] - a.x[i]);
    for (std::size_t i = 0; i < r.y.size(); ++i) r.y[i] += w * (b.y[i] - a.y[i]);
    for (std::size_t i = 0; i < r.z.size(); ++i) r.z[i] += w * (b.z[i] - a.z[i]);
    return r;
}

}  // namespace aneusim
