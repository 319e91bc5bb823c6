#pragma once

#include <numeric>

#include "aneusim/field.hpp"
#include "aneusim/waveform.hpp"

namespace aneusim {

struct FluidProps {
    double rho = 1.0e3;   // kg/m^3
    double mu = 0.004;    // kg/(m s)
    double nu_mm() const { return mu / rho * kMm2PerM2; }  // mm^2/s
    void validate() const {
        if (!(rho > 0) || !(mu > 0)) throw SimError(ErrKind::Config, "rho and mu must be positive");
    }
};

struct FlowBc {
    WaveformSpec inlet = preset_inlet_waveform();    // cm/s
    WaveformSpec outlet = preset_outlet_waveform();  // mmHg
    enum class WallMode { FreeSlip, NoSlip } wall = WallMode::FreeSlip;
};

enum class FaceKind : std::uint8_t { Inactive = 0, Active, Inlet, Outlet, WallNormal };

// Incompressible porous-media solver on the staggered grid: explicit upwind
// advection and central diffusion, per-cell implicit Darcy drag, then a
// pressure projection that enforces div(phi u) = 0. Pressure is stored as
// p/rho in mm^2/s^2.
class FlowSolver {
public:
    FlowSolver(const VoxelGrid& grid, FluidProps props, FlowBc bc, double cfl = 0.4)
        : g_(&grid), props_(props), bc_(bc), cfl_(cfl), u_(grid), ustar_(grid) {
        props_.validate();
        if (!(cfl_ > 0 && cfl_ <= 1)) throw SimError(ErrKind::Config, "cfl must be in (0,1]");
        std::int64_t n = grid.ncells();
        q_.assign(n, 0.0);
        phi_.assign(n, 1.0);
        inv_alpha_.assign(n, 0.0);
        build_topology();
        double u0 = bc_.inlet.role == WaveformSpec::Role::InletVelocity
                        ? cm_per_s_to_mm_per_s(waveform_max_abs(bc_.inlet, kCardiacPeriod))
                        : waveform_max_abs(bc_.inlet, kCardiacPeriod);
        u_ref_ = std::max(u0, 1e-6);
        apply_boundary_values(0.0);
    }

    const VoxelGrid& grid() const { return *g_; }
    double time() const { return t_; }
    const FaceField& velocity() const { return u_; }
    FaceField& velocity() { return u_; }
    const std::vector<double>& pressure_kinematic() const { return q_; }
    double pressure_pa(int cell) const { return kinematic_to_pa(q_[cell], props_.rho); }
    const std::vector<double>& porosity() const { return phi_; }
    const std::vector<double>& resistance_per_mm2() const { return inv_alpha_; }
    double reference_speed() const { return u_ref_; }
    void set_reference_speed(double u) { u_ref_ = std::max(u, 1e-9); }

    // inv_alpha in 1/mm^2; porosity dimensionless in [0.75, 1].
    void set_porous_fields(const std::vector<double>& phi, const std::vector<double>& inv_alpha) {
        if (static_cast<std::int64_t>(phi.size()) != g_->ncells() ||
            static_cast<std::int64_t>(inv_alpha.size()) != g_->ncells())
            throw SimError(ErrKind::DimMismatch, "porous field size mismatch");
        phi_ = phi;
        inv_alpha_ = inv_alpha;
        factor_dirty_ = true;
    }

    double stable_dt() const {
        double umax = std::max(u_.max_abs(), u_ref_);
        double h = g_->h;
        double dt_adv = h / umax;
        double dt_visc = h * h / (6.0 * props_.nu_mm());
        return cfl_ * std::min(dt_adv, dt_visc);
    }

    void step(double dt) {
        if (!(dt > 0)) throw SimError(ErrKind::Config, "dt must be positive");
        if (dt > stable_dt() * (1.0 + 1e-9))
            throw SimError(ErrKind::Instability, "flow time step exceeds the stability bound");
        double t_new = t_ + dt;
        apply_boundary_values(t_new);
        predictor(dt);
        darcy_damp(dt);
        std::swap(u_.x, ustar_.x);
        std::swap(u_.y, ustar_.y);
        std::swap(u_.z, ustar_.z);
        apply_boundary_values(t_new);
        extrapolate_outlet();
        project(dt, t_new);
        t_ = t_new;
        for (const auto* comp : {&u_.x, &u_.y, &u_.z})
            for (double v : *comp)
                if (!std::isfinite(v)) throw SimError(ErrKind::Instability, "flow velocity blow-up");
    }

    // Advance a fixed interval, clipping the last step.
    void advance(double duration) {
        double t_end = t_ + duration;
        while (t_ < t_end - 1e-12) {
            double dt = std::min(stable_dt(), t_end - t_);
            step(dt);
        }
    }

    double max_divergence_scaled() const {
        double worst = 0.0;
        for (int c : cells_) worst = std::max(worst, std::abs(cell_divergence(c)));
        return worst * g_->h / u_ref_;
    }

    double inlet_flux() const { return boundary_flux(FaceKind::Inlet); }
    double outlet_flux() const { return boundary_flux(FaceKind::Outlet); }

    // gamma_dot = sqrt(2 D:D) per cell; one-sided differences at staircase
    // boundaries.
    std::vector<double> shear_rate() const {
        const VoxelGrid& g = *g_;
        std::vector<double> out(g.ncells(), 0.0);
        auto cavg = [&](int axis, int i, int j, int k) -> double {
            // cell-centered component of u_axis in flow cell (i,j,k)
            if (axis == 0) return 0.5 * (u_.x[u_.xi(i, j, k)] + u_.x[u_.xi(i + 1, j, k)]);
            if (axis == 1) return 0.5 * (u_.y[u_.yi(i, j, k)] + u_.y[u_.yi(i, j + 1, k)]);
            return 0.5 * (u_.z[u_.zi(i, j, k)] + u_.z[u_.zi(i, j, k + 1)]);
        };
        parallel_for(static_cast<std::int64_t>(cells_.size()), [&](std::int64_t idx) {
            int c = cells_[idx];
            int i, j, k;
            g.unpack(c, i, j, k);
            double grad[3][3];
            double h = g.h;
            // Diagonal terms from the cell's own faces.
            grad[0][0] = (u_.x[u_.xi(i + 1, j, k)] - u_.x[u_.xi(i, j, k)]) / h;
            grad[1][1] = (u_.y[u_.yi(i, j + 1, k)] - u_.y[u_.yi(i, j, k)]) / h;
            grad[2][2] = (u_.z[u_.zi(i, j, k + 1)] - u_.z[u_.zi(i, j, k)]) / h;
            int ijk[3] = {i, j, k};
            for (int comp = 0; comp < 3; ++comp)
                for (int dir = 0; dir < 3; ++dir) {
                    if (comp == dir) continue;
                    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
                    lo[dir] -= 1;
                    hi[dir] += 1;
                    bool has_lo = g.in_bounds(lo[0], lo[1], lo[2]) &&
                                  g.is_flow(g.cell[g.idx(lo[0], lo[1], lo[2])]);
                    bool has_hi = g.in_bounds(hi[0], hi[1], hi[2]) &&
                                  g.is_flow(g.cell[g.idx(hi[0], hi[1], hi[2])]);
                    double c0 = cavg(comp, ijk[0], ijk[1], ijk[2]);
                    if (has_lo && has_hi) {
                        grad[comp][dir] = (cavg(comp, hi[0], hi[1], hi[2]) -
                                           cavg(comp, lo[0], lo[1], lo[2])) /
                                          (2 * h);
                    } else if (has_hi) {
                        grad[comp][dir] = (cavg(comp, hi[0], hi[1], hi[2]) - c0) / h;
                    } else if (has_lo) {
                        grad[comp][dir] = (c0 - cavg(comp, lo[0], lo[1], lo[2])) / h;
                    } else {
                        grad[comp][dir] = 0.0;
                    }
                }
            double dd = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    double d_ab = 0.5 * (grad[a][b] + grad[b][a]);
                    dd += d_ab * d_ab;
                }
            out[c] = std::sqrt(2.0 * dd);
        });
        return out;
    }

    const std::vector<int>& flow_cells() const { return cells_; }

private:
    const VoxelGrid* g_;
    FluidProps props_;
    FlowBc bc_;
    double cfl_;
    double t_ = 0.0;
    double u_ref_ = 1.0;

    FaceField u_, ustar_;
    std::vector<double> q_, phi_, inv_alpha_;

    std::vector<int> cells_;               // flow cells (Fluid | Device)
    std::vector<FaceKind> kx_, ky_, kz_;   // face kinds
    struct BcFace {
        int axis;
        std::size_t face;
        double mult;  // sign/projection of the inlet normal onto the face axis
    };
    std::vector<BcFace> inlet_faces_;
    struct OutFace {
        int axis;
        std::size_t face;
        std::size_t inner;  // neighbouring same-axis face used for extrapolation
        int cell_in;        // flow cell
        int cell_out;       // OutletFace cell
        double sign;        // +1 if the outlet cell sits on the + side
    };
    std::vector<OutFace> outlet_faces_;

    // Pressure solve data (7-point SPD matrix, scaled by h^2/dt).
    std::vector<double> a_diag_, a_x_, a_y_, a_z_;  // a_x_[c]: coupling c <-> c+dx
    std::vector<double> ic_diag_;                   // IC(0) factor diagonal
    std::vector<int> cell_index_;                   // compact index or -1
    bool factor_dirty_ = true;
    bool has_outlet_ = false;
    std::vector<double> rhs_, sol_, r_, z_, p_, ap_;

    void build_topology() {
        const VoxelGrid& g = *g_;
        cells_.clear();
        for (std::int64_t c = 0; c < g.ncells(); ++c)
            if (g.is_flow(g.cell[c])) cells_.push_back(static_cast<int>(c));
        kx_.assign(u_.x.size(), FaceKind::Inactive);
        ky_.assign(u_.y.size(), FaceKind::Inactive);
        kz_.assign(u_.z.size(), FaceKind::Inactive);
        inlet_faces_.clear();
        outlet_faces_.clear();

        auto classify = [&](int axis, int i, int j, int k, std::size_t f) {
            int lo[3] = {i, j, k};
            lo[axis] -= 1;
            CellClass cl = g.at(lo[0], lo[1], lo[2]);
            CellClass ch = g.at(i, j, k);
            bool flo = g.is_flow(cl), fhi = g.is_flow(ch);
            FaceKind kind = FaceKind::Inactive;
            if (flo && fhi) kind = FaceKind::Active;
            else if (flo || fhi) {
                CellClass other = flo ? ch : cl;
                if (other == CellClass::InletFace) kind = FaceKind::Inlet;
                else if (other == CellClass::OutletFace) kind = FaceKind::Outlet;
                else kind = FaceKind::WallNormal;
            }
            if (kind == FaceKind::Inlet) {
                // Flow direction: from the inlet ghost into the fluid.
                double mult = flo ? -1.0 : 1.0;
                inlet_faces_.push_back({axis, f, mult});
            }
            if (kind == FaceKind::Outlet) {
                OutFace of;
                of.axis = axis;
                of.face = f;
                of.sign = flo ? 1.0 : -1.0;  // outlet ghost on + side if high cell is ghost
                int ci[3] = {i, j, k}, co[3] = {i, j, k};
                if (flo) {
                    ci[axis] -= 1;  // flow cell on - side
                } else {
                    co[axis] -= 1;  // ghost on - side
                }
                of.cell_in = g.idx(ci[0], ci[1], ci[2]);
                of.cell_out = g.idx(co[0], co[1], co[2]);
                int fi[3] = {i, j, k};
                fi[axis] += flo ? -1 : 1;  // same-axis face one step into the fluid
                of.inner = axis == 0 ? u_.xi(fi[0], fi[1], fi[2])
                                     : (axis == 1 ? u_.yi(fi[0], fi[1], fi[2])
                                                  : u_.zi(fi[0], fi[1], fi[2]));
                outlet_faces_.push_back(of);
                has_outlet_ = true;
            }
            return kind;
        };

        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i <= g.nx; ++i)
                    kx_[u_.xi(i, j, k)] = classify(0, i, j, k, u_.xi(i, j, k));
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j <= g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    ky_[u_.yi(i, j, k)] = classify(1, i, j, k, u_.yi(i, j, k));
        for (int k = 0; k <= g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    kz_[u_.zi(i, j, k)] = classify(2, i, j, k, u_.zi(i, j, k));

        cell_index_.assign(g.ncells(), -1);
        for (std::size_t n = 0; n < cells_.size(); ++n) cell_index_[cells_[n]] = static_cast<int>(n);
        factor_dirty_ = true;
    }

    double inlet_value_internal(double t) const {
        double v = bc_.inlet.eval(t);
        return bc_.inlet.role == WaveformSpec::Role::InletVelocity ? cm_per_s_to_mm_per_s(v) : v;
    }
    double outlet_value_internal(double t) const {
        double v = bc_.outlet.eval(t);
        return bc_.outlet.role == WaveformSpec::Role::OutletPressure
                   ? mmhg_to_kinematic(v, props_.rho)
                   : v;
    }

    void apply_boundary_values(double t) {
        double w = inlet_value_internal(t);
        for (const auto& f : inlet_faces_) {
            double v = w * f.mult;
            if (f.axis == 0) u_.x[f.face] = v;
            else if (f.axis == 1) u_.y[f.face] = v;
            else u_.z[f.face] = v;
        }
    }

    void extrapolate_outlet() {
        for (const auto& of : outlet_faces_) {
            if (of.axis == 0) u_.x[of.face] = u_.x[of.inner];
            else if (of.axis == 1) u_.y[of.face] = u_.y[of.inner];
            else u_.z[of.face] = u_.z[of.inner];
        }
    }

    double face_phi(int cell_a, int cell_b) const {
        return 0.5 * (phi_[cell_a] + phi_[cell_b]);
    }

    double cell_divergence(int c) const {
        const VoxelGrid& g = *g_;
        int i, j, k;
        g.unpack(c, i, j, k);
        auto pf = [&](int i2, int j2, int k2) {
            return g.in_bounds(i2, j2, k2) && g.is_flow(g.cell[g.idx(i2, j2, k2)])
                       ? 0.5 * (phi_[c] + phi_[g.idx(i2, j2, k2)])
                       : phi_[c];
        };
        double div = 0.0;
        div += pf(i + 1, j, k) * u_.x[u_.xi(i + 1, j, k)] - pf(i - 1, j, k) * u_.x[u_.xi(i, j, k)];
        div += pf(i, j + 1, k) * u_.y[u_.yi(i, j + 1, k)] - pf(i, j - 1, k) * u_.y[u_.yi(i, j, k)];
        div += pf(i, j, k + 1) * u_.z[u_.zi(i, j, k + 1)] - pf(i, j, k - 1) * u_.z[u_.zi(i, j, k)];
        return div / g.h;
    }

    double boundary_flux(FaceKind kind) const {
        const VoxelGrid& g = *g_;
        double h2 = g.h * g.h;
        double total = 0.0;
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i <= g.nx; ++i)
                    if (kx_[u_.xi(i, j, k)] == kind) {
                        double s = g.is_flow(g.at(i, j, k)) ? 1.0 : -1.0;
                        // positive = into the domain at inlets, out at outlets
                        total += (kind == FaceKind::Inlet ? s : -s) * u_.x[u_.xi(i, j, k)] * h2;
                    }
        for (int k = 0; k < g.nz; ++k)
            for (int j = 0; j <= g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    if (ky_[u_.yi(i, j, k)] == kind) {
                        double s = g.is_flow(g.at(i, j, k)) ? 1.0 : -1.0;
                        total += (kind == FaceKind::Inlet ? s : -s) * u_.y[u_.yi(i, j, k)] * h2;
                    }
        for (int k = 0; k <= g.nz; ++k)
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i)
                    if (kz_[u_.zi(i, j, k)] == kind) {
                        double s = g.is_flow(g.at(i, j, k)) ? 1.0 : -1.0;
                        total += (kind == FaceKind::Inlet ? s : -s) * u_.z[u_.zi(i, j, k)] * h2;
                    }
        return total;
    }

    void predictor(double dt) {
        const VoxelGrid& g = *g_;
        double h = g.h;
        double nu = props_.nu_mm();
        bool noslip = bc_.wall == FlowBc::WallMode::NoSlip;

        auto sweep_axis = [&](int axis) {
            const std::vector<double>& comp = axis == 0 ? u_.x : (axis == 1 ? u_.y : u_.z);
            std::vector<double>& out = axis == 0 ? ustar_.x : (axis == 1 ? ustar_.y : ustar_.z);
            const std::vector<FaceKind>& kinds = axis == 0 ? kx_ : (axis == 1 ? ky_ : kz_);
            int n0 = axis == 0 ? g.nx + 1 : g.nx;
            int n1 = axis == 1 ? g.ny + 1 : g.ny;
            int n2 = axis == 2 ? g.nz + 1 : g.nz;
            auto fidx = [&](int i, int j, int k) {
                return axis == 0 ? u_.xi(i, j, k) : (axis == 1 ? u_.yi(i, j, k) : u_.zi(i, j, k));
            };
            parallel_for(std::int64_t(n0) * n1 * n2, [&](std::int64_t lin) {
                int i = static_cast<int>(lin % n0);
                int j = static_cast<int>((lin / n0) % n1);
                int k = static_cast<int>(lin / (std::int64_t(n0) * n1));
                std::size_t f = fidx(i, j, k);
                if (kinds[f] != FaceKind::Active) {
                    out[f] = comp[f];
                    return;
                }
                double uf = comp[f];

                // Neighbour values along each direction with ghost handling.
                double val[3][2];
                for (int dir = 0; dir < 3; ++dir) {
                    for (int side = 0; side < 2; ++side) {
                        int ii = i + (dir == 0 ? (side ? 1 : -1) : 0);
                        int jj = j + (dir == 1 ? (side ? 1 : -1) : 0);
                        int kk = k + (dir == 2 ? (side ? 1 : -1) : 0);
                        bool inb = ii >= 0 && jj >= 0 && kk >= 0 && ii < n0 && jj < n1 && kk < n2;
                        if (!inb) {
                            // Outside the array there is never a wall cell;
                            // planar setups rely on this being free slip.
                            val[dir][side] = uf;
                            continue;
                        }
                        std::size_t fn = fidx(ii, jj, kk);
                        if (dir == axis) {
                            val[dir][side] = comp[fn];  // stored semantics on axis neighbours
                        } else {
                            val[dir][side] = kinds[fn] == FaceKind::Inactive
                                                 ? (noslip ? -uf : uf)
                                                 : comp[fn];
                        }
                    }
                }

                // Advecting velocity components at this face.
                double adv[3];
                adv[axis] = uf;
                for (int dir = 0; dir < 3; ++dir) {
                    if (dir == axis) continue;
                    const std::vector<double>& oc = dir == 0 ? u_.x : (dir == 1 ? u_.y : u_.z);
                    auto oidx = [&](int ii, int jj, int kk) {
                        return dir == 0 ? u_.xi(ii, jj, kk)
                                        : (dir == 1 ? u_.yi(ii, jj, kk) : u_.zi(ii, jj, kk));
                    };
                    // Average the four surrounding faces of the transverse
                    // component around this face location.
                    int ia = i, ja = j, ka = k;
                    int ib = ia - (axis == 0 ? 1 : 0), jb = ja - (axis == 1 ? 1 : 0),
                        kb = ka - (axis == 2 ? 1 : 0);
                    int ic = ia + (dir == 0 ? 1 : 0), jc = ja + (dir == 1 ? 1 : 0),
                        kc = ka + (dir == 2 ? 1 : 0);
                    int id = ib + (dir == 0 ? 1 : 0), jd = jb + (dir == 1 ? 1 : 0),
                        kd = kb + (dir == 2 ? 1 : 0);
                    adv[dir] = 0.25 * (oc[oidx(ia, ja, ka)] + oc[oidx(ib, jb, kb)] +
                                       oc[oidx(ic, jc, kc)] + oc[oidx(id, jd, kd)]);
                }

                double advection = 0.0;
                for (int dir = 0; dir < 3; ++dir) {
                    double a = adv[dir];
                    double dd = a > 0 ? (uf - val[dir][0]) / h : (val[dir][1] - uf) / h;
                    advection += a * dd;
                }
                double lap = 0.0;
                for (int dir = 0; dir < 3; ++dir)
                    lap += (val[dir][0] - 2.0 * uf + val[dir][1]) / (h * h);

                out[f] = uf + dt * (-advection + nu * lap);
            });
        };
        sweep_axis(0);
        sweep_axis(1);
        sweep_axis(2);
    }

    void darcy_damp(double dt) {
        const VoxelGrid& g = *g_;
        double nu = props_.nu_mm();
        auto damp_axis = [&](int axis, std::vector<double>& comp,
                             const std::vector<FaceKind>& kinds) {
            int n0 = axis == 0 ? g.nx + 1 : g.nx;
            int n1 = axis == 1 ? g.ny + 1 : g.ny;
            int n2 = axis == 2 ? g.nz + 1 : g.nz;
            parallel_for(std::int64_t(n0) * n1 * n2, [&](std::int64_t lin) {
                int i = static_cast<int>(lin % n0);
                int j = static_cast<int>((lin / n0) % n1);
                int k = static_cast<int>(lin / (std::int64_t(n0) * n1));
                std::size_t f = axis == 0 ? u_.xi(i, j, k)
                                          : (axis == 1 ? u_.yi(i, j, k) : u_.zi(i, j, k));
                if (kinds[f] != FaceKind::Active) return;
                int lo[3] = {i, j, k};
                lo[axis] -= 1;
                double ia = 0.5 * (inv_alpha_[g.idx(lo[0], lo[1], lo[2])] +
                                   inv_alpha_[g.idx(i, j, k)]);
                comp[f] /= 1.0 + dt * nu * ia;
            });
        };
        damp_axis(0, ustar_.x, kx_);
        damp_axis(1, ustar_.y, ky_);
        damp_axis(2, ustar_.z, kz_);
    }

    void assemble_matrix() {
        const VoxelGrid& g = *g_;
        std::size_t n = cells_.size();
        a_diag_.assign(n, 0.0);
        a_x_.assign(n, 0.0);
        a_y_.assign(n, 0.0);
        a_z_.assign(n, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            int c = cells_[m];
            int i, j, k;
            g.unpack(c, i, j, k);
            auto add_face = [&](int axis, int ii, int jj, int kk, bool plus_side) {
                std::size_t f = axis == 0 ? u_.xi(ii, jj, kk)
                                          : (axis == 1 ? u_.yi(ii, jj, kk) : u_.zi(ii, jj, kk));
                FaceKind kind = (axis == 0 ? kx_ : (axis == 1 ? ky_ : kz_))[f];
                if (kind == FaceKind::Active) {
                    int nb[3] = {i, j, k};
                    nb[axis] += plus_side ? 1 : -1;
                    int cn = g.idx(nb[0], nb[1], nb[2]);
                    double w = face_phi(c, cn);
                    a_diag_[m] += w;
                    if (plus_side) {
                        if (axis == 0) a_x_[m] = -w;
                        else if (axis == 1) a_y_[m] = -w;
                        else a_z_[m] = -w;
                    }
                } else if (kind == FaceKind::Outlet) {
                    a_diag_[m] += phi_[c];
                }
            };
            add_face(0, i, j, k, false);
            add_face(0, i + 1, j, k, true);
            add_face(1, i, j, k, false);
            add_face(1, i, j + 1, k, true);
            add_face(2, i, j, k, false);
            add_face(2, i, j, k + 1, true);
        }
        // IC(0) factorization (diagonal-only updates for the 7-point stencil).
        ic_diag_.assign(n, 0.0);
        auto neighbor_minus = [&](std::size_t m, int axis) -> std::pair<int, double> {
            int c = cells_[m];
            int i, j, k;
            g.unpack(c, i, j, k);
            int nb[3] = {i, j, k};
            nb[axis] -= 1;
            if (!g.in_bounds(nb[0], nb[1], nb[2])) return {-1, 0.0};
            int cn = g.idx(nb[0], nb[1], nb[2]);
            int mn = cell_index_[cn];
            if (mn < 0) return {-1, 0.0};
            double w = axis == 0 ? a_x_[mn] : (axis == 1 ? a_y_[mn] : a_z_[mn]);
            return {mn, w};
        };
        for (std::size_t m = 0; m < n; ++m) {
            double d = a_diag_[m];
            for (int axis = 0; axis < 3; ++axis) {
                auto [mn, w] = neighbor_minus(m, axis);
                if (mn >= 0 && ic_diag_[mn] > 0) d -= w * w / ic_diag_[mn];
            }
            ic_diag_[m] = d > 1e-14 ? d : std::max(a_diag_[m], 1e-14);
        }
        factor_dirty_ = false;
    }

    void ic_apply(const std::vector<double>& r, std::vector<double>& z) {
        // Solve (L D^-1 L^T) z = r with L from the IC(0) diagonal factor.
        const VoxelGrid& g = *g_;
        std::size_t n = cells_.size();
        z = r;
        for (std::size_t m = 0; m < n; ++m) {
            int c = cells_[m];
            int i, j, k;
            g.unpack(c, i, j, k);
            double acc = z[m];
            auto pull = [&](int axis) {
                int nb[3] = {i, j, k};
                nb[axis] -= 1;
                if (!g.in_bounds(nb[0], nb[1], nb[2])) return;
                int mn = cell_index_[g.idx(nb[0], nb[1], nb[2])];
                if (mn < 0) return;
                double w = axis == 0 ? a_x_[mn] : (axis == 1 ? a_y_[mn] : a_z_[mn]);
                acc -= w * z[mn] / ic_diag_[mn];
            };
            pull(0);
            pull(1);
            pull(2);
            z[m] = acc;
        }
        for (std::size_t m = n; m-- > 0;) {
            int c = cells_[m];
            int i, j, k;
            g.unpack(c, i, j, k);
            double acc = z[m] / ic_diag_[m];
            auto push = [&](int axis, double w) {
                int nb[3] = {i, j, k};
                nb[axis] += 1;
                if (!g.in_bounds(nb[0], nb[1], nb[2])) return;
                int mn = cell_index_[g.idx(nb[0], nb[1], nb[2])];
                if (mn < 0) return;
                acc -= w * z[mn] / ic_diag_[m];
            };
            push(0, a_x_[m]);
            push(1, a_y_[m]);
            push(2, a_z_[m]);
            z[m] = acc;
        }
    }

    void matvec(const std::vector<double>& x, std::vector<double>& y) {
        const VoxelGrid& g = *g_;
        std::size_t n = cells_.size();
        parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t m) {
            int c = cells_[m];
            int i, j, k;
            g.unpack(c, i, j, k);
            double acc = a_diag_[m] * x[m];
            auto touch = [&](int axis, int dirn) {
                int nb[3] = {i, j, k};
                nb[axis] += dirn;
                if (!g.in_bounds(nb[0], nb[1], nb[2])) return;
                int mn = cell_index_[g.idx(nb[0], nb[1], nb[2])];
                if (mn < 0) return;
                double w;
                if (dirn > 0)
                    w = axis == 0 ? a_x_[m] : (axis == 1 ? a_y_[m] : a_z_[m]);
                else
                    w = axis == 0 ? a_x_[mn] : (axis == 1 ? a_y_[mn] : a_z_[mn]);
                acc += w * x[mn];
            };
            touch(0, 1);
            touch(0, -1);
            touch(1, 1);
            touch(1, -1);
            touch(2, 1);
            touch(2, -1);
            y[m] = acc;
        });
    }

    void project(double dt, double t_new) {
        const VoxelGrid& g = *g_;
        std::size_t n = cells_.size();
        if (factor_dirty_) assemble_matrix();
        rhs_.assign(n, 0.0);
        double q_out = outlet_value_internal(t_new);
        double scale = g.h * g.h / dt;
        for (std::size_t m = 0; m < n; ++m) {
            int c = cells_[m];
            rhs_[m] = -cell_divergence(c) * scale;
        }
        for (const auto& of : outlet_faces_) {
            int m = cell_index_[of.cell_in];
            rhs_[m] += phi_[of.cell_in] * q_out;
        }
        if (!has_outlet_) {
            double mean = std::accumulate(rhs_.begin(), rhs_.end(), 0.0) / n;
            for (auto& v : rhs_) v -= mean;
        }

        sol_.assign(n, 0.0);
        r_ = rhs_;
        z_.assign(n, 0.0);
        p_.assign(n, 0.0);
        ap_.assign(n, 0.0);
        double b_norm = 0.0;
        for (double v : rhs_) b_norm = std::max(b_norm, std::abs(v));
        double div_tol = 1e-9 * u_ref_ / g.h * scale;  // scaled-residual target
        double tol = std::max(1e-10 * b_norm, 1e-300);
        if (b_norm > 0) {
            ic_apply(r_, z_);
            p_ = z_;
            double rz = 0.0;
            for (std::size_t m = 0; m < n; ++m) rz += r_[m] * z_[m];
            std::size_t max_iter = 40 * static_cast<std::size_t>(std::sqrt(double(n))) + 200;
            std::size_t it = 0;
            for (; it < max_iter; ++it) {
                matvec(p_, ap_);
                double pap = 0.0;
                for (std::size_t m = 0; m < n; ++m) pap += p_[m] * ap_[m];
                if (pap <= 0) break;
                double alpha = rz / pap;
                double rmax = 0.0;
                for (std::size_t m = 0; m < n; ++m) {
                    sol_[m] += alpha * p_[m];
                    r_[m] -= alpha * ap_[m];
                    rmax = std::max(rmax, std::abs(r_[m]));
                }
                if (rmax <= tol && rmax <= div_tol) break;
                ic_apply(r_, z_);
                double rz_new = 0.0;
                for (std::size_t m = 0; m < n; ++m) rz_new += r_[m] * z_[m];
                double beta = rz_new / rz;
                rz = rz_new;
                for (std::size_t m = 0; m < n; ++m) p_[m] = z_[m] + beta * p_[m];
            }
            if (it >= max_iter)
                throw SimError(ErrKind::PressureSolveDiverged,
                               "pressure solve exceeded max iterations");
        }
        if (!has_outlet_) {
            double mean = std::accumulate(sol_.begin(), sol_.end(), 0.0) / n;
            for (auto& v : sol_) v -= mean;
        }
        for (std::size_t m = 0; m < n; ++m) q_[cells_[m]] = sol_[m];
        for (const auto& of : outlet_faces_) q_[of.cell_out] = q_out;

        // Velocity correction on active and outlet faces.
        double coef = dt / g.h;
        auto correct_axis = [&](int axis, std::vector<double>& comp,
                                const std::vector<FaceKind>& kinds) {
            int n0 = axis == 0 ? g.nx + 1 : g.nx;
            int n1 = axis == 1 ? g.ny + 1 : g.ny;
            int n2 = axis == 2 ? g.nz + 1 : g.nz;
            parallel_for(std::int64_t(n0) * n1 * n2, [&](std::int64_t lin) {
                int i = static_cast<int>(lin % n0);
                int j = static_cast<int>((lin / n0) % n1);
                int k = static_cast<int>(lin / (std::int64_t(n0) * n1));
                std::size_t f = axis == 0 ? u_.xi(i, j, k)
                                          : (axis == 1 ? u_.yi(i, j, k) : u_.zi(i, j, k));
                if (kinds[f] != FaceKind::Active && kinds[f] != FaceKind::Outlet) return;
                int lo[3] = {i, j, k};
                lo[axis] -= 1;
                double q_lo = q_[g.idx(lo[0], lo[1], lo[2])];
                double q_hi = q_[g.idx(i, j, k)];
                comp[f] -= coef * (q_hi - q_lo);
            });
        };
        correct_axis(0, u_.x, kx_);
        correct_axis(1, u_.y, ky_);
        correct_axis(2, u_.z, kz_);
    }
};

// Peak-systole snapshot bundle for downstream stages.
struct FlowSnapshot {
    double t = 0.0;
    FaceField u;
    std::vector<double> q;
};

struct CycleRecord {
    std::vector<FlowSnapshot> peaks;            // one per cycle at peak systole
    std::vector<FlowSnapshot> replay;           // evenly spaced within the last cycle
    double period = kCardiacPeriod;
};

// Integrates n_cycles * T, snapshotting at the inlet-waveform maximum of each
// cycle window; the last cycle is additionally recorded for tracer replay.
inline CycleRecord run_cycles(FlowSolver& solver, const WaveformSpec& inlet_wave, int n_cycles,
                              double period, int replay_per_cycle = 20) {
    if (n_cycles < 1) throw SimError(ErrKind::Config, "n_cycles must be >= 1");
    CycleRecord rec;
    rec.period = period;
    double t0 = solver.time();
    for (int cyc = 0; cyc < n_cycles; ++cyc) {
        double tc0 = t0 + cyc * period;
        double t_peak = peak_time_in_cycle(inlet_wave, tc0, period);
        bool last = cyc == n_cycles - 1;
        struct Mark {
            double t;
            bool peak, replay;
        };
        std::vector<Mark> marks{{t_peak, true, false}};
        if (last)
            for (int s = 0; s < replay_per_cycle; ++s)
                marks.push_back({tc0 + period * s / replay_per_cycle, false, true});
        std::sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.t < b.t; });
        for (const auto& mark : marks) {
            if (mark.t > solver.time()) solver.advance(mark.t - solver.time());
            FlowSnapshot snap{solver.time(), solver.velocity(), solver.pressure_kinematic()};
            if (mark.peak) rec.peaks.push_back(snap);
            if (mark.replay) rec.replay.push_back(std::move(snap));
        }
        solver.advance(tc0 + period - solver.time());
    }
    return rec;
}

}  // namespace aneusim
