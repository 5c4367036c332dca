#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/fields.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/linsolve.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/microphysics.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Prognostic gas state on the active cells. Velocity is held at zero on
// boundary cells (they act as the Dirichlet layer); temperature on boundary
// cells mirrors the adjacent interior values so the one-sided normal
// derivative vanishes identically.
// ---------------------------------------------------------------------------

struct GasState {
    Field rho, pi, T;
    VecField v;
};

struct PhysParams {
    double eta = 0.01;    // shear viscosity
    double zeta = 0.01;   // bulk viscosity
    double kappa = 0.01;  // thermal conductivity
    double c_v = 1.0;
    double R0 = 1.0;
    double mu_a = 1.0;
    double mu_h = 0.6;
    Field phi;            // external potential at cell centers
    VecField grad_phi;    // its analytic gradient (grad(phi).n = 0 on the wall)
    double cg_tol = 1e-10;
    int cg_max_iters = 10000;
    int mixed_iters = 2;  // lagged sweeps of the grad(div v) coupling
};

inline Field pressure(const Field& rho, const Field& pi, const Field& T, const PhysParams& p) {
    Field out(rho.size());
    for (std::size_t c = 0; c < rho.size(); ++c)
        out[c] = p.R0 * (rho[c] / p.mu_a + pi[c] / p.mu_h) * T[c];
    return out;
}

// droplet velocity for one droplet mass: u = v - grad(phi)/alpha_l(m)
inline VecField droplet_velocity(const VecField& v, const VecField& grad_phi, double m,
                                 const MicroParams& mp) {
    VecField u(v.size());
    const double inv_alpha = 1.0 / mp.alpha_l(m);
    for (std::size_t c = 0; c < v.size(); ++c) u[c] = v[c] - grad_phi[c] * inv_alpha;
    return u;
}

// ---------------------------------------------------------------------------
// Conservative upwind transport. Fluxes live on faces between active cells;
// faces on the domain boundary carry no flux, so the cell-sum of the tracer
// is conserved to roundoff.
// ---------------------------------------------------------------------------

namespace detail {

// semi-Lagrangian update: trace the characteristic back one step and sample.
// Unconditionally stable but not conservative; kept behind a config switch
// for accuracy studies.
inline Field semi_lagrangian(const Domain& d, const Field& scalar, const VecField& v,
                             double dt) {
    LatticeSampler ls(d, scalar);
    Field out(d.size());
    par::parallel_for(d.size(), [&](std::size_t c) {
        out[c] = ls(d.centers[c] - v[c] * dt);
    });
    return out;
}

inline void upwind_tendency(const Domain& d, const Field& scalar, const VecField& v,
                            Field& tend) {
    const std::size_t nc = d.size();
    par::parallel_for(nc, [&](std::size_t c) {
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
            const int pn = d.neighbor(static_cast<int>(c), a, +1);
            const int mn = d.neighbor(static_cast<int>(c), a, -1);
            if (pn >= 0) {
                const auto pu = static_cast<std::size_t>(pn);
                const double uf = 0.5 * (v[c][a] + v[pu][a]);
                acc -= (uf > 0 ? uf * scalar[c] : uf * scalar[pu]) / d.hx;
            }
            if (mn >= 0) {
                const auto mu = static_cast<std::size_t>(mn);
                const double uf = 0.5 * (v[c][a] + v[mu][a]);
                acc += (uf > 0 ? uf * scalar[mu] : uf * scalar[c]) / d.hx;
            }
        }
        tend[c] = acc;
    });
}

inline void check_cfl(const Domain& d, const VecField& v, double dt, const char* who) {
    double worst = 0.0;
    for (const Vec3& u : v)
        worst = std::max(worst, std::abs(u.x) + std::abs(u.y) + std::abs(u.z));
    const double cfl = dt * worst / d.hx;
    if (cfl > 0.9)
        fail(Phase::solve, std::string(who) + ": advective CFL " + std::to_string(cfl) +
                               " exceeds 0.9; reduce dt");
}

}  // namespace detail

inline Field advect_density(const Domain& d, const Field& rho, const VecField& v, double dt,
                            AdvectionScheme scheme = AdvectionScheme::upwind) {
    if (scheme == AdvectionScheme::semi_lagrangian)
        return detail::semi_lagrangian(d, rho, v, dt);
    detail::check_cfl(d, v, dt, "advect_density");
    Field tend(d.size());
    detail::upwind_tendency(d, rho, v, tend);
    Field out(d.size());
    for (std::size_t c = 0; c < d.size(); ++c) out[c] = rho[c] + dt * tend[c];
    return out;
}

// ---------------------------------------------------------------------------
// Vapor transport with the condensation/evaporation sink. The sink magnitude
// uses the frozen inputs (pi_src, sigma_src, T_bar); the condensation branch
// never removes more than the cell's available supersaturation.
// ---------------------------------------------------------------------------

struct VaporStepStats {
    std::size_t capped = 0;    // removals limited by available supersaturation
    std::size_t clamped = 0;   // tiny negatives zeroed
};

inline Field vapor_step(const Domain& d, const MassGrid& grid, const MicroParams& mp,
                        const Field& pi, const VecField& v, const Field& T_bar,
                        const Field& pi_src, const Spectrum& sigma_src, double dt,
                        VaporStepStats* stats = nullptr,
                        AdvectionScheme scheme = AdvectionScheme::upwind) {
    const std::size_t nc = d.size();
    Field tend(nc, 0.0);
    Field advected;
    if (scheme == AdvectionScheme::semi_lagrangian) {
        advected = detail::semi_lagrangian(d, pi, v, dt);
    } else {
        detail::check_cfl(d, v, dt, "vapor_step");
        detail::upwind_tendency(d, pi, v, tend);
    }

    VaporStepStats st;
    Field out(nc);
    double scale = 0.0;
    for (double x : pi) scale = std::max(scale, std::abs(x));
    for (std::size_t c = 0; c < nc; ++c) {
        const double H = bulk_exchange(T_bar[c], pi_src[c], &sigma_src.data[c * grid.bins()],
                                       grid, mp);
        double dpi = -dt * H;
        if (H > 0.0) {
            const double avail = pos_part(pi[c] - saturation_density(T_bar[c], mp));
            if (dt * H > avail) {
                dpi = -avail;
                ++st.capped;
            }
        }
        const double base = scheme == AdvectionScheme::semi_lagrangian
                                ? advected[c]
                                : pi[c] + dt * tend[c];
        double val = base + dpi;
        if (val < 0.0) {
            if (val < -1e-12 * scale - 1e-300)
                fail(Phase::solve, "vapor_step produced a negative density beyond roundoff");
            val = 0.0;
            ++st.clamped;
        }
        out[c] = val;
    }
    if (stats) *stats = st;
    return out;
}

// ---------------------------------------------------------------------------
// Viscous dissipation in the symmetrized form
//   (eta/2) sum_ij (d_i v_j + d_j v_i - (2/3) d_ij div v)^2 + zeta (div v)^2,
// which is algebraically the stress-times-gradient contraction and manifestly
// non-negative.
// ---------------------------------------------------------------------------

inline Field viscous_dissipation(const Domain& d, const VecField& v, const PhysParams& p) {
    Field out(d.size(), 0.0);
    par::parallel_for(d.size(), [&](std::size_t c) {
        double G[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                G[i][j] = vec_axis_derivative(d, v, static_cast<int>(c), i, j);
        const double div = G[0][0] + G[1][1] + G[2][2];
        double s2 = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double S = G[i][j] + G[j][i] - (i == j ? 2.0 / 3.0 * div : 0.0);
                s2 += S * S;
            }
        out[c] = 0.5 * p.eta * s2 + p.zeta * div * div;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Implicit (backward) parabolic steps. Unknowns live on interior cells;
// boundary cells hold the Dirichlet value 0 for velocity and mirror copies
// for temperature (zero-flux interface). The grad(div v) cross coupling is
// lagged and swept `mixed_iters` times per step.
// ---------------------------------------------------------------------------

namespace detail {

struct InteriorIndex {
    std::vector<int> cells;       // interior cell ids
    std::vector<int> cell_to_eq;  // active id -> equation index or -1

    explicit InteriorIndex(const Domain& d) {
        cell_to_eq.assign(d.size(), -1);
        for (std::size_t c = 0; c < d.size(); ++c)
            if (!d.boundary[c]) {
                cell_to_eq[c] = static_cast<int>(cells.size());
                cells.push_back(static_cast<int>(c));
            }
    }
};

}  // namespace detail

inline VecField momentum_step(const Domain& d, const MassGrid& grid, const Field& rho,
                              const Field& pi, const Spectrum& sigma, const Field& T_bar,
                              const VecField& v_bar, const VecField& v_old,
                              const PhysParams& p, double dt,
                              const VecField* extra_force = nullptr) {
    const std::size_t nc = d.size();
    detail::InteriorIndex idx(d);
    const std::size_t ne = idx.cells.size();
    const double h2 = d.hx * d.hx;
    const double mix = p.zeta + p.eta / 3.0;

    Field coef(nc);
    for (std::size_t c = 0; c < nc; ++c) coef[c] = rho[c] + pi[c];

    // frozen right-hand side: advection by the lagged velocity, pressure
    // gradient with the lagged temperature, gravity with the full load
    Field pt = pressure(rho, pi, T_bar, p);
    VecField rhs(nc, Vec3{});
    for (std::size_t c = 0; c < nc; ++c) {
        Vec3 adv{};
        for (int comp = 0; comp < 3; ++comp) {
            double s = 0.0;
            for (int ax = 0; ax < 3; ++ax)
                s += v_bar[c][ax] * vec_axis_derivative(d, v_bar, static_cast<int>(c), comp, ax);
            adv[comp] = s;
        }
        const Vec3 grad_pt = gradient(d, pt, static_cast<int>(c));
        const double load =
            spectrum_cell_mass(&sigma.data[c * grid.bins()], grid) + rho[c] + pi[c];
        rhs[c] = adv * (-coef[c]) - grad_pt - p.grad_phi[c] * load;
        if (extra_force) rhs[c] += (*extra_force)[c];
    }

    VecField v_new = v_old;
    for (std::size_t c = 0; c < nc; ++c)
        if (d.boundary[c]) v_new[c] = Vec3{};

    std::vector<double> diag(ne), b(ne), x(ne), y(ne);

    for (int sweep = 0; sweep < p.mixed_iters; ++sweep) {
        // mixed part of grad(div v) from the current iterate
        Field div_partial(nc, 0.0);
        VecField mixed(nc, Vec3{});
        for (int comp = 0; comp < 3; ++comp) {
            for (std::size_t c = 0; c < nc; ++c) {
                double s = 0.0;
                for (int ax = 0; ax < 3; ++ax)
                    if (ax != comp)
                        s += vec_axis_derivative(d, v_new, static_cast<int>(c), ax, ax);
                div_partial[c] = s;
            }
            for (std::size_t c = 0; c < nc; ++c)
                mixed[c][comp] = axis_derivative(d, div_partial, static_cast<int>(c), comp);
        }

        VecField v_next = v_new;
        for (int comp = 0; comp < 3; ++comp) {
            auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
                par::parallel_for(ne, [&](std::size_t e) {
                    const int cell = idx.cells[e];
                    const auto cu = static_cast<std::size_t>(cell);
                    double lap = 0.0, dir2 = 0.0;
                    for (int ax = 0; ax < 3; ++ax)
                        for (int s = -1; s <= 1; s += 2) {
                            const int nb = d.neighbor(cell, ax, s);
                            const int eq = nb >= 0 ? idx.cell_to_eq[static_cast<std::size_t>(nb)]
                                                   : -1;
                            const double val = eq >= 0 ? in[static_cast<std::size_t>(eq)] : 0.0;
                            const double cur = in[e];
                            const double contrib = (val - cur) / h2;
                            lap += contrib;
                            if (ax == comp) dir2 += contrib;
                        }
                    out[e] = coef[cu] / dt * in[e] - p.eta * lap - mix * dir2;
                });
            };
            for (std::size_t e = 0; e < ne; ++e) {
                const auto cu = static_cast<std::size_t>(idx.cells[e]);
                diag[e] = coef[cu] / dt + (6.0 * p.eta + 2.0 * mix) / h2;
                b[e] = coef[cu] / dt * v_old[cu][comp] + rhs[cu][comp] + mix * mixed[cu][comp];
                x[e] = v_new[cu][comp];
            }
            pcg(ne, apply, diag, b, x, p.cg_tol, p.cg_max_iters);
            for (std::size_t e = 0; e < ne; ++e)
                v_next[static_cast<std::size_t>(idx.cells[e])][comp] = x[e];
        }
        v_new = std::move(v_next);
    }
    return v_new;
}

// mirror boundary temperatures from adjacent interior cells
inline void mirror_boundary_temperature(const Domain& d, Field& T) {
    for (std::size_t c = 0; c < d.size(); ++c) {
        if (!d.boundary[c]) continue;
        double sum = 0.0;
        int cnt = 0;
        for (int ax = 0; ax < 3; ++ax)
            for (int s = -1; s <= 1; s += 2) {
                const int nb = d.neighbor(static_cast<int>(c), ax, s);
                if (nb >= 0 && !d.boundary[static_cast<std::size_t>(nb)]) {
                    sum += T[static_cast<std::size_t>(nb)];
                    ++cnt;
                }
            }
        if (cnt > 0) T[c] = sum / cnt;
    }
}

inline Field temperature_step(const Domain& d, const Field& rho, const Field& pi,
                              const Field& T_old, const Field& T_bar, const VecField& v_bar,
                              const Field& divE, const Field& H_gl_field, const PhysParams& p,
                              double dt, const Field* extra_source = nullptr,
                              bool* positive_ok = nullptr) {
    const std::size_t nc = d.size();
    detail::InteriorIndex idx(d);
    const std::size_t ne = idx.cells.size();
    const double h2 = d.hx * d.hx;

    Field coef(nc);
    for (std::size_t c = 0; c < nc; ++c) coef[c] = (rho[c] + pi[c]) * p.c_v;

    Field psi = viscous_dissipation(d, v_bar, p);
    Field rhs(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        double adv = 0.0;
        for (int ax = 0; ax < 3; ++ax)
            adv += v_bar[c][ax] * axis_derivative(d, T_bar, static_cast<int>(c), ax);
        const double divv = divergence(d, v_bar, static_cast<int>(c));
        const double work = p.R0 * (rho[c] / p.mu_a + pi[c] / p.mu_h) * T_bar[c] * divv;
        rhs[c] = -coef[c] * adv - work + psi[c] - divE[c] + H_gl_field[c];
        if (extra_source) rhs[c] += (*extra_source)[c];
    }

    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        par::parallel_for(ne, [&](std::size_t e) {
            const int cell = idx.cells[e];
            const auto cu = static_cast<std::size_t>(cell);
            double lap = 0.0;
            for (int ax = 0; ax < 3; ++ax)
                for (int s = -1; s <= 1; s += 2) {
                    const int nb = d.neighbor(cell, ax, s);
                    const int eq =
                        nb >= 0 ? idx.cell_to_eq[static_cast<std::size_t>(nb)] : -1;
                    // missing or boundary neighbor: zero-flux face (mirror)
                    if (eq >= 0) lap += (in[static_cast<std::size_t>(eq)] - in[e]) / h2;
                }
            out[e] = coef[cu] / dt * in[e] - p.kappa * lap;
        });
    };

    std::vector<double> diag(ne), b(ne), x(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        const int cell = idx.cells[e];
        const auto cu = static_cast<std::size_t>(cell);
        int inner_neighbors = 0;
        for (int ax = 0; ax < 3; ++ax)
            for (int s = -1; s <= 1; s += 2) {
                const int nb = d.neighbor(cell, ax, s);
                if (nb >= 0 && idx.cell_to_eq[static_cast<std::size_t>(nb)] >= 0)
                    ++inner_neighbors;
            }
        diag[e] = coef[cu] / dt + p.kappa * inner_neighbors / h2;
        b[e] = coef[cu] / dt * T_old[cu] + rhs[cu];
        x[e] = T_old[cu];
    }
    pcg(ne, apply, diag, b, x, p.cg_tol, p.cg_max_iters);

    Field T_new = T_old;
    for (std::size_t e = 0; e < ne; ++e)
        T_new[static_cast<std::size_t>(idx.cells[e])] = x[e];
    mirror_boundary_temperature(d, T_new);

    bool positive = true;
    for (double t : T_new)
        if (t <= 0.0) positive = false;
    if (positive_ok)
        *positive_ok = positive;  // the caller decides (horizon shrink)
    else if (!positive)
        fail(Phase::solve, "temperature_step: non-positive temperature detected");
    return T_new;
}

}  // namespace nimbus
