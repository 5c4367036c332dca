#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/fields.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Water-phase parameters. The saturation law is Clausius-Clapeyron shaped,
//   pi_vs(T) = pi_ref * exp(-sat_factor * (1/T - 1/T_ref)),
// with sat_factor = L_gl * mu_h / R0 assembled by the configuration layer.
// ---------------------------------------------------------------------------

struct MicroParams {
    double K1 = 0.0;        // condensation rate constant
    double c_l = 1.0;       // surface-area prefactor, S_l = c_l m^(2/3) for large m
    double beta0 = 0.0;     // coagulation kernel magnitude
    double g0_amp = 0.0;    // nucleation shape amplitude
    double g1_amp = 0.0;    // droplet-removal shape amplitude
    double N_star = 1.0;    // aerosol number budget
    double L_gl = 1.0;      // latent heat of the gas-liquid transition
    double alpha0 = 1.0;    // friction law alpha_l(m) = alpha0 * m^(-1/3)
    double pi_ref = 1.0;    // saturation density at T_ref
    double T_ref = 1.0;
    double sat_factor = 1.0;

    double alpha_l(double m) const { return alpha0 * std::pow(m, -1.0 / 3.0); }
};

// ---------------------------------------------------------------------------
// Droplet surface area S_l(m): zero up to m_a/2, c_l m^(2/3) from m_A on,
// quintic Hermite blend in between (value, first and second derivative match
// at both junctions, so the profile is C^2).
// ---------------------------------------------------------------------------

inline double surface_area(double m, const MassGrid& grid, const MicroParams& p) {
    const double lo = 0.5 * grid.m_a;
    const double hi = grid.m_A;
    if (m <= lo) return 0.0;
    if (m >= hi) return p.c_l * std::cbrt(m * m);

    const double h = hi - lo;
    const double t = (m - lo) / h;
    const double f = p.c_l * std::cbrt(hi * hi);
    const double fp = (2.0 / 3.0) * p.c_l / std::cbrt(hi);
    const double fpp = -(2.0 / 9.0) * p.c_l / std::cbrt(hi * hi * hi * hi);
    // p(t) = A t^3 + B t^4 + C t^5 with p(1)=f, p'(1)=fp*h, p''(1)=fpp*h^2
    const double u = fp * h - 3.0 * f;
    const double v = 0.5 * (fpp * h * h - 6.0 * f);
    const double C = v - 3.0 * u;
    const double B = 7.0 * u - 2.0 * v;
    const double A = f - 4.0 * u + v;
    const double t3 = t * t * t;
    return std::max(0.0, t3 * (A + t * (B + t * C)));
}

inline double saturation_density(double T, const MicroParams& p) {
    if (T <= 0.0) fail(Phase::solve, "saturation_density requires T > 0");
    return p.pi_ref * std::exp(-p.sat_factor * (1.0 / T - 1.0 / p.T_ref));
}

// per-droplet condensation (>0) / evaporation (<0) rate
inline double h_gl(double T, double pi, double m, const MassGrid& grid, const MicroParams& p) {
    if (m <= 0.0) return 0.0;
    const double S = surface_area(m, grid, p);
    if (S == 0.0) return 0.0;
    return p.K1 * (S / m) * (pi - saturation_density(T, p));
}

// bulk vapor exchange: the mass-grid quadrature of h_gl * sigma
inline double bulk_exchange(double T, double pi, const double* sigma_cell, const MassGrid& grid,
                            const MicroParams& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.bins(); ++i)
        s += h_gl(T, pi, grid.centers[i], grid, p) * sigma_cell[i] * grid.widths[i];
    return s;
}

// ---------------------------------------------------------------------------
// Coagulation kernel: constant beta0 with a C^1 ramp to zero one bin-width
// before the cutoff, and identically zero for m + m' >= M_cut.
// ---------------------------------------------------------------------------

inline double coag_kernel(double m1, double m2, const MassGrid& grid, const MicroParams& p) {
    const double s = m1 + m2;
    if (s >= grid.M_cut) return 0.0;
    int kc = grid.bin_below(grid.M_cut);
    const double w = grid.widths[static_cast<std::size_t>(std::max(kc, 0))];
    const double gap = (grid.M_cut - s) / w;
    if (gap >= 1.0) return p.beta0;
    const double r = gap * gap * (3.0 - 2.0 * gap);
    return p.beta0 * r;
}

// nucleation shape, support [m_a, m_A], unit integral at unit amplitude
inline double g0_shape(double m, const MassGrid& grid, const MicroParams& p) {
    if (m <= grid.m_a || m >= grid.m_A) return 0.0;
    const double t = (m - grid.m_a) / (grid.m_A - grid.m_a);
    const double b = t * (1.0 - t);
    return p.g0_amp * 140.0 / (grid.m_A - grid.m_a) * b * b * b;
}

// removal shape, support [0, m_A], unit plateau at unit amplitude
inline double g1_shape(double m, const MassGrid& grid, const MicroParams& p) {
    if (m >= grid.m_A) return 0.0;
    const double knee = 0.8 * grid.m_A;
    if (m <= knee) return p.g1_amp;
    const double t = (m - knee) / (grid.m_A - knee);
    const double s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    return p.g1_amp * (1.0 - s);
}

// droplet number density carried by the spectrum
inline double droplet_number(const double* sigma_cell, const MassGrid& grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.bins(); ++i)
        s += sigma_cell[i] / grid.centers[i] * grid.widths[i];
    return s;
}

// ---------------------------------------------------------------------------
// Coagulation collision integrals for one cell.
//   B1(m) = -m sigma(m) int beta(m,m') sigma(m') dm'          (loss)
//   B2(m) = (m/2) int_0^m beta(m-m',m') sigma(m') sigma(m-m') (gain)
// The gain is accumulated pairwise and remapped to the two bins bracketing
// the coalesced mass with the number-preserving split, which makes the
// discrete mass balance sum_bins (B1+B2) dm vanish identically. Pairs whose
// upper remap bin sits at or beyond the cutoff put all mass in the lower bin
// so no gain ever lands at m >= M_cut.
// ---------------------------------------------------------------------------

inline void coagulation_cell(const double* sigma_cell, const MassGrid& grid,
                             const MicroParams& p, double* B1, double* B2) {
    const std::size_t nb = grid.bins();
    for (std::size_t i = 0; i < nb; ++i) { B1[i] = 0.0; B2[i] = 0.0; }
    if (p.beta0 == 0.0) return;

    for (std::size_t i = 0; i < nb; ++i) {
        if (sigma_cell[i] == 0.0) continue;
        double loss = 0.0;
        for (std::size_t j = 0; j < nb; ++j) {
            const double beta = coag_kernel(grid.centers[i], grid.centers[j], grid, p);
            if (beta == 0.0 || sigma_cell[j] == 0.0) continue;
            loss += beta * sigma_cell[j] * grid.widths[j];

            // gain from the ordered pair (i,j), half weight for double counting
            const double mc = grid.centers[i] + grid.centers[j];
            const double mass_rate = 0.5 * mc * beta * sigma_cell[i] * sigma_cell[j] *
                                     grid.widths[i] * grid.widths[j];
            int k = grid.bin_below(mc);
            const auto ku = static_cast<std::size_t>(k);
            if (k + 1 < static_cast<int>(nb) && grid.centers[ku + 1] < grid.M_cut) {
                const double frac =
                    (grid.centers[ku + 1] - mc) / (grid.centers[ku + 1] - grid.centers[ku]);
                const double number_rate = mass_rate / mc;
                B2[ku] += frac * number_rate * grid.centers[ku] / grid.widths[ku];
                B2[ku + 1] +=
                    (1.0 - frac) * number_rate * grid.centers[ku + 1] / grid.widths[ku + 1];
            } else {
                B2[ku] += mass_rate / grid.widths[ku];
            }
        }
        B1[i] = -grid.centers[i] * sigma_cell[i] * loss;
    }
}

inline void coagulation(const Spectrum& sigma, const MassGrid& grid, const MicroParams& p,
                        Spectrum& B1, Spectrum& B2) {
    const std::size_t nc = sigma.cells();
    B1 = Spectrum(grid.bins(), nc);
    B2 = Spectrum(grid.bins(), nc);
    par::parallel_for(nc, [&](std::size_t c) {
        coagulation_cell(&sigma.data[c * grid.bins()], grid, p, &B1.data[c * grid.bins()],
                         &B2.data[c * grid.bins()]);
    });
}

// nucleation source, per bin, for one cell
inline void nucleation_cell(double pi, double T, const double* sigma_cell, const MassGrid& grid,
                            const MicroParams& p, double* src) {
    const double super = pos_part(pi - saturation_density(T, p));
    const double budget = pos_part(p.N_star - droplet_number(sigma_cell, grid));
    const double f = super * budget;
    for (std::size_t i = 0; i < grid.bins(); ++i)
        src[i] = f > 0.0 ? g0_shape(grid.centers[i], grid, p) * f : 0.0;
}

// droplet-removal sink (non-positive), per bin, for one cell
inline void evaporation_removal_cell(double pi, double T, const double* sigma_cell,
                                     const MassGrid& grid, const MicroParams& p, double* sink) {
    const double sub = neg_part(pi - saturation_density(T, p));
    for (std::size_t i = 0; i < grid.bins(); ++i)
        sink[i] = sub > 0.0 ? -g1_shape(grid.centers[i], grid, p) * sub * sigma_cell[i] : 0.0;
}

// ---------------------------------------------------------------------------
// Spectrum transport step: one forward-Euler stage combining
//   - spatial advection by u(m,x) = v - grad(Phi)/alpha_l(m),
//   - conservative upwind drift in mass space with edge velocity m*h_gl,
//   - linear reaction with coefficient  h_gl - m int(beta sigma_bar) - g1[..]-
//   - sources: nucleation + coagulation gain of the lagged spectrum.
// All coefficient fields (T, pi, sigma_bar) are frozen inputs; for plain
// sequential stepping pass the current state for them.
// ---------------------------------------------------------------------------

enum class AdvectionScheme { upwind, semi_lagrangian };

struct MicroStepStats {
    double max_drift_cfl = 0.0;
    double max_rate_dt = 0.0;
    std::size_t clamped = 0;       // tiny negatives zeroed
    double support_leak = 0.0;     // mass fraction outside the support window
    double top_bin_fraction = 0.0;
};

namespace detail {

// upwind flux-form spatial advection tendency for one bin of the spectrum
inline void spectrum_advect_tendency(const Domain& d, const std::vector<double>& ub,
                                     const Spectrum& sigma, std::size_t bin,
                                     std::vector<double>& tend) {
    // ub: per-cell velocity component stacked [axis*ncells + cell]
    const std::size_t nc = d.size();
    for (std::size_t c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
            const int pn = d.neighbor(static_cast<int>(c), a, +1);
            const int mn = d.neighbor(static_cast<int>(c), a, -1);
            const double uc = ub[static_cast<std::size_t>(a) * nc + c];
            if (pn >= 0) {
                const auto pu = static_cast<std::size_t>(pn);
                const double uf = 0.5 * (uc + ub[static_cast<std::size_t>(a) * nc + pu]);
                const double flux = uf > 0 ? uf * sigma.at(c, bin) : uf * sigma.at(pu, bin);
                acc -= flux / d.hx;
            }
            if (mn >= 0) {
                const auto mu = static_cast<std::size_t>(mn);
                const double uf = 0.5 * (uc + ub[static_cast<std::size_t>(a) * nc + mu]);
                const double flux = uf > 0 ? uf * sigma.at(mu, bin) : uf * sigma.at(c, bin);
                acc += flux / d.hx;
            }
        }
        tend[c] = acc;
    }
}

}  // namespace detail

inline Spectrum spectrum_step(const Domain& d, const MassGrid& grid, const MicroParams& p,
                              const Spectrum& sigma, const VecField& v, const VecField& grad_phi,
                              const Field& T_bar, const Field& pi_bar, const Spectrum& sigma_bar,
                              double dt, MicroStepStats* stats = nullptr,
                              AdvectionScheme scheme = AdvectionScheme::upwind) {
    const std::size_t nc = d.size();
    const std::size_t nb = grid.bins();
    MicroStepStats local;
    Spectrum out(nb, nc);

    // --- spatial advection: flux-form tendency, or a semi-Lagrangian
    //     resample of the whole spectrum first ---
    std::vector<double> adv(nb * nc, 0.0);
    const Spectrum* base = &sigma;
    Spectrum resampled;
    if (scheme == AdvectionScheme::semi_lagrangian) {
        resampled = Spectrum(nb, nc);
        Field slice(nc);
        VecField ub(nc);
        for (std::size_t b = 0; b < nb; ++b) {
            const double inv_alpha = 1.0 / p.alpha_l(grid.centers[b]);
            for (std::size_t c = 0; c < nc; ++c) {
                ub[c] = v[c] - grad_phi[c] * inv_alpha;
                slice[c] = sigma.at(c, b);
            }
            LatticeSampler ls(d, slice);
            for (std::size_t c = 0; c < nc; ++c)
                resampled.at(c, b) = ls(d.centers[c] - ub[c] * dt);
        }
        base = &resampled;
    } else {
        std::vector<double> ub(3 * nc);
        std::vector<double> tend(nc);
        for (std::size_t b = 0; b < nb; ++b) {
            const double inv_alpha = 1.0 / p.alpha_l(grid.centers[b]);
            for (std::size_t c = 0; c < nc; ++c)
                for (int a = 0; a < 3; ++a)
                    ub[static_cast<std::size_t>(a) * nc + c] =
                        v[c][a] - grad_phi[c][a] * inv_alpha;
            detail::spectrum_advect_tendency(d, ub, sigma, b, tend);
            for (std::size_t c = 0; c < nc; ++c) adv[c * nb + b] = tend[c];
        }
    }

    // --- per-cell drift + reaction ---
    std::vector<MicroStepStats> cell_stats(nc);
    par::parallel_for(nc, [&](std::size_t c) {
        MicroStepStats& st = cell_stats[c];
        const double T = T_bar[c];
        const double pi = pi_bar[c];
        const double* sg = &base->data[c * nb];
        const double* sgb = &sigma_bar.data[c * nb];

        // mass-space drift, conservative upwind on bin edges
        std::vector<double> flux(nb + 1, 0.0);
        for (std::size_t e = 1; e < nb; ++e) {
            const double me = grid.edges[e];
            const double w = me * h_gl(T, pi, me, grid, p);
            flux[e] = w > 0 ? w * sg[e - 1] : w * sg[e];
            const double cfl =
                dt * std::abs(w) / std::min(grid.widths[e - 1], grid.widths[e]);
            st.max_drift_cfl = std::max(st.max_drift_cfl, cfl);
        }

        std::vector<double> src(nb);
        nucleation_cell(pi, T, sgb, grid, p, src.data());
        const double sub = neg_part(pi - saturation_density(T, p));

        std::vector<double> b2(nb, 0.0), b1tmp(nb, 0.0);
        if (p.beta0 != 0.0) coagulation_cell(sgb, grid, p, b1tmp.data(), b2.data());

        for (std::size_t i = 0; i < nb; ++i) {
            const double m = grid.centers[i];
            // loss rate (1/time) against the lagged spectrum
            double coag_loss = 0.0;
            if (p.beta0 != 0.0)
                for (std::size_t j = 0; j < nb; ++j)
                    coag_loss += coag_kernel(m, grid.centers[j], grid, p) * sgb[j] *
                                 grid.widths[j];
            const double c1 = h_gl(T, pi, m, grid, p) - m * coag_loss -
                              g1_shape(m, grid, p) * sub;
            st.max_rate_dt = std::max(st.max_rate_dt, dt * std::abs(c1));

            const double drift = -(flux[i + 1] - flux[i]) / grid.widths[i];
            double val = sg[i] + dt * (adv[c * nb + i] + drift + c1 * sg[i] + src[i] + b2[i]);
            out.data[c * nb + i] = val;
        }
    });

    for (auto& st : cell_stats) {
        local.max_drift_cfl = std::max(local.max_drift_cfl, st.max_drift_cfl);
        local.max_rate_dt = std::max(local.max_rate_dt, st.max_rate_dt);
    }
    if (local.max_drift_cfl > 0.9)
        fail(Phase::solve, "spectrum_step: mass-drift CFL " + std::to_string(local.max_drift_cfl) +
                               " exceeds 0.9; reduce dt");
    if (local.max_rate_dt > 0.9)
        fail(Phase::solve, "spectrum_step: reaction rate * dt " +
                               std::to_string(local.max_rate_dt) + " exceeds 0.9; reduce dt");

    // --- positivity and support bookkeeping ---
    double scale = 0.0;
    for (double x : out.data) scale = std::max(scale, std::abs(x));
    double total = 0.0, outside = 0.0, top = 0.0;
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t i = 0; i < nb; ++i) {
            double& x = out.data[c * nb + i];
            if (x < 0.0) {
                if (x < -1e-14 * scale - 1e-300)
                    fail(Phase::solve, "spectrum_step produced a negative value beyond roundoff");
                x = 0.0;
                ++local.clamped;
            }
            const double mass = x * grid.widths[i];
            total += mass;
            const double m = grid.centers[i];
            if (m <= 0.5 * grid.m_a || m >= grid.M1_bar) outside += mass;
            if (i + 1 == nb) top += mass;
        }
    local.support_leak = total > 0 ? outside / total : 0.0;
    local.top_bin_fraction = total > 0 ? top / total : 0.0;
    if (total > 0 && top > 1e-12 * total)
        fail(Phase::solve,
             "spectrum_step: droplet mass reached the top bin; horizon or M1_bar misconfigured");

    if (stats) *stats = local;
    return out;
}

// discrete sup |d sigma / dm| over adjacent bins
inline double dm_sigma_diagnostic(const Spectrum& sigma, const MassGrid& grid) {
    double sup = 0.0;
    const std::size_t nb = grid.bins();
    for (std::size_t c = 0; c < sigma.cells(); ++c)
        for (std::size_t i = 0; i + 1 < nb; ++i) {
            const double dm = grid.centers[i + 1] - grid.centers[i];
            sup = std::max(sup, std::abs(sigma.at(c, i + 1) - sigma.at(c, i)) / dm);
        }
    return sup;
}

// total liquid water mass per unit volume of one cell
inline double spectrum_cell_mass(const double* sigma_cell, const MassGrid& grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.bins(); ++i) s += sigma_cell[i] * grid.widths[i];
    return s;
}

}  // namespace nimbus
