#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/fields.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/optics.hpp"
#include "nimbus/quadrature.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Stationary spectral transfer along backward rays, solved per time level by
// Picard iteration on the integral form
//   I(x,q) = I0(exit) e^{-tau(exit)}
//          + int_{alpha0}^0 [scattering(I) + emission] e^{-tau(alpha)} dalpha.
//
// Source integrals use per-segment exponential weighting,
//   sum_seg  (J/b)_seg (e^{-tau_in} - e^{-tau_out}),
// with trapezoidal optical-depth increments, so piecewise-constant slabs and
// the isothermal equilibrium I = B are reproduced to roundoff rather than to
// the marching step.
// ---------------------------------------------------------------------------

struct RadiationSetup {
    const Domain* domain = nullptr;
    const AngularQuadrature* quad = nullptr;
    const WavelengthBands* bands = nullptr;
    const MassGrid* grid = nullptr;
    PlanckConstants pc = PlanckConstants::nondimensional();
    double ray_step_factor = 0.5;  // marching step = factor * hx

    double ray_step() const { return ray_step_factor * domain->hx; }
};

struct RadState {
    const Field* rho = nullptr;
    const Field* pi = nullptr;
    const Spectrum* sigma = nullptr;
    const Field* T = nullptr;
};

// admissible temperature window [inf T0 / 2, 3 sup T0 / 2]
struct TemperatureWindow {
    double lo = 0.0, hi = 0.0;

    static TemperatureWindow from_initial(const Field& T0) {
        double tmin = T0.empty() ? 0.0 : T0[0], tmax = tmin;
        for (double t : T0) { tmin = std::min(tmin, t); tmax = std::max(tmax, t); }
        return {0.5 * tmin, 1.5 * tmax};
    }
};

// ---------------------------------------------------------------------------
// Hypothesis validation on the initial data. Each inequality is computed and
// reported by name with both sides.
// ---------------------------------------------------------------------------

struct HypothesesReport {
    double phase_norm_err = 0.0;     // worst discrete normalization defect
    double r3_sigma_sup = 0.0;       // sup_x int r3 sigma0 dm, worst band
    double eps1 = 0.0;               // 2 * sup(r1 P1 rho0 + r2 P2 pi0)
    double eps2 = 0.0;
    double K_b = 0.0;                // worst band
    std::vector<double> K_b_band;
    double eps_b0 = 1.0;             // min over bands of inf exp(-I_b0)
    double contraction_budget = 0.0; // sup_band sqrt(K_b supP3) + eps1/2
    bool passed = false;
    std::vector<std::string> failures;

    std::string failure_text() const {
        std::string s;
        for (const auto& f : failures) {
            if (!s.empty()) s += "; ";
            s += f;
        }
        return s;
    }
};

namespace detail {

// optical depth along the backward ray from x to x + alpha_lo * q (trapezoid)
inline double ray_tau(const LatticeSampler& b, const Vec3& x, const Vec3& q, double alpha_lo,
                      double step) {
    const double len = -alpha_lo;
    if (len <= 0.0) return 0.0;
    const int nseg = std::max(1, static_cast<int>(std::ceil(len / step)));
    const double ds = len / nseg;
    double tau = 0.0;
    double b_prev = b(x);
    for (int s = 1; s <= nseg; ++s) {
        const Vec3 p = x - q * (ds * s);
        const double bs = b(p);
        tau += 0.5 * (b_prev + bs) * ds;
        b_prev = bs;
    }
    return tau;
}

// formal solution along one ray given extinction and total-source samplers
inline double ray_formal_solution(const LatticeSampler& b, const LatticeSampler& J,
                                  const Vec3& x, const Vec3& q, double alpha_lo, double step,
                                  double inflow) {
    const double len = -alpha_lo;
    if (len <= 0.0) return inflow;
    const int nseg = std::max(1, static_cast<int>(std::ceil(len / step)));
    const double ds = len / nseg;
    double acc = 0.0;
    double exp_in = 1.0;
    double tau = 0.0;
    double b_prev = b(x), f_prev = J(x);
    for (int s = 1; s <= nseg; ++s) {
        const Vec3 p = x - q * (ds * s);
        const double bs = b(p);
        const double fs = J(p);
        tau += 0.5 * (b_prev + bs) * ds;
        const double exp_out = std::exp(-tau);
        const double denom = b_prev + bs;
        if (denom > 1e-300)
            acc += (f_prev + fs) / denom * (exp_in - exp_out);
        else
            acc += 0.5 * (f_prev + fs) * ds * exp_in;
        exp_in = exp_out;
        b_prev = bs;
        f_prev = fs;
    }
    return acc + inflow * exp_in;
}

// scan rays: all (cell, direction) pairs plus boundary chords (outward
// quadrature directions and the outward normal from each boundary sample),
// so that e.g. the diameter chord of the ball is represented exactly.
template <class Fn>
inline void for_each_scan_ray(const Domain& d, const AngularQuadrature& quad, Fn&& fn) {
    for (std::size_t c = 0; c < d.size(); ++c)
        for (std::size_t j = 0; j < quad.size(); ++j) fn(d.centers[c], quad.nodes[j]);
    for (std::size_t c = 0; c < d.size(); ++c) {
        if (!d.boundary[c]) continue;
        const Vec3 p = d.project_to_boundary(d.centers[c]);
        const Vec3 nrm = d.outward_normal(p);
        for (std::size_t j = 0; j < quad.size(); ++j)
            if (dot(quad.nodes[j], nrm) > 0.0) fn(p, quad.nodes[j]);
        fn(p, nrm);
    }
}

inline double scan_tau_max(const RadiationSetup& su, const LatticeSampler& b) {
    double tmax = 0.0;
    for_each_scan_ray(*su.domain, *su.quad, [&](const Vec3& x, const Vec3& q) {
        const double a0 = exit_distance(*su.domain, x, q);
        tmax = std::max(tmax, ray_tau(b, x, q, a0, su.ray_step()));
    });
    return tmax;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Extinction and optical depth
// ---------------------------------------------------------------------------

inline Field extinction_field(const RadiationSetup& su, const RadState& st,
                              const OpticalCoefficients& oc, std::size_t band) {
    const auto& o = oc.bands[band];
    const MassGrid& g = *su.grid;
    const std::size_t nc = su.domain->size();
    Field b(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        const double rho = (*st.rho)[c];
        const double pi = (*st.pi)[c];
        if (rho < 0.0 || pi < 0.0)
            fail(Phase::solve, "extinction_field: negative density input");
        double s3 = 0.0;
        for (std::size_t i = 0; i < g.bins(); ++i) {
            const double sg = st.sigma->at(c, i);
            if (sg < 0.0) fail(Phase::solve, "extinction_field: negative spectrum input");
            s3 += (o.a3[i] + o.r3[i]) * sg * g.widths[i];
        }
        b[c] = (o.a1 + o.r1) * rho + (o.a2 + o.r2) * pi + s3;
    }
    return b;
}

inline double optical_depth(const RadiationSetup& su, const Field& b, const Vec3& x,
                            double alpha, const Vec3& q) {
    const double a0 = exit_distance(*su.domain, x, q);
    if (alpha < a0 - 1e-12)
        fail(Phase::solve, "optical_depth: ray parameter below the exit parameter");
    if (alpha > 0.0) fail(Phase::solve, "optical_depth: ray parameter must be <= 0");
    LatticeSampler lb(*su.domain, b);
    return detail::ray_tau(lb, x, q, std::max(alpha, a0), su.ray_step());
}

// ---------------------------------------------------------------------------
// Per-solve workspace: everything that is fixed while Picard iterates.
// ---------------------------------------------------------------------------

class RadiationWorkspace {
public:
    RadiationWorkspace(const RadiationSetup& su, const RadState& st,
                       const OpticalCoefficients& oc, const BoundaryIntensity& bi)
        : su_(su), oc_(&oc) {
        const Domain& d = *su.domain;
        const MassGrid& g = *su.grid;
        const std::size_t nc = d.size();
        const std::size_t nbands = su.bands->count();

        bands_.resize(nbands);
        for (std::size_t band = 0; band < nbands; ++band) {
            BandData& bd = bands_[band];
            bd.b = extinction_field(su, st, oc, band);
            const auto& o = oc.bands[band];
            bd.sc1.assign(nc, 0.0);
            bd.sc2.assign(nc, 0.0);
            bd.sc3.assign(nc, 0.0);
            bd.em.assign(nc, 0.0);
            for (std::size_t c = 0; c < nc; ++c) {
                bd.sc1[c] = o.r1 * (*st.rho)[c];
                bd.sc2[c] = o.r2 * (*st.pi)[c];
                double r3s = 0.0, a3s = 0.0;
                for (std::size_t i = 0; i < g.bins(); ++i) {
                    r3s += o.r3[i] * st.sigma->at(c, i) * g.widths[i];
                    a3s += o.a3[i] * st.sigma->at(c, i) * g.widths[i];
                }
                bd.sc3[c] = r3s;
                const double emit_coef = o.a1 * (*st.rho)[c] + o.a2 * (*st.pi)[c] + a3s;
                bd.em[c] = emit_coef * band_planck(su.pc, *su.bands, band, (*st.T)[c]);
            }
            bd.lb = std::make_unique<LatticeSampler>(d, bd.b);
            bd.inflow = bi.at(su.pc, *su.bands, band);

            // exit geometry and attenuation extrema on the scan set
            bd.eps_b = 1.0;
            detail::for_each_scan_ray(d, *su.quad, [&](const Vec3& x, const Vec3& q) {
                const double a0 = exit_distance(d, x, q);
                const double tau = detail::ray_tau(*bd.lb, x, q, a0, su.ray_step());
                bd.eps_b = std::min(bd.eps_b, std::exp(-tau));
            });
        }

        alpha0_.assign(nc * su.quad->size(), 0.0);
        for (std::size_t c = 0; c < nc; ++c)
            for (std::size_t j = 0; j < su.quad->size(); ++j)
                alpha0_[c * su.quad->size() + j] =
                    exit_distance(d, d.centers[c], su.quad->nodes[j]);
    }

    // one Jacobi sweep of the integral operator
    RadiationField sweep(const RadiationField& I) const {
        const Domain& d = *su_.domain;
        const AngularQuadrature& quad = *su_.quad;
        const std::size_t nc = d.size();
        const std::size_t nd = quad.size();
        const std::size_t nbands = bands_.size();
        RadiationField out(nbands, nd, nc);

        for (std::size_t band = 0; band < nbands; ++band) {
            const BandData& bd = bands_[band];
            const auto& o = oc_->bands[band];

            // total source J(x, q_k) from the previous iterate
            std::vector<Field> J(nd, Field(nc, 0.0));
            std::vector<double> buf(nd);
            for (std::size_t c = 0; c < nc; ++c) {
                for (std::size_t j = 0; j < nd; ++j) buf[j] = I.at(band, j, c);
                for (std::size_t k = 0; k < nd; ++k) {
                    const double s1 = o.table1.scatter(quad, buf.data(), k);
                    const double s2 = o.table2.scatter(quad, buf.data(), k);
                    const double s3 = o.table3.scatter(quad, buf.data(), k);
                    J[k][c] = bd.sc1[c] * s1 + bd.sc2[c] * s2 + bd.sc3[c] * s3 + bd.em[c];
                }
            }
            std::vector<LatticeSampler> lj;
            lj.reserve(nd);
            for (std::size_t k = 0; k < nd; ++k) lj.emplace_back(d, J[k]);

            const double step = su_.ray_step();
            par::parallel_for(nc * nd, [&](std::size_t idx) {
                const std::size_t c = idx / nd;
                const std::size_t k = idx % nd;
                out.at(band, k, c) = detail::ray_formal_solution(
                    *bd.lb, lj[k], d.centers[c], quad.nodes[k], alpha0_[c * nd + k], step,
                    bd.inflow);
            });
        }
        return out;
    }

    // angular source of the transfer identity, sum_k w_k (J_k - b I_k), per band
    Field identity_divergence(const RadiationField& I) const {
        const Domain& d = *su_.domain;
        const AngularQuadrature& quad = *su_.quad;
        const std::size_t nc = d.size();
        const std::size_t nd = quad.size();
        Field div(nc, 0.0);
        std::vector<double> buf(nd);
        for (std::size_t band = 0; band < bands_.size(); ++band) {
            const BandData& bd = bands_[band];
            const auto& o = oc_->bands[band];
            for (std::size_t c = 0; c < nc; ++c) {
                for (std::size_t j = 0; j < nd; ++j) buf[j] = I.at(band, j, c);
                double s = 0.0;
                for (std::size_t k = 0; k < nd; ++k) {
                    const double Jk = bd.sc1[c] * o.table1.scatter(quad, buf.data(), k) +
                                      bd.sc2[c] * o.table2.scatter(quad, buf.data(), k) +
                                      bd.sc3[c] * o.table3.scatter(quad, buf.data(), k) +
                                      bd.em[c];
                    s += quad.weights[k] * (Jk - bd.b[c] * buf[k]);
                }
                div[c] += s;
            }
        }
        return div;
    }

    double eps_b(std::size_t band) const { return bands_[band].eps_b; }
    double eps_b_min() const {
        double e = 1.0;
        for (const auto& bd : bands_) e = std::min(e, bd.eps_b);
        return e;
    }
    double inflow(std::size_t band) const { return bands_[band].inflow; }
    std::size_t band_count() const { return bands_.size(); }
    const Field& extinction(std::size_t band) const { return bands_[band].b; }

private:
    struct BandData {
        Field b, sc1, sc2, sc3, em;
        std::unique_ptr<LatticeSampler> lb;
        double inflow = 0.0;
        double eps_b = 1.0;
    };

    RadiationSetup su_;
    const OpticalCoefficients* oc_;
    std::vector<BandData> bands_;
    std::vector<double> alpha0_;
};

// ---------------------------------------------------------------------------

inline HypothesesReport validate_hypotheses(const RadiationSetup& su, const Field& rho0,
                                            const Field& pi0, const Spectrum& sigma0,
                                            const OpticalCoefficients& oc, double eps2 = 1e-6) {
    const Domain& d = *su.domain;
    const MassGrid& g = *su.grid;
    const AngularQuadrature& quad = *su.quad;
    HypothesesReport rep;
    rep.eps2 = eps2;
    oc.validate(g);

    auto note_fail = [&](const std::string& name, double lhs, const char* op, double rhs) {
        std::ostringstream os;
        os << name << ": " << lhs << " " << op << " " << rhs << " violated";
        rep.failures.push_back(os.str());
    };

    double sup_rho = 0.0, sup_pi = 0.0;
    for (double v : rho0) sup_rho = std::max(sup_rho, v);
    for (double v : pi0) sup_pi = std::max(sup_pi, v);

    double budget = 0.0;
    for (std::size_t band = 0; band < oc.count(); ++band) {
        const auto& o = oc.bands[band];

        // discrete phase normalization (exact after table construction)
        for (const PhaseTable* t : {&o.table1, &o.table2, &o.table3}) {
            std::vector<double> ones(quad.size(), 1.0);
            for (std::size_t k = 0; k < quad.size(); ++k) {
                const double r = t->scatter(quad, ones.data(), k);
                rep.phase_norm_err = std::max(rep.phase_norm_err, std::abs(r - 1.0));
            }
        }

        // sup_x of the droplet scattering mass integral
        double s3max = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.bins(); ++i)
                s += o.r3[i] * sigma0.at(c, i) * g.widths[i];
            s3max = std::max(s3max, s);
        }
        rep.r3_sigma_sup = std::max(rep.r3_sigma_sup, s3max);

        // smallness of gas scattering against the initial data
        const double p1 = std::max(o.phase1.sup(), o.table1.sup());
        const double p2 = std::max(o.phase2.sup(), o.table2.sup());
        rep.eps1 = std::max(rep.eps1, 2.0 * (o.r1 * p1 * sup_rho + o.r2 * p2 * sup_pi));
    }
    if (rep.phase_norm_err > 1e-6) note_fail("phase_normalization", rep.phase_norm_err, "<=", 1e-6);
    if (rep.r3_sigma_sup > 4.0) note_fail("r3_sigma_integral", rep.r3_sigma_sup, "<=", 4.0);

    // attenuation extremes of the doubled initial extinction
    rep.K_b_band.resize(oc.count(), 0.0);
    for (std::size_t band = 0; band < oc.count(); ++band) {
        const auto& o = oc.bands[band];
        Field b0(d.size(), 0.0);
        for (std::size_t c = 0; c < d.size(); ++c) {
            double s3 = 0.0;
            for (std::size_t i = 0; i < g.bins(); ++i)
                s3 += (o.a3[i] + o.r3[i]) * sigma0.at(c, i) * g.widths[i];
            b0[c] = 2.0 * (o.a1 + o.r1) * rho0[c] + 2.0 * (o.a2 + o.r2) * pi0[c] + 2.0 * s3 +
                    eps2;
        }
        LatticeSampler lb(d, b0);
        const double tau_max = detail::scan_tau_max(su, lb);
        rep.K_b_band[band] = 1.0 - std::exp(-2.0 * tau_max);
        rep.K_b = std::max(rep.K_b, rep.K_b_band[band]);
        rep.eps_b0 = std::min(rep.eps_b0, std::exp(-tau_max));

        // the droplet-scattering budget only acts when r3 is present at all
        double r3max = 0.0;
        for (double v : o.r3) r3max = std::max(r3max, v);
        if (r3max > 0.0) {
            const double p3 = std::max(o.phase3.sup(), o.table3.sup());
            budget = std::max(budget, std::sqrt(rep.K_b_band[band] * p3));
        }
    }
    rep.contraction_budget = budget + 0.5 * rep.eps1;
    if (rep.contraction_budget >= 1.0)
        note_fail("scattering_contraction", rep.contraction_budget, "<", 1.0);
    if (!(rep.K_b >= 0.0 && rep.K_b < 1.0)) note_fail("K_b_range", rep.K_b, "<", 1.0);

    rep.passed = rep.failures.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

struct RadiationDiagnostics {
    int sweeps = 0;
    bool converged = false;
    std::vector<double> diffs;   // sup |I_{n+1} - I_n|
    std::vector<double> ratios;  // successive diff ratios
    double eps_b = 1.0;          // min over bands on the current extinction
    double contraction_bound = 0.0;
    double max_ratio = 0.0;
    double sup_I = 0.0;
    double sup_bound = 0.0;  // (sup I0 + sup B) / eps_b
};

inline RadiationField picard_sweep(const RadiationSetup& su, const RadState& st,
                                   const OpticalCoefficients& oc, const BoundaryIntensity& bi,
                                   const HypothesesReport& hyp, const RadiationField& I) {
    if (!hyp.passed)
        fail(Phase::hypotheses, "picard_sweep: hypotheses not satisfied: " + hyp.failure_text());
    RadiationWorkspace ws(su, st, oc, bi);
    return ws.sweep(I);
}

inline RadiationField solve_radiation_on(const RadiationWorkspace& ws,
                                         const RadiationSetup& su, const RadState& st,
                                         const TemperatureWindow& tw,
                                         const HypothesesReport& hyp, double tol,
                                         int max_sweeps, RadiationDiagnostics* diag = nullptr,
                                         const RadiationField* initial_guess = nullptr) {
    if (!hyp.passed)
        fail(Phase::hypotheses,
             "solve_radiation: hypotheses not satisfied: " + hyp.failure_text());

    const Domain& d = *su.domain;
    for (double t : *st.T)
        if (t < tw.lo || t > tw.hi)
            fail(Phase::solve, "solve_radiation: temperature left the admissible window");

    RadiationDiagnostics dg;
    dg.eps_b = ws.eps_b_min();
    dg.contraction_bound = (1.0 - dg.eps_b) + 0.01;

    RadiationField I = initial_guess
                           ? *initial_guess
                           : RadiationField(su.bands->count(), su.quad->size(), d.size());
    double prev_diff = -1.0;
    double sup_scale = 0.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        RadiationField next = ws.sweep(I);
        double diff = 0.0;
        for (std::size_t i = 0; i < next.data.size(); ++i)
            diff = std::max(diff, std::abs(next.data[i] - I.data[i]));
        sup_scale = std::max(next.sup(), 1e-300);
        dg.diffs.push_back(diff);
        ++dg.sweeps;

        if (prev_diff > 1e-13 * sup_scale) {
            const double r = diff / prev_diff;
            dg.ratios.push_back(r);
            dg.max_ratio = std::max(dg.max_ratio, r);
            if (r >= 1.0)
                fail(Phase::solve, "solve_radiation: Picard ratio " + std::to_string(r) +
                                       " >= 1 (contraction lost)");
        }
        prev_diff = diff;
        I = std::move(next);
        if (diff <= tol * sup_scale) {
            dg.converged = true;
            break;
        }
    }
    if (!dg.converged)
        fail(Phase::solve, "solve_radiation: no convergence in " + std::to_string(max_sweeps) +
                               " sweeps; last ratio " +
                               std::to_string(dg.ratios.empty() ? 0.0 : dg.ratios.back()));

    if (dg.max_ratio > dg.contraction_bound)
        fail(Phase::solve, "solve_radiation: measured contraction ratio " +
                               std::to_string(dg.max_ratio) + " exceeds (1 - eps_b) + 0.01 = " +
                               std::to_string(dg.contraction_bound));

    // sup bound: per band, sup I <= (sup I0 + sup_{window} B) / eps_b
    for (std::size_t band = 0; band < ws.band_count(); ++band) {
        double supI = 0.0;
        for (std::size_t k = 0; k < su.quad->size(); ++k)
            for (std::size_t c = 0; c < d.size(); ++c)
                supI = std::max(supI, I.at(band, k, c));
        const double supB = band_planck(su.pc, *su.bands, band, tw.hi);
        const double bound = (ws.inflow(band) + supB) / ws.eps_b(band);
        dg.sup_I = std::max(dg.sup_I, supI);
        dg.sup_bound = std::max(dg.sup_bound, bound);
        if (supI > bound * (1.0 + 1e-12) + 1e-300)
            fail(Phase::solve, "solve_radiation: sup intensity " + std::to_string(supI) +
                                   " violates the attenuation bound " + std::to_string(bound));
    }

    if (diag) *diag = dg;
    return I;
}

inline RadiationField solve_radiation(const RadiationSetup& su, const RadState& st,
                                      const OpticalCoefficients& oc, const BoundaryIntensity& bi,
                                      const TemperatureWindow& tw, const HypothesesReport& hyp,
                                      double tol, int max_sweeps,
                                      RadiationDiagnostics* diag = nullptr,
                                      const RadiationField* initial_guess = nullptr) {
    RadiationWorkspace ws(su, st, oc, bi);
    return solve_radiation_on(ws, su, st, tw, hyp, tol, max_sweeps, diag, initial_guess);
}

// ---------------------------------------------------------------------------
// Moments of the converged field
// ---------------------------------------------------------------------------

inline VecField radiative_flux(const RadiationSetup& su, const RadiationField& I) {
    const std::size_t nc = su.domain->size();
    const AngularQuadrature& quad = *su.quad;
    VecField E(nc, Vec3{});
    for (std::size_t band = 0; band < I.nbands; ++band)
        for (std::size_t k = 0; k < I.ndirs; ++k) {
            const Vec3 q = quad.nodes[k];
            const double w = quad.weights[k];
            for (std::size_t c = 0; c < nc; ++c) {
                const double wI = w * I.at(band, k, c);
                E[c] += q * wI;
            }
        }
    return E;
}

// divergence of the flux through the transfer identity (no spatial stencil)
inline Field flux_divergence(const RadiationSetup& su, const RadState& st,
                             const OpticalCoefficients& oc, const BoundaryIntensity& bi,
                             const RadiationField& I) {
    RadiationWorkspace ws(su, st, oc, bi);
    return ws.identity_divergence(I);
}

// ---------------------------------------------------------------------------
// Geometric integral inequality: with the module quadratures,
//   (1/4pi) int_Omega int_S2 int_ray phi  <=  int_Omega phi.
// Returns both sides and enforces the inequality with 5% quadrature slack.
// ---------------------------------------------------------------------------

struct GeometricCheck {
    double lhs = 0.0, rhs = 0.0;
};

inline GeometricCheck geometric_inequality_check(const RadiationSetup& su, const Field& phi) {
    const Domain& d = *su.domain;
    const AngularQuadrature& quad = *su.quad;
    for (double v : phi)
        if (v < 0.0) fail(Phase::solve, "geometric_inequality_check: field must be >= 0");

    LatticeSampler lp(d, phi);
    const double vol = d.cell_volume();
    const double step = 0.5 * su.ray_step();  // finer than the sweep step

    GeometricCheck out;
    out.lhs = par::parallel_sum(d.size(), [&](std::size_t c) {
        double s = 0.0;
        for (std::size_t j = 0; j < quad.size(); ++j) {
            const Vec3 q = quad.nodes[j];
            const double a0 = exit_distance(d, d.centers[c], q);
            const double len = -a0;
            if (len <= 0.0) continue;
            const int nseg = std::max(1, static_cast<int>(std::ceil(len / step)));
            const double ds = len / nseg;
            double ray = 0.5 * lp(d.centers[c]);
            for (int si = 1; si < nseg; ++si) ray += lp(d.centers[c] - q * (ds * si));
            ray += 0.5 * lp(d.centers[c] - q * len);
            s += quad.weights[j] * ray * ds;
        }
        return vol * s / kFourPi;
    });
    out.rhs = par::parallel_sum(d.size(), [&](std::size_t c) { return vol * phi[c]; });

    if (out.lhs > out.rhs * 1.05 + 1e-300)
        fail(Phase::solve, "geometric inequality violated beyond quadrature slack: lhs=" +
                               std::to_string(out.lhs) + " rhs=" + std::to_string(out.rhs));
    return out;
}

// ---------------------------------------------------------------------------
// L2 distance report between two converged fields and their generating states
// ---------------------------------------------------------------------------

struct RadiationDifference {
    std::vector<double> I_l2_sq;  // per band, |I1-I2|^2 over Omega x S2
    double I_total_sq = 0.0;
    double rho_sq = 0.0, pi_sq = 0.0, sigma_sq = 0.0, T_sq = 0.0;
    double state_total_sq = 0.0;
    double ratio = 0.0;  // I_total_sq / state_total_sq (0 when states match)
};

inline RadiationDifference radiation_difference_diagnostic(
    const RadiationSetup& su, const RadiationField& I1, const RadiationField& I2,
    const RadState& s1, const RadState& s2) {
    const Domain& d = *su.domain;
    const AngularQuadrature& quad = *su.quad;
    const MassGrid& g = *su.grid;
    const double vol = d.cell_volume();
    RadiationDifference out;

    out.I_l2_sq.assign(I1.nbands, 0.0);
    for (std::size_t band = 0; band < I1.nbands; ++band) {
        double s = 0.0;
        for (std::size_t k = 0; k < I1.ndirs; ++k)
            for (std::size_t c = 0; c < d.size(); ++c) {
                const double diff = I1.at(band, k, c) - I2.at(band, k, c);
                s += quad.weights[k] * vol * diff * diff;
            }
        out.I_l2_sq[band] = s;
        out.I_total_sq += s;
    }
    for (std::size_t c = 0; c < d.size(); ++c) {
        const double dr = (*s1.rho)[c] - (*s2.rho)[c];
        const double dp = (*s1.pi)[c] - (*s2.pi)[c];
        const double dT = (*s1.T)[c] - (*s2.T)[c];
        out.rho_sq += vol * dr * dr;
        out.pi_sq += vol * dp * dp;
        out.T_sq += vol * dT * dT;
        for (std::size_t i = 0; i < g.bins(); ++i) {
            const double ds = s1.sigma->at(c, i) - s2.sigma->at(c, i);
            out.sigma_sq += vol * g.widths[i] * ds * ds;
        }
    }
    out.state_total_sq = out.rho_sq + out.pi_sq + out.sigma_sq + out.T_sq;
    out.ratio = out.state_total_sq > 0.0 ? out.I_total_sq / out.state_total_sq : 0.0;
    return out;
}

}  // namespace nimbus
