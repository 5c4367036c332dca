#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/fields.hpp"
#include "nimbus/gasdynamics.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/microphysics.hpp"
#include "nimbus/norms.hpp"
#include "nimbus/optics.hpp"
#include "nimbus/radiation.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Two nested fixed-point loops over a time horizon:
//   inner: (pi, sigma) given frozen (v, T) iterates, contraction measured in
//          C0([0,t]; Lp),
//   outer: (v, T) through the linear parabolic solves, contraction measured
//          in Linf(0,t; L2) + L2(0,t; H1).
// A measured ratio >= 1 or a hard a-priori bound breach signals the caller to
// halve the horizon; exhausted iteration budgets are hard errors.
// ---------------------------------------------------------------------------

struct CouplingSetup {
    const Domain* domain = nullptr;
    const MassGrid* grid = nullptr;
    const AngularQuadrature* quad = nullptr;
    const WavelengthBands* bands = nullptr;
    MicroParams micro;
    PhysParams phys;
    OpticalCoefficients optics;
    BoundaryIntensity boundary;
    PlanckConstants pc = PlanckConstants::nondimensional();
    double ray_step_factor = 0.5;

    double dt = 0.01;
    double inner_tol = 1e-9;
    double outer_tol = 1e-9;
    double radiation_tol = 1e-8;
    int inner_max_iters = 60;
    int outer_max_iters = 60;
    int max_sweeps = 200;
    double kappa_target = 0.9;
    double p_exp = 5.0;
    double q_exp = 4.0;
    AdvectionScheme advection = AdvectionScheme::upwind;

    RadiationSetup radiation_setup() const {
        return {domain, quad, bands, grid, pc, ray_step_factor};
    }
    bool water_coupling_off() const {
        return micro.K1 == 0.0 && micro.beta0 == 0.0 && micro.g0_amp == 0.0 &&
               micro.g1_amp == 0.0;
    }
};

struct InitialState {
    Field rho, pi, T;
    VecField v;
    Spectrum sigma;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<Field> rho, pi, T;
    std::vector<VecField> v;
    std::vector<Spectrum> sigma;
    std::vector<Field> divE;
    std::vector<RadiationDiagnostics> rad;

    std::size_t levels() const { return rho.size(); }
};

enum class LoopStatus { accepted, contraction_lost, bound_breach };

struct PassRecord {
    double dist = 0.0;
    double ratio = 0.0;
};

struct FixedPointTrace {
    std::vector<PassRecord> inner;
    std::vector<PassRecord> outer;
    double inner_max_ratio = 0.0;
    double outer_kappa = 0.0;
    LoopStatus status = LoopStatus::accepted;
    std::string breach;
};

// ordered key/value event for the JSON-lines stream
struct TraceEvent {
    std::string kind;
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::pair<std::string, std::string>> tags;

    TraceEvent(std::string k) : kind(std::move(k)) {}
    TraceEvent& num(const std::string& key, double v) {
        values.emplace_back(key, v);
        return *this;
    }
    TraceEvent& tag(const std::string& key, const std::string& v) {
        tags.emplace_back(key, v);
        return *this;
    }
};

using TraceSink = std::function<void(const TraceEvent&)>;

inline void emit(const TraceSink& sink, const TraceEvent& ev) {
    if (sink) sink(ev);
}

// ---------------------------------------------------------------------------
// Hard a-priori bounds derived from the initial data
// ---------------------------------------------------------------------------

struct AprioriBounds {
    double rho_lo = 0.0, rho_hi = 0.0;
    double pi_hi = 0.0;
    double T_lo = 0.0, T_hi = 0.0;
    double pi_w1p_cap = 0.0, sigma_w1p_cap = 0.0, dm_sigma_cap = 0.0;
    double p_exp = 5.0;
};

inline AprioriBounds bounds_from_initial(const Domain& d, const MassGrid& g,
                                         const InitialState& init, double p_exp) {
    AprioriBounds b;
    b.p_exp = p_exp;
    double rmin = init.rho[0], rmax = init.rho[0], pmax = 0.0, tmin = init.T[0],
           tmax = init.T[0];
    for (double v : init.rho) { rmin = std::min(rmin, v); rmax = std::max(rmax, v); }
    for (double v : init.pi) pmax = std::max(pmax, v);
    for (double v : init.T) { tmin = std::min(tmin, v); tmax = std::max(tmax, v); }
    b.rho_lo = 0.5 * rmin;
    b.rho_hi = 2.0 * rmax;
    b.pi_hi = pmax + 1.0;
    b.T_lo = 0.5 * tmin;
    b.T_hi = 1.5 * tmax;
    b.pi_w1p_cap = w1p_norm(d, init.pi, p_exp) + 1.0;
    b.sigma_w1p_cap = w1p_norm(d, init.sigma, g, p_exp) + 1.0;
    b.dm_sigma_cap = dm_sigma_diagnostic(init.sigma, g) + 1.0;
    return b;
}

// first violated bound at one level, or nothing
inline std::optional<std::string> check_level_bounds(const Domain& d, const MassGrid& g,
                                                     const AprioriBounds& b, const Field& rho,
                                                     const Field& pi, const Field& T,
                                                     const VecField& v, const Spectrum& sigma) {
    for (std::size_t c = 0; c < d.size(); ++c) {
        if (rho[c] < b.rho_lo || rho[c] > b.rho_hi)
            return "dry-air density " + std::to_string(rho[c]) +
                   " left [inf rho0 / 2, 2 sup rho0] at cell " + std::to_string(c);
        if (pi[c] < 0.0 || pi[c] > b.pi_hi)
            return "vapor density " + std::to_string(pi[c]) +
                   " left [0, sup pi0 + 1] at cell " + std::to_string(c);
        if (T[c] <= 0.0 || T[c] < b.T_lo || T[c] > b.T_hi)
            return "temperature " + std::to_string(T[c]) +
                   " left the admissible window at cell " + std::to_string(c);
        if (d.boundary[c] && norm(v[c]) != 0.0)
            return "velocity non-zero on a boundary cell " + std::to_string(c);
    }
    double support_out = 0.0, support_tot = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c)
        for (std::size_t i = 0; i < g.bins(); ++i) {
            if (sigma.at(c, i) < 0.0) return "negative spectrum value";
            const double m = sigma.at(c, i) * g.widths[i];
            support_tot += m;
            if (g.centers[i] <= 0.5 * g.m_a || g.centers[i] >= g.M1_bar) support_out += m;
        }
    if (support_tot > 0.0 && support_out > 1e-12 * support_tot)
        return "spectrum mass outside ]m_a/2, M1_bar[ beyond tolerance";
    if (w1p_norm(d, pi, b.p_exp) > b.pi_w1p_cap)
        return "vapor W1p norm exceeded its initial cap";
    if (w1p_norm(d, sigma, g, b.p_exp) > b.sigma_w1p_cap)
        return "spectrum W1p norm exceeded its initial cap";
    if (dm_sigma_diagnostic(sigma, g) > b.dm_sigma_cap)
        return "spectrum mass-slope exceeded its initial cap";
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Inner loop: water densities against frozen (v, T)
// ---------------------------------------------------------------------------

struct InnerResult {
    std::vector<Field> pi;
    std::vector<Spectrum> sigma;
    std::vector<PassRecord> passes;
    LoopStatus status = LoopStatus::accepted;
    std::string breach;
    double max_ratio = 0.0;
};

inline InnerResult inner_fixed_point(const CouplingSetup& su, const InitialState& init,
                                     const std::vector<VecField>& v_bar,
                                     const std::vector<Field>& T_bar, int n_steps,
                                     const AprioriBounds& bounds, const TraceSink& sink,
                                     int outer_pass) {
    const Domain& d = *su.domain;
    const MassGrid& g = *su.grid;
    const auto nl = static_cast<std::size_t>(n_steps) + 1;

    InnerResult res;
    res.pi.assign(nl, init.pi);
    res.sigma.assign(nl, init.sigma);

    auto integrate = [&](const std::vector<Field>& pi_lag,
                         const std::vector<Spectrum>& sigma_lag, std::vector<Field>& pi_out,
                         std::vector<Spectrum>& sigma_out) {
        pi_out[0] = init.pi;
        sigma_out[0] = init.sigma;
        for (std::size_t i = 0; i + 1 < nl; ++i) {
            pi_out[i + 1] = vapor_step(d, g, su.micro, pi_out[i], v_bar[i], T_bar[i],
                                       pi_lag[i], sigma_lag[i], su.dt, nullptr,
                                       su.advection);
            sigma_out[i + 1] =
                spectrum_step(d, g, su.micro, sigma_out[i], v_bar[i], su.phys.grad_phi,
                              T_bar[i], pi_lag[i], sigma_lag[i], su.dt, nullptr, su.advection);
        }
    };

    const double scale =
        lp_norm(d, init.pi, su.p_exp) + lp_norm(d, init.sigma, g, su.p_exp) + 1e-300;

    // with every water coupling off the first application already lands on
    // the fixed point (the sources do not depend on the lagged iterate)
    if (su.water_coupling_off()) {
        std::vector<Field> pi_next(nl);
        std::vector<Spectrum> sigma_next(nl);
        pi_next.assign(nl, init.pi);
        sigma_next.assign(nl, init.sigma);
        integrate(res.pi, res.sigma, pi_next, sigma_next);
        res.pi = std::move(pi_next);
        res.sigma = std::move(sigma_next);
        res.passes.push_back({0.0, 0.0});
        emit(sink, TraceEvent("inner_pass")
                       .num("outer_pass", outer_pass)
                       .num("pass", 1)
                       .num("dist", 0.0)
                       .num("ratio", 0.0));
        return res;
    }

    double prev_dist = -1.0;
    for (int pass = 1; pass <= su.inner_max_iters; ++pass) {
        std::vector<Field> pi_next(nl);
        std::vector<Spectrum> sigma_next(nl);
        pi_next.assign(nl, init.pi);
        sigma_next.assign(nl, init.sigma);
        integrate(res.pi, res.sigma, pi_next, sigma_next);

        double dist = 0.0;
        for (std::size_t i = 0; i < nl; ++i) {
            Field dpi(d.size());
            for (std::size_t c = 0; c < d.size(); ++c)
                dpi[c] = pi_next[i][c] - res.pi[i][c];
            Spectrum dsg(g.bins(), d.size());
            for (std::size_t k = 0; k < dsg.data.size(); ++k)
                dsg.data[k] = sigma_next[i].data[k] - res.sigma[i].data[k];
            dist = std::max(dist, lp_norm(d, dpi, su.p_exp) + lp_norm(d, dsg, g, su.p_exp));
        }

        PassRecord rec;
        rec.dist = dist;
        rec.ratio = prev_dist > 0.0 ? dist / prev_dist : 0.0;
        res.passes.push_back(rec);
        res.max_ratio = std::max(res.max_ratio, rec.ratio);
        emit(sink, TraceEvent("inner_pass")
                       .num("outer_pass", outer_pass)
                       .num("pass", pass)
                       .num("dist", dist)
                       .num("ratio", rec.ratio));

        res.pi = std::move(pi_next);
        res.sigma = std::move(sigma_next);

        if (prev_dist > 0.0 && rec.ratio >= 1.0) {
            res.status = LoopStatus::contraction_lost;
            res.breach = "inner contraction ratio " + std::to_string(rec.ratio) + " >= 1";
            return res;
        }
        if (dist <= su.inner_tol * scale) {
            // membership bounds on the accepted water trajectories
            for (std::size_t i = 0; i < nl; ++i) {
                if (w1p_norm(d, res.pi[i], su.p_exp) > bounds.pi_w1p_cap) {
                    res.status = LoopStatus::bound_breach;
                    res.breach = "vapor W1p cap exceeded at level " + std::to_string(i);
                    return res;
                }
                if (w1p_norm(d, res.sigma[i], g, su.p_exp) > bounds.sigma_w1p_cap) {
                    res.status = LoopStatus::bound_breach;
                    res.breach = "spectrum W1p cap exceeded at level " + std::to_string(i);
                    return res;
                }
                if (dm_sigma_diagnostic(res.sigma[i], g) > bounds.dm_sigma_cap) {
                    res.status = LoopStatus::bound_breach;
                    res.breach = "spectrum mass-slope cap exceeded at level " +
                                 std::to_string(i);
                    return res;
                }
            }
            return res;
        }
        prev_dist = dist;
    }
    fail(Phase::solve, "inner fixed point: no convergence in " +
                           std::to_string(su.inner_max_iters) + " passes (last distance " +
                           std::to_string(prev_dist) + ")");
}

// ---------------------------------------------------------------------------
// Outer loop: velocity and temperature through the linear parabolic solves
// ---------------------------------------------------------------------------

struct OuterResult {
    Trajectory trajectory;
    FixedPointTrace trace;
    HypothesesReport hypotheses;  // carried through for reporting
};

inline OuterResult outer_fixed_point(const CouplingSetup& su, const InitialState& init,
                                     const HypothesesReport& hyp, int n_steps,
                                     const TraceSink& sink = {}) {
    const Domain& d = *su.domain;
    const MassGrid& g = *su.grid;
    const auto nl = static_cast<std::size_t>(n_steps) + 1;
    const RadiationSetup rsu = su.radiation_setup();
    const TemperatureWindow tw = TemperatureWindow::from_initial(init.T);
    const AprioriBounds bounds = bounds_from_initial(d, g, init, su.p_exp);

    OuterResult out;
    out.hypotheses = hyp;
    FixedPointTrace& trace = out.trace;

    std::vector<VecField> v_bar(nl, init.v);
    std::vector<Field> T_bar(nl, init.T);
    std::vector<RadiationField> rad_cache;  // warm starts across passes

    double prev_dist = -1.0;
    for (int pass = 1; pass <= su.outer_max_iters; ++pass) {
        // temperatures feeding the transfer solve must sit in the window
        for (std::size_t i = 0; i < nl; ++i)
            for (double t : T_bar[i])
                if (t < tw.lo || t > tw.hi) {
                    trace.status = LoopStatus::bound_breach;
                    trace.breach = "iterate temperature left the admissible window";
                    return out;
                }

        // dry air density along the frozen velocity
        std::vector<Field> rho(nl);
        rho[0] = init.rho;
        for (std::size_t i = 0; i + 1 < nl; ++i)
            rho[i + 1] = advect_density(d, rho[i], v_bar[i], su.dt, su.advection);

        // water densities from the inner loop
        InnerResult inner =
            inner_fixed_point(su, init, v_bar, T_bar, n_steps, bounds, sink, pass);
        trace.inner.insert(trace.inner.end(), inner.passes.begin(), inner.passes.end());
        trace.inner_max_ratio = std::max(trace.inner_max_ratio, inner.max_ratio);
        if (inner.status != LoopStatus::accepted) {
            trace.status = inner.status;
            trace.breach = inner.breach;
            return out;
        }

        // radiation per level against the lagged temperature
        std::vector<Field> divE(nl);
        std::vector<RadiationDiagnostics> rad(nl);
        std::vector<RadiationField> I(nl);
        if (rad_cache.empty()) rad_cache.resize(nl);
        for (std::size_t i = 0; i < nl; ++i) {
            RadState st{&rho[i], &inner.pi[i], &inner.sigma[i], &T_bar[i]};
            const RadiationField* guess =
                rad_cache[i].data.empty() ? nullptr : &rad_cache[i];
            RadiationWorkspace ws(rsu, st, su.optics, su.boundary);
            I[i] = solve_radiation_on(ws, rsu, st, tw, hyp, su.radiation_tol,
                                      su.max_sweeps, &rad[i], guess);
            rad_cache[i] = I[i];
            divE[i] = ws.identity_divergence(I[i]);
            emit(sink, TraceEvent("radiation_solve")
                           .num("outer_pass", pass)
                           .num("level", static_cast<double>(i))
                           .num("sweeps", rad[i].sweeps)
                           .num("eps_b", rad[i].eps_b)
                           .num("max_ratio", rad[i].max_ratio)
                           .num("sup_intensity", rad[i].sup_I));
        }

        // linear parabolic solves for the new (v, T)
        std::vector<VecField> v_new(nl);
        std::vector<Field> T_new(nl);
        v_new[0] = init.v;
        T_new[0] = init.T;
        bool T_positive = true;
        for (std::size_t i = 0; i + 1 < nl; ++i) {
            v_new[i + 1] = momentum_step(d, g, rho[i + 1], inner.pi[i + 1],
                                         inner.sigma[i + 1], T_bar[i + 1], v_bar[i + 1],
                                         v_new[i], su.phys, su.dt);
            Field latent(d.size());
            for (std::size_t c = 0; c < d.size(); ++c)
                latent[c] = su.micro.L_gl *
                            bulk_exchange(T_bar[i + 1][c], inner.pi[i + 1][c],
                                          &inner.sigma[i + 1].data[c * g.bins()], g, su.micro);
            T_new[i + 1] =
                temperature_step(d, rho[i + 1], inner.pi[i + 1], T_new[i], T_bar[i + 1],
                                 v_bar[i + 1], divE[i + 1], latent, su.phys, su.dt,
                                 nullptr, &T_positive);
            if (!T_positive) {
                trace.status = LoopStatus::bound_breach;
                trace.breach = "temperature lost positivity at level " + std::to_string(i + 1);
                return out;
            }
        }

        // level-wise hard bounds of the fresh trajectory
        for (std::size_t i = 0; i < nl; ++i) {
            auto breach = check_level_bounds(d, g, bounds, rho[i], inner.pi[i], T_new[i],
                                             v_new[i], inner.sigma[i]);
            if (breach) {
                trace.status = LoopStatus::bound_breach;
                trace.breach = *breach + " (level " + std::to_string(i) + ")";
                return out;
            }
        }

        // contraction metric: sup-in-time L2 plus time-integrated H1, squared
        double sup_term = 0.0, int_term = 0.0, sup_scale = 0.0, int_scale = 0.0;
        for (std::size_t i = 0; i < nl; ++i) {
            VecField dv(d.size());
            Field dT(d.size());
            for (std::size_t c = 0; c < d.size(); ++c) {
                dv[c] = v_new[i][c] - v_bar[i][c];
                dT[c] = T_new[i][c] - T_bar[i][c];
            }
            const double l2 = l2_norm(d, dv) * l2_norm(d, dv) +
                              l2_norm(d, dT) * l2_norm(d, dT);
            sup_term = std::max(sup_term, l2);
            const double h1 =
                h1_norm(d, dv) * h1_norm(d, dv) + h1_norm(d, dT) * h1_norm(d, dT);
            if (i > 0) int_term += su.dt * h1;
            const double sl2 = l2_norm(d, v_new[i]) * l2_norm(d, v_new[i]) +
                               l2_norm(d, T_new[i]) * l2_norm(d, T_new[i]);
            sup_scale = std::max(sup_scale, sl2);
            const double sh1 = h1_norm(d, v_new[i]) * h1_norm(d, v_new[i]) +
                               h1_norm(d, T_new[i]) * h1_norm(d, T_new[i]);
            if (i > 0) int_scale += su.dt * sh1;
        }
        const double dist = std::sqrt(sup_term + int_term);
        const double scale = std::sqrt(sup_scale + int_scale) + 1e-300;

        PassRecord rec;
        rec.dist = dist;
        rec.ratio = prev_dist > 0.0 ? dist / prev_dist : 0.0;
        trace.outer.push_back(rec);
        trace.outer_kappa = std::max(trace.outer_kappa, rec.ratio);
        emit(sink, TraceEvent("outer_pass")
                       .num("pass", pass)
                       .num("dist", dist)
                       .num("kappa", rec.ratio));

        v_bar = v_new;
        T_bar = T_new;

        if (prev_dist > 0.0 && rec.ratio >= 1.0) {
            trace.status = LoopStatus::contraction_lost;
            trace.breach = "outer contraction ratio " + std::to_string(rec.ratio) + " >= 1";
            return out;
        }
        if (dist <= su.outer_tol * scale) {
            // assemble the accepted trajectory
            Trajectory& tr = out.trajectory;
            tr.dt = su.dt;
            tr.rho = std::move(rho);
            tr.pi = std::move(inner.pi);
            tr.sigma = std::move(inner.sigma);
            tr.v = std::move(v_bar);
            tr.T = std::move(T_bar);
            tr.divE = std::move(divE);
            tr.rad = std::move(rad);
            trace.status = LoopStatus::accepted;
            return out;
        }
        prev_dist = dist;
    }
    fail(Phase::solve, "outer fixed point: no convergence in " +
                           std::to_string(su.outer_max_iters) + " passes");
}

// ---------------------------------------------------------------------------
// Horizon adaptation: halve until both measured factors are admissible
// ---------------------------------------------------------------------------

struct HorizonRejection {
    double t = 0.0;
    std::string reason;
    double inner_ratio = 0.0;
    double kappa = 0.0;
};

struct HorizonResult {
    double t_accepted = 0.0;
    int n_steps = 0;
    OuterResult outer;
    std::vector<HorizonRejection> rejections;
};

inline HorizonResult adapt_horizon(const CouplingSetup& su, const InitialState& init,
                                   const HypothesesReport& hyp, double t_initial,
                                   const TraceSink& sink = {}) {
    if (t_initial <= 0.0) fail(Phase::config, "adapt_horizon: horizon must be positive");
    HorizonResult res;
    int n_steps = static_cast<int>(std::llround(t_initial / su.dt));
    if (n_steps < 1) fail(Phase::horizon, "no admissible horizon at this resolution: " +
                                              std::to_string(t_initial) + " < dt");

    while (true) {
        const double t = n_steps * su.dt;
        OuterResult attempt = outer_fixed_point(su, init, hyp, n_steps, sink);
        const bool contracting = attempt.trace.status == LoopStatus::accepted;
        const bool inner_ok = attempt.trace.inner_max_ratio < 0.5;
        const bool outer_ok = attempt.trace.outer_kappa < su.kappa_target;

        emit(sink, TraceEvent("horizon_try")
                       .num("t", t)
                       .num("steps", n_steps)
                       .num("inner_ratio", attempt.trace.inner_max_ratio)
                       .num("kappa", attempt.trace.outer_kappa)
                       .num("accepted", (contracting && inner_ok && outer_ok) ? 1.0 : 0.0)
                       .tag("detail", contracting ? "" : attempt.trace.breach));

        if (contracting && inner_ok && outer_ok) {
            res.t_accepted = t;
            res.n_steps = n_steps;
            res.outer = std::move(attempt);
            return res;
        }

        HorizonRejection rej;
        rej.t = t;
        rej.inner_ratio = attempt.trace.inner_max_ratio;
        rej.kappa = attempt.trace.outer_kappa;
        if (!contracting)
            rej.reason = attempt.trace.breach;
        else if (!inner_ok)
            rej.reason = "inner contraction ratio above 1/2";
        else
            rej.reason = "outer contraction factor above target";
        res.rejections.push_back(rej);

        n_steps /= 2;
        if (n_steps < 1)
            fail(Phase::horizon,
                 "no admissible horizon at this resolution (last rejection: " +
                     res.rejections.back().reason + ")");
    }
}

// ---------------------------------------------------------------------------
// A-priori monitor over an accepted trajectory: hard bounds re-asserted per
// level, conservation residuals and envelope diagnostics reported.
// ---------------------------------------------------------------------------

struct MonitorReport {
    bool all_bounds_ok = true;
    std::string first_breach;
    double max_mass_drift = 0.0;        // dry air, relative per step
    double max_water_drift = 0.0;       // vapor + spectrum, relative per step
    double sigma_support_leak = 0.0;    // worst mass fraction outside the window
    double dm_sigma_max = 0.0;
    double envelope_c_rho = 0.0;        // calibrated growth constants
    double envelope_c_pi = 0.0;
};

inline MonitorReport apriori_monitor(const CouplingSetup& su, const InitialState& init,
                                     const Trajectory& tr, const TraceSink& sink = {}) {
    const Domain& d = *su.domain;
    const MassGrid& g = *su.grid;
    const AprioriBounds bounds = bounds_from_initial(d, g, init, su.p_exp);
    MonitorReport rep;

    const double vol = d.cell_volume();
    double mass_prev = 0.0, water_prev = 0.0;
    double rho0_w1p = w1p_norm(d, init.rho, su.p_exp);
    double pi0_w1p = w1p_norm(d, init.pi, su.p_exp);
    const double R_v = velocity_functional(d, tr.v, tr.dt, su.p_exp);

    for (std::size_t i = 0; i < tr.levels(); ++i) {
        auto breach =
            check_level_bounds(d, g, bounds, tr.rho[i], tr.pi[i], tr.T[i], tr.v[i],
                               tr.sigma[i]);
        if (breach && rep.all_bounds_ok) {
            rep.all_bounds_ok = false;
            rep.first_breach = *breach + " (level " + std::to_string(i) + ")";
        }

        double mass = 0.0, water = 0.0, support_out = 0.0, support_tot = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            mass += tr.rho[i][c] * vol;
            const double sw = spectrum_cell_mass(&tr.sigma[i].data[c * g.bins()], g);
            water += (tr.pi[i][c] + sw) * vol;
            for (std::size_t k = 0; k < g.bins(); ++k) {
                const double m = tr.sigma[i].at(c, k) * g.widths[k];
                support_tot += m;
                if (g.centers[k] <= 0.5 * g.m_a || g.centers[k] >= g.M1_bar) support_out += m;
            }
        }
        if (i > 0) {
            rep.max_mass_drift =
                std::max(rep.max_mass_drift, std::abs(mass - mass_prev) / (mass + 1e-300));
            rep.max_water_drift = std::max(rep.max_water_drift,
                                           std::abs(water - water_prev) / (water + 1e-300));
        }
        mass_prev = mass;
        water_prev = water;
        if (support_tot > 0.0)
            rep.sigma_support_leak =
                std::max(rep.sigma_support_leak, support_out / support_tot);
        rep.dm_sigma_max = std::max(rep.dm_sigma_max, dm_sigma_diagnostic(tr.sigma[i], g));

        // calibrated envelope constants of the density growth shapes
        if (i > 0 && R_v > 0.0) {
            const double t = i * tr.dt;
            const double tfac = std::pow(t, (su.p_exp - 1.0) / su.p_exp);
            const double meas_rho = w1p_norm(d, tr.rho[i], su.p_exp);
            if (meas_rho > rho0_w1p)
                rep.envelope_c_rho = std::max(
                    rep.envelope_c_rho, std::log(meas_rho / rho0_w1p) * su.p_exp /
                                            (R_v * tfac + 1e-300));
            const double meas_pi = w1p_norm(d, tr.pi[i], su.p_exp);
            if (meas_pi > pi0_w1p && pi0_w1p > 0.0)
                rep.envelope_c_pi = std::max(
                    rep.envelope_c_pi, std::log(meas_pi / pi0_w1p) * su.p_exp /
                                           (R_v * tfac + 1e-300));
        }

        emit(sink, TraceEvent("step_monitor")
                       .num("level", static_cast<double>(i))
                       .num("mass", mass)
                       .num("water", water)
                       .num("support_leak", support_tot > 0.0 ? support_out / support_tot
                                                              : 0.0)
                       .num("dm_sigma", dm_sigma_diagnostic(tr.sigma[i], g))
                       .num("bounds_ok", breach ? 0.0 : 1.0));
    }
    return rep;
}

// builds the report used by the CLI: norms of the final trajectory level
inline NormReport norm_estimators(const CouplingSetup& su, const Trajectory& tr) {
    const Domain& d = *su.domain;
    const MassGrid& g = *su.grid;
    NormReport nr;
    if (tr.levels() == 0) return nr;
    const std::size_t last = tr.levels() - 1;
    nr.rho_w1p = w1p_norm(d, tr.rho[last], su.p_exp);
    nr.pi_w1p = w1p_norm(d, tr.pi[last], su.p_exp);
    nr.sigma_w1p = w1p_norm(d, tr.sigma[last], g, su.p_exp);
    nr.v_l2 = l2_norm(d, tr.v[last]);
    nr.v_h1 = h1_norm(d, tr.v[last]);
    nr.T_l2 = l2_norm(d, tr.T[last]);
    nr.T_h1 = h1_norm(d, tr.T[last]);
    nr.V_pv = velocity_functional(d, tr.v, tr.dt, su.p_exp);
    nr.V_qT = temperature_functional(d, tr.T, tr.dt, su.q_exp);
    nr.R_v = nr.V_pv;
    nr.R_T = nr.V_qT;
    nr.R_pi = nr.pi_w1p;
    nr.R_sigma = nr.sigma_w1p;
    return nr;
}

}  // namespace nimbus
