#pragma once

#include <cmath>
#include <vector>

#include "nimbus/fields.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Discrete norms: cell quadrature for integrals, centered/one-sided
// differences for gradients, backward differences in time. The fractional
// trace norms of the continuous theory are replaced by their first-order
// proxies; everything here is diagnostic except where the coupling loops
// assert the explicit bounds.
// ---------------------------------------------------------------------------

inline double lp_norm(const Domain& d, const Field& f, double p) {
    double s = 0.0;
    for (double v : f) s += std::pow(std::abs(v), p);
    return std::pow(s * d.cell_volume(), 1.0 / p);
}

inline double w1p_norm(const Domain& d, const Field& f, double p) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
        s += std::pow(std::abs(f[c]), p);
        const Vec3 g = gradient(d, f, static_cast<int>(c));
        s += std::pow(norm(g), p);
    }
    return std::pow(s * d.cell_volume(), 1.0 / p);
}

inline double l2_norm(const Domain& d, const Field& f) { return lp_norm(d, f, 2.0); }

inline double h1_norm(const Domain& d, const Field& f) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
        s += f[c] * f[c];
        const Vec3 g = gradient(d, f, static_cast<int>(c));
        s += dot(g, g);
    }
    return std::sqrt(s * d.cell_volume());
}

inline double l2_norm(const Domain& d, const VecField& v) {
    double s = 0.0;
    for (const Vec3& u : v) s += dot(u, u);
    return std::sqrt(s * d.cell_volume());
}

inline double h1_norm(const Domain& d, const VecField& v) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
        s += dot(v[c], v[c]);
        for (int comp = 0; comp < 3; ++comp)
            for (int ax = 0; ax < 3; ++ax) {
                const double g = vec_axis_derivative(d, v, static_cast<int>(c), comp, ax);
                s += g * g;
            }
    }
    return std::sqrt(s * d.cell_volume());
}

inline double lp_norm(const Domain& d, const Spectrum& sg, const MassGrid& g, double p) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c)
        for (std::size_t i = 0; i < g.bins(); ++i)
            s += std::pow(std::abs(sg.at(c, i)), p) * g.widths[i];
    return std::pow(s * d.cell_volume(), 1.0 / p);
}

// W1p of the spectrum over mass x space: value, mass-slope and space-gradient
inline double w1p_norm(const Domain& d, const Spectrum& sg, const MassGrid& g, double p) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c)
        for (std::size_t i = 0; i < g.bins(); ++i) {
            s += std::pow(std::abs(sg.at(c, i)), p) * g.widths[i];
            double dm;
            if (i + 1 < g.bins())
                dm = (sg.at(c, i + 1) - sg.at(c, i)) / (g.centers[i + 1] - g.centers[i]);
            else
                dm = (sg.at(c, i) - sg.at(c, i - 1)) / (g.centers[i] - g.centers[i - 1]);
            s += std::pow(std::abs(dm), p) * g.widths[i];
            double gx = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
                const int pn = d.neighbor(static_cast<int>(c), ax, +1);
                const int mn = d.neighbor(static_cast<int>(c), ax, -1);
                double der = 0.0;
                if (pn >= 0 && mn >= 0)
                    der = (sg.at(static_cast<std::size_t>(pn), i) -
                           sg.at(static_cast<std::size_t>(mn), i)) /
                          (2.0 * d.hx);
                else if (pn >= 0)
                    der = (sg.at(static_cast<std::size_t>(pn), i) - sg.at(c, i)) / d.hx;
                else if (mn >= 0)
                    der = (sg.at(c, i) - sg.at(static_cast<std::size_t>(mn), i)) / d.hx;
                gx += der * der;
            }
            s += std::pow(std::sqrt(gx), p) * g.widths[i];
        }
    return std::pow(s * d.cell_volume(), 1.0 / p);
}

// ---------------------------------------------------------------------------
// Space-time functionals over a stored trajectory
// ---------------------------------------------------------------------------

struct NormReport {
    // instantaneous norms at the final level
    double rho_w1p = 0.0, pi_w1p = 0.0, sigma_w1p = 0.0;
    double v_l2 = 0.0, v_h1 = 0.0, T_l2 = 0.0, T_h1 = 0.0;
    // accumulated space-time functionals (non-decreasing in t)
    double V_pv = 0.0;  // velocity: integral of the p-th power seminorms + sup term
    double V_qT = 0.0;  // temperature analogue
    // running iterate magnitudes feeding the envelope diagnostics
    double R_v = 0.0, R_T = 0.0, R_pi = 0.0, R_sigma = 0.0;
};

namespace detail {

inline double second_diff_sq(const Domain& d, const VecField& v, int cell) {
    double s = 0.0;
    for (int comp = 0; comp < 3; ++comp)
        for (int ax = 0; ax < 3; ++ax) {
            const int pn = d.neighbor(cell, ax, +1);
            const int mn = d.neighbor(cell, ax, -1);
            if (pn < 0 || mn < 0) continue;
            const double dd = (v[static_cast<std::size_t>(pn)][comp] -
                               2.0 * v[static_cast<std::size_t>(cell)][comp] +
                               v[static_cast<std::size_t>(mn)][comp]) /
                              (d.hx * d.hx);
            s += dd * dd;
        }
    return s;
}

inline double second_diff_sq(const Domain& d, const Field& f, int cell) {
    double s = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
        const int pn = d.neighbor(cell, ax, +1);
        const int mn = d.neighbor(cell, ax, -1);
        if (pn < 0 || mn < 0) continue;
        const double dd = (f[static_cast<std::size_t>(pn)] - 2.0 * f[static_cast<std::size_t>(cell)] +
                           f[static_cast<std::size_t>(mn)]) /
                          (d.hx * d.hx);
        s += dd * dd;
    }
    return s;
}

}  // namespace detail

// velocity space-time functional accumulated over the level sequence
inline double velocity_functional(const Domain& d, const std::vector<VecField>& levels,
                                  double dt, double p) {
    double acc = 0.0, sup_term = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        double layer = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            const Vec3& u = levels[i][c];
            layer += std::pow(norm(u), p);
            double g2 = 0.0;
            for (int comp = 0; comp < 3; ++comp)
                for (int ax = 0; ax < 3; ++ax) {
                    const double g =
                        vec_axis_derivative(d, levels[i], static_cast<int>(c), comp, ax);
                    g2 += g * g;
                }
            layer += std::pow(std::sqrt(g2), p);
            layer += std::pow(std::sqrt(detail::second_diff_sq(d, levels[i],
                                                               static_cast<int>(c))),
                              p);
            if (i > 0) {
                const Vec3 vt = (levels[i][c] - levels[i - 1][c]) / dt;
                layer += std::pow(norm(vt), p);
            }
        }
        layer *= d.cell_volume();
        if (i > 0) acc += dt * layer;
        // first-order trace proxy for the sup term
        double w1 = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            w1 += std::pow(norm(levels[i][c]), p);
            double g2 = 0.0;
            for (int comp = 0; comp < 3; ++comp)
                for (int ax = 0; ax < 3; ++ax) {
                    const double g =
                        vec_axis_derivative(d, levels[i], static_cast<int>(c), comp, ax);
                    g2 += g * g;
                }
            w1 += std::pow(std::sqrt(g2), p);
        }
        sup_term = std::max(sup_term, w1 * d.cell_volume());
    }
    return acc + sup_term;
}

inline double temperature_functional(const Domain& d, const std::vector<Field>& levels,
                                     double dt, double q) {
    double acc = 0.0, sup_term = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        double layer = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            layer += std::pow(std::abs(levels[i][c]), q);
            const Vec3 g = gradient(d, levels[i], static_cast<int>(c));
            layer += std::pow(norm(g), q);
            layer += std::pow(
                std::sqrt(detail::second_diff_sq(d, levels[i], static_cast<int>(c))), q);
            if (i > 0)
                layer += std::pow(std::abs(levels[i][c] - levels[i - 1][c]) / dt, q);
        }
        layer *= d.cell_volume();
        if (i > 0) acc += dt * layer;
        double w1 = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            w1 += std::pow(std::abs(levels[i][c]), q);
            const Vec3 g = gradient(d, levels[i], static_cast<int>(c));
            w1 += std::pow(norm(g), q);
        }
        sup_term = std::max(sup_term, w1 * d.cell_volume());
    }
    return acc + sup_term;
}

}  // namespace nimbus
