#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Droplet-mass grid. Bin edges m_0 < ... < m_K cover ]0, M1_bar]; the
// microphysics support parameters satisfy
//   m_a < m_A <= M_prime <= M1_bar,   M_cut > m_a.
// Geometric spacing is the default (coagulation doubles masses); a uniform
// grid is available for oracle-style tests.
// ---------------------------------------------------------------------------

struct MassGridConfig {
    int bins = 24;
    double m_min = 1e-3;
    double m_max = 10.0;
    bool geometric = true;

    double m_a = 0.01;      // aerosol mass lower bound
    double m_A = 0.05;      // aerosol mass upper bound
    double M_prime = 0.2;   // top of the initial spectrum support
    double M1_bar = 0.0;    // support ceiling; 0 = derive at run setup
    double M_cut = 1.0;     // coagulation cutoff: beta = 0 when m+m' >= M_cut
};

struct MassGrid {
    std::vector<double> edges;    // bins+1
    std::vector<double> centers;  // bins
    std::vector<double> widths;   // bins

    double m_a = 0.0, m_A = 0.0, M_prime = 0.0, M1_bar = 0.0, M_cut = 0.0;

    std::size_t bins() const { return centers.size(); }

    // mass-grid quadrature of f sampled at bin centers against the spectrum
    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < bins(); ++i) s += f(i) * widths[i];
        return s;
    }

    // largest bin whose center is <= m, or -1
    int bin_below(double m) const {
        int k = -1;
        for (std::size_t i = 0; i < bins(); ++i)
            if (centers[i] <= m) k = static_cast<int>(i);
        return k;
    }
};

inline MassGrid make_mass_grid(const MassGridConfig& cfg) {
    if (cfg.bins < 2) fail(Phase::config, "mass grid needs at least 2 bins");
    if (cfg.m_min <= 0.0 || cfg.m_max <= cfg.m_min)
        fail(Phase::config, "mass grid bounds must satisfy 0 < m_min < m_max");
    if (!(0.0 < cfg.m_a && cfg.m_a < cfg.m_A && cfg.m_A <= cfg.M_prime))
        fail(Phase::config, "mass parameters must satisfy 0 < m_a < m_A <= M_prime");
    if (cfg.M_cut <= cfg.m_a)
        fail(Phase::config, "coagulation cutoff M_cut must exceed m_a");

    MassGrid g;
    g.m_a = cfg.m_a;
    g.m_A = cfg.m_A;
    g.M_prime = cfg.M_prime;
    g.M_cut = cfg.M_cut;
    g.M1_bar = cfg.M1_bar > 0.0 ? cfg.M1_bar : cfg.M_prime;

    g.edges.resize(static_cast<std::size_t>(cfg.bins) + 1);
    if (cfg.geometric) {
        const double r = std::log(cfg.m_max / cfg.m_min) / cfg.bins;
        for (int i = 0; i <= cfg.bins; ++i)
            g.edges[static_cast<std::size_t>(i)] = cfg.m_min * std::exp(r * i);
    } else {
        const double dm = (cfg.m_max - cfg.m_min) / cfg.bins;
        for (int i = 0; i <= cfg.bins; ++i)
            g.edges[static_cast<std::size_t>(i)] = cfg.m_min + dm * i;
    }
    g.edges.front() = cfg.m_min;
    g.edges.back() = cfg.m_max;

    g.centers.resize(static_cast<std::size_t>(cfg.bins));
    g.widths.resize(static_cast<std::size_t>(cfg.bins));
    for (int i = 0; i < cfg.bins; ++i) {
        auto u = static_cast<std::size_t>(i);
        g.centers[u] = 0.5 * (g.edges[u] + g.edges[u + 1]);
        g.widths[u] = g.edges[u + 1] - g.edges[u];
        if (g.widths[u] <= 0.0) fail(Phase::config, "mass grid bin widths must be positive");
    }

    // at least one bin entirely below m_a/2 (it must stay empty)
    if (g.edges[1] > 0.5 * cfg.m_a)
        fail(Phase::config, "mass grid must contain a bin entirely below m_a/2; lower m_min");
    if (g.edges.back() < g.M1_bar)
        fail(Phase::config, "mass grid top edge must reach the support ceiling M1_bar");
    if (g.centers.back() < cfg.M_cut)
        fail(Phase::config,
             "coagulation cutoff M_cut must not exceed the largest bin center (gain remap)");
    return g;
}

}  // namespace nimbus
