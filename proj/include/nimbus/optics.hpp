#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/mass_grid.hpp"
#include "nimbus/quadrature.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Planck emission. SI constants by default; the nondimensional mode sets
// c*h/k_B = 1 and 2*pi*c^2*h = 1 for desk-scale runs.
// ---------------------------------------------------------------------------

struct PlanckConstants {
    double c2h_2pi = 1.0;  // 2 pi c^2 h
    double ch_over_k = 1.0;

    static PlanckConstants si() {
        constexpr double c = 2.99792458e8;
        constexpr double h = 6.62607015e-34;
        constexpr double kB = 1.380649e-23;
        return {2.0 * kPi * c * c * h, c * h / kB};
    }
    static PlanckConstants nondimensional() { return {1.0, 1.0}; }

    // integral of planck over all wavelengths equals sigma_sb * T^4
    double sigma_sb() const {
        const double pi4_15 = kPi * kPi * kPi * kPi / 15.0;
        return c2h_2pi * pi4_15 / (ch_over_k * ch_over_k * ch_over_k * ch_over_k);
    }
};

inline double planck(const PlanckConstants& pc, double lambda, double T) {
    if (lambda <= 0.0 || T <= 0.0)
        fail(Phase::solve, "planck requires positive wavelength and temperature");
    const double x = pc.ch_over_k / (lambda * T);
    if (x > 700.0) return 0.0;  // below double underflow anyway
    const double l2 = lambda * lambda;
    const double l5 = l2 * l2 * lambda;
    return pc.c2h_2pi / (l5 * std::expm1(x));
}

// band-integrated Planck emission
inline double band_planck(const PlanckConstants& pc, const WavelengthBands& bands,
                          std::size_t band, double T) {
    return bands.integrate(band, [&](double lambda) { return planck(pc, lambda, T); });
}

// ---------------------------------------------------------------------------
// Phase functions of the scattering cosine, by species. Built-ins: isotropic
// and Henyey-Greenstein.
// ---------------------------------------------------------------------------

enum class PhaseKind { isotropic, henyey_greenstein };

struct PhaseFunction {
    PhaseKind kind = PhaseKind::isotropic;
    double g = 0.0;  // HG asymmetry, |g| < 1

    double operator()(double c) const {
        if (kind == PhaseKind::isotropic) return 1.0;
        const double d = 1.0 + g * g - 2.0 * g * c;
        return (1.0 - g * g) / (d * std::sqrt(d));
    }
    // sup over the cosine range; HG peaks at c = sign(g)
    double sup() const {
        if (kind == PhaseKind::isotropic) return 1.0;
        return std::max((*this)(1.0), (*this)(-1.0));
    }
};

// ---------------------------------------------------------------------------
// Discrete phase table on a fixed angular quadrature. A symmetric diagonal
// rescaling (Sinkhorn sweeps on the symmetric kernel) makes the discrete
// normalization
//     (1/4pi) sum_j w_j P[k][j] = 1   for every k
// hold exactly, which the contraction bound of the sweep relies on.
// ---------------------------------------------------------------------------

class PhaseTable {
public:
    PhaseTable() = default;

    PhaseTable(const AngularQuadrature& quad, const PhaseFunction& pf) {
        n_ = quad.size();
        p_.assign(n_ * n_, 0.0);
        for (std::size_t k = 0; k < n_; ++k)
            for (std::size_t j = 0; j < n_; ++j)
                p_[k * n_ + j] = pf(dot(quad.nodes[k], quad.nodes[j]));

        std::vector<double> d(n_, 1.0);
        for (int sweep = 0; sweep < 200; ++sweep) {
            double worst = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                double row = 0.0;
                for (std::size_t j = 0; j < n_; ++j)
                    row += quad.weights[j] * d[k] * p_[k * n_ + j] * d[j];
                row /= kFourPi;
                worst = std::max(worst, std::abs(row - 1.0));
                d[k] /= std::sqrt(row);
            }
            if (worst < 1e-15) break;
        }
        for (std::size_t k = 0; k < n_; ++k)
            for (std::size_t j = 0; j < n_; ++j)
                p_[k * n_ + j] *= d[k] * d[j];

        sup_ = 0.0;
        for (double v : p_) sup_ = std::max(sup_, v);
    }

    double at(std::size_t k, std::size_t j) const { return p_[k * n_ + j]; }
    double sup() const { return sup_; }
    std::size_t size() const { return n_; }

    // (1/4pi) sum_j w_j P[k][j] f[j]
    double scatter(const AngularQuadrature& quad, const double* f, std::size_t k) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n_; ++j) s += quad.weights[j] * p_[k * n_ + j] * f[j];
        return s / kFourPi;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> p_;
    double sup_ = 0.0;
};

// ---------------------------------------------------------------------------
// Per-band optical coefficients: absorption a and scattering r for dry air
// (1), vapor (2) and droplets (3, sampled on the mass grid), plus the three
// phase tables.
// ---------------------------------------------------------------------------

struct BandOptics {
    double a1 = 0.0, r1 = 0.0;
    double a2 = 0.0, r2 = 0.0;
    std::vector<double> a3;  // per mass bin
    std::vector<double> r3;  // per mass bin
    PhaseFunction phase1, phase2, phase3;
    PhaseTable table1, table2, table3;
};

struct OpticalCoefficients {
    std::vector<BandOptics> bands;

    std::size_t count() const { return bands.size(); }

    void validate(const MassGrid& grid) const {
        for (std::size_t b = 0; b < bands.size(); ++b) {
            const auto& o = bands[b];
            if (o.a1 < 0 || o.r1 < 0 || o.a2 < 0 || o.r2 < 0)
                fail(Phase::config, "optical coefficients must be non-negative (band " +
                                        std::to_string(b) + ")");
            if (o.a3.size() != grid.bins() || o.r3.size() != grid.bins())
                fail(Phase::config, "droplet optical coefficients must be sampled per mass bin");
            for (std::size_t i = 0; i < grid.bins(); ++i)
                if (o.a3[i] < 0 || o.r3[i] < 0)
                    fail(Phase::config, "droplet optical coefficients must be non-negative");
            double tot = 0.0;
            for (std::size_t i = 0; i < grid.bins(); ++i)
                tot += (o.a3[i] + o.r3[i]) * grid.widths[i];
            if (!std::isfinite(tot))
                fail(Phase::config, "mass integral of droplet optical coefficients not finite");
        }
    }

    void build_tables(const AngularQuadrature& quad) {
        for (auto& o : bands) {
            o.table1 = PhaseTable(quad, o.phase1);
            o.table2 = PhaseTable(quad, o.phase2);
            o.table3 = PhaseTable(quad, o.phase3);
        }
    }
};

// ---------------------------------------------------------------------------
// Prescribed inflow intensity on the boundary. Either a per-band constant or
// the band-integrated Planck emission of an isothermal wall.
// ---------------------------------------------------------------------------

struct BoundaryIntensity {
    enum class Kind { zero, constant, planck_wall } kind = Kind::zero;
    std::vector<double> value;  // per band, for `constant`
    double wall_T = 0.0;        // for `planck_wall`

    double at(const PlanckConstants& pc, const WavelengthBands& bands, std::size_t band) const {
        switch (kind) {
            case Kind::zero: return 0.0;
            case Kind::constant: return value[band];
            case Kind::planck_wall: return band_planck(pc, bands, band, wall_T);
        }
        return 0.0;
    }

    double sup(const PlanckConstants& pc, const WavelengthBands& bands) const {
        double s = 0.0;
        for (std::size_t b = 0; b < bands.count(); ++b) s = std::max(s, at(pc, bands, b));
        return s;
    }
};

}  // namespace nimbus
