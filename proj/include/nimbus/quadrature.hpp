#pragma once

#include <cmath>
#include <vector>

#include "nimbus/core.hpp"

namespace nimbus {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kFourPi = 4.0 * kPi;

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
// ---------------------------------------------------------------------------

inline void gauss_legendre(int npts, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(npts), 0.0);
    w.assign(static_cast<std::size_t>(npts), 0.0);
    const int m = (npts + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (npts + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < npts; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = npts * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(npts - 1 - i)] = z;
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[static_cast<std::size_t>(npts - 1 - i)] = w[static_cast<std::size_t>(i)];
    }
}

// ---------------------------------------------------------------------------
// Antipodally symmetric quadrature on the unit sphere.
//   order 1      : the six axis directions, weight 4pi/6 each.
//   order s >= 2 : product rule, Gauss-Legendre with s nodes in cos(theta)
//                  and 2s uniform azimuthal nodes. Constants, first and
//                  second moments integrate exactly.
// ---------------------------------------------------------------------------

struct AngularQuadrature {
    std::vector<Vec3> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

inline AngularQuadrature angular_quadrature(int order) {
    if (order < 1) fail(Phase::config, "angular quadrature order must be >= 1");

    AngularQuadrature q;
    if (order == 1) {
        const double w = kFourPi / 6.0;
        for (int a = 0; a < 3; ++a)
            for (int s = -1; s <= 1; s += 2) {
                Vec3 v{};
                v[a] = static_cast<double>(s);
                q.nodes.push_back(v);
                q.weights.push_back(w);
            }
        return q;
    }

    std::vector<double> mu, wmu;
    gauss_legendre(order, mu, wmu);
    const int nphi = 2 * order;
    const double wphi = 2.0 * kPi / nphi;
    for (int i = 0; i < order; ++i) {
        const double c = mu[static_cast<std::size_t>(i)];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        for (int j = 0; j < nphi; ++j) {
            const double phi = wphi * j;
            q.nodes.push_back({s * std::cos(phi), s * std::sin(phi), c});
            q.weights.push_back(wmu[static_cast<std::size_t>(i)] * wphi);
        }
    }
    return q;
}

// ---------------------------------------------------------------------------
// Wavelength bands with per-band composite Gauss panels, log-spaced in
// wavelength. Band integrals of a spectral function f(lambda) are
//   sum over panels, Gauss points of  w * f(lambda).
// ---------------------------------------------------------------------------

struct WavelengthBands {
    std::vector<double> edges;                       // size nbands+1, increasing
    std::vector<std::vector<double>> nodes;          // per band
    std::vector<std::vector<double>> node_weights;   // per band

    std::size_t count() const { return edges.empty() ? 0 : edges.size() - 1; }

    template <class Fn>
    double integrate(std::size_t band, Fn&& f) const {
        const auto& xs = nodes[band];
        const auto& ws = node_weights[band];
        double s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += ws[i] * f(xs[i]);
        return s;
    }
};

inline WavelengthBands make_bands(const std::vector<double>& edges, int panels_per_band = 12,
                                  int gauss_per_panel = 8) {
    if (edges.size() < 2) fail(Phase::config, "wavelength bands need at least two edges");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (edges[i] <= 0.0) fail(Phase::config, "wavelength band edges must be positive");
        if (edges[i + 1] <= edges[i])
            fail(Phase::config, "wavelength band edges must be strictly increasing");
    }
    if (panels_per_band < 1 || gauss_per_panel < 1)
        fail(Phase::config, "band quadrature needs at least one panel and one node");

    std::vector<double> gx, gw;
    gauss_legendre(gauss_per_panel, gx, gw);

    WavelengthBands b;
    b.edges = edges;
    for (std::size_t band = 0; band + 1 < edges.size(); ++band) {
        std::vector<double> xs, ws;
        const double la = std::log(edges[band]);
        const double lb = std::log(edges[band + 1]);
        const double dl = (lb - la) / panels_per_band;
        for (int p = 0; p < panels_per_band; ++p) {
            const double a = la + p * dl;
            for (int g = 0; g < gauss_per_panel; ++g) {
                // map [-1,1] -> log-lambda panel; weight carries d(lambda)
                const double t = a + 0.5 * dl * (gx[static_cast<std::size_t>(g)] + 1.0);
                const double lambda = std::exp(t);
                xs.push_back(lambda);
                ws.push_back(0.5 * dl * gw[static_cast<std::size_t>(g)] * lambda);
            }
        }
        b.nodes.push_back(std::move(xs));
        b.node_weights.push_back(std::move(ws));
    }
    return b;
}

}  // namespace nimbus
