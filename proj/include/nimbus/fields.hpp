#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nimbus/core.hpp"
#include "nimbus/geometry.hpp"
#include "nimbus/mass_grid.hpp"

namespace nimbus {

// Scalar field over active cells.
using Field = std::vector<double>;

// Velocity-like field, one Vec3 per active cell.
using VecField = std::vector<Vec3>;

// Droplet spectrum, layout [cell * bins + bin].
struct Spectrum {
    std::size_t nbins = 0;
    std::vector<double> data;

    Spectrum() = default;
    Spectrum(std::size_t bins, std::size_t cells, double v = 0.0)
        : nbins(bins), data(bins * cells, v) {}

    double& at(std::size_t cell, std::size_t bin) { return data[cell * nbins + bin]; }
    double at(std::size_t cell, std::size_t bin) const { return data[cell * nbins + bin]; }
    std::size_t cells() const { return nbins == 0 ? 0 : data.size() / nbins; }
};

// Radiation intensity, layout [band][dir][cell] flattened.
struct RadiationField {
    std::size_t nbands = 0, ndirs = 0, ncells = 0;
    std::vector<double> data;

    RadiationField() = default;
    RadiationField(std::size_t b, std::size_t d, std::size_t c, double v = 0.0)
        : nbands(b), ndirs(d), ncells(c), data(b * d * c, v) {}

    double& at(std::size_t band, std::size_t dir, std::size_t cell) {
        return data[(band * ndirs + dir) * ncells + cell];
    }
    double at(std::size_t band, std::size_t dir, std::size_t cell) const {
        return data[(band * ndirs + dir) * ncells + cell];
    }
    double sup() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }
};

// ---------------------------------------------------------------------------
// Full-lattice view of a cell field for off-grid sampling. Inactive lattice
// sites are filled with the value of the nearest active cell (breadth-first
// from the active set), so rays that cut the slivers between the outermost
// cell centers and the true boundary see the adjacent field value.
// ---------------------------------------------------------------------------

class LatticeSampler {
public:
    LatticeSampler(const Domain& d, const Field& f) : d_(&d) {
        const std::size_t nlat = static_cast<std::size_t>(d.n) * d.n * d.n;
        values_.resize(nlat);
        for (std::size_t l = 0; l < nlat; ++l)
            values_[l] = f[static_cast<std::size_t>(d.lattice_owner[l])];
    }

    // trilinear interpolation at an arbitrary point
    double operator()(const Vec3& p) const {
        const Domain& d = *d_;
        double u = (p.x - d.lo.x) / d.hx - 0.5;
        double v = (p.y - d.lo.y) / d.hx - 0.5;
        double w = (p.z - d.lo.z) / d.hx - 0.5;
        const double nm1 = d.n - 1.0;
        u = std::min(std::max(u, 0.0), nm1);
        v = std::min(std::max(v, 0.0), nm1);
        w = std::min(std::max(w, 0.0), nm1);
        int i0 = std::min(static_cast<int>(u), d.n - 2);
        int j0 = std::min(static_cast<int>(v), d.n - 2);
        int k0 = std::min(static_cast<int>(w), d.n - 2);
        if (d.n == 1) { i0 = j0 = k0 = 0; }
        const double fu = u - i0, fv = v - j0, fw = w - k0;

        auto val = [&](int i, int j, int k) {
            int ii = std::min(i, d.n - 1), jj = std::min(j, d.n - 1), kk = std::min(k, d.n - 1);
            return values_[static_cast<std::size_t>(d.lattice_index(ii, jj, kk))];
        };
        const double c00 = val(i0, j0, k0) * (1 - fu) + val(i0 + 1, j0, k0) * fu;
        const double c10 = val(i0, j0 + 1, k0) * (1 - fu) + val(i0 + 1, j0 + 1, k0) * fu;
        const double c01 = val(i0, j0, k0 + 1) * (1 - fu) + val(i0 + 1, j0, k0 + 1) * fu;
        const double c11 = val(i0, j0 + 1, k0 + 1) * (1 - fu) + val(i0 + 1, j0 + 1, k0 + 1) * fu;
        return (c00 * (1 - fv) + c10 * fv) * (1 - fw) + (c01 * (1 - fv) + c11 * fv) * fw;
    }

private:
    const Domain* d_;
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Discrete gradients. Centered where both neighbors exist, one-sided at the
// lattice edge.
// ---------------------------------------------------------------------------

inline double axis_derivative(const Domain& d, const Field& f, int cell, int axis) {
    const int p = d.neighbor(cell, axis, +1);
    const int m = d.neighbor(cell, axis, -1);
    const auto c = static_cast<std::size_t>(cell);
    if (p >= 0 && m >= 0)
        return (f[static_cast<std::size_t>(p)] - f[static_cast<std::size_t>(m)]) / (2.0 * d.hx);
    if (p >= 0) return (f[static_cast<std::size_t>(p)] - f[c]) / d.hx;
    if (m >= 0) return (f[c] - f[static_cast<std::size_t>(m)]) / d.hx;
    return 0.0;
}

inline Vec3 gradient(const Domain& d, const Field& f, int cell) {
    return {axis_derivative(d, f, cell, 0), axis_derivative(d, f, cell, 1),
            axis_derivative(d, f, cell, 2)};
}

// velocity-gradient entry d v_comp / d x_axis
inline double vec_axis_derivative(const Domain& d, const VecField& v, int cell, int comp,
                                  int axis) {
    const int p = d.neighbor(cell, axis, +1);
    const int m = d.neighbor(cell, axis, -1);
    const auto c = static_cast<std::size_t>(cell);
    if (p >= 0 && m >= 0)
        return (v[static_cast<std::size_t>(p)][comp] - v[static_cast<std::size_t>(m)][comp]) /
               (2.0 * d.hx);
    if (p >= 0) return (v[static_cast<std::size_t>(p)][comp] - v[c][comp]) / d.hx;
    if (m >= 0) return (v[c][comp] - v[static_cast<std::size_t>(m)][comp]) / d.hx;
    return 0.0;
}

inline double divergence(const Domain& d, const VecField& v, int cell) {
    return vec_axis_derivative(d, v, cell, 0, 0) + vec_axis_derivative(d, v, cell, 1, 1) +
           vec_axis_derivative(d, v, cell, 2, 2);
}

// ---------------------------------------------------------------------------
// CSV snapshots: scalar fields as "cell,value"; spectra as
// "bin_center,cell,value". Loading accepts the same layouts.
// ---------------------------------------------------------------------------

inline void write_field_csv(const std::string& path, const Field& f) {
    std::ofstream os(path);
    if (!os) fail(Phase::solve, "cannot open for writing: " + path);
    os << "cell,value\n";
    char buf[64];
    for (std::size_t c = 0; c < f.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", c, f[c]);
        os << buf;
    }
}

inline Field load_field_csv(const std::string& path, std::size_t ncells) {
    std::ifstream is(path);
    if (!is) fail(Phase::config, "cannot open field file: " + path);
    Field f(ncells, 0.0);
    std::string line;
    std::getline(is, line);  // header
    std::size_t seen = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t cell = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%zu,%lf", &cell, &v) != 2)
            fail(Phase::config, "bad field row in " + path + ": " + line);
        if (cell >= ncells) fail(Phase::config, "cell index out of range in " + path);
        f[cell] = v;
        ++seen;
    }
    if (seen != ncells)
        fail(Phase::config, "field file " + path + " has " + std::to_string(seen) +
                                " rows, expected " + std::to_string(ncells));
    return f;
}

inline void write_spectrum_csv(const std::string& path, const Spectrum& s, const MassGrid& grid) {
    std::ofstream os(path);
    if (!os) fail(Phase::solve, "cannot open for writing: " + path);
    os << "bin_center,cell,value\n";
    char buf[96];
    for (std::size_t c = 0; c < s.cells(); ++c)
        for (std::size_t b = 0; b < s.nbins; ++b) {
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g\n", grid.centers[b], c, s.at(c, b));
            os << buf;
        }
}

inline Spectrum load_spectrum_csv(const std::string& path, const MassGrid& grid,
                                  std::size_t ncells) {
    std::ifstream is(path);
    if (!is) fail(Phase::config, "cannot open spectrum file: " + path);
    Spectrum s(grid.bins(), ncells, 0.0);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        double center = 0.0, v = 0.0;
        std::size_t cell = 0;
        if (std::sscanf(line.c_str(), "%lf,%zu,%lf", &center, &cell, &v) != 3)
            fail(Phase::config, "bad spectrum row in " + path + ": " + line);
        if (cell >= ncells) fail(Phase::config, "cell index out of range in " + path);
        // match to the nearest bin center
        std::size_t best = 0;
        double bd = std::abs(grid.centers[0] - center);
        for (std::size_t b = 1; b < grid.bins(); ++b) {
            double dd = std::abs(grid.centers[b] - center);
            if (dd < bd) { bd = dd; best = b; }
        }
        s.at(cell, best) = v;
    }
    return s;
}

}  // namespace nimbus
