#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Bounded convex domain of diameter exactly 1 (ball of radius 1/2 or cube of
// edge 1/sqrt(3)), discretized by a uniform Cartesian lattice of cell centers.
// Only cells whose center lies strictly inside the domain are active; active
// cells adjacent to the boundary (or to an inactive lattice site) carry the
// boundary flag.
// ---------------------------------------------------------------------------

enum class Shape { ball, box };

inline std::string shape_name(Shape s) { return s == Shape::ball ? "ball" : "box"; }

struct DomainConfig {
    Shape shape = Shape::box;
    int resolution = 8;  // lattice cells per axis across the bounding cube
};

class Domain {
public:
    Shape shape = Shape::box;
    int n = 0;            // lattice cells per axis
    double hx = 0.0;      // lattice spacing
    double extent = 0.0;  // bounding cube edge
    Vec3 lo{};            // bounding cube lower corner

    std::vector<Vec3> centers;       // active cell centers
    std::vector<bool> boundary;      // per active cell
    std::vector<int> lattice_to_id;  // n^3 -> active id or -1
    std::vector<int> id_to_lattice;  // active id -> lattice index
    std::vector<int> lattice_owner;  // n^3 -> nearest active id (itself if active)

    double cell_volume() const { return hx * hx * hx; }
    std::size_t size() const { return centers.size(); }

    int lattice_index(int i, int j, int k) const { return (k * n + j) * n + i; }

    int cell_at(int i, int j, int k) const {
        if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n) return -1;
        return lattice_to_id[static_cast<std::size_t>(lattice_index(i, j, k))];
    }

    std::array<int, 3> lattice_coords(int cell) const {
        int l = id_to_lattice[static_cast<std::size_t>(cell)];
        return {l % n, (l / n) % n, l / (n * n)};
    }

    // neighbor active cell along axis (dir = +1/-1), or -1
    int neighbor(int cell, int axis, int dir) const {
        auto c = lattice_coords(cell);
        c[static_cast<std::size_t>(axis)] += dir;
        return cell_at(c[0], c[1], c[2]);
    }

    bool inside(const Vec3& p) const {
        if (shape == Shape::ball) return dot(p, p) < 0.25;
        const double h = 0.5 * extent;
        return std::abs(p.x) < h && std::abs(p.y) < h && std::abs(p.z) < h;
    }

    bool inside_closure(const Vec3& p, double tol = 1e-12) const {
        if (shape == Shape::ball) return dot(p, p) <= 0.25 * (1.0 + tol) + tol;
        const double h = 0.5 * extent * (1.0 + tol) + tol;
        return std::abs(p.x) <= h && std::abs(p.y) <= h && std::abs(p.z) <= h;
    }

    // outward unit normal of the closest boundary point
    Vec3 outward_normal(const Vec3& p) const {
        if (shape == Shape::ball) {
            double r = norm(p);
            return r > 0 ? p / r : Vec3{1, 0, 0};
        }
        // box: face with the largest |coordinate| relative to the half-edge
        const double h = 0.5 * extent;
        int axis = 0;
        double best = -1.0;
        for (int a = 0; a < 3; ++a) {
            double d = std::abs(p[a]) / h;
            if (d > best) { best = d; axis = a; }
        }
        Vec3 nrm{};
        nrm[axis] = p[axis] >= 0 ? 1.0 : -1.0;
        return nrm;
    }

    // projection of an interior point onto the boundary
    Vec3 project_to_boundary(const Vec3& p) const {
        if (shape == Shape::ball) {
            double r = norm(p);
            return r > 0 ? p * (0.5 / r) : Vec3{0.5, 0, 0};
        }
        const double h = 0.5 * extent;
        Vec3 q = p;
        Vec3 nrm = outward_normal(p);
        for (int a = 0; a < 3; ++a)
            if (nrm[a] != 0.0) q[a] = nrm[a] * h;
        return q;
    }

    double volume_exact() const {
        if (shape == Shape::ball) return 4.0 / 3.0 * 3.14159265358979323846 * 0.125;
        return extent * extent * extent;
    }
};

// ---------------------------------------------------------------------------

inline Domain build_domain(const DomainConfig& cfg) {
    if (cfg.resolution < 2)
        fail(Phase::config, "domain resolution must be at least 2 cells per axis, got " +
                                std::to_string(cfg.resolution));

    Domain d;
    d.shape = cfg.shape;
    d.n = cfg.resolution;
    d.extent = cfg.shape == Shape::ball ? 1.0 : 1.0 / std::sqrt(3.0);
    d.hx = d.extent / d.n;
    d.lo = Vec3{-0.5, -0.5, -0.5} * d.extent;

    const std::size_t nlat = static_cast<std::size_t>(d.n) * d.n * d.n;
    d.lattice_to_id.assign(nlat, -1);

    for (int k = 0; k < d.n; ++k)
        for (int j = 0; j < d.n; ++j)
            for (int i = 0; i < d.n; ++i) {
                Vec3 c = d.lo + Vec3{(i + 0.5) * d.hx, (j + 0.5) * d.hx, (k + 0.5) * d.hx};
                if (!d.inside(c)) continue;
                int id = static_cast<int>(d.centers.size());
                d.lattice_to_id[static_cast<std::size_t>(d.lattice_index(i, j, k))] = id;
                d.id_to_lattice.push_back(d.lattice_index(i, j, k));
                d.centers.push_back(c);
            }

    if (d.centers.empty()) fail(Phase::config, "domain discretization produced no active cells");

    // boundary flag: any missing 6-neighbor
    d.boundary.assign(d.centers.size(), false);
    for (std::size_t c = 0; c < d.centers.size(); ++c) {
        for (int a = 0; a < 3 && !d.boundary[c]; ++a)
            for (int s = -1; s <= 1; s += 2)
                if (d.neighbor(static_cast<int>(c), a, s) < 0) {
                    d.boundary[c] = true;
                    break;
                }
    }

    // nearest-active owner of every lattice site (breadth-first from the
    // active set), used to extend cell fields for off-grid sampling
    d.lattice_owner.assign(nlat, -1);
    {
        std::vector<int> frontier;
        frontier.reserve(d.centers.size());
        for (std::size_t c = 0; c < d.centers.size(); ++c) {
            d.lattice_owner[static_cast<std::size_t>(d.id_to_lattice[c])] = static_cast<int>(c);
            frontier.push_back(d.id_to_lattice[c]);
        }
        std::vector<int> next;
        while (!frontier.empty()) {
            next.clear();
            for (int l : frontier) {
                const int i = l % d.n, j = (l / d.n) % d.n, k = l / (d.n * d.n);
                const int di[6] = {1, -1, 0, 0, 0, 0};
                const int dj[6] = {0, 0, 1, -1, 0, 0};
                const int dk[6] = {0, 0, 0, 0, 1, -1};
                for (int s = 0; s < 6; ++s) {
                    const int ii = i + di[s], jj = j + dj[s], kk = k + dk[s];
                    if (ii < 0 || jj < 0 || kk < 0 || ii >= d.n || jj >= d.n || kk >= d.n)
                        continue;
                    const auto ll = static_cast<std::size_t>(d.lattice_index(ii, jj, kk));
                    if (d.lattice_owner[ll] >= 0) continue;
                    d.lattice_owner[ll] = d.lattice_owner[static_cast<std::size_t>(l)];
                    next.push_back(static_cast<int>(ll));
                }
            }
            frontier.swap(next);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Backward ray exit parameter: the most negative alpha such that x + a*q stays
// inside the domain for all a in ]alpha, 0[. Analytic for both shapes.
// ---------------------------------------------------------------------------

inline double exit_distance(const Domain& d, const Vec3& x, const Vec3& q) {
    if (!d.inside_closure(x))
        fail(Phase::solve, "exit_distance: point lies outside the domain closure");

    if (d.shape == Shape::ball) {
        // |x + a q|^2 = R^2, take the non-positive root
        const double R2 = 0.25;
        const double xq = dot(x, q);
        const double disc = xq * xq + R2 - dot(x, x);
        const double s = std::sqrt(std::max(disc, 0.0));
        return std::min(0.0, -xq - s);
    }

    // box: slab intersection for backward travel
    const double h = 0.5 * d.extent;
    double alpha = -2.0;  // any value below -diameter
    for (int a = 0; a < 3; ++a) {
        if (q[a] == 0.0) continue;
        double lo_bound = (-h - x[a]) / q[a];
        double hi_bound = (h - x[a]) / q[a];
        double lower = std::min(lo_bound, hi_bound);
        alpha = std::max(alpha, lower);
    }
    return std::min(0.0, alpha);
}

// ---------------------------------------------------------------------------
// Boundary sample set: one surface point per boundary-flagged cell together
// with the quadrature directions that point strictly into the domain there.
// ---------------------------------------------------------------------------

struct BoundarySample {
    Vec3 point;               // on the boundary surface
    Vec3 inward_normal;       // -outward normal
    std::vector<int> inward;  // indices of quadrature directions q with q.n < 0
};

template <class DirectionList>
inline std::vector<BoundarySample> boundary_samples(const Domain& d, const DirectionList& dirs) {
    std::vector<BoundarySample> out;
    for (std::size_t c = 0; c < d.size(); ++c) {
        if (!d.boundary[c]) continue;
        BoundarySample s;
        s.point = d.project_to_boundary(d.centers[c]);
        Vec3 nrm = d.outward_normal(s.point);
        s.inward_normal = Vec3{0, 0, 0} - nrm;
        for (std::size_t j = 0; j < dirs.size(); ++j)
            if (dot(dirs[j], nrm) < 0.0) s.inward.push_back(static_cast<int>(j));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace nimbus
