#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nimbus/core.hpp"

namespace nimbus {

// ---------------------------------------------------------------------------
// Matrix-free preconditioned conjugate gradient with diagonal (Jacobi)
// preconditioning. `apply(x, y)` computes y = A x for the SPD operator.
// Returns the iteration count; throws on non-convergence with the residual
// history tail in the message.
// ---------------------------------------------------------------------------

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
};

template <class ApplyFn>
inline CgResult pcg(std::size_t n, ApplyFn&& apply, const std::vector<double>& diag,
                    const std::vector<double>& b, std::vector<double>& x, double rtol,
                    int max_iters) {
    std::vector<double> r(n), z(n), p(n), q(n);

    double norm_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm_b += b[i] * b[i];
    norm_b = std::sqrt(norm_b);
    if (norm_b == 0.0) {
        x.assign(n, 0.0);
        return {0, 0.0};
    }

    apply(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];

    auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = in[i] / diag[i];
    };

    precond(r, z);
    p = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];

    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += r[i] * r[i];
    res = std::sqrt(res);

    int it = 0;
    std::vector<double> history;
    while (res > rtol * norm_b && it < max_iters) {
        apply(p, q);
        double pq = 0.0;
        for (std::size_t i = 0; i < n; ++i) pq += p[i] * q[i];
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        precond(r, z);
        double rz_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) rz_new += r[i] * z[i];
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        res = 0.0;
        for (std::size_t i = 0; i < n; ++i) res += r[i] * r[i];
        res = std::sqrt(res);
        history.push_back(res / norm_b);
        ++it;
    }
    if (res > rtol * norm_b) {
        std::string tail;
        const std::size_t show = std::min<std::size_t>(5, history.size());
        for (std::size_t i = history.size() - show; i < history.size(); ++i)
            tail += (tail.empty() ? "" : ", ") + std::to_string(history[i]);
        fail(Phase::solve, "pcg: no convergence in " + std::to_string(max_iters) +
                               " iterations; trailing relative residuals: " + tail);
    }
    return {it, res / norm_b};
}

}  // namespace nimbus
