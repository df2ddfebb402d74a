#pragma once

#include "types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace expmem {

class LinearSolveError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct CgResult {
    Vec x;
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Conjugate gradients for an SPD action `apply(p) -> A p`.  Stops when
/// |r| <= rel_tol |b|; throws LinearSolveError otherwise.
template <typename Action>
CgResult conjugate_gradient(Action&& apply, const Vec& b, double rel_tol, int max_iter) {
    CgResult out{Vec::Zero(b.size()), 0, 0.0};
    const double bnorm = b.norm();
    if (bnorm == 0.0) return out;
    Vec r = b;
    Vec p = r;
    double rr = r.squaredNorm();
    const double target = rel_tol * bnorm;
    for (int it = 1; it <= max_iter; ++it) {
        const Vec q = apply(p);
        const double pq = p.dot(q);
        if (!(pq > 0.0) || !std::isfinite(pq))
            throw LinearSolveError("conjugate_gradient: operator not positive definite (p.Ap = " +
                                   std::to_string(pq) + ")");
        const double alpha = rr / pq;
        out.x += alpha * p;
        r -= alpha * q;
        const double rr_new = r.squaredNorm();
        out.iterations = it;
        if (std::sqrt(rr_new) <= target) {
            // Replace the recursive residual by the true one before accepting.
            const double true_res = (b - apply(out.x)).norm();
            if (true_res <= target) {
                out.relative_residual = true_res / bnorm;
                return out;
            }
            r = b - apply(out.x);
            p = r;
            rr = r.squaredNorm();
            continue;
        }
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    throw LinearSolveError("conjugate_gradient: no convergence in " + std::to_string(max_iter) +
                           " iterations (relative residual " + std::to_string(std::sqrt(rr) / bnorm) + ")");
}

} // namespace expmem
