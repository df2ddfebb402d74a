#pragma once

#include "memory_op.hpp"
#include "stepper.hpp"

#include <stdexcept>

namespace expmem {

/// Reference solution of the equivalent coupled system
///   v' + A v + B u = f,   u' = lambda (v - (u - u0)),   v(0) = v0, u(0) = u0,
/// integrated with classical RK4 (step T / fine_steps) and sampled on the
/// grid with N steps.
struct CoupledSolution {
    GridFunction v;
    GridFunction u;
};

inline CoupledSolution oracle_system5(const ProblemInstance& problem, long fine_steps, int N) {
    problem.validate();
    if (fine_steps < 1 || N < 1 || fine_steps % N != 0)
        throw std::invalid_argument("oracle_system5: fine_steps must be a positive multiple of N");
    const TimeGrid grid = TimeGrid::make(problem.kernel, N);
    const long stride = fine_steps / N;
    const double h = problem.kernel.T / static_cast<double>(fine_steps);
    const double lam = problem.kernel.lambda;
    const auto d = problem.dim();

    auto rhs_v = [&](double t, const Vec& v, const Vec& u) -> Vec {
        return problem.f.value(t) - problem.A(v) - problem.B.apply(u);
    };
    auto rhs_u = [&](const Vec& v, const Vec& u) -> Vec { return lam * (v - (u - problem.u0)); };

    CoupledSolution out{GridFunction::zeros(grid, d), GridFunction::zeros(grid, d)};
    Vec v = problem.v0, u = problem.u0;
    out.v[0] = v;
    out.u[0] = u;
    for (long s = 0; s < fine_steps; ++s) {
        const double t = problem.kernel.T * static_cast<double>(s) / static_cast<double>(fine_steps);
        const Vec k1v = rhs_v(t, v, u), k1u = rhs_u(v, u);
        const Vec v2 = v + 0.5 * h * k1v, u2 = u + 0.5 * h * k1u;
        const Vec k2v = rhs_v(t + 0.5 * h, v2, u2), k2u = rhs_u(v2, u2);
        const Vec v3 = v + 0.5 * h * k2v, u3 = u + 0.5 * h * k2u;
        const Vec k3v = rhs_v(t + 0.5 * h, v3, u3), k3u = rhs_u(v3, u3);
        const Vec v4 = v + h * k3v, u4 = u + h * k3u;
        const Vec k4v = rhs_v(t + h, v4, u4), k4u = rhs_u(v4, u4);
        v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        u += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        if ((s + 1) % stride == 0) {
            const int n = static_cast<int>((s + 1) / stride);
            out.v[n] = v;
            out.u[n] = u;
        }
    }
    return out;
}

} // namespace expmem
