#pragma once

#include "kernel_weights.hpp"
#include "quadrature.hpp"
#include "report.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmem {

/// Values v^0..v^N of a grid function on a TimeGrid.
struct GridFunction {
    TimeGrid grid;
    std::vector<Vec> values;

    static GridFunction zeros(const TimeGrid& grid, Eigen::Index dim) {
        return GridFunction{grid, std::vector<Vec>(static_cast<std::size_t>(grid.N + 1), Vec::Zero(dim))};
    }

    [[nodiscard]] Eigen::Index dim() const { return values.empty() ? 0 : values.front().size(); }
    [[nodiscard]] const Vec& operator[](int n) const { return values.at(static_cast<std::size_t>(n)); }
    Vec& operator[](int n) { return values.at(static_cast<std::size_t>(n)); }

    void validate() const {
        if (values.size() != static_cast<std::size_t>(grid.N + 1))
            throw DimensionError("GridFunction: expected N+1 values");
        for (const auto& v : values)
            if (v.size() != dim()) throw DimensionError("GridFunction: inconsistent vector dimensions");
    }
};

/// Running value K^n = (K^tau v)^n of the discrete memory operator.
struct MemoryState {
    Vec u0;
    Vec K;
    int n = 0;

    static MemoryState initial(const Vec& u0) { return MemoryState{u0, u0, 0}; }
};

/// (K^tau v)^n = u0 + tau * sum_{j=1..n} gamma_{n-j+1} v^j, by direct summation.
inline Vec k_apply_direct(const Vec& u0, const GridFunction& v, const QuadWeights& w, int n) {
    if (n < 0 || n > w.N() || n > v.grid.N)
        throw std::out_of_range("k_apply_direct: step index " + std::to_string(n) + " out of range");
    Vec acc = Vec::Zero(u0.size());
    for (int j = 1; j <= n; ++j) {
        require_same_size(u0, v[j], "k_apply_direct");
        acc += w(n - j + 1) * v[j];
    }
    return u0 + w.tau * acc;
}

/// One step of the exact O(1) recurrence
///   K^n = e^{-lambda tau} K^{n-1} + (1 - e^{-lambda tau}) (v^n + u0),
/// which is the rearranged discrete relation
///   (K^n - K^{n-1}) / tau = ((e^{lambda tau} - 1) / tau) (v^n - (K^n - u0)).
inline MemoryState k_update_recurrence(const MemoryState& state, const Vec& v_n, const KernelSpec& spec,
                                       const TimeGrid& grid) {
    if (state.n < 0) throw std::invalid_argument("k_update_recurrence: negative step index");
    require_same_size(state.K, v_n, "k_update_recurrence");
    require_same_size(state.u0, v_n, "k_update_recurrence");
    const double decay = std::exp(-spec.lambda * grid.tau);
    const double gain = -std::expm1(-spec.lambda * grid.tau);
    MemoryState next{state.u0, decay * state.K + gain * (v_n + state.u0), state.n + 1};
    return next;
}

/// Whole memory history K^0..K^N of a grid function via the recurrence.
inline GridFunction k_history(const Vec& u0, const GridFunction& v, const KernelSpec& spec) {
    GridFunction K = GridFunction::zeros(v.grid, u0.size());
    MemoryState st = MemoryState::initial(u0);
    K[0] = u0;
    for (int n = 1; n <= v.grid.N; ++n) {
        st = k_update_recurrence(st, v[n], spec, v.grid);
        K[n] = st.K;
    }
    return K;
}

/// (Kv)(t) = u0 + int_0^t k(t-s) v(s) ds by Simpson with panel doubling.
/// Oracle only.
inline Vec k_continuous(const Vec& u0, const std::function<Vec(double)>& v, const KernelSpec& spec, double t,
                        double tol = 1e-12) {
    if (t < 0.0 || t > spec.T * (1.0 + 1e-15))
        throw std::domain_error("k_continuous: t must lie in [0, T]");
    if (t == 0.0) return u0;
    auto integrand = [&](double s) -> Vec {
        Vec vs = v(s);
        require_same_size(u0, vs, "k_continuous");
        return kernel_eval(spec, std::max(0.0, t - s)) * vs;
    };
    auto dist = [](const Vec& a, const Vec& b) { return (a - b).lpNorm<Eigen::Infinity>(); };
    return u0 + quad::simpson_to_tolerance(integrand, 0.0, t, tol, dist);
}

/// Symmetric inner product used for the memory energy (the B-product).
struct InnerProduct {
    Mat matrix; // SPD

    [[nodiscard]] double operator()(const Vec& a, const Vec& b) const { return a.dot(matrix * b); }
    [[nodiscard]] double sq(const Vec& a) const { return (*this)(a, a); }
};

/// Discrete positive-type inequality for the memory term, checked at every n:
///   2 tau sum_{j<=n} <B K^j, v^j>
///     >= tau/(e^{lambda tau}-1) (|K^n|_B^2 - |u0|_B^2) + tau sum_{j<=n} |K^j|_B^2 - T |u0|_B^2.
/// The reported entry is the step with the smallest slack; lhs holds the lower
/// bound, rhs the memory energy, so the usual lhs <= rhs convention applies.
inline DiagnosticsEntry k_positivity_check(const Vec& u0, const GridFunction& v, const InnerProduct& inner,
                                           const KernelSpec& spec, double rel_tol = 1e-10) {
    v.validate();
    const TimeGrid& grid = v.grid;
    const double tau = grid.tau;
    const double c_tau = 1.0 / expm1_rate(spec.lambda, tau);
    const GridFunction K = k_history(u0, v, spec);
    const double u0sq = inner.sq(u0);

    double energy = 0.0;  // 2 tau sum <B K^j, v^j>
    double k_sum = 0.0;   // tau sum |K^j|_B^2
    double abs_acc = 0.0; // scale of everything accumulated
    DiagnosticsEntry worst;
    bool first = true;
    int worst_n = 0;
    for (int n = 1; n <= grid.N; ++n) {
        const double e = 2.0 * tau * inner(K[n], v[n]);
        energy += e;
        const double ksq = inner.sq(K[n]);
        k_sum += tau * ksq;
        abs_acc += std::abs(e) + tau * ksq;
        const double bound = c_tau * (ksq - u0sq) + k_sum - grid.T * u0sq;
        const double scale = 1.0 + abs_acc + c_tau * (ksq + u0sq) + grid.T * u0sq;
        auto entry = DiagnosticsEntry::check("memory_positivity", bound, energy, 0.0, rel_tol * scale,
                                             tags::kMemoryPositivity);
        if (first || entry.margin < worst.margin) {
            worst = entry;
            worst_n = n;
            first = false;
        }
    }
    if (first) worst = DiagnosticsEntry::check("memory_positivity", 0.0, 0.0, 0.0, rel_tol, tags::kMemoryPositivity);
    worst.extras["worst_n"] = worst_n;
    return worst;
}

} // namespace expmem
