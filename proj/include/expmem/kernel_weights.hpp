#pragma once

#include "quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmem {

/// Exponential memory kernel k(z) = lambda * exp(-lambda z) on [0, T].
/// 1/lambda is the averaged relaxation (delay) time.
struct KernelSpec {
    double lambda = 1.0;
    double T = 1.0;

    static KernelSpec make(double lambda, double T) {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw std::domain_error("KernelSpec: lambda must be > 0 (got " + std::to_string(lambda) + ")");
        if (!(T > 0.0) || !std::isfinite(T))
            throw std::domain_error("KernelSpec: T must be > 0 (got " + std::to_string(T) + ")");
        return KernelSpec{lambda, T};
    }

    /// L1(0,T) norm of the kernel.
    [[nodiscard]] double l1_norm() const { return -std::expm1(-lambda * T); }
};

/// Uniform grid t_n = n*tau, n = 0..N, tau = T/N.
struct TimeGrid {
    int N = 1;
    double T = 1.0;
    double tau = 1.0;

    static TimeGrid make(double T, int N) {
        if (N < 1) throw std::invalid_argument("TimeGrid: N must be >= 1 (got " + std::to_string(N) + ")");
        if (!(T > 0.0)) throw std::domain_error("TimeGrid: T must be > 0");
        return TimeGrid{N, T, T / N};
    }
    static TimeGrid make(const KernelSpec& spec, int N) { return make(spec.T, N); }

    [[nodiscard]] double t(int n) const { return n == N ? T : n * tau; }
};

inline double kernel_eval(const KernelSpec& spec, double z) {
    if (z < 0.0 || std::isnan(z)) throw std::domain_error("kernel_eval: z must be >= 0");
    return spec.lambda * std::exp(-spec.lambda * z);
}

/// (e^{lambda tau} - 1) / tau, computed without cancellation for small lambda*tau.
inline double expm1_rate(double lambda, double tau) {
    const double x = lambda * tau;
    if (x < 1e-8) return lambda * (1.0 + x * (0.5 + x / 6.0));
    return std::expm1(x) / tau;
}

/// Product-quadrature weights gamma_1..gamma_N (stored 0-based: gamma[i-1] = gamma_i).
struct QuadWeights {
    double tau = 1.0;
    std::vector<double> gamma;

    [[nodiscard]] int N() const { return static_cast<int>(gamma.size()); }
    /// 1-based access, i in 1..N.
    [[nodiscard]] double operator()(int i) const { return gamma.at(static_cast<std::size_t>(i - 1)); }
    /// tau * gamma_1 = 1 - e^{-lambda tau}, the implicit memory coefficient.
    [[nodiscard]] double implicit_coefficient() const { return tau * gamma.front(); }
};

inline QuadWeights weights_closed_form(const KernelSpec& spec, const TimeGrid& grid) {
    QuadWeights w{grid.tau, std::vector<double>(static_cast<std::size_t>(grid.N))};
    const double rate = expm1_rate(spec.lambda, grid.tau);
    for (int i = 1; i <= grid.N; ++i)
        w.gamma[static_cast<std::size_t>(i - 1)] = rate * std::exp(-spec.lambda * i * grid.tau);
    return w;
}

/// gamma_i = int_0^1 k((i - s) tau) ds by composite Simpson.  Test oracle for
/// weights_closed_form.
inline QuadWeights weights_numeric(const KernelSpec& spec, const TimeGrid& grid, long panels) {
    if (panels < 1) throw std::invalid_argument("weights_numeric: panels must be >= 1");
    QuadWeights w{grid.tau, std::vector<double>(static_cast<std::size_t>(grid.N))};

    // Composite Simpson on each cell, written out over the 2P+1 nodes
    // s_j = j h / 2.  The kernel sample at z_j = (i - s_j) tau is
    // lambda exp(-lambda z_a) exp(lambda (j - a) tau h / 2) with z_a an anchor
    // node evaluated directly once per block; the second factor comes from a
    // table of small offsets.  Every sample stays within a few ulp of
    // kernel_eval at roughly 1/100 of the exp calls.
    constexpr long kBlock = 256;
    const long nodes = 2 * panels + 1;
    const double h = 1.0 / static_cast<double>(panels);
    const double half_step = 0.5 * h * grid.tau;
    std::vector<double> offset(static_cast<std::size_t>(std::min(kBlock, nodes)));
    for (std::size_t r = 0; r < offset.size(); ++r) offset[r] = std::exp(spec.lambda * double(r) * half_step);

    for (int i = 1; i <= grid.N; ++i) {
        double ends = 0.0, mids = 0.0, inner = 0.0;
        for (long a = 0; a < nodes; a += kBlock) {
            const double z_a = (double(i) - double(a) * 0.5 * h) * grid.tau;
            const double anchor = kernel_eval(spec, z_a);
            const long stop = std::min(nodes, a + kBlock);
            for (long j = a; j < stop; ++j) {
                const double f = anchor * offset[static_cast<std::size_t>(j - a)];
                if (j == 0 || j == nodes - 1) ends += f;
                else if (j % 2 == 1) mids += f;
                else inner += f;
            }
        }
        w.gamma[static_cast<std::size_t>(i - 1)] = (h / 6.0) * (ends + 4.0 * mids + 2.0 * inner);
    }
    return w;
}

} // namespace expmem
