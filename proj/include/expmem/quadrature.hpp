#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace expmem::quad {

/// Composite Simpson rule with `panels` panels (each panel uses its two end
/// points and its midpoint).  `F` maps double -> T where T supports + and
/// scalar *, so it works for doubles as well as Eigen vectors.
template <typename F>
auto simpson(F&& f, double a, double b, long panels) {
    using T = std::decay_t<std::invoke_result_t<F&, double>>;
    if (panels < 1) throw std::invalid_argument("simpson: panels must be >= 1");
    const double h = (b - a) / static_cast<double>(panels);
    T ends = f(a);
    ends += f(b);
    T mids = f(a + 0.5 * h);
    T inner = 0.0 * mids;
    for (long k = 1; k < panels; ++k) {
        mids += f(a + (static_cast<double>(k) + 0.5) * h);
        inner += f(a + static_cast<double>(k) * h);
    }
    T out = (h / 6.0) * (ends + 4.0 * mids + 2.0 * inner);
    return out;
}

// 4-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr std::array<double, 4> kGaussNodes4 = {-0.8611363115940526, -0.3399810435848563,
                                                       0.3399810435848563, 0.8611363115940526};
inline constexpr std::array<double, 4> kGaussWeights4 = {0.3478548451374538, 0.6521451548625461,
                                                         0.6521451548625461, 0.3478548451374538};

/// Single-interval 4-point Gauss-Legendre rule (exact up to degree 7).
template <typename F>
auto gauss_legendre4(F&& f, double a, double b) {
    using T = std::decay_t<std::invoke_result_t<F&, double>>;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    T acc = kGaussWeights4[0] * f(mid + half * kGaussNodes4[0]);
    for (std::size_t k = 1; k < 4; ++k) acc += kGaussWeights4[k] * f(mid + half * kGaussNodes4[k]);
    T out = half * acc;
    return out;
}

class ToleranceNotMet : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Composite Simpson with panel doubling until successive estimates differ by
/// less than `tol` (absolute, measured with `dist`).
template <typename F, typename Dist>
auto simpson_to_tolerance(F&& f, double a, double b, double tol, Dist&& dist, long max_panels = 1L << 22) {
    long panels = 8;
    using T = std::decay_t<std::invoke_result_t<F&, double>>;
    T prev = simpson(f, a, b, panels);
    while (panels < max_panels) {
        panels *= 2;
        T next = simpson(f, a, b, panels);
        if (dist(next, prev) < tol) return next;
        prev = next;
    }
    throw ToleranceNotMet("simpson_to_tolerance: tolerance " + std::to_string(tol) + " not met with " +
                          std::to_string(max_panels) + " panels");
}

} // namespace expmem::quad
