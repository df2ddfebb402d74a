#pragma once

#include "types.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace expmem {

/// mt19937_64 with explicit mappings to doubles, so sequences are identical
/// across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec uniform_vec(Eigen::Index n, double a, double b) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(a, b);
        return v;
    }
    Vec normal_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

  private:
    std::mt19937_64 eng_;
};

} // namespace expmem
