#pragma once

#include "memory_op.hpp"
#include "types.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace expmem {

/// <Av - Aw, v - w> >= mu * |v - w|^exponent.  `within_assumptions` is false
/// when the exponent is outside (2, inf), i.e. the linear case.
struct UniformMonotonicity {
    double exponent = 2.0;
    double mu = 0.0;
    bool within_assumptions = true;
    std::function<double(const Vec&)> norm; // the norm the estimate is stated in
    std::function<double(const Vec&)> dual; // its dual norm
};

/// Finite-dimensional monotone operator A: R^d -> R^d paired with the
/// Euclidean product.  `va_norm` is the discrete V_A norm the coercivity and
/// growth constants refer to; `dual_norm` is its dual.
struct MonotoneOperator {
    std::string name;
    Eigen::Index dim = 0;
    double p = 4.0;
    double mu_A = 1.0;
    double beta_A = 1.0;
    double c_A = 0.0;
    std::function<Vec(const Vec&)> apply;
    std::function<Mat(const Vec&)> jacobian; // empty if unavailable
    std::function<double(const Vec&)> va_norm;
    std::function<double(const Vec&)> dual_norm;
    std::optional<UniformMonotonicity> uniform;

    [[nodiscard]] Vec operator()(const Vec& v) const {
        if (v.size() != dim) throw DimensionError(name + ": dimension mismatch");
        return apply(v);
    }
    [[nodiscard]] bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

/// Linear, symmetric, strongly positive B given as a dense matrix.
struct SpdOperator {
    std::string name;
    Mat matrix;
    double mu_B = 1.0;   // smallest eigenvalue
    double beta_B = 1.0; // largest eigenvalue

    [[nodiscard]] Eigen::Index dim() const { return matrix.rows(); }
    [[nodiscard]] Vec apply(const Vec& v) const {
        if (v.size() != dim()) throw DimensionError(name + ": dimension mismatch");
        return matrix * v;
    }
    [[nodiscard]] double norm_sq(const Vec& v) const { return v.dot(apply(v)); }
    [[nodiscard]] double norm(const Vec& v) const { return std::sqrt(std::max(0.0, norm_sq(v))); }
    [[nodiscard]] InnerProduct inner() const { return InnerProduct{matrix}; }
};

/// <B v, w> = v^T B w.
inline double b_inner(const SpdOperator& B, const Vec& v, const Vec& w) {
    require_same_size(v, w, "b_inner");
    return v.dot(B.apply(w));
}

namespace detail {

inline double lp_norm(const Vec& v, double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
    return std::pow(s, 1.0 / p);
}

/// Checks symmetry and positive definiteness; fills mu_B / beta_B from the spectrum.
inline SpdOperator finish_spd(std::string name, Mat m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw std::invalid_argument(name + ": matrix must be square");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument(name + ": matrix must be exactly symmetric");
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) throw std::domain_error(name + ": matrix is not positive definite");
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return SpdOperator{std::move(name), std::move(m), es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

} // namespace detail

/// Componentwise A(v) = a3 v^3 + a1 v on R^dim with p = 4 and V_A = l^4.  With
/// a3 == 0 the operator is linear and only 2-coercive, see make_linear_diag.
inline MonotoneOperator make_scalar_cubic(double a3, double a1, Eigen::Index dim = 1);

/// A(v) = a v.  Coercive and uniformly monotone only with exponent p = 2,
/// which lies outside the range p in (2, inf) of the standing assumptions.
inline MonotoneOperator make_linear_diag(double a, Eigen::Index dim = 1) {
    if (!(a > 0.0)) throw std::domain_error("linear: coefficient a must be > 0");
    if (dim < 1) throw std::invalid_argument("linear: dim must be >= 1");
    MonotoneOperator op;
    op.name = "linear";
    op.dim = dim;
    op.p = 2.0;
    op.mu_A = a;
    op.c_A = 0.0;
    op.beta_A = a;
    op.apply = [a](const Vec& v) -> Vec { return a * v; };
    op.jacobian = [a, dim](const Vec&) -> Mat { return a * Mat::Identity(dim, dim); };
    op.va_norm = [](const Vec& v) { return v.norm(); };
    op.dual_norm = [](const Vec& g) { return g.norm(); };
    op.uniform = UniformMonotonicity{2.0, a, false, op.va_norm, op.dual_norm};
    return op;
}

inline MonotoneOperator make_scalar_cubic(double a3, double a1, Eigen::Index dim) {
    if (a3 < 0.0 || a1 < 0.0) throw std::domain_error("scalar_cubic: coefficients must be >= 0");
    if (a3 == 0.0 && a1 == 0.0)
        throw std::domain_error("scalar_cubic: a3 and a1 both zero violates p-coercivity");
    if (dim < 1) throw std::invalid_argument("scalar_cubic: dim must be >= 1");
    if (a3 == 0.0) {
        MonotoneOperator op = make_linear_diag(a1, dim);
        op.name = "cubic";
        return op;
    }
    MonotoneOperator op;
    op.name = "cubic";
    op.dim = dim;
    op.p = 4.0;
    op.mu_A = a3;
    op.c_A = 0.0;
    // |a3 v^3|_{4/3} = a3 |v|_4^3 and |a1 v|_{4/3} <= sqrt(dim) a1 |v|_4 <= sqrt(dim) a1 (1 + |v|_4^3).
    op.beta_A = a3 + a1 * std::sqrt(static_cast<double>(dim));
    op.apply = [a3, a1](const Vec& v) -> Vec { return (a3 * v.array().cube() + a1 * v.array()).matrix(); };
    op.jacobian = [a3, a1](const Vec& v) -> Mat {
        return (3.0 * a3 * v.array().square() + a1).matrix().asDiagonal();
    };
    op.va_norm = [](const Vec& v) { return detail::lp_norm(v, 4.0); };
    op.dual_norm = [](const Vec& g) { return detail::lp_norm(g, 4.0 / 3.0); };
    // (v^3 - w^3)(v - w) = (v-w)^2 (v^2 + vw + w^2) >= (v-w)^4 / 4.
    op.uniform = UniformMonotonicity{4.0, 0.25 * a3, true, op.va_norm, op.dual_norm};
    return op;
}

/// A = 0.  Not coercive; exists for the explicit-update corner case.
inline MonotoneOperator make_zero_operator(Eigen::Index dim) {
    MonotoneOperator op;
    op.name = "zero";
    op.dim = dim;
    op.p = 4.0;
    op.mu_A = 0.0;
    op.beta_A = 0.0;
    op.apply = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
    op.jacobian = [dim](const Vec&) -> Mat { return Mat::Zero(dim, dim); };
    op.va_norm = [](const Vec& v) { return detail::lp_norm(v, 4.0); };
    op.dual_norm = [](const Vec& g) { return detail::lp_norm(g, 4.0 / 3.0); };
    return op;
}

namespace detail {

// Forward differences g_k = (v_{k+1} - v_k)/h, k = 0..m, with v_0 = v_{m+1} = 0.
inline Vec forward_differences(const Vec& v, double h) {
    const Eigen::Index m = v.size();
    Vec g(m + 1);
    for (Eigen::Index k = 0; k <= m; ++k) {
        const double right = k < m ? v[k] : 0.0;
        const double left = k > 0 ? v[k - 1] : 0.0;
        g[k] = (right - left) / h;
    }
    return g;
}

/// Dual norm of a functional g w.r.t. (sum_k h |D+ v|_k^p)^{1/p}:
///   min_c ( sum_k h |(G_k - c)|^{p'} )^{1/p'},  G_k = sum_{i>k} g_i.
inline double p_laplacian_dual_norm(const Vec& g, double p, double h) {
    const double q = p / (p - 1.0);
    const Eigen::Index m = g.size();
    Vec G = Vec::Zero(m + 1);
    for (Eigen::Index k = m - 1; k >= 0; --k) G[k] = G[k + 1] + g[k];
    auto cost = [&](double c) {
        double s = 0.0;
        for (Eigen::Index k = 0; k <= m; ++k) s += h * std::pow(std::abs(G[k] - c), q);
        return s;
    };
    double lo = G.minCoeff(), hi = G.maxCoeff();
    // Convex in c: golden-section search.
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = cost(x1), f2 = cost(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = cost(x2);
        }
    }
    return std::pow(std::min({f1, f2, cost(0.5 * (lo + hi))}), 1.0 / q);
}

} // namespace detail

/// Finite-difference p-Laplacian A(v)_i = -D-( |D+v|^{p-2} D+v )_i on m interior
/// nodes of (0, L) with homogeneous Dirichlet data.  The Jacobian uses the
/// flux (|g|^2 + eps^2)^{(p-2)/2} g so it stays positive definite at zero
/// gradient; `apply` is exact.
inline MonotoneOperator make_p_laplacian_1d(Eigen::Index m, double p, double L = 1.0, double eps = 1e-8) {
    if (m < 2) throw std::invalid_argument("p_laplacian: m must be >= 2");
    if (!(p > 2.0)) throw std::domain_error("p_laplacian: p must satisfy p in (2,inf)");
    if (!(L > 0.0)) throw std::domain_error("p_laplacian: L must be > 0");
    const double h = L / static_cast<double>(m + 1);
    MonotoneOperator op;
    op.name = "p_laplacian";
    op.dim = m;
    op.p = p;
    // <A v, v> = sum_k |g_k|^p = |v|_{V_A}^p / h;  |A v|_* <= |v|_{V_A}^{p-1} / h.
    op.mu_A = 1.0 / h;
    op.c_A = 0.0;
    op.beta_A = 1.0 / h;
    op.apply = [m, p, h](const Vec& v) -> Vec {
        const Vec g = detail::forward_differences(v, h);
        Vec flux(m + 1);
        for (Eigen::Index k = 0; k <= m; ++k) flux[k] = std::pow(std::abs(g[k]), p - 2.0) * g[k];
        Vec out(m);
        for (Eigen::Index i = 0; i < m; ++i) out[i] = -(flux[i + 1] - flux[i]) / h;
        return out;
    };
    op.jacobian = [m, p, h, eps](const Vec& v) -> Mat {
        const Vec g = detail::forward_differences(v, h);
        Vec c(m + 1);
        for (Eigen::Index k = 0; k <= m; ++k) {
            const double s = g[k] * g[k] + eps * eps;
            c[k] = std::pow(s, 0.5 * (p - 4.0)) * ((p - 1.0) * g[k] * g[k] + eps * eps);
        }
        Mat J = Mat::Zero(m, m);
        const double ih2 = 1.0 / (h * h);
        for (Eigen::Index i = 0; i < m; ++i) {
            J(i, i) = (c[i] + c[i + 1]) * ih2;
            if (i + 1 < m) {
                J(i, i + 1) = -c[i + 1] * ih2;
                J(i + 1, i) = -c[i + 1] * ih2;
            }
        }
        return J;
    };
    op.va_norm = [p, h](const Vec& v) {
        const Vec g = detail::forward_differences(v, h);
        double s = 0.0;
        for (Eigen::Index k = 0; k < g.size(); ++k) s += h * std::pow(std::abs(g[k]), p);
        return std::pow(s, 1.0 / p);
    };
    op.dual_norm = [p, h](const Vec& g) { return detail::p_laplacian_dual_norm(g, p, h); };
    // (|a|^{p-2}a - |b|^{p-2}b)(a-b) >= 2^{2-p} |a-b|^p.
    op.uniform = UniformMonotonicity{p, std::pow(2.0, 2.0 - p) / h, true, op.va_norm, op.dual_norm};
    return op;
}

/// B = b I on R^dim.
inline SpdOperator make_scaled_identity(double b, Eigen::Index dim = 1) {
    if (!(b > 0.0)) throw std::domain_error("identity: b must be > 0 (strong positivity)");
    return detail::finish_spd("identity", b * Mat::Identity(dim, dim));
}

/// Second-difference matrix tridiag(-1, 2, -1) / h^2, h = L/(m+1).
inline SpdOperator make_laplacian_spd_1d(Eigen::Index m, double L = 1.0) {
    if (m < 2) throw std::invalid_argument("laplacian: m must be >= 2");
    if (!(L > 0.0)) throw std::domain_error("laplacian: L must be > 0");
    const double h = L / static_cast<double>(m + 1);
    const double ih2 = 1.0 / (h * h);
    Mat M = Mat::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        M(i, i) = 2.0 * ih2;
        if (i + 1 < m) {
            M(i, i + 1) = -ih2;
            M(i + 1, i) = -ih2;
        }
    }
    return detail::finish_spd("laplacian", std::move(M));
}

} // namespace expmem
