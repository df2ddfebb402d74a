#pragma once

#include "kernel_weights.hpp"
#include "linear_solve.hpp"
#include "memory_op.hpp"
#include "operators.hpp"
#include "quadrature.hpp"
#include "types.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace expmem {

/// Right-hand side f(t).  When `integral` is set it returns the exact
/// int_a^b f(t) dt and is used for the cell averages.
struct Forcing {
    std::function<Vec(double)> value;
    std::function<Vec(double, double)> integral;

    static Forcing zero(Eigen::Index dim) {
        return Forcing{[dim](double) -> Vec { return Vec::Zero(dim); },
                       [dim](double, double) -> Vec { return Vec::Zero(dim); }};
    }
    static Forcing constant(const Vec& c) {
        return Forcing{[c](double) -> Vec { return c; }, [c](double a, double b) -> Vec { return (b - a) * c; }};
    }
    /// f(t) = sin(omega t) * profile.
    static Forcing sine(const Vec& profile, double omega = 1.0) {
        return Forcing{[profile, omega](double t) -> Vec { return std::sin(omega * t) * profile; },
                       [profile, omega](double a, double b) -> Vec {
                           return ((std::cos(omega * a) - std::cos(omega * b)) / omega) * profile;
                       }};
    }
    /// f(t) = (sum_k coeffs[k] t^k) * profile.
    static Forcing polynomial(std::vector<double> coeffs, const Vec& profile) {
        auto val = [coeffs](double t) {
            double s = 0.0;
            for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) s = s * t + *it;
            return s;
        };
        auto anti = [coeffs](double t) {
            double s = 0.0;
            for (std::size_t k = coeffs.size(); k-- > 0;) s = s * t + coeffs[k] / double(k + 1);
            return s * t;
        };
        return Forcing{[val, profile](double t) -> Vec { return val(t) * profile; },
                       [anti, profile](double a, double b) -> Vec { return (anti(b) - anti(a)) * profile; }};
    }

    /// f^n = (1/tau) int_{t_{n-1}}^{t_n} f(t) dt  (4-point Gauss-Legendre when no antiderivative).
    [[nodiscard]] Vec cell_average(double a, double b) const {
        if (integral) return integral(a, b) / (b - a);
        return quad::gauss_legendre4(value, a, b) / (b - a);
    }
};

/// v' + A v + B K v = f, v(0) = v0, (Kv)(t) = u0 + int_0^t k(t-s) v(s) ds.
struct ProblemInstance {
    MonotoneOperator A;
    SpdOperator B;
    Vec u0;
    Vec v0;
    Forcing f;
    KernelSpec kernel;

    [[nodiscard]] Eigen::Index dim() const { return v0.size(); }

    void validate() const {
        const auto d = v0.size();
        if (A.dim != d || B.dim() != d || u0.size() != d)
            throw DimensionError("ProblemInstance: operator/data dimensions disagree");
        if (!A.apply) throw std::invalid_argument("ProblemInstance: operator A has no apply");
        if (!f.value) throw std::invalid_argument("ProblemInstance: forcing has no value function");
    }
};

struct StepperConfig {
    int N = 256;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    bool newton_polish = true; // one extra full step after convergence
    double damping = 0.5;
    int max_halvings = 30;
    double cg_tol = 1e-12;
    int cg_max_iter = 0; // 0 means 10 * dim
    bool picard = true;
    double picard_relaxation = 0.5;
    int picard_max_iter = 5000;

    void validate() const {
        if (N < 1) throw std::invalid_argument("StepperConfig: N must be >= 1");
        if (!(newton_tol > 0.0) || !(cg_tol > 0.0)) throw std::invalid_argument("StepperConfig: tolerances must be > 0");
        if (newton_max_iter < 1 || max_halvings < 0 || cg_max_iter < 0 || picard_max_iter < 1)
            throw std::invalid_argument("StepperConfig: iteration caps must be positive");
        if (!(damping > 0.0 && damping < 1.0)) throw std::invalid_argument("StepperConfig: damping must lie in (0,1)");
        if (!(picard_relaxation > 0.0 && picard_relaxation <= 1.0))
            throw std::invalid_argument("StepperConfig: picard_relaxation must lie in (0,1]");
    }
    [[nodiscard]] int cg_iterations(Eigen::Index dim) const {
        return cg_max_iter > 0 ? cg_max_iter : static_cast<int>(10 * std::max<Eigen::Index>(dim, 1));
    }
};

struct StepStats {
    int newton_iters = 0;
    int picard_iters = 0;
    double residual = 0.0; // |M(v^n) - rhs|
    double target = 0.0;   // newton_tol * (1 + |rhs|)
};

/// Raised when neither Newton nor the Picard fallback reaches the tolerance.
class StepFailure : public std::runtime_error {
  public:
    StepFailure(int step, std::vector<double> history, const std::string& what)
        : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step),
          history_(std::move(history)) {}
    [[nodiscard]] int step() const { return step_; }
    [[nodiscard]] const std::vector<double>& residual_history() const { return history_; }

  private:
    int step_;
    std::vector<double> history_;
};

struct Trajectory {
    TimeGrid grid;
    GridFunction v;
    GridFunction K;
    std::vector<StepStats> stats; // stats[n-1] for step n
    QuadWeights weights;
};

/// Right-hand side of the n-th stationary problem
///   ((1/tau) I + A + tau gamma_1 B) v^n = f^n + (1/tau) v^{n-1} - B (K^n - tau gamma_1 v^n),
/// where the bracket only involves the history:
///   K^n - tau gamma_1 v^n = u0 + tau sum_{j<n} gamma_{n-j+1} v^j
///                         = K^{n-1} - tau gamma_1 (K^{n-1} - u0).
inline Vec assemble_rhs(const Vec& prev_v, const MemoryState& memory, const Vec& f_n, const QuadWeights& w,
                        double tau, const SpdOperator& B) {
    require_same_size(prev_v, memory.K, "assemble_rhs");
    require_same_size(prev_v, f_n, "assemble_rhs");
    const double c1 = w.implicit_coefficient();
    const Vec history = memory.K - c1 * (memory.K - memory.u0);
    return f_n + prev_v / tau - B.apply(history);
}

/// Per-step operator M(v) = v/tau + A(v) + tau gamma_1 B v.
struct StepOperator {
    const MonotoneOperator& A;
    const SpdOperator& B;
    double tau;
    double c1; // tau * gamma_1

    [[nodiscard]] Vec operator()(const Vec& v) const { return v / tau + A(v) + c1 * B.apply(v); }
    [[nodiscard]] Mat jacobian(const Vec& v) const {
        Mat J = A.jacobian(v) + c1 * B.matrix;
        J.diagonal().array() += 1.0 / tau;
        return J;
    }
    /// Linear part (1/tau) I + tau gamma_1 B.
    [[nodiscard]] Mat linear_part() const {
        Mat L = c1 * B.matrix;
        L.diagonal().array() += 1.0 / tau;
        return L;
    }
};

/// CG solve for the Newton / Picard systems.
template <typename Action>
Vec linear_subsolve(Action&& action, const Vec& rhs, const StepperConfig& config) {
    return conjugate_gradient(std::forward<Action>(action), rhs, config.cg_tol, config.cg_iterations(rhs.size())).x;
}

struct StepResult {
    Vec v;
    StepStats stats;
};

/// Solves M(v) = rhs by damped Newton from `guess`, falling back to relaxed
/// Picard iteration v <- (1-w) v + w L^{-1}(rhs - A v) when Newton stalls.
inline StepResult solve_stationary(const StepOperator& M, const Vec& rhs, const Vec& guess,
                                   const StepperConfig& config, int step) {
    StepResult res{guess, {}};
    const double target = config.newton_tol * (1.0 + rhs.norm());
    res.stats.target = target;
    std::vector<double> history;

    Vec v = guess;
    Vec R = M(v) - rhs;
    double r = R.norm();
    history.push_back(r);

    bool converged = r <= target;
    if (M.A.has_jacobian()) {
        for (int it = 0; it < config.newton_max_iter && !converged; ++it) {
            Vec delta;
            try {
                const Mat J = M.jacobian(v);
                delta = linear_subsolve([&J](const Vec& x) -> Vec { return J * x; }, Vec(-R), config);
            } catch (const LinearSolveError&) {
                break;
            }
            double alpha = 1.0;
            bool accepted = false;
            for (int k = 0; k <= config.max_halvings; ++k) {
                Vec trial = v + alpha * delta;
                Vec Rt = M(trial) - rhs;
                const double rt = Rt.norm();
                if (std::isfinite(rt) && rt < (1.0 - 1e-4 * alpha) * r) {
                    v = std::move(trial);
                    R = std::move(Rt);
                    r = rt;
                    accepted = true;
                    break;
                }
                alpha *= config.damping;
            }
            res.stats.newton_iters = it + 1;
            history.push_back(r);
            if (!accepted) break;
            converged = r <= target;
        }
        // Once inside the tolerance, one more undamped step is nearly free and
        // takes the quadratic convergence down to rounding level.
        if (converged && config.newton_polish && res.stats.newton_iters > 0 && r > 0.0) {
            try {
                const Mat J = M.jacobian(v);
                Vec trial = v + linear_subsolve([&J](const Vec& x) -> Vec { return J * x; }, Vec(-R), config);
                Vec Rt = M(trial) - rhs;
                const double rt = Rt.norm();
                if (std::isfinite(rt) && rt < r) {
                    v = std::move(trial);
                    r = rt;
                    history.push_back(r);
                }
            } catch (const LinearSolveError&) {
            }
        }
    }

    if (!converged && config.picard) {
        const Mat L = M.linear_part();
        const double w = config.picard_relaxation;
        for (int it = 0; it < config.picard_max_iter && !converged; ++it) {
            Vec next;
            try {
                next = linear_subsolve([&L](const Vec& x) -> Vec { return L * x; }, Vec(rhs - M.A(v)), config);
            } catch (const LinearSolveError& e) {
                throw StepFailure(step, history, std::string("Picard inner solve failed: ") + e.what());
            }
            v = (1.0 - w) * v + w * next;
            R = M(v) - rhs;
            r = R.norm();
            res.stats.picard_iters = it + 1;
            history.push_back(r);
            if (!std::isfinite(r)) break;
            converged = r <= target;
        }
    }
    if (!converged)
        throw StepFailure(step, history,
                          "nonlinear solve stagnated at residual " + std::to_string(r) + " (target " +
                              std::to_string(target) + ")");
    res.v = std::move(v);
    res.stats.residual = r;
    return res;
}

/// Solves step n given v^{n-1} and the memory state through n-1.  The initial
/// guess defaults to v^{n-1}.
inline StepResult step_solve(const Vec& prev_v, const MemoryState& memory, const StepperConfig& config,
                             const ProblemInstance& problem, const QuadWeights& w, const TimeGrid& grid, int n,
                             const std::optional<Vec>& guess = std::nullopt) {
    if (n < 1 || n > grid.N) throw std::out_of_range("step_solve: step index out of range");
    if (memory.n != n - 1) throw std::invalid_argument("step_solve: memory state is not at step n-1");
    const Vec f_n = problem.f.cell_average(grid.t(n - 1), grid.t(n));
    const Vec rhs = assemble_rhs(prev_v, memory, f_n, w, grid.tau, problem.B);
    const StepOperator M{problem.A, problem.B, grid.tau, w.implicit_coefficient()};
    return solve_stationary(M, rhs, guess.value_or(prev_v), config, n);
}

/// Runs the implicit Euler / product-quadrature scheme for n = 1..N.
inline Trajectory run(const ProblemInstance& problem, const StepperConfig& config) {
    problem.validate();
    config.validate();
    const TimeGrid grid = TimeGrid::make(problem.kernel, config.N);
    Trajectory traj{grid, GridFunction::zeros(grid, problem.dim()), GridFunction::zeros(grid, problem.dim()), {},
                    weights_closed_form(problem.kernel, grid)};
    traj.stats.reserve(static_cast<std::size_t>(grid.N));
    traj.v[0] = problem.v0;
    traj.K[0] = problem.u0;
    MemoryState memory = MemoryState::initial(problem.u0);
    for (int n = 1; n <= grid.N; ++n) {
        StepResult step = step_solve(traj.v[n - 1], memory, config, problem, traj.weights, grid, n);
        memory = k_update_recurrence(memory, step.v, problem.kernel, grid);
        traj.v[n] = std::move(step.v);
        traj.K[n] = memory.K;
        traj.stats.push_back(step.stats);
    }
    return traj;
}

/// |(v^n - v^{n-1})/tau + A v^n + B K^n - f^n| for every step.
inline std::vector<double> scheme_residuals(const Trajectory& traj, const ProblemInstance& problem) {
    std::vector<double> out;
    const auto& g = traj.grid;
    for (int n = 1; n <= g.N; ++n) {
        const Vec f_n = problem.f.cell_average(g.t(n - 1), g.t(n));
        const Vec r = (traj.v[n] - traj.v[n - 1]) / g.tau + problem.A(traj.v[n]) + problem.B.apply(traj.K[n]) - f_n;
        out.push_back(r.norm());
    }
    return out;
}

} // namespace expmem
