#include "expmem/diagnostics.hpp"
#include "expmem/rng.hpp"
#include "expmem/stepper.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace expmem;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ProblemInstance scalar_problem(MonotoneOperator A, double b, double lambda, double T, double v0, double u0,
                               Forcing f) {
    return ProblemInstance{std::move(A), make_scaled_identity(b, 1), Vec::Constant(1, u0), Vec::Constant(1, v0),
                           std::move(f), KernelSpec::make(lambda, T)};
}

// Root of g on [lo, hi] by bisection; g(lo) < 0 < g(hi).
template <typename G>
double bisect(G&& g, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("assemble_rhs", "[stepper]") {
    const auto spec = KernelSpec::make(1.0, 1.0);
    const auto grid = TimeGrid::make(spec, 10);
    const auto w = weights_closed_form(spec, grid);
    const auto B = make_scaled_identity(2.0, 1);

    SECTION("first step with zero history returns f") {
        const Vec g = Vec::Constant(1, 3.5);
        const Vec rhs = assemble_rhs(Vec::Zero(1), MemoryState::initial(Vec::Zero(1)), g, w, grid.tau, B);
        CHECK_THAT(rhs[0], WithinAbs(3.5, 1e-15));
    }
    SECTION("first step with u0 = w gives -B w") {
        const Vec u0 = Vec::Constant(1, 0.7);
        const Vec rhs = assemble_rhs(Vec::Zero(1), MemoryState::initial(u0), Vec::Zero(1), w, grid.tau, B);
        CHECK_THAT(rhs[0], WithinRel(-2.0 * 0.7, 1e-14));
    }
    SECTION("matches the explicit history sum") {
        Rng rng(1);
        const Vec u0 = rng.normal_vec(1);
        GridFunction v = GridFunction::zeros(grid, 1);
        for (int n = 0; n <= grid.N; ++n) v[n] = rng.normal_vec(1);
        MemoryState mem = MemoryState::initial(u0);
        for (int n = 1; n <= grid.N; ++n) {
            const Vec f = rng.normal_vec(1);
            const Vec rhs = assemble_rhs(v[n - 1], mem, f, w, grid.tau, B);
            double hist = u0[0];
            for (int j = 1; j < n; ++j) hist += grid.tau * w(n - j + 1) * v[j][0];
            const double expected = f[0] + v[n - 1][0] / grid.tau - 2.0 * hist;
            CHECK_THAT(rhs[0], WithinAbs(expected, 1e-12 * (1.0 + std::abs(expected))));
            mem = k_update_recurrence(mem, v[n], spec, grid);
        }
    }
    CHECK_THROWS_AS(assemble_rhs(Vec::Zero(2), MemoryState::initial(Vec::Zero(1)), Vec::Zero(1), w, grid.tau, B),
                    DimensionError);
}

TEST_CASE("linear_subsolve", "[stepper]") {
    StepperConfig cfg;
    const Vec r = Vec::LinSpaced(5, -2.0, 3.0);
    CHECK((linear_subsolve([](const Vec& x) -> Vec { return x; }, r, cfg) - r).norm() <= 1e-14);

    const Vec diag = Vec::LinSpaced(5, 1.0, 5.0);
    const Vec x = linear_subsolve([&](const Vec& y) -> Vec { return diag.cwiseProduct(y); }, r, cfg);
    for (int i = 0; i < 5; ++i) CHECK_THAT(x[i], WithinAbs(r[i] / diag[i], 1e-13));

    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const Mat R = Mat::NullaryExpr(20, 20, [&] { return rng.normal(); });
        const Mat S = R * R.transpose() + 20.0 * Mat::Identity(20, 20);
        const Vec b = rng.normal_vec(20);
        const Vec cg = linear_subsolve([&](const Vec& y) -> Vec { return S * y; }, b, cfg);
        const Vec dense = S.partialPivLu().solve(b);
        CHECK((cg - dense).lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + dense.lpNorm<Eigen::Infinity>()));
    }

    StepperConfig tight = cfg;
    tight.cg_max_iter = 1;
    const Mat S = Mat::NullaryExpr(6, 6, [&] { return rng.normal(); });
    const Mat SPD = S * S.transpose() + Mat::Identity(6, 6);
    CHECK_THROWS_AS(linear_subsolve([&](const Vec& y) -> Vec { return SPD * y; }, rng.normal_vec(6), tight),
                    LinearSolveError);
    CHECK_THROWS_AS(linear_subsolve([](const Vec& y) -> Vec { return -y; }, r, cfg), LinearSolveError);
}

TEST_CASE("step_solve", "[stepper]") {
    StepperConfig cfg;
    cfg.N = 10;

    SECTION("A = 0, B = 0 reduces to the explicit update") {
        ProblemInstance p{make_zero_operator(2), SpdOperator{"zero", Mat::Zero(2, 2), 0.0, 0.0}, Vec::Zero(2),
                          Vec::Constant(2, 0.5), Forcing::constant(Vec::Constant(2, 2.0)), KernelSpec::make(1.0, 1.0)};
        const auto g = TimeGrid::make(p.kernel, cfg.N);
        const auto w = weights_closed_form(p.kernel, g);
        const auto res = step_solve(p.v0, MemoryState::initial(p.u0), cfg, p, w, g, 1);
        CHECK((res.v - (p.v0 + g.tau * Vec::Constant(2, 2.0))).norm() <= 1e-13);
    }

    SECTION("linear A gives the closed-form division") {
        const double a = 1.7, b = 0.6;
        auto p = scalar_problem(make_linear_diag(a), b, 1.3, 1.0, 0.8, 0.2, Forcing::constant(Vec::Constant(1, 0.4)));
        const auto g = TimeGrid::make(p.kernel, cfg.N);
        const auto w = weights_closed_form(p.kernel, g);
        const MemoryState mem = MemoryState::initial(p.u0);
        const Vec rhs = assemble_rhs(p.v0, mem, Vec::Constant(1, 0.4), w, g.tau, p.B);
        const auto res = step_solve(p.v0, mem, cfg, p, w, g, 1);
        CHECK_THAT(res.v[0], WithinRel(rhs[0] / (1.0 / g.tau + a + g.tau * w(1) * b), 1e-12));
    }

    SECTION("scalar cubic agrees with bisection at every step") {
        auto p = scalar_problem(make_scalar_cubic(1.0, 0.0), 1.0, 1.0, 1.0, 1.0, 1.0, Forcing::zero(1));
        const auto g = TimeGrid::make(p.kernel, 10); // tau = 0.1
        const auto w = weights_closed_form(p.kernel, g);
        const auto traj = run(p, cfg);
        for (int n = 1; n <= g.N; ++n) {
            // History from the direct sum, independent of the recurrence.
            double hist = 1.0;
            for (int j = 1; j < n; ++j) hist += g.tau * w(n - j + 1) * traj.v[j][0];
            const double rhs = traj.v[n - 1][0] / g.tau - hist;
            const double c = g.tau * w(1);
            const double root = bisect([&](double x) { return x / g.tau + x * x * x + c * x - rhs; }, -10.0, 10.0);
            CHECK_THAT(traj.v[n][0], WithinAbs(root, 1e-12));
        }
    }

    SECTION("Picard fallback when no Jacobian is available") {
        auto A = make_scalar_cubic(1.0, 0.5, 3);
        A.jacobian = nullptr;
        ProblemInstance p{A, make_scaled_identity(1.0, 3), Vec::Zero(3), Vec::Constant(3, 0.5), Forcing::zero(3),
                          KernelSpec::make(1.0, 1.0)};
        const auto traj = run(p, cfg);
        auto with_jac = p;
        with_jac.A = make_scalar_cubic(1.0, 0.5, 3);
        const auto ref = run(with_jac, cfg);
        for (int n = 0; n <= cfg.N; ++n) CHECK((traj.v[n] - ref.v[n]).norm() <= 1e-9);
        CHECK(traj.stats.front().picard_iters > 0);
        CHECK(traj.stats.front().newton_iters == 0);
    }

    SECTION("failure carries the step index and residual history") {
        auto A = make_scalar_cubic(1.0, 0.0);
        A.jacobian = nullptr;
        auto p = scalar_problem(A, 1.0, 1.0, 1.0, 3.0, 0.0, Forcing::zero(1));
        StepperConfig bad = cfg;
        bad.picard = false;
        try {
            (void)run(p, bad);
            FAIL("expected StepFailure");
        } catch (const StepFailure& e) {
            CHECK(e.step() == 1);
            CHECK(!e.residual_history().empty());
        }
    }
    SECTION("wrong memory step") {
        auto p = scalar_problem(make_linear_diag(1.0), 1.0, 1.0, 1.0, 1.0, 0.0, Forcing::zero(1));
        const auto g = TimeGrid::make(p.kernel, 10);
        CHECK_THROWS_AS(step_solve(p.v0, MemoryState::initial(p.u0), cfg, p, weights_closed_form(p.kernel, g), g, 2),
                        std::invalid_argument);
    }
}

TEST_CASE("run", "[stepper]") {
    SECTION("zero data gives the zero trajectory") {
        ProblemInstance p{make_p_laplacian_1d(8, 3.0), make_laplacian_spd_1d(8), Vec::Zero(8), Vec::Zero(8),
                          Forcing::zero(8), KernelSpec::make(2.0, 1.0)};
        StepperConfig cfg;
        cfg.N = 32;
        const auto traj = run(p, cfg);
        for (int n = 0; n <= cfg.N; ++n) {
            CHECK(traj.v[n].norm() == 0.0);
            CHECK(traj.K[n].norm() == 0.0);
        }
    }

    SECTION("trajectory invariants on a p-Laplacian instance") {
        const Eigen::Index m = 32;
        Vec v0(m);
        for (Eigen::Index i = 0; i < m; ++i) v0[i] = std::sin(M_PI * double(i + 1) / double(m + 1));
        ProblemInstance p{make_p_laplacian_1d(m, 3.0), make_laplacian_spd_1d(m), 0.5 * v0, v0,
                          Forcing::sine(Vec::Ones(m)), KernelSpec::make(1.0, 1.0)};
        StepperConfig cfg;
        cfg.N = 256;
        const auto traj = run(p, cfg);
        int max_iters = 0;
        for (const auto& s : traj.stats) {
            max_iters = std::max(max_iters, s.newton_iters);
            CHECK(s.picard_iters == 0);
            CHECK(s.residual <= s.target);
        }
        CHECK(max_iters <= 20);
        const auto rep = trajectory_report(traj, p);
        CHECK(rep.all_pass());

        // Memory consistency against the direct sum.
        for (int n = 0; n <= cfg.N; n += 17) {
            const Vec direct = k_apply_direct(p.u0, traj.v, traj.weights, n);
            CHECK((traj.K[n] - direct).lpNorm<Eigen::Infinity>() <= 1e-11 * (1.0 + direct.lpNorm<Eigen::Infinity>()));
        }
    }

    SECTION("multi-start uniqueness on the scalar cubic") {
        auto p = scalar_problem(make_scalar_cubic(1.0, 0.0), 1.0, 1.0, 1.0, 1.0, 1.0, Forcing::sine(Vec::Ones(1)));
        StepperConfig cfg;
        cfg.N = 64;
        const auto traj = run(p, cfg);
        const auto e = multistart_uniqueness(traj, p, cfg, 10, 77);
        CHECK(e.pass);
        CHECK(e.lhs <= 1e-8);
    }

    SECTION("identical runs are bit-identical") {
        auto p = scalar_problem(make_scalar_cubic(1.0, 0.3), 1.0, 1.0, 2.0, 1.0, 0.5, Forcing::sine(Vec::Ones(1)));
        StepperConfig cfg;
        cfg.N = 100;
        const auto a = run(p, cfg), b = run(p, cfg);
        for (int n = 0; n <= cfg.N; ++n) {
            CHECK(a.v[n] == b.v[n]);
            CHECK(a.K[n] == b.K[n]);
        }
    }
}

TEST_CASE("forcing cell averages", "[stepper]") {
    const Forcing s = Forcing::sine(Vec::Ones(1), 3.0);
    Forcing quad_only{s.value, nullptr};
    for (double a : {0.0, 0.3, 1.1}) {
        const double b = a + 0.01;
        CHECK_THAT(quad_only.cell_average(a, b)[0], WithinAbs(s.cell_average(a, b)[0], 1e-14));
    }
    const Forcing poly = Forcing::polynomial({1.0, -2.0, 3.0}, Vec::Ones(1)); // 1 - 2t + 3t^2
    // int_0^2 = 2 - 4 + 8 = 6 -> average 3
    CHECK_THAT(poly.cell_average(0.0, 2.0)[0], WithinAbs(3.0, 1e-14));
    CHECK_THAT(poly.value(2.0)[0], WithinAbs(9.0, 1e-14));
}
