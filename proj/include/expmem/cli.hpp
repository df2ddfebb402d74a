#pragma once

// Command-line front end.  Every diagnostics subcommand writes a JSON report
// and a CSV table into the output directory and exits 0 iff all gating
// entries pass (1 otherwise, 2 on errors).

#include "config.hpp"
#include "diagnostics.hpp"
#include "io.hpp"
#include "kernel_weights.hpp"
#include "parallel.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace expmem::cli {

struct Outputs {
    DiagnosticsReport report;
    Table table;
    std::string stem; // file name stem for <stem>.json / <stem>.csv
};

namespace detail {

inline std::string suffix_real(const char* label, double x) {
    return std::string("_") + label + expmem::detail::num_label(x);
}

inline void rename_into(DiagnosticsReport& dst, const DiagnosticsReport& src, const std::string& suffix) {
    for (auto e : src.entries) {
        e.name += suffix;
        dst.add(std::move(e));
    }
}

/// max/min of a positive series, compared against `factor`.
inline DiagnosticsEntry spread_entry(const std::string& name, const std::vector<double>& xs, double factor,
                                     const char* tag) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    double spread = 1.0;
    if (hi > 0.0) spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    auto e = DiagnosticsEntry::check(name, spread, factor, 0.0, 0.0, tag);
    e.extras["min"] = lo;
    e.extras["max"] = hi;
    return e;
}

inline Forcing shifted(const Forcing& f, const Vec& c) {
    Forcing g;
    g.value = [v = f.value, c](double t) -> Vec { return v(t) + c; };
    if (f.integral) g.integral = [I = f.integral, c](double a, double b) -> Vec { return I(a, b) + (b - a) * c; };
    return g;
}

/// Perturbs one datum by delta along ones/sqrt(d); forcing shifts are constant
/// in time and scaled so that the L1(0,T;H) distance equals delta.
inline ProblemInstance perturb(const ProblemInstance& p, const std::string& which, double delta) {
    ProblemInstance q = p;
    const Vec e = Vec::Ones(p.dim()) / std::sqrt(double(p.dim()));
    if (which == "v0") q.v0 += delta * e;
    else if (which == "u0") q.u0 += delta * e;
    else q.f = shifted(p.f, Vec(delta / p.kernel.T * e));
    return q;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Experiments (pure functions of the configuration)

inline Table weights_table(double lambda, double T, int N, long panels) {
    const auto spec = KernelSpec::make(lambda, T);
    const auto grid = TimeGrid::make(spec, N);
    const auto closed = weights_closed_form(spec, grid);
    std::optional<QuadWeights> numeric;
    if (panels > 0) numeric = weights_numeric(spec, grid, panels);
    Table t{{"i", "t_i", "gamma_closed", "gamma_numeric", "abs_diff"}, {}};
    for (int i = 1; i <= N; ++i) {
        const double gn = numeric ? (*numeric)(i) : std::nan("");
        t.rows.push_back({double(i), grid.t(i), closed(i), gn, numeric ? std::abs(gn - closed(i)) : std::nan("")});
    }
    return t;
}

struct SolveOutputs {
    Trajectory trajectory;
    Outputs out;
};

inline SolveOutputs run_solve(const RunConfig& c) {
    const auto p = build_problem(c);
    SolveOutputs s{run(p, c.stepper), {}};
    s.out.stem = "solve";
    s.out.report = trajectory_report(s.trajectory, p);
    s.out.report.experiment = "solve";
    s.out.report.append(apriori_report(s.trajectory, p).report);
    if (c.multistart > 0) s.out.report.add(multistart_uniqueness(s.trajectory, p, c.stepper, c.multistart, c.seed));
    s.out.table = trajectory_table(s.trajectory);
    return s;
}

inline Outputs run_converge(const RunConfig& c, unsigned threads) {
    const auto p = build_problem(c);
    ConvergenceReference ref;
    ref.kind = c.converge_reference == "self" ? ConvergenceReference::Kind::Self : ConvergenceReference::Kind::Oracle;
    ref.fine_steps = c.converge_fine_steps;
    const auto table = convergence_study(p, c.stepper, c.converge_N_list, ref, threads);
    std::optional<std::pair<double, double>> range;
    if (c.converge_order_min || c.converge_order_max)
        range = std::make_pair(c.converge_order_min.value_or(-std::numeric_limits<double>::infinity()),
                               c.converge_order_max.value_or(std::numeric_limits<double>::infinity()));
    return Outputs{convergence_report(table, range), table.to_table(), "converge"};
}

inline Outputs run_stability(const RunConfig& c, unsigned threads) {
    const auto p = build_problem(c);
    const bool ii = c.stability_variant == "ii";
    auto check = [&](const ProblemInstance& q) {
        return ii ? stability_check_ii(p, q, c.stepper, 1) : stability_check_i(p, q, c.stepper, 1);
    };
    const auto& deltas = c.stability_deltas;
    auto results = parallel_map(
        deltas.size() + 1,
        [&](std::size_t i) { return check(i < deltas.size() ? detail::perturb(p, c.stability_perturb, deltas[i]) : p); },
        threads);

    Outputs out;
    out.stem = "stability";
    out.report.experiment = "stability";
    out.table.columns = {"delta", "sup_lhs", "bound", "data_functional", "sup_lhs_over_delta2", "lhs_T",
                         "uniform_term"};
    std::vector<double> ratios;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const auto& r = results[i];
        detail::rename_into(out.report, r.report, detail::suffix_real("delta", deltas[i]));
        const double ratio = r.sup_lhs / (deltas[i] * deltas[i]);
        ratios.push_back(ratio);
        out.table.rows.push_back(
            {deltas[i], r.sup_lhs, r.bound, r.data_functional, ratio, r.lhs_series.back(), r.extra_term});
    }
    const char* tag = ii ? tags::kStabilityII : tags::kStabilityI;
    if (!ratios.empty()) out.report.add(detail::spread_entry("ratio_spread", ratios, c.stability_ratio_factor, tag));
    const auto& same = results.back();
    out.report.add(DiagnosticsEntry::check("identical_data", same.sup_lhs, 0.0, 0.0, 1e-14, tags::kUniqueness));
    return out;
}

inline Outputs run_lambda(const RunConfig& c, unsigned threads) {
    const auto p = build_problem(c);
    const auto& mus = c.lambda_mu_list;
    auto results = parallel_map(
        mus.size(), [&](std::size_t i) { return lambda_perturbation_check(p, mus[i], c.stepper, 1); }, threads);
    Outputs out;
    out.stem = "lambda_sweep";
    out.report.experiment = "lambda-sweep";
    out.table.columns = {"lambda", "mu", "sup_lhs", "lhs_T", "rhs", "slack"};
    for (const auto& r : results) {
        out.report.append(r.report);
        out.table.rows.push_back({r.lambda, r.mu, r.sup_lhs, r.lhs_T, r.rhs, r.slack});
    }
    return out;
}

inline Outputs run_apriori(const RunConfig& c, unsigned threads) {
    const auto p = build_problem(c);
    const auto& Ns = c.apriori_N_list;
    if (Ns.empty()) throw ConfigError("config key 'apriori.N_list': must not be empty");
    auto results = parallel_map(
        Ns.size(),
        [&](std::size_t i) {
            StepperConfig s = c.stepper;
            s.N = Ns[i];
            return apriori_report(run(p, s), p);
        },
        threads);
    Outputs out;
    out.stem = "apriori";
    out.report.experiment = "apriori";
    out.table.columns = {"N", "lhs_N", "sup_lhs", "data_functional", "bound", "ratio"};
    std::vector<double> ratios;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        const auto& r = results[i];
        detail::rename_into(out.report, r.report, "_N" + std::to_string(Ns[i]));
        ratios.push_back(r.ratio());
        out.table.rows.push_back({double(Ns[i]), r.lhs_N, r.sup_lhs, r.data_functional, r.bound, r.ratio()});
    }
    out.report.add(detail::spread_entry("ratio_spread", ratios, c.apriori_ratio_factor, tags::kApriori));
    return out;
}

inline Outputs run_experiment(const RunConfig& c, const std::string& name, unsigned threads) {
    if (name == "converge") return run_converge(c, threads);
    if (name == "stability") return run_stability(c, threads);
    if (name == "lambda-sweep") return run_lambda(c, threads);
    if (name == "apriori") return run_apriori(c, threads);
    return run_solve(c).out;
}

// ---------------------------------------------------------------------------
// Entry point

namespace detail {

inline void print_summary(std::ostream& os, const DiagnosticsReport& r) {
    for (const auto& e : r.entries) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6e <= %.6e", e.lhs, e.rhs);
        os << (e.pass ? "PASS " : (e.gating ? "FAIL " : "info ")) << e.name << "  " << buf << "\n";
    }
    os << r.experiment << ": " << (r.all_pass() ? "all checks passed" : "some checks FAILED") << "\n";
}

} // namespace detail

inline int main(int argc, char** argv) {
    CLI::App app{"Implicit Euler / product-quadrature solver for evolution equations with exponential memory"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
    app.add_option("--out-dir", out_dir, "output directory (overrides output.dir)");
    app.add_option("--threads", threads, "worker threads; 0 uses the hardware concurrency");
    app.add_option("--seed", seed, "seed for randomised checks (overrides seed)");
    app.add_option("--override", overrides, "key=value applied after the config file (repeatable)");

    auto* weights = app.add_subcommand("weights", "print the quadrature weights gamma_i as CSV");
    double w_lambda = 1.0, w_T = 1.0;
    int w_N = 10;
    long w_panels = 1L << 16;
    std::string w_out;
    weights->add_option("--lambda", w_lambda, "kernel rate")->required();
    weights->add_option("--T", w_T, "final time")->required();
    weights->add_option("--N", w_N, "number of steps")->required()->check(CLI::PositiveNumber);
    weights->add_option("--numeric-panels", w_panels, "Simpson panels per cell for the numeric column; 0 skips it")
        ->capture_default_str();
    weights->add_option("--out", w_out, "CSV file (default: stdout)");

    auto* solve = app.add_subcommand("solve", "run the scheme and write the trajectory");
    std::string traj_out;
    solve->add_option("--out", traj_out, "trajectory CSV (default: <out-dir>/trajectory.csv)");

    auto* converge = app.add_subcommand("converge", "convergence study along converge.N_list");
    auto* stability = app.add_subcommand("stability", "stability under data perturbation");
    auto* lambda = app.add_subcommand("lambda-sweep", "perturbation of the kernel rate over lambda.mu_list");
    auto* apriori = app.add_subcommand("apriori", "a-priori bound along apriori.N_list");
    auto* runcmd = app.add_subcommand("run", "run the experiment named by the 'experiment' key");
    auto* printcfg = app.add_subcommand("config", "print the effective configuration");
    bool show_schema = false;
    printcfg->add_flag("--schema", show_schema, "list every accepted key instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (weights->parsed()) {
            const auto table = weights_table(w_lambda, w_T, w_N, w_panels);
            if (w_out.empty()) std::cout << table_to_csv(table);
            else emit_csv(table, w_out);
            return 0;
        }

        if (seed) overrides.push_back("seed=" + std::to_string(*seed));
        RunConfig cfg = config_path.empty() ? parse_config("", overrides) : load_config(config_path, overrides);
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (printcfg->parsed()) {
            if (show_schema) {
                for (const auto& k : config_schema()) {
                    std::cout << k.key << " : " << key_type_name(k.type);
                    for (std::size_t i = 0; i < k.choices.size(); ++i) std::cout << (i ? "|" : " ") << k.choices[i];
                    std::cout << "  -- " << k.help << "\n";
                }
            } else {
                std::cout << emit_config(cfg);
            }
            return 0;
        }

        const std::filesystem::path dir(cfg.output_dir);
        Outputs out;
        if (solve->parsed() || (runcmd->parsed() && cfg.experiment == "solve")) {
            auto s = run_solve(cfg);
            emit_csv(s.out.table, traj_out.empty() ? (dir / "trajectory.csv").string() : traj_out);
            out = std::move(s.out);
            out.table = Table{};
        } else {
            std::string name = cfg.experiment;
            if (converge->parsed()) name = "converge";
            if (stability->parsed()) name = "stability";
            if (lambda->parsed()) name = "lambda-sweep";
            if (apriori->parsed()) name = "apriori";
            out = run_experiment(cfg, name, threads);
            emit_csv(out.table, (dir / (out.stem + ".csv")).string());
        }
        emit_json(out.report, (dir / (out.stem + ".json")).string());
        detail::print_summary(std::cout, out.report);
        return out.report.all_pass() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "expmem: error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace expmem::cli
