#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace expmem {

/// Tags naming the result each diagnostics entry checks.
namespace tags {
inline constexpr const char* kMemoryPositivity = "memory.positive_type";
inline constexpr const char* kMemoryRelation = "memory.discrete_relation";
inline constexpr const char* kSchemeResidual = "scheme.residual";
inline constexpr const char* kEnergyBalance = "scheme.energy_balance";
inline constexpr const char* kApriori = "scheme.apriori_estimate";
inline constexpr const char* kConvergence = "scheme.convergence";
inline constexpr const char* kOracle = "oracle.coupled_system";
inline constexpr const char* kStabilityI = "stability.data_l1";
inline constexpr const char* kStabilityII = "stability.uniform_monotone";
inline constexpr const char* kUniqueness = "stability.uniqueness";
inline constexpr const char* kLambda = "stability.relaxation_time";

/// Every tag with the statement it refers to.
inline const std::vector<std::pair<std::string, std::string>>& paper_map() {
    static const std::vector<std::pair<std::string, std::string>> map = {
        {kMemoryPositivity, "the exponential kernel is of positive type: int <B K v, v> >= 0 up to initial-value terms"},
        {kMemoryRelation, "K v satisfies (K v)' = lambda (v - (K v - u0)); discretely K^n = e^{-l tau} K^{n-1} + ..."},
        {kSchemeResidual, "each implicit step solves (1/tau) I + A + tau gamma_1 B to the Newton tolerance"},
        {kEnergyBalance, "testing the scheme with v^n: 2<v^n - v^{n-1}, v^n> identity"},
        {kApriori, "a-priori bound on |v^n|^2, jumps, tau sum |v^j|^p and the memory energy by the data"},
        {kConvergence, "the prolongations of the discrete solutions converge as tau -> 0"},
        {kOracle, "the problem is equivalent to the first-order system v' + Av + Bu = f, u' = lambda (v - u + u0)"},
        {kStabilityI, "Lipschitz stability w.r.t. v0 in H, u0 in V_B and f in L1(0,T;H)"},
        {kStabilityII, "stability for uniformly monotone A with f in L^{p'}(0,T;V_A')"},
        {kUniqueness, "the solution is unique"},
        {kLambda, "Lipschitz dependence on the relaxation time 1/lambda with an explicit constant"},
    };
    return map;
}

inline bool is_known(const std::string& tag) {
    for (const auto& [t, d] : paper_map())
        if (t == tag) return true;
    return false;
}
} // namespace tags

/// One checked inequality `lhs <= rhs`.  The tolerances used in the verdict
/// are stored alongside so that a report is self-describing.
struct DiagnosticsEntry {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0; // rhs*(1+tol) + abs_tol - lhs
    bool pass = false;
    double tol = 0.0;
    double abs_tol = 0.0;
    std::string paper_tag;
    // Informational entries are reported but never fail a run.
    bool gating = true;
    std::map<std::string, double> extras;

    static DiagnosticsEntry check(std::string name, double lhs, double rhs, double tol, double abs_tol,
                                  std::string tag) {
        DiagnosticsEntry e;
        e.name = std::move(name);
        e.lhs = lhs;
        e.rhs = rhs;
        e.tol = tol;
        e.abs_tol = abs_tol;
        e.margin = rhs * (1.0 + tol) + abs_tol - lhs;
        e.pass = std::isfinite(lhs) && std::isfinite(rhs) && lhs <= rhs * (1.0 + tol) + abs_tol;
        e.paper_tag = std::move(tag);
        return e;
    }
};

struct DiagnosticsReport {
    std::string experiment;
    std::vector<DiagnosticsEntry> entries;

    void add(DiagnosticsEntry e) { entries.push_back(std::move(e)); }

    void append(const DiagnosticsReport& other) {
        entries.insert(entries.end(), other.entries.begin(), other.entries.end());
    }

    [[nodiscard]] bool all_pass() const {
        for (const auto& e : entries)
            if (e.gating && !e.pass) return false;
        return true;
    }

    [[nodiscard]] const DiagnosticsEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
};

/// Generic numeric table: a header and rows of doubles, as written to CSV.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct ConvergenceRow {
    int N = 0;
    double tau = 0.0;
    double error = 0.0;
    double order = std::nan(""); // undefined for the first row
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;

    [[nodiscard]] Table to_table() const {
        Table t{{"N", "tau", "error", "order"}, {}};
        for (const auto& r : rows) t.rows.push_back({double(r.N), r.tau, r.error, r.order});
        return t;
    }
};

} // namespace expmem
