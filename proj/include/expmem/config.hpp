#pragma once

// Run configuration: a flat `key = value` document with `[section]` headers.
//
//   # comment
//   seed = 7
//   [kernel]
//   lambda = 1.0        -> key "kernel.lambda"
//   [converge]
//   N_list = [64, 128, 256]
//
// Every key is checked against the schema table below; unknown keys and
// type mismatches are rejected with the offending key in the message.

#include "diagnostics.hpp"
#include "operators.hpp"
#include "stepper.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmem {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string experiment = "solve";
    std::uint64_t seed = 0;

    double lambda = 1.0;
    double T = 1.0;

    std::string operator_a = "linear";
    std::string operator_b = "identity";
    int dim = 1;
    double a = 1.0;
    double a3 = 1.0;
    double a1 = 0.0;
    double p = 3.0;
    int m = 32;
    double L = 1.0;
    double b = 1.0;
    double eps = 1e-8;

    std::string v0 = "constant";
    double v0_value = 1.0;
    std::string v0_file;
    std::string u0 = "constant";
    double u0_value = 0.0;
    std::string u0_file;
    std::string f = "zero";
    double f_value = 1.0;
    std::vector<double> f_coeffs{};
    double f_omega = 1.0;
    std::string f_profile = "constant";
    std::string f_file;

    StepperConfig stepper{};

    int multistart = 0;

    std::vector<int> converge_N_list{64, 128, 256, 512, 1024};
    std::string converge_reference = "oracle";
    long converge_fine_steps = 1L << 17;
    std::optional<double> converge_order_min{};
    std::optional<double> converge_order_max{};

    std::string stability_variant = "i";
    std::string stability_perturb = "v0";
    std::vector<double> stability_deltas{1e-1, 1e-2, 1e-3};
    double stability_ratio_factor = 2.0;

    std::vector<double> lambda_mu_list{1.1, 2.0, 10.0};

    std::vector<int> apriori_N_list{16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
    double apriori_ratio_factor = 4.0;

    std::string output_dir = ".";

    friend bool operator==(const RunConfig& x, const RunConfig& y) {
        const auto& s = x.stepper;
        const auto& t = y.stepper;
        const bool stepper_eq = s.N == t.N && s.newton_tol == t.newton_tol && s.newton_max_iter == t.newton_max_iter &&
                                s.newton_polish == t.newton_polish && s.damping == t.damping &&
                                s.max_halvings == t.max_halvings && s.cg_tol == t.cg_tol &&
                                s.cg_max_iter == t.cg_max_iter && s.picard == t.picard &&
                                s.picard_relaxation == t.picard_relaxation && s.picard_max_iter == t.picard_max_iter;
        return stepper_eq && x.experiment == y.experiment && x.seed == y.seed && x.lambda == y.lambda && x.T == y.T &&
               x.operator_a == y.operator_a && x.operator_b == y.operator_b && x.dim == y.dim && x.a == y.a &&
               x.a3 == y.a3 && x.a1 == y.a1 && x.p == y.p && x.m == y.m && x.L == y.L && x.b == y.b &&
               x.eps == y.eps && x.v0 == y.v0 && x.v0_value == y.v0_value && x.v0_file == y.v0_file &&
               x.u0 == y.u0 && x.u0_value == y.u0_value && x.u0_file == y.u0_file && x.f == y.f &&
               x.f_value == y.f_value && x.f_coeffs == y.f_coeffs && x.f_omega == y.f_omega &&
               x.f_profile == y.f_profile && x.f_file == y.f_file && x.multistart == y.multistart &&
               x.converge_N_list == y.converge_N_list && x.converge_reference == y.converge_reference &&
               x.converge_fine_steps == y.converge_fine_steps && x.converge_order_min == y.converge_order_min &&
               x.converge_order_max == y.converge_order_max && x.stability_variant == y.stability_variant &&
               x.stability_perturb == y.stability_perturb && x.stability_deltas == y.stability_deltas &&
               x.stability_ratio_factor == y.stability_ratio_factor && x.lambda_mu_list == y.lambda_mu_list &&
               x.apriori_N_list == y.apriori_N_list && x.apriori_ratio_factor == y.apriori_ratio_factor &&
               x.output_dir == y.output_dir;
    }
};

// ---------------------------------------------------------------------------
// Scalar formatting / parsing helpers

namespace cfg_detail {

inline std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> to_real(const std::string& s) {
    double x = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, x);
    if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
    return x;
}

inline std::optional<long long> to_int(const std::string& s) {
    long long x = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, x);
    if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
    return x;
}

inline std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '\\' && i + 2 < s.size()) ++i;
            out += s[i];
        }
        return out;
    }
    return s;
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> items;
    const std::string inner = trim(s.substr(1, s.size() - 2));
    if (inner.empty()) return items;
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(trim(item));
    return items;
}

/// Strips a trailing `# comment` that is not inside a quoted string.
inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

} // namespace cfg_detail

// ---------------------------------------------------------------------------
// Schema

enum class KeyType { Real, Int, Bool, String, Choice, RealList, IntList };

inline const char* key_type_name(KeyType t) {
    switch (t) {
    case KeyType::Real: return "real";
    case KeyType::Int: return "integer";
    case KeyType::Bool: return "boolean";
    case KeyType::String: return "string";
    case KeyType::Choice: return "one of";
    case KeyType::RealList: return "list of reals";
    case KeyType::IntList: return "list of integers";
    }
    return "?";
}

struct KeySpec {
    std::string key;
    KeyType type;
    std::vector<std::string> choices; // for Choice
    std::string help;
    // Parsed value -> config.  Receives the raw (unquoted for strings) text.
    std::function<void(RunConfig&, const std::string&)> set;
    // Config -> value text in document syntax; empty optional means "unset".
    std::function<std::optional<std::string>(const RunConfig&)> get;
};

namespace cfg_detail {

[[noreturn]] inline void type_error(const std::string& key, KeyType t, const std::vector<std::string>& choices,
                                    const std::string& raw) {
    std::string expected = key_type_name(t);
    if (t == KeyType::Choice) {
        expected += " {";
        for (std::size_t i = 0; i < choices.size(); ++i) expected += (i ? ", " : "") + choices[i];
        expected += "}";
    }
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + raw + "'");
}

template <typename Field>
KeySpec real_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::Real, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        auto v = to_real(raw);
        if (!v) type_error(key, KeyType::Real, {}, raw);
        field(c) = *v;
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        return fmt_real(field(c));
    };
    return k;
}

template <typename Field>
KeySpec opt_real_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::Real, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        auto v = to_real(raw);
        if (!v) type_error(key, KeyType::Real, {}, raw);
        field(c) = *v;
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        const auto& o = field(c);
        if (!o) return std::nullopt;
        return fmt_real(*o);
    };
    return k;
}

template <typename Field>
KeySpec int_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::Int, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        auto v = to_int(raw);
        if (!v) type_error(key, KeyType::Int, {}, raw);
        using T = std::decay_t<decltype(field(c))>;
        if constexpr (std::is_unsigned_v<T>) {
            if (*v < 0) type_error(key, KeyType::Int, {}, raw);
        }
        field(c) = static_cast<T>(*v);
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        return std::to_string(field(c));
    };
    return k;
}

template <typename Field>
KeySpec bool_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::Bool, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        if (raw == "true") field(c) = true;
        else if (raw == "false") field(c) = false;
        else type_error(key, KeyType::Bool, {}, raw);
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        return field(c) ? "true" : "false";
    };
    return k;
}

template <typename Field>
KeySpec string_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::String, {}, std::move(help), nullptr, nullptr};
    k.set = [field](RunConfig& c, const std::string& raw) { field(c) = raw; };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        return quote(field(c));
    };
    return k;
}

template <typename Field>
KeySpec choice_key(std::string key, Field field, std::vector<std::string> choices, std::string help) {
    KeySpec k{key, KeyType::Choice, choices, std::move(help), nullptr, nullptr};
    k.set = [key, field, choices](RunConfig& c, const std::string& raw) {
        if (std::find(choices.begin(), choices.end(), raw) == choices.end())
            type_error(key, KeyType::Choice, choices, raw);
        field(c) = raw;
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        return quote(field(c));
    };
    return k;
}

template <typename Field>
KeySpec real_list_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::RealList, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') type_error(key, KeyType::RealList, {}, raw);
        std::vector<double> out;
        for (const auto& item : split_list(raw)) {
            auto v = to_real(item);
            if (!v) type_error(key, KeyType::RealList, {}, raw);
            out.push_back(*v);
        }
        field(c) = std::move(out);
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        std::string s = "[";
        const auto& v = field(c);
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_real(v[i]);
        return s + "]";
    };
    return k;
}

template <typename Field>
KeySpec int_list_key(std::string key, Field field, std::string help) {
    KeySpec k{key, KeyType::IntList, {}, std::move(help), nullptr, nullptr};
    k.set = [key, field](RunConfig& c, const std::string& raw) {
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') type_error(key, KeyType::IntList, {}, raw);
        std::vector<int> out;
        for (const auto& item : split_list(raw)) {
            auto v = to_int(item);
            if (!v) type_error(key, KeyType::IntList, {}, raw);
            out.push_back(static_cast<int>(*v));
        }
        field(c) = std::move(out);
    };
    k.get = [field](const RunConfig& c) -> std::optional<std::string> {
        std::string s = "[";
        const auto& v = field(c);
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
        return s + "]";
    };
    return k;
}

} // namespace cfg_detail

#define EXPMEM_FIELD(member) [](auto& c) -> auto& { return c.member; }

/// The published schema, in emission order.
inline const std::vector<KeySpec>& config_schema() {
    using namespace cfg_detail;
    static const std::vector<KeySpec> schema = {
        choice_key("experiment", EXPMEM_FIELD(experiment), {"solve", "converge", "stability", "lambda-sweep", "apriori"},
                   "experiment run when no subcommand overrides it"),
        int_key("seed", EXPMEM_FIELD(seed), "seed for randomised checks (multi-start guesses)"),

        real_key("kernel.lambda", EXPMEM_FIELD(lambda), "kernel rate, k(z) = lambda exp(-lambda z); > 0"),
        real_key("kernel.T", EXPMEM_FIELD(T), "final time; > 0"),

        choice_key("problem.operator_a", EXPMEM_FIELD(operator_a), {"linear", "cubic", "p_laplacian"},
                   "monotone operator A"),
        choice_key("problem.operator_b", EXPMEM_FIELD(operator_b), {"identity", "laplacian"}, "SPD operator B"),
        int_key("problem.dim", EXPMEM_FIELD(dim), "dimension for pointwise operators"),
        real_key("problem.a", EXPMEM_FIELD(a), "linear: A v = a v"),
        real_key("problem.a3", EXPMEM_FIELD(a3), "cubic: A v = a3 v^3 + a1 v"),
        real_key("problem.a1", EXPMEM_FIELD(a1), "cubic: linear coefficient"),
        real_key("problem.p", EXPMEM_FIELD(p), "p-Laplacian exponent; p in (2, inf)"),
        int_key("problem.m", EXPMEM_FIELD(m), "interior grid points for grid operators"),
        real_key("problem.L", EXPMEM_FIELD(L), "interval length for grid operators"),
        real_key("problem.b", EXPMEM_FIELD(b), "identity B: B = b I; > 0"),
        real_key("problem.eps", EXPMEM_FIELD(eps), "p-Laplacian Jacobian regularisation"),

        choice_key("data.v0", EXPMEM_FIELD(v0), {"constant", "sine", "file"}, "initial value v0"),
        real_key("data.v0_value", EXPMEM_FIELD(v0_value), "amplitude of v0"),
        string_key("data.v0_file", EXPMEM_FIELD(v0_file), "file with d numbers (data.v0 = file)"),
        choice_key("data.u0", EXPMEM_FIELD(u0), {"constant", "sine", "file"}, "memory initial value u0"),
        real_key("data.u0_value", EXPMEM_FIELD(u0_value), "amplitude of u0"),
        string_key("data.u0_file", EXPMEM_FIELD(u0_file), "file with d numbers (data.u0 = file)"),
        choice_key("data.f", EXPMEM_FIELD(f), {"zero", "constant", "polynomial", "sine", "file"},
                   "time dependence of the forcing"),
        real_key("data.f_value", EXPMEM_FIELD(f_value), "forcing amplitude"),
        real_list_key("data.f_coeffs", EXPMEM_FIELD(f_coeffs), "polynomial coefficients c0, c1, ... in t"),
        real_key("data.f_omega", EXPMEM_FIELD(f_omega), "angular frequency for data.f = sine"),
        choice_key("data.f_profile", EXPMEM_FIELD(f_profile), {"constant", "sine"}, "spatial profile of f"),
        string_key("data.f_file", EXPMEM_FIELD(f_file), "CSV t,f[0..d-1], linearly interpolated"),

        int_key("stepper.N", EXPMEM_FIELD(stepper.N), "number of time steps"),
        real_key("stepper.newton_tol", EXPMEM_FIELD(stepper.newton_tol), "relative Newton residual tolerance"),
        int_key("stepper.newton_max_iter", EXPMEM_FIELD(stepper.newton_max_iter), "Newton iteration cap"),
        bool_key("stepper.newton_polish", EXPMEM_FIELD(stepper.newton_polish), "one extra step after convergence"),
        real_key("stepper.damping", EXPMEM_FIELD(stepper.damping), "backtracking factor"),
        int_key("stepper.max_halvings", EXPMEM_FIELD(stepper.max_halvings), "backtracking cap"),
        real_key("stepper.cg_tol", EXPMEM_FIELD(stepper.cg_tol), "relative CG tolerance"),
        int_key("stepper.cg_max_iter", EXPMEM_FIELD(stepper.cg_max_iter), "CG cap; 0 means 10 d"),
        bool_key("stepper.picard", EXPMEM_FIELD(stepper.picard), "enable the Picard fallback"),
        real_key("stepper.picard_relaxation", EXPMEM_FIELD(stepper.picard_relaxation), "Picard relaxation"),
        int_key("stepper.picard_max_iter", EXPMEM_FIELD(stepper.picard_max_iter), "Picard iteration cap"),

        int_key("solve.multistart", EXPMEM_FIELD(multistart), "random restarts per step for the uniqueness check"),

        int_list_key("converge.N_list", EXPMEM_FIELD(converge_N_list), "dyadic ladder of step counts"),
        choice_key("converge.reference", EXPMEM_FIELD(converge_reference), {"oracle", "self"},
                   "RK4 reference or a run at 8 max(N)"),
        int_key("converge.fine_steps", EXPMEM_FIELD(converge_fine_steps), "RK4 steps for the oracle"),
        opt_real_key("converge.order_min", EXPMEM_FIELD(converge_order_min), "lower bound on observed order"),
        opt_real_key("converge.order_max", EXPMEM_FIELD(converge_order_max), "upper bound on observed order"),

        choice_key("stability.variant", EXPMEM_FIELD(stability_variant), {"i", "ii"},
                   "i: L1(H) forcing; ii: uniformly monotone A"),
        choice_key("stability.perturb", EXPMEM_FIELD(stability_perturb), {"v0", "u0", "f"}, "perturbed datum"),
        real_list_key("stability.deltas", EXPMEM_FIELD(stability_deltas), "perturbation sizes"),
        real_key("stability.ratio_factor", EXPMEM_FIELD(stability_ratio_factor),
                 "allowed spread of sup LHS / delta^2"),

        real_list_key("lambda.mu_list", EXPMEM_FIELD(lambda_mu_list), "perturbed kernel rates"),

        int_list_key("apriori.N_list", EXPMEM_FIELD(apriori_N_list), "step counts"),
        real_key("apriori.ratio_factor", EXPMEM_FIELD(apriori_ratio_factor), "allowed max/min of the ratio"),

        string_key("output.dir", EXPMEM_FIELD(output_dir), "directory for CSV/JSON outputs"),
    };
    return schema;
}

#undef EXPMEM_FIELD

inline const KeySpec* find_key(const std::string& key) {
    for (const auto& k : config_schema())
        if (k.key == key) return &k;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Validation of values (domain checks after typing)

inline void validate_config(const RunConfig& c) {
    if (!(c.lambda > 0.0) || !std::isfinite(c.lambda))
        throw std::domain_error("kernel.lambda = " + cfg_detail::fmt_real(c.lambda) +
                                " is outside the admissible range lambda ∈ (0,∞)");
    if (!(c.T > 0.0) || !std::isfinite(c.T))
        throw std::domain_error("kernel.T = " + cfg_detail::fmt_real(c.T) + " must be > 0");
    if (!(c.p > 2.0) || !std::isfinite(c.p))
        throw std::domain_error("problem.p = " + cfg_detail::fmt_real(c.p) +
                                " is outside the admissible range p ∈ (2,∞)");
    if (!(c.b > 0.0)) throw std::domain_error("problem.b must be > 0 for a positive definite B");
    if (c.dim < 1) throw ConfigError("config key 'problem.dim': must be >= 1");
    if (c.m < 2) throw ConfigError("config key 'problem.m': must be >= 2");
    if (!(c.L > 0.0)) throw ConfigError("config key 'problem.L': must be > 0");
    if (c.multistart < 0) throw ConfigError("config key 'solve.multistart': must be >= 0");
    for (double mu : c.lambda_mu_list)
        if (!(mu > 0.0)) throw std::domain_error("lambda.mu_list entries must lie in (0,∞)");
    for (double d : c.stability_deltas)
        if (!(d > 0.0)) throw ConfigError("config key 'stability.deltas': entries must be > 0");
    if (c.v0 == "file" && c.v0_file.empty()) throw ConfigError("config key 'data.v0_file': required for data.v0 = file");
    if (c.u0 == "file" && c.u0_file.empty()) throw ConfigError("config key 'data.u0_file': required for data.u0 = file");
    if (c.f == "file" && c.f_file.empty()) throw ConfigError("config key 'data.f_file': required for data.f = file");
    if (c.f == "polynomial" && c.f_coeffs.empty())
        throw ConfigError("config key 'data.f_coeffs': required for data.f = polynomial");
    try {
        c.stepper.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("stepper settings: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Parsing / emission

/// Applies a single `key = value` assignment (value in document syntax).
inline void apply_assignment(RunConfig& c, const std::string& key, const std::string& raw_value) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("unknown config key '" + key + "'");
    const std::string raw = cfg_detail::trim(raw_value);
    std::string value = raw;
    if (spec->type == KeyType::String || spec->type == KeyType::Choice) value = cfg_detail::unquote(raw);
    else if (!raw.empty() && raw.front() == '"') cfg_detail::type_error(key, spec->type, spec->choices, raw);
    spec->set(c, value);
}

/// `key=value` as given on the command line.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    apply_assignment(c, cfg_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
    RunConfig c;
    std::istringstream in(text);
    std::string line, section;
    std::map<std::string, int> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = cfg_detail::trim(cfg_detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[' && s.back() == ']' && s.find('=') == std::string::npos) {
            section = cfg_detail::trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section header");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + s + "'");
        const std::string name = cfg_detail::trim(s.substr(0, eq));
        const std::string key = section.empty() ? name : section + "." + name;
        if (auto it = seen.find(key); it != seen.end())
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate config key '" + key +
                              "' (first set on line " + std::to_string(it->second) + ")");
        seen[key] = lineno;
        try {
            apply_assignment(c, key, s.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(c, o);
    validate_config(c);
    return c;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Canonical document for `c`: every key, grouped by section, schema order.
inline std::string emit_config(const RunConfig& c) {
    std::string out;
    std::string section;
    for (const auto& k : config_schema()) {
        const auto value = k.get(c);
        if (!value) continue;
        const auto dot = k.key.find('.');
        const std::string sec = dot == std::string::npos ? "" : k.key.substr(0, dot);
        const std::string name = dot == std::string::npos ? k.key : k.key.substr(dot + 1);
        if (sec != section) {
            out += "\n[" + sec + "]\n";
            section = sec;
        }
        out += name + " = " + *value + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Problem construction

namespace cfg_detail {

inline std::vector<double> read_numbers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file '" + path + "'");
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = strip_comment(line);
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream ls(s);
        std::string tok;
        while (ls >> tok) {
            auto v = to_real(tok);
            if (!v) throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
            out.push_back(*v);
        }
    }
    return out;
}

inline Vec profile(const std::string& kind, double amplitude, Eigen::Index d) {
    if (kind == "sine") {
        Vec v(d);
        for (Eigen::Index i = 0; i < d; ++i) v[i] = amplitude * std::sin(M_PI * double(i + 1) / double(d + 1));
        return v;
    }
    return Vec::Constant(d, amplitude);
}

inline Vec initial_vector(const std::string& kind, double value, const std::string& file, Eigen::Index d,
                          const char* key) {
    if (kind != "file") return profile(kind, value, d);
    const auto nums = read_numbers(file);
    if (static_cast<Eigen::Index>(nums.size()) != d)
        throw ConfigError(std::string("config key '") + key + "': file '" + file + "' holds " +
                          std::to_string(nums.size()) + " values, expected " + std::to_string(d));
    return Eigen::Map<const Vec>(nums.data(), d);
}

/// Piecewise-linear forcing through tabulated rows t, f[0..d-1].
inline Forcing tabulated_forcing(const std::string& path, Eigen::Index d) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open forcing file '" + path + "'");
    std::vector<double> ts;
    std::vector<Vec> fs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        std::replace(s.begin(), s.end(), ',', ' ');
        std::istringstream ls(s);
        std::vector<double> row;
        std::string tok;
        bool numeric = true;
        while (ls >> tok) {
            auto v = to_real(tok);
            if (!v) {
                numeric = false;
                break;
            }
            row.push_back(*v);
        }
        if (!numeric) {
            if (ts.empty() && fs.empty()) continue; // header
            throw ConfigError(path + ":" + std::to_string(lineno) + ": non-numeric row");
        }
        if (static_cast<Eigen::Index>(row.size()) != d + 1)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d + 1) +
                              " columns");
        if (!ts.empty() && !(row[0] > ts.back()))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": times must increase strictly");
        ts.push_back(row[0]);
        fs.push_back(Eigen::Map<const Vec>(row.data() + 1, d));
    }
    if (ts.empty()) throw ConfigError("forcing file '" + path + "' has no rows");
    auto value = [ts, fs](double t) -> Vec {
        if (t <= ts.front()) return fs.front();
        if (t >= ts.back()) return fs.back();
        const auto it = std::upper_bound(ts.begin(), ts.end(), t);
        const auto i = static_cast<std::size_t>(it - ts.begin());
        const double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
        return (1.0 - w) * fs[i - 1] + w * fs[i];
    };
    return Forcing{value, nullptr};
}

} // namespace cfg_detail

inline bool uses_grid(const RunConfig& c) { return c.operator_a == "p_laplacian" || c.operator_b == "laplacian"; }

inline Eigen::Index problem_dim(const RunConfig& c) { return uses_grid(c) ? c.m : c.dim; }

inline ProblemInstance build_problem(const RunConfig& c) {
    validate_config(c);
    const Eigen::Index d = problem_dim(c);

    MonotoneOperator A = [&] {
        if (c.operator_a == "linear") return make_linear_diag(c.a, d);
        if (c.operator_a == "cubic") return make_scalar_cubic(c.a3, c.a1, d);
        return make_p_laplacian_1d(d, c.p, c.L, c.eps);
    }();
    SpdOperator B = c.operator_b == "identity" ? make_scaled_identity(c.b, d) : make_laplacian_spd_1d(d, c.L);

    const Vec v0 = cfg_detail::initial_vector(c.v0, c.v0_value, c.v0_file, d, "data.v0");
    const Vec u0 = cfg_detail::initial_vector(c.u0, c.u0_value, c.u0_file, d, "data.u0");

    Forcing f = Forcing::zero(d);
    const Vec prof = cfg_detail::profile(c.f_profile, c.f_value, d);
    if (c.f == "constant") f = Forcing::constant(prof);
    else if (c.f == "sine") f = Forcing::sine(prof, c.f_omega);
    else if (c.f == "polynomial") f = Forcing::polynomial(c.f_coeffs, prof);
    else if (c.f == "file") f = cfg_detail::tabulated_forcing(c.f_file, d);

    ProblemInstance p{std::move(A), std::move(B), u0, v0, std::move(f), KernelSpec::make(c.lambda, c.T)};
    p.validate();
    return p;
}

} // namespace expmem
