#include "expmem/cli.hpp"
#include "expmem/config.hpp"
#include "expmem/io.hpp"
#include "expmem/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

using namespace expmem;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("expmem_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

int cli_main(std::vector<std::string> args) {
    args.insert(args.begin(), "expmem");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data());
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("parse_config: defaults", "[config]") {
    const auto c = parse_config("");
    CHECK(c.stepper.N == 256);
    CHECK(c.stepper.newton_tol == 1e-10);
    CHECK(c.stepper.newton_max_iter == 50);
    CHECK(c.stepper.damping == 0.5);
    CHECK(c.stepper.max_halvings == 30);
    CHECK(c.stepper.cg_tol == 1e-12);
    CHECK(c.stepper.picard);
    CHECK(c.operator_a == "linear");
    CHECK(c.dim == 1);
    const auto p = build_problem(c);
    CHECK(p.dim() == 1);
    CHECK(p.A.p == 2.0);
}

TEST_CASE("parse_config: syntax", "[config]") {
    const auto c = parse_config(R"(
# leading comment
seed = 3
[kernel]
lambda = 2.5   # trailing comment
T = 4
[problem]
operator_a = cubic
a3 = 0.5
[converge]
N_list = [8, 16, 32]
order_min = 0.9
[output]
dir = "out # not a comment"
)");
    CHECK(c.seed == 3);
    CHECK(c.lambda == 2.5);
    CHECK(c.T == 4.0);
    CHECK(c.operator_a == "cubic");
    CHECK(c.a3 == 0.5);
    CHECK(c.converge_N_list == std::vector<int>{8, 16, 32});
    CHECK(c.converge_order_min == 0.9);
    CHECK_FALSE(c.converge_order_max.has_value());
    CHECK(c.output_dir == "out # not a comment");
}

TEST_CASE("parse_config: rejections", "[config]") {
    SECTION("p outside (2, inf)") {
        CHECK_THROWS_AS(parse_config("[problem]\np = 1.5\n"), std::domain_error);
        CHECK(message_of([] { parse_config("[problem]\np = 1.5\n"); }).find("p ∈ (2,∞)") != std::string::npos);
        CHECK_THROWS_AS(parse_config("[problem]\np = 2\n"), std::domain_error);
    }
    SECTION("lambda not positive") {
        CHECK_THROWS_AS(parse_config("[kernel]\nlambda = 0\n"), std::domain_error);
        CHECK_THROWS_AS(parse_config("[kernel]\nlambda = -1\n"), std::domain_error);
    }
    SECTION("unknown keys name the key") {
        const auto m = message_of([] { parse_config("[kernel]\nrate = 1\n"); });
        CHECK(m.find("kernel.rate") != std::string::npos);
        CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    }
    SECTION("type mismatches name the key and the expected type") {
        const auto m = message_of([] { parse_config("[stepper]\nN = 1.5\n"); });
        CHECK(m.find("stepper.N") != std::string::npos);
        CHECK(m.find("integer") != std::string::npos);
        const auto m2 = message_of([] { parse_config("[problem]\noperator_a = quartic\n"); });
        CHECK(m2.find("problem.operator_a") != std::string::npos);
        CHECK(m2.find("p_laplacian") != std::string::npos);
        CHECK_THROWS_AS(parse_config("[kernel]\nlambda = \"1\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[stepper]\npicard = yes\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[converge]\nN_list = 8, 16\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[converge]\nN_list = [8, x]\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("seed = -1\n"), ConfigError);
    }
    SECTION("structure") {
        CHECK_THROWS_AS(parse_config("[kernel]\nlambda\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[kernel]\nlambda = 1\nlambda = 2\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[]\n"), ConfigError);
        CHECK(message_of([] { parse_config("\n\n[kernel]\nlambda = x\n"); }).find("line 4") != std::string::npos);
        CHECK_THROWS_AS(parse_config("[data]\nv0 = file\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[stepper]\nN = 0\n"), ConfigError);
    }
}

TEST_CASE("parse_config: overrides win over the document", "[config]") {
    const auto c = parse_config("[stepper]\nN = 64\n", {"stepper.N=128", "kernel.lambda = 3"});
    CHECK(c.stepper.N == 128);
    CHECK(c.lambda == 3.0);
    CHECK_THROWS_AS(parse_config("", {"stepper.N"}), ConfigError);
    CHECK_THROWS_AS(parse_config("", {"nope=1"}), ConfigError);
}

TEST_CASE("emit_config round-trips", "[config]") {
    SECTION("defaults") {
        const auto c = parse_config("");
        CHECK(parse_config(emit_config(c)) == c);
    }
    SECTION("shipped configs") {
        for (const auto& entry : fs::directory_iterator(EXPMEM_CONFIG_DIR)) {
            if (entry.path().extension() != ".conf") continue;
            const auto c = load_config(entry.path().string());
            INFO(entry.path());
            CHECK(parse_config(emit_config(c)) == c);
            CHECK(emit_config(parse_config(emit_config(c))) == emit_config(c));
        }
    }
    SECTION("randomised values survive exactly") {
        Rng rng(2024);
        for (int trial = 0; trial < 200; ++trial) {
            RunConfig c;
            c.lambda = std::exp(rng.uniform(-5.0, 5.0));
            c.T = rng.uniform(0.1, 10.0);
            c.p = 2.0 + std::exp(rng.uniform(-20.0, 2.0));
            c.a = rng.normal();
            c.f_coeffs = {rng.normal(), rng.normal() * 1e-300, rng.normal() * 1e300};
            c.stepper.newton_tol = std::exp(rng.uniform(-30.0, -5.0));
            c.stepper.N = 1 + static_cast<int>(rng.uniform(0.0, 1e5));
            c.seed = static_cast<std::uint64_t>(rng.uniform(0.0, 1e15));
            c.stability_deltas = {rng.uniform(1e-9, 1.0)};
            c.output_dir = trial % 2 ? "dir with \"quotes\" and # hash" : "plain";
            c.converge_order_max = trial % 3 ? std::optional<double>(rng.uniform(1.0, 2.0)) : std::nullopt;
            const auto back = parse_config(emit_config(c));
            REQUIRE(back == c);
        }
    }
}

TEST_CASE("build_problem", "[config]") {
    SECTION("grid operators use problem.m") {
        const auto p = build_problem(parse_config("[problem]\noperator_a = p_laplacian\nm = 12\n"));
        CHECK(p.dim() == 12);
        CHECK(p.A.p == 3.0);
        REQUIRE(p.A.uniform);
        CHECK(p.A.uniform->within_assumptions);
    }
    SECTION("data files") {
        const auto dir = scratch("data");
        write(dir / "v0.txt", "# three values\n1.5, 2.5\n3.5\n");
        write(dir / "f.csv", "t,f0,f1,f2\n0,0,0,0\n1,2,4,6\n");
        const auto c = parse_config("[problem]\ndim = 3\n[data]\nv0 = file\nv0_file = \"" + (dir / "v0.txt").string() +
                                    "\"\nf = file\nf_file = \"" + (dir / "f.csv").string() + "\"\n");
        const auto p = build_problem(c);
        CHECK(p.v0 == (Vec(3) << 1.5, 2.5, 3.5).finished());
        CHECK(p.f.value(0.25) == (Vec(3) << 0.5, 1.0, 1.5).finished());
        CHECK(p.f.value(7.0) == (Vec(3) << 2.0, 4.0, 6.0).finished());
        CHECK_THAT(p.f.cell_average(0.0, 1.0)[2], Catch::Matchers::WithinAbs(3.0, 1e-14));

        auto wrong = c;
        wrong.dim = 2;
        CHECK_THROWS_AS(build_problem(wrong), ConfigError);
        auto missing = c;
        missing.v0_file = (dir / "nope.txt").string();
        CHECK(message_of([&] { build_problem(missing); }).find("nope.txt") != std::string::npos);
    }
    SECTION("forcing kinds") {
        const auto poly = build_problem(parse_config("[data]\nf = polynomial\nf_coeffs = [1, 2]\nf_value = 3\n"));
        CHECK(poly.f.value(2.0)[0] == 15.0);
        const auto sine = build_problem(parse_config("[data]\nf = sine\nf_omega = 2\n"));
        CHECK_THAT(sine.f.value(0.5)[0], Catch::Matchers::WithinAbs(std::sin(1.0), 1e-15));
    }
}

TEST_CASE("CSV emission", "[io]") {
    SECTION("empty table gives a header-only file") {
        const Table t{{"a", "b", "c"}, {}};
        CHECK(table_to_csv(t) == "a,b,c\n");
        const auto dir = scratch("csv");
        emit_csv(t, (dir / "empty.csv").string());
        CHECK(read_text_file((dir / "empty.csv").string()) == "a,b,c\n");
        const auto back = load_csv((dir / "empty.csv").string());
        CHECK(back.columns == t.columns);
        CHECK(back.rows.empty());
    }
    SECTION("values round-trip exactly") {
        Rng rng(5);
        Table t{{"x", "y"}, {}};
        for (int i = 0; i < 500; ++i) t.rows.push_back({rng.normal() * std::pow(10.0, rng.uniform(-300, 300)), rng.uniform()});
        t.rows.push_back({std::numeric_limits<double>::denorm_min(), -0.0});
        t.rows.push_back({std::numeric_limits<double>::max(), std::nan("")});
        const auto back = parse_csv(table_to_csv(t));
        REQUIRE(back.rows.size() == t.rows.size());
        for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) CHECK(back.rows[i] == t.rows[i]);
        CHECK(std::isnan(back.rows.back()[1]));
        CHECK(table_to_csv(back) == table_to_csv(t));
    }
    SECTION("trajectory reload(emit(x)) == x") {
        ProblemInstance p{make_scalar_cubic(1.0, 0.3, 3), make_scaled_identity(2.0, 3), Vec::Constant(3, 0.1),
                          Vec::LinSpaced(3, -1.0, 1.0), Forcing::sine(Vec::Ones(3)), KernelSpec::make(1.3, 2.0)};
        StepperConfig cfg;
        cfg.N = 50;
        const auto traj = run(p, cfg);
        const auto dir = scratch("traj");
        const auto path = (dir / "t.csv").string();
        emit_csv(trajectory_table(traj), path);
        const auto rec = load_trajectory_csv(path);
        CHECK(rec == to_record(traj));
        CHECK(rec.v.size() == 51);
        CHECK(rec.t.back() == 2.0);
        CHECK(read_text_file(path).rfind("n,t,v[0],v[1],v[2],K[0],K[1],K[2],newton_iters,residual\n", 0) == 0);
    }
    SECTION("I/O errors carry the path") {
        const auto dir = scratch("ioerr");
        write(dir / "file", "x");
        const std::string bad = (dir / "file" / "sub" / "out.csv").string();
        const auto m = message_of([&] { emit_csv(Table{{"a"}, {}}, bad); });
        CHECK(m.find((dir / "file").string()) != std::string::npos);
        CHECK(message_of([&] { load_csv((dir / "missing.csv").string()); }).find("missing.csv") != std::string::npos);
        CHECK_THROWS_AS(parse_csv("a,b\n1\n"), IoError);
        CHECK_THROWS_AS(parse_csv("a\nxyz\n"), IoError);
    }
}

TEST_CASE("JSON reports", "[io]") {
    DiagnosticsReport r{"apriori", {}};
    auto e = DiagnosticsEntry::check("x", 1.0, 2.0, 0.0, 0.0, tags::kApriori);
    e.extras["zeta"] = 1.0;
    e.extras["alpha"] = std::nan("");
    r.add(e);
    const auto j = report_to_json(r);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"experiment", "all_pass", "entries"});
    std::vector<std::string> entry_keys;
    for (const auto& [k, v] : j["entries"][0].items()) entry_keys.push_back(k);
    CHECK(entry_keys == std::vector<std::string>{"name", "lhs", "rhs", "margin", "pass", "gating", "tol", "abs_tol",
                                                 "paper_tag", "extras"});
    CHECK(j["entries"][0]["extras"].begin().key() == "alpha");
    CHECK(nlohmann::json::parse(j.dump())["entries"][0]["extras"]["alpha"].is_null());
    const double tricky = 0.1 + 0.2;
    r.entries[0].lhs = tricky;
    CHECK(nlohmann::json::parse(report_to_text(r))["entries"][0]["lhs"].get<double>() == tricky);
    CHECK(report_to_text(r) == report_to_text(r));
}

TEST_CASE("every tag used by the diagnostics is in the paper map", "[io]") {
    for (const char* t : {tags::kMemoryPositivity, tags::kMemoryRelation, tags::kSchemeResidual, tags::kEnergyBalance,
                          tags::kApriori, tags::kConvergence, tags::kOracle, tags::kStabilityI, tags::kStabilityII,
                          tags::kUniqueness, tags::kLambda})
        CHECK(tags::is_known(t));
    const auto rep = cli::run_stability(parse_config("[stepper]\nN = 32\n"), 1);
    for (const auto& e : rep.report.entries) CHECK(tags::is_known(e.paper_tag));
}

TEST_CASE("cli", "[cli]") {
    const auto dir = scratch("cli");
    SECTION("weights") {
        const auto out = (dir / "w.csv").string();
        CHECK(cli_main({"weights", "--lambda", "1", "--T", "1", "--N", "10", "--out", out}) == 0);
        const auto t = load_csv(out);
        CHECK(t.columns == std::vector<std::string>{"i", "t_i", "gamma_closed", "gamma_numeric", "abs_diff"});
        REQUIRE(t.rows.size() == 10);
        CHECK_THAT(t.rows[0][2], Catch::Matchers::WithinRel(0.95162581964040482, 1e-15));
        for (const auto& row : t.rows) CHECK(row[4] <= 1e-12 * row[2]);
    }
    SECTION("exit codes") {
        CHECK(cli_main({"--out-dir", (dir / "s").string(), "--override", "stepper.N=32", "solve"}) == 0);
        CHECK(fs::exists(dir / "s" / "trajectory.csv"));
        CHECK(fs::exists(dir / "s" / "solve.json"));
        // A ratio bound below 1 cannot hold.
        CHECK(cli_main({"--out-dir", (dir / "f").string(), "--override", "stepper.N=32", "--override",
                        "stability.ratio_factor=0.5", "stability"}) == 1);
        CHECK(cli_main({"--override", "problem.p=1.5", "solve"}) == 2);
        CHECK(cli_main({"--override", "what=1", "solve"}) == 2);
        CHECK(cli_main({"frobnicate"}) != 0);
    }
    SECTION("options after the subcommand and --seed") {
        const auto conf = dir / "c.conf";
        write(conf, "[stepper]\nN = 16\n[solve]\nmultistart = 2\n");
        CHECK(cli_main({"solve", "--config", conf.string(), "--out-dir", (dir / "o").string(), "--seed", "9"}) == 0);
        const auto j = nlohmann::json::parse(read_text_file((dir / "o" / "solve.json").string()));
        bool found = false;
        for (const auto& e : j["entries"]) found |= e["name"] == "multistart_uniqueness";
        CHECK(found);
    }
}
