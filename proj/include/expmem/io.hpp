#pragma once

#include "report.hpp"
#include "stepper.hpp"

#include <json.hpp>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmem {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io_detail {

inline std::string fmt17(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_real(const std::string& s, const std::string& where) {
    if (s == "nan" || s == "-nan") return std::nan("");
    double x = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, x);
    if (ec != std::errc() || ptr != end || s.empty()) throw IoError(where + ": not a number: '" + s + "'");
    return x;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty() && item.back() == '\r') item.pop_back();
        out.push_back(item);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace io_detail

// ---------------------------------------------------------------------------
// Files

/// Writes `content` to `path` (creating parent directories); errors carry the path.
inline void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading: " + std::strerror(errno));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// CSV

inline std::string table_to_csv(const Table& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += '\n';
    for (const auto& row : t.rows) {
        if (row.size() != t.columns.size()) throw std::invalid_argument("table row width does not match header");
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + io_detail::fmt17(row[i]);
        out += '\n';
    }
    return out;
}

inline Table parse_csv(const std::string& text, const std::string& where = "<csv>") {
    std::istringstream in(text);
    std::string line;
    Table t;
    if (!std::getline(in, line)) throw IoError(where + ": missing header row");
    t.columns = io_detail::split_csv_line(line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = io_detail::split_csv_line(line);
        if (cells.size() != t.columns.size())
            throw IoError(where + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                          " columns, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(io_detail::parse_real(c, where + ":" + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void emit_csv(const Table& t, const std::string& path) { write_text_file(path, table_to_csv(t)); }

inline Table load_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

// ---------------------------------------------------------------------------
// Trajectories

/// Columns n, t, v[0..d-1], K[0..d-1], newton_iters, residual.  Row 0 holds
/// the initial data with zero iteration count and residual.
inline Table trajectory_table(const Trajectory& traj) {
    const auto d = traj.v.dim();
    Table t;
    t.columns = {"n", "t"};
    for (Eigen::Index i = 0; i < d; ++i) t.columns.push_back("v[" + std::to_string(i) + "]");
    for (Eigen::Index i = 0; i < d; ++i) t.columns.push_back("K[" + std::to_string(i) + "]");
    t.columns.emplace_back("newton_iters");
    t.columns.emplace_back("residual");
    for (int n = 0; n <= traj.grid.N; ++n) {
        std::vector<double> row{double(n), traj.grid.t(n)};
        for (Eigen::Index i = 0; i < d; ++i) row.push_back(traj.v[n][i]);
        for (Eigen::Index i = 0; i < d; ++i) row.push_back(traj.K[n][i]);
        const StepStats* s = n > 0 ? &traj.stats[static_cast<std::size_t>(n - 1)] : nullptr;
        row.push_back(s ? double(s->newton_iters) : 0.0);
        row.push_back(s ? s->residual : 0.0);
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct TrajectoryRecord {
    std::vector<double> t;
    std::vector<Vec> v;
    std::vector<Vec> K;
    std::vector<int> newton_iters;
    std::vector<double> residual;

    friend bool operator==(const TrajectoryRecord& a, const TrajectoryRecord& b) {
        return a.t == b.t && a.v == b.v && a.K == b.K && a.newton_iters == b.newton_iters && a.residual == b.residual;
    }
};

inline TrajectoryRecord to_record(const Table& t, const std::string& where = "<trajectory>") {
    const auto cols = t.columns.size();
    if (cols < 6 || (cols - 4) % 2 != 0 || t.columns[0] != "n" || t.columns[1] != "t" ||
        t.columns[cols - 2] != "newton_iters" || t.columns[cols - 1] != "residual")
        throw IoError(where + ": not a trajectory table");
    const auto d = static_cast<Eigen::Index>((cols - 4) / 2);
    TrajectoryRecord r;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        if (row[0] != double(k)) throw IoError(where + ": step column is not 0, 1, 2, ...");
        r.t.push_back(row[1]);
        r.v.push_back(Eigen::Map<const Vec>(row.data() + 2, d));
        r.K.push_back(Eigen::Map<const Vec>(row.data() + 2 + d, d));
        r.newton_iters.push_back(static_cast<int>(row[cols - 2]));
        r.residual.push_back(row[cols - 1]);
    }
    return r;
}

inline TrajectoryRecord to_record(const Trajectory& traj) { return to_record(trajectory_table(traj)); }

inline TrajectoryRecord load_trajectory_csv(const std::string& path) { return to_record(load_csv(path), path); }

// ---------------------------------------------------------------------------
// JSON reports

inline nlohmann::ordered_json entry_to_json(const DiagnosticsEntry& e) {
    nlohmann::ordered_json j;
    j["name"] = e.name;
    j["lhs"] = e.lhs;
    j["rhs"] = e.rhs;
    j["margin"] = e.margin;
    j["pass"] = e.pass;
    j["gating"] = e.gating;
    j["tol"] = e.tol;
    j["abs_tol"] = e.abs_tol;
    j["paper_tag"] = e.paper_tag;
    nlohmann::ordered_json extras = nlohmann::ordered_json::object();
    for (const auto& [k, v] : e.extras) extras[k] = v; // std::map: sorted keys
    j["extras"] = extras;
    return j;
}

inline nlohmann::ordered_json report_to_json(const DiagnosticsReport& r) {
    nlohmann::ordered_json j;
    j["experiment"] = r.experiment;
    j["all_pass"] = r.all_pass();
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : r.entries) entries.push_back(entry_to_json(e));
    j["entries"] = entries;
    return j;
}

inline std::string report_to_text(const DiagnosticsReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline void emit_json(const DiagnosticsReport& r, const std::string& path) {
    write_text_file(path, report_to_text(r));
}

} // namespace expmem
