#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "../errors.hpp"
#include "../linalg.hpp"
#include "../lipschitz.hpp"
#include "../sim.hpp"
#include "../tubes.hpp"

namespace tmpc::io {

/// Fixed notation with `decimals` digits, or the shortest text that parses
/// back to the same double when decimals < 0.
inline std::string format_number(double v, int decimals = -1)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = decimals < 0 ? std::to_chars(buf, buf + sizeof buf, v)
                                  : std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    if (res.ec != std::errc()) throw Error("format_number: buffer too small");
    std::string s(buf, res.ptr);
    if (s == "-0" || (decimals >= 0 && s.find_first_not_of("-0.") == std::string::npos)) {
        if (s.front() == '-') s.erase(0, 1);
    }
    return s;
}

inline double parse_number(const std::string& s)
{
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("csv: not a number: '" + s + "'");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("csv: no column '" + name + "'");
    }

    /// Numeric block of the columns after the first `label_cols`.
    Mat numbers(std::size_t label_cols = 1) const
    {
        if (header.size() < label_cols) throw ConfigError("csv: too few columns");
        const auto nc = header.size() - label_cols;
        Mat M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(nc));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < nc; ++j)
                M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_number(rows[i][j + label_cols]);
        return M;
    }
};

inline void write_csv(std::ostream& os, const CsvTable& t)
{
    const auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
}

inline std::string to_string(const CsvTable& t)
{
    std::ostringstream os;
    write_csv(os, t);
    return os.str();
}

/// Plain comma-separated cells, no quoting (none of the emitted fields needs it).
inline CsvTable read_csv(std::istream& is)
{
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size()) throw ConfigError("csv: ragged row");
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw ConfigError("csv: empty file");
    return t;
}

inline void save(const std::string& path, const CsvTable& t)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    write_csv(f, t);
}

inline CsvTable load(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    return read_csv(f);
}

/// Row i holds M(i, :); the first column is the 1-based row index.
inline CsvTable matrix_table(const Mat& M, const std::string& corner, int decimals = 4)
{
    CsvTable t;
    t.header.push_back(corner);
    for (Eigen::Index j = 0; j < M.cols(); ++j) t.header.push_back(std::to_string(j + 1));
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        std::vector<std::string> r{std::to_string(i + 1)};
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(format_number(M(i, j), decimals));
        t.rows.push_back(std::move(r));
    }
    return t;
}

/// Half-widths of F(j) and R(j), one row per set and dimension, columns j = 0..N.
inline CsvTable tubes_table(const TubeSystem& t, int decimals = 4)
{
    CsvTable out;
    out.header.push_back("set");
    for (int j = 0; j <= t.horizon; ++j) out.header.push_back("j" + std::to_string(j));
    const auto block = [&](const Mat& M, const char* name) {
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            std::vector<std::string> r{std::string(name) + std::to_string(i + 1)};
            for (int j = 0; j <= t.horizon; ++j) r.push_back(format_number(M(i, j), decimals));
            out.rows.push_back(std::move(r));
        }
    };
    block(t.c, "F");
    block(t.d, "R");
    return out;
}

namespace detail {

inline void push_vec(std::vector<std::string>& r, const Vec& v, int n, int decimals)
{
    for (int i = 0; i < n; ++i) r.push_back(i < v.size() ? format_number(v[i], decimals) : "nan");
}

inline void push_names(std::vector<std::string>& h, const std::string& stem, int n)
{
    for (int i = 1; i <= n; ++i) h.push_back(stem + std::to_string(i));
}

} // namespace detail

/// k, t_min, x1..xn, u1..um, y1..yp, yt1..ytp, ys1..ysp, cost, W, status, min_slack.
/// Full precision by default so a trace reloads bit for bit.
inline CsvTable trace_table(const Trace& tr, int n, int m, int p, int decimals = -1)
{
    CsvTable t;
    t.header = {"k", "t_min"};
    detail::push_names(t.header, "x", n);
    detail::push_names(t.header, "u", m);
    detail::push_names(t.header, "y", p);
    detail::push_names(t.header, "yt", p);
    detail::push_names(t.header, "ys", p);
    for (const char* c : {"cost", "W", "status", "min_slack"}) t.header.emplace_back(c);
    for (const auto& s : tr.steps) {
        std::vector<std::string> r{std::to_string(s.k), format_number(s.t_min, decimals)};
        detail::push_vec(r, s.x, n, decimals);
        detail::push_vec(r, s.u, m, decimals);
        detail::push_vec(r, s.y, p, decimals);
        detail::push_vec(r, s.y_t, p, decimals);
        detail::push_vec(r, s.y_s, p, decimals);
        r.push_back(format_number(s.cost, decimals));
        r.push_back(format_number(s.W, decimals));
        r.push_back(s.status);
        r.push_back(format_number(s.min_slack, decimals));
        t.rows.push_back(std::move(r));
    }
    return t;
}

/// Inverse of trace_table for the recorded fields (w and x_final are not stored).
inline Trace trace_from_table(const CsvTable& t)
{
    const auto count = [&](const std::string& stem) {
        int c = 0;
        while (std::find(t.header.begin(), t.header.end(), stem + std::to_string(c + 1)) != t.header.end()) ++c;
        return c;
    };
    const int n = count("x"), m = count("u"), p = count("y");
    if (n == 0 || m == 0 || p == 0) throw ConfigError("trace csv: missing x, u or y columns");
    const auto vec = [&](const std::vector<std::string>& r, const std::string& stem, int len) {
        Vec v(len);
        for (int i = 0; i < len; ++i) v[i] = parse_number(r[t.column(stem + std::to_string(i + 1))]);
        return v;
    };
    Trace tr;
    for (const auto& r : t.rows) {
        StepRecord s;
        s.k = static_cast<int>(parse_number(r[t.column("k")]));
        s.t_min = parse_number(r[t.column("t_min")]);
        s.x = vec(r, "x", n);
        s.u = vec(r, "u", m);
        s.y = vec(r, "y", p);
        s.y_t = vec(r, "yt", p);
        s.y_s = vec(r, "ys", p);
        s.cost = parse_number(r[t.column("cost")]);
        s.W = parse_number(r[t.column("W")]);
        s.status = r[t.column("status")];
        s.min_slack = parse_number(r[t.column("min_slack")]);
        if (s.status == "infeasible") ++tr.infeasible_steps;
        if (s.min_slack < 0) ++tr.violations;
        tr.steps.push_back(std::move(s));
    }
    return tr;
}

/// Per-step min/max over a batch: t_min, then xi_min, xi_max, ..., uj_min, uj_max.
inline CsvTable envelope_table(const BatchReport& rep, double sample_min, int decimals = -1)
{
    CsvTable t;
    t.header = {"k", "t_min"};
    const auto nx = rep.x_min.rows(), nu = rep.u_min.rows();
    for (Eigen::Index i = 0; i < nx; ++i) {
        t.header.push_back("x" + std::to_string(i + 1) + "_min");
        t.header.push_back("x" + std::to_string(i + 1) + "_max");
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
        t.header.push_back("u" + std::to_string(i + 1) + "_min");
        t.header.push_back("u" + std::to_string(i + 1) + "_max");
    }
    for (Eigen::Index k = 0; k < rep.x_min.cols(); ++k) {
        std::vector<std::string> r{std::to_string(k), format_number(static_cast<double>(k) * sample_min, decimals)};
        for (Eigen::Index i = 0; i < nx; ++i) {
            r.push_back(format_number(rep.x_min(i, k), decimals));
            r.push_back(format_number(rep.x_max(i, k), decimals));
        }
        for (Eigen::Index i = 0; i < nu; ++i) {
            const bool has_u = k < rep.u_min.cols();
            r.push_back(has_u ? format_number(rep.u_min(i, k), decimals) : "nan");
            r.push_back(has_u ? format_number(rep.u_max(i, k), decimals) : "nan");
        }
        t.rows.push_back(std::move(r));
    }
    return t;
}

} // namespace tmpc::io
