#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "../pipeline.hpp"

namespace tmpc::io {

using json = nlohmann::json;

/// Bumped whenever the artifact layout or the pipeline numerics change, so a
/// stale cache is never reused.
inline constexpr const char* artifact_format = "tmpc-artifacts-1";

struct RunConfig {
    PipelineConfig pipeline;
    std::string output_dir = "out";
};

inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t h)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<size_t>(i)] = digits[h & 0xf];
    return s;
}

// ---- scalar, vector and matrix blocks ----

/// JSON has no inf/nan; they travel as strings.
inline json num_to_json(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double num_from_json(const json& j, const std::string& where)
{
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(where + ": expected a number");
}

inline json vec_to_json(const Vec& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num_to_json(v[i]));
    return a;
}

inline Vec vec_from_json(const json& j, const std::string& where, Eigen::Index expected = -1)
{
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = num_from_json(j[i], where + "[" + std::to_string(i) + "]");
    if (expected >= 0 && v.size() != expected)
        throw ConfigError(where + ": expected " + std::to_string(expected) + " entries, got " +
                          std::to_string(v.size()));
    return v;
}

/// Row-major block: one array per row.
inline json mat_to_json(const Mat& M)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(vec_to_json(M.row(i).transpose()));
    return a;
}

inline Mat mat_from_json(const json& j, const std::string& where, Eigen::Index rows = -1, Eigen::Index cols = -1)
{
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(where + ": expected an array of rows");
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        M.row(i) = vec_from_json(j[static_cast<size_t>(i)], where + " row " + std::to_string(i), c).transpose();
    if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols))
        throw ConfigError(where + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                          std::to_string(r) + "x" + std::to_string(c));
    return M;
}

template <std::size_t N>
json array_to_json(const std::array<double, N>& a)
{
    json j = json::array();
    for (double v : a) j.push_back(v);
    return j;
}

template <std::size_t N>
std::array<double, N> array_from_json(const json& j, const std::string& where)
{
    const Vec v = vec_from_json(j, where, static_cast<Eigen::Index>(N));
    std::array<double, N> a{};
    for (std::size_t i = 0; i < N; ++i) a[i] = v[static_cast<Eigen::Index>(i)];
    return a;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline void read_num(const json& j, const char* key, double& out, const std::string& where)
{
    if (j.contains(key)) out = num_from_json(j.at(key), where + "." + key);
}

} // namespace detail

// ---- configuration ----

inline json config_to_json(const RunConfig& rc)
{
    const PipelineConfig& c = rc.pipeline;
    const FourTankParams& p = c.plant;
    json j;
    j["plant"] = {{"S", p.S},
                  {"a", array_to_json(p.a)},
                  {"gamma_a", p.gamma_a},
                  {"gamma_b", p.gamma_b},
                  {"g", p.g},
                  {"Ts", p.Ts},
                  {"substeps", p.substeps},
                  {"h_min", array_to_json(p.h_min)},
                  {"h_max", array_to_json(p.h_max)},
                  {"q_min", array_to_json(p.q_min)},
                  {"q_max", array_to_json(p.q_max)},
                  {"w_bar", array_to_json(p.w_bar)}};
    j["horizon"] = c.horizon;
    j["Q"] = mat_to_json(c.Q);
    j["R"] = mat_to_json(c.R);
    j["T"] = mat_to_json(c.T);

    json t = {{"zeta", c.zeta}, {"rescale_P", c.rescale_P}, {"rescale_safety", c.rescale_safety}};
    if (c.K) t["K"] = mat_to_json(*c.K);
    if (c.P) t["P"] = mat_to_json(*c.P);
    if (c.rho) t["rho"] = *c.rho;
    t["sizing"] = {{"samples_per_setpoint", c.sizing.samples_per_setpoint},
                   {"setpoint_grid", c.sizing.setpoint_grid},
                   {"rho_min", c.sizing.rho_min},
                   {"shrink", c.sizing.shrink},
                   {"bisection_steps", c.sizing.bisection_steps}};
    j["terminal"] = t;

    json l = {{"budget", c.lipschitz.budget},
              {"seed", c.lipschitz.seed},
              {"initial_value", c.lipschitz.initial_value},
              {"decay", c.lipschitz.decay},
              {"refine_steps", c.lipschitz.refine_steps},
              {"safety_factor", c.lipschitz.safety_factor}};
    if (c.L) {
        l["Lx"] = mat_to_json(c.L->Lx);
        l["Lv"] = mat_to_json(c.L->Lv);
        l["Lw"] = mat_to_json(c.L->Lw);
    }
    if (c.F0) l["F0"] = vec_to_json(*c.F0);
    j["lipschitz"] = l;

    json s = {{"candidate_lower", vec_to_json(c.yt_candidate.lower())},
              {"candidate_upper", vec_to_json(c.yt_candidate.upper())},
              {"density", c.yt_grid.density},
              {"eps", c.yt_grid.eps},
              {"inscribed_box", c.yt_grid.inscribed_box},
              {"level", c.yt_level}};
    if (c.yt_vertices) {
        json v = json::array();
        for (const Vec& y : *c.yt_vertices) v.push_back(vec_to_json(y));
        s["vertices"] = v;
    }
    j["setpoints"] = s;

    const SolverOptions& o = c.solver;
    j["solver"] = {{"max_iter", o.max_iter},
                   {"stationarity_tol", o.stationarity_tol},
                   {"feasibility_tol", o.feasibility_tol},
                   {"constraint_backoff", o.constraint_backoff},
                   {"initial_radius", o.initial_radius},
                   {"max_radius", o.max_radius},
                   {"min_radius", o.min_radius},
                   {"hessian_reg", o.hessian_reg}};

    json sched = json::array();
    for (const auto& e : c.schedule) sched.push_back({{"t_min", e.t_min}, {"y_t", vec_to_json(e.y_t)}});
    j["scenario"] = {{"x0", vec_to_json(c.x0)}, {"schedule", sched}, {"duration_min", c.duration_min}};
    j["batch"] = {{"w_grid", c.w_grid}, {"threads", c.threads}};
    j["seed"] = c.seed;
    j["output_dir"] = rc.output_dir;
    return j;
}

/// Structural and dimensional checks; every failure is a ConfigError.
inline void validate_config(const PipelineConfig& c)
{
    try {
        c.plant.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("plant: ") + e.what());
    }
    const Eigen::Index n = 4, m = 2, p = 2;
    const auto dims = [](const Mat& M, Eigen::Index r, Eigen::Index k, const char* name) {
        if (M.rows() != r || M.cols() != k)
            throw ConfigError(std::string(name) + ": expected " + std::to_string(r) + "x" + std::to_string(k) +
                              ", got " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
    };
    if (c.horizon < 1) throw ConfigError("horizon must be at least 1");
    dims(c.Q, n, n, "Q");
    dims(c.R, m, m, "R");
    dims(c.T, p, p, "T");
    if (c.K) dims(*c.K, m, n, "terminal.K");
    if (c.P) dims(*c.P, n, n, "terminal.P");
    if (c.rho && !(*c.rho > 0)) throw ConfigError("terminal.rho must be positive");
    if (c.L) {
        dims(c.L->Lx, n, n, "lipschitz.Lx");
        dims(c.L->Lv, n, m, "lipschitz.Lv");
        dims(c.L->Lw, n, 2, "lipschitz.Lw");
    }
    if (c.F0 && c.F0->size() != n) throw ConfigError("lipschitz.F0: expected 4 entries");
    if (c.yt_candidate.dim() != p) throw ConfigError("setpoints: candidate box must be 2-dimensional");
    if (c.yt_grid.density < 2) throw ConfigError("setpoints.density must be at least 2");
    if (c.yt_vertices) {
        if (c.yt_vertices->size() < 3) throw ConfigError("setpoints.vertices: need at least 3 points");
        for (const Vec& v : *c.yt_vertices)
            if (v.size() != p) throw ConfigError("setpoints.vertices: points must be 2-dimensional");
    }
    if (c.x0.size() != n) throw ConfigError("scenario.x0: expected 4 entries");
    if (c.schedule.empty()) throw ConfigError("scenario.schedule: empty");
    if (c.schedule.front().t_min != 0.0) throw ConfigError("scenario.schedule: must start at t_min = 0");
    for (std::size_t i = 0; i < c.schedule.size(); ++i) {
        if (c.schedule[i].y_t.size() != p) throw ConfigError("scenario.schedule: y_t must have 2 entries");
        if (i > 0 && !(c.schedule[i].t_min > c.schedule[i - 1].t_min))
            throw ConfigError("scenario.schedule: t_min must increase strictly");
        if (!(c.schedule[i].t_min < c.duration_min)) throw ConfigError("scenario.schedule: entry after the end of the run");
    }
    if (!(c.duration_min > 0)) throw ConfigError("scenario.duration_min must be positive");
    for (double w : c.w_grid)
        if (!(std::abs(w) <= std::min(c.plant.w_bar[0], c.plant.w_bar[1])))
            throw ConfigError("batch.w_grid: value outside the disturbance bounds");
    if (c.threads < 0) throw ConfigError("batch.threads must be nonnegative");
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig config_from_json(const json& j)
{
    RunConfig rc;
    PipelineConfig& c = rc.pipeline;
    detail::check_keys(j, {"plant", "horizon", "Q", "R", "T", "terminal", "lipschitz", "setpoints", "solver", "scenario",
                           "batch", "seed", "output_dir"},
                       "config");
    if (j.contains("plant")) {
        const json& p = j["plant"];
        detail::check_keys(p, {"S", "a", "gamma_a", "gamma_b", "g", "Ts", "substeps", "h_min", "h_max", "q_min", "q_max",
                               "w_bar"},
                           "plant");
        FourTankParams& f = c.plant;
        detail::read_num(p, "S", f.S, "plant");
        if (p.contains("a")) f.a = array_from_json<4>(p["a"], "plant.a");
        detail::read_num(p, "gamma_a", f.gamma_a, "plant");
        detail::read_num(p, "gamma_b", f.gamma_b, "plant");
        detail::read_num(p, "g", f.g, "plant");
        detail::read_num(p, "Ts", f.Ts, "plant");
        detail::read(p, "substeps", f.substeps, "plant");
        if (p.contains("h_min")) f.h_min = array_from_json<4>(p["h_min"], "plant.h_min");
        if (p.contains("h_max")) f.h_max = array_from_json<4>(p["h_max"], "plant.h_max");
        if (p.contains("q_min")) f.q_min = array_from_json<2>(p["q_min"], "plant.q_min");
        if (p.contains("q_max")) f.q_max = array_from_json<2>(p["q_max"], "plant.q_max");
        if (p.contains("w_bar")) f.w_bar = array_from_json<2>(p["w_bar"], "plant.w_bar");
    }
    detail::read(j, "horizon", c.horizon, "config");
    if (j.contains("Q")) c.Q = mat_from_json(j["Q"], "Q");
    if (j.contains("R")) c.R = mat_from_json(j["R"], "R");
    if (j.contains("T")) c.T = mat_from_json(j["T"], "T");

    if (j.contains("terminal")) {
        const json& t = j["terminal"];
        detail::check_keys(t, {"K", "P", "rho", "zeta", "rescale_P", "rescale_safety", "sizing"}, "terminal");
        if (t.contains("K")) c.K = mat_from_json(t["K"], "terminal.K");
        if (t.contains("P")) c.P = mat_from_json(t["P"], "terminal.P");
        if (t.contains("rho")) c.rho = num_from_json(t["rho"], "terminal.rho");
        detail::read_num(t, "zeta", c.zeta, "terminal");
        detail::read(t, "rescale_P", c.rescale_P, "terminal");
        detail::read_num(t, "rescale_safety", c.rescale_safety, "terminal");
        if (t.contains("sizing")) {
            const json& s = t["sizing"];
            detail::check_keys(s, {"samples_per_setpoint", "setpoint_grid", "rho_min", "shrink", "bisection_steps"},
                               "terminal.sizing");
            detail::read(s, "samples_per_setpoint", c.sizing.samples_per_setpoint, "terminal.sizing");
            detail::read(s, "setpoint_grid", c.sizing.setpoint_grid, "terminal.sizing");
            detail::read_num(s, "rho_min", c.sizing.rho_min, "terminal.sizing");
            detail::read_num(s, "shrink", c.sizing.shrink, "terminal.sizing");
            detail::read(s, "bisection_steps", c.sizing.bisection_steps, "terminal.sizing");
        }
    }

    if (j.contains("lipschitz")) {
        const json& l = j["lipschitz"];
        detail::check_keys(l, {"budget", "seed", "initial_value", "decay", "refine_steps", "safety_factor", "Lx", "Lv",
                               "Lw", "F0"},
                           "lipschitz");
        detail::read(l, "budget", c.lipschitz.budget, "lipschitz");
        detail::read(l, "seed", c.lipschitz.seed, "lipschitz");
        detail::read_num(l, "initial_value", c.lipschitz.initial_value, "lipschitz");
        detail::read_num(l, "decay", c.lipschitz.decay, "lipschitz");
        detail::read(l, "refine_steps", c.lipschitz.refine_steps, "lipschitz");
        detail::read_num(l, "safety_factor", c.lipschitz.safety_factor, "lipschitz");
        const int given = static_cast<int>(l.contains("Lx")) + l.contains("Lv") + l.contains("Lw");
        if (given != 0 && given != 3) throw ConfigError("lipschitz: Lx, Lv and Lw must be given together");
        if (given == 3) {
            LipschitzMatrices L;
            L.Lx = mat_from_json(l["Lx"], "lipschitz.Lx");
            L.Lv = mat_from_json(l["Lv"], "lipschitz.Lv");
            L.Lw = mat_from_json(l["Lw"], "lipschitz.Lw");
            c.L = L;
        }
        if (l.contains("F0")) c.F0 = vec_from_json(l["F0"], "lipschitz.F0");
    }

    if (j.contains("setpoints")) {
        const json& s = j["setpoints"];
        detail::check_keys(s, {"candidate_lower", "candidate_upper", "density", "eps", "inscribed_box", "level", "vertices"},
                           "setpoints");
        Vec lo = c.yt_candidate.lower(), hi = c.yt_candidate.upper();
        if (s.contains("candidate_lower")) lo = vec_from_json(s["candidate_lower"], "setpoints.candidate_lower", 2);
        if (s.contains("candidate_upper")) hi = vec_from_json(s["candidate_upper"], "setpoints.candidate_upper", 2);
        try {
            c.yt_candidate = Hyperbox(lo, hi);
        } catch (const Error& e) {
            throw ConfigError(std::string("setpoints: ") + e.what());
        }
        detail::read(s, "density", c.yt_grid.density, "setpoints");
        detail::read_num(s, "eps", c.yt_grid.eps, "setpoints");
        detail::read(s, "inscribed_box", c.yt_grid.inscribed_box, "setpoints");
        detail::read_num(s, "level", c.yt_level, "setpoints");
        if (s.contains("vertices")) {
            if (!s["vertices"].is_array()) throw ConfigError("setpoints.vertices: expected an array");
            std::vector<Vec> v;
            for (const auto& e : s["vertices"]) v.push_back(vec_from_json(e, "setpoints.vertices"));
            c.yt_vertices = v;
        }
    }

    if (j.contains("solver")) {
        const json& o = j["solver"];
        detail::check_keys(o, {"max_iter", "stationarity_tol", "feasibility_tol", "constraint_backoff", "initial_radius",
                               "max_radius", "min_radius", "hessian_reg"},
                           "solver");
        SolverOptions& s = c.solver;
        detail::read(o, "max_iter", s.max_iter, "solver");
        detail::read_num(o, "stationarity_tol", s.stationarity_tol, "solver");
        detail::read_num(o, "feasibility_tol", s.feasibility_tol, "solver");
        detail::read_num(o, "constraint_backoff", s.constraint_backoff, "solver");
        detail::read_num(o, "initial_radius", s.initial_radius, "solver");
        detail::read_num(o, "max_radius", s.max_radius, "solver");
        detail::read_num(o, "min_radius", s.min_radius, "solver");
        detail::read_num(o, "hessian_reg", s.hessian_reg, "solver");
    }

    if (j.contains("scenario")) {
        const json& s = j["scenario"];
        detail::check_keys(s, {"x0", "schedule", "duration_min"}, "scenario");
        if (s.contains("x0")) c.x0 = vec_from_json(s["x0"], "scenario.x0");
        detail::read_num(s, "duration_min", c.duration_min, "scenario");
        if (s.contains("schedule")) {
            if (!s["schedule"].is_array()) throw ConfigError("scenario.schedule: expected an array");
            c.schedule.clear();
            for (const auto& e : s["schedule"]) {
                detail::check_keys(e, {"t_min", "y_t"}, "scenario.schedule entry");
                if (!e.contains("t_min") || !e.contains("y_t"))
                    throw ConfigError("scenario.schedule entry: needs t_min and y_t");
                c.schedule.push_back(
                    {num_from_json(e["t_min"], "scenario.schedule.t_min"), vec_from_json(e["y_t"], "scenario.schedule.y_t")});
            }
        }
    }

    if (j.contains("batch")) {
        const json& b = j["batch"];
        detail::check_keys(b, {"w_grid", "threads"}, "batch");
        detail::read(b, "w_grid", c.w_grid, "batch");
        detail::read(b, "threads", c.threads, "batch");
    }
    detail::read(j, "seed", c.seed, "config");
    detail::read(j, "output_dir", rc.output_dir, "config");
    validate_config(c);
    return rc;
}

inline json parse_json_text(const std::string& text, const std::string& where)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(parse_json_text(ss.str(), path));
}

inline void save_json(const std::string& path, const json& j)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f << j.dump(2) << '\n';
}

// ---- pipeline artifacts ----

/// Content hash of everything the pipeline depends on. The output directory
/// and the batch/scenario blocks do not enter.
inline std::string pipeline_key(const RunConfig& rc)
{
    json j = config_to_json(rc);
    for (const char* k : {"output_dir", "batch", "scenario", "solver"}) j.erase(k);
    return hex64(fnv1a64(std::string(artifact_format) + "\n" + j.dump()));
}

inline json vertex_report_to_json(const VertexReport& r)
{
    return {{"max_lyapunov_eig", num_to_json(r.max_lyapunov_eig)},
            {"max_contraction", num_to_json(r.max_contraction)},
            {"max_spectral_radius", num_to_json(r.max_spectral_radius)},
            {"worst_vertex", r.worst_vertex},
            {"lyapunov_ok", r.lyapunov_ok},
            {"contraction_ok", r.contraction_ok}};
}

inline VertexReport vertex_report_from_json(const json& j)
{
    VertexReport r;
    r.max_lyapunov_eig = num_from_json(j.at("max_lyapunov_eig"), "vertices");
    r.max_contraction = num_from_json(j.at("max_contraction"), "vertices");
    r.max_spectral_radius = num_from_json(j.at("max_spectral_radius"), "vertices");
    r.worst_vertex = j.at("worst_vertex").get<std::size_t>();
    r.lyapunov_ok = j.at("lyapunov_ok").get<bool>();
    r.contraction_ok = j.at("contraction_ok").get<bool>();
    return r;
}

inline json artifacts_to_json(const PipelineArtifacts& a, const std::string& key)
{
    json j;
    j["format"] = artifact_format;
    j["key"] = key;
    j["L"] = {{"Lx", mat_to_json(a.L.Lx)},
              {"Lv", mat_to_json(a.L.Lv)},
              {"Lw", mat_to_json(a.L.Lw)},
              {"samples", a.L.certificate.samples},
              {"max_residual", vec_to_json(a.L.certificate.max_residual)},
              {"seed", a.L.certificate.seed},
              {"certified", a.L.certificate.certified}};
    j["F0"] = vec_to_json(a.tubes.c.col(0));
    json verts = json::array();
    for (const Vec& v : a.region.polytope.vertices) verts.push_back(vec_to_json(v));
    json pts = json::array();
    for (const Vec& v : a.region.feasible_points) pts.push_back(vec_to_json(v));
    j["region"] = {{"A", mat_to_json(a.region.polytope.A)},
                   {"b", vec_to_json(a.region.polytope.b)},
                   {"vertices", verts},
                   {"eps", a.region.eps},
                   {"feasible_points", pts},
                   {"grid_points", a.region.grid_points},
                   {"hull_points_rejected", a.region.hull_points_rejected}};
    const TerminalIngredients& t = a.terminal;
    j["terminal"] = {{"K", mat_to_json(t.K)},
                     {"P", mat_to_json(t.P)},
                     {"rho", num_to_json(t.rho)},
                     {"zeta", t.zeta},
                     {"alpha_f_bar", num_to_json(t.alpha_f_bar)},
                     {"rho_omega", num_to_json(t.rho_omega)},
                     {"mu_F", num_to_json(t.mu_F)}};
    j["P_given"] = mat_to_json(a.P_given);
    j["P_scale"] = a.P_scale;
    j["vertices"] = vertex_report_to_json(a.vertices);
    j["vertices_given"] = vertex_report_to_json(a.vertices_given);
    if (a.sizing) {
        j["sizing"] = {{"rho", num_to_json(a.sizing->rho)},
                       {"rho_max", num_to_json(a.sizing->rho_max)},
                       {"rho_omega", num_to_json(a.sizing->rho_omega)},
                       {"mu_F", num_to_json(a.sizing->mu_F)},
                       {"trials", a.sizing->trials},
                       {"last_failure", a.sizing->last_failure}};
    }
    j["L_g"] = num_to_json(a.L_g);
    j["assumption9"] = {{"b1", num_to_json(a.assumption9.b1)},
                        {"b2", num_to_json(a.assumption9.b2)},
                        {"pass", a.assumption9.pass}};
    j["notes"] = a.notes;
    return j;
}

/// Rebuilds the artifacts from a stored file. Tubes and tightened boxes are
/// recomputed from the stored constants, which is exact.
inline PipelineArtifacts artifacts_from_json(const PipelineConfig& cfg, const json& j)
{
    try {
        if (j.at("format").get<std::string>() != artifact_format) throw ConfigError("artifacts: unknown format");
        PipelineArtifacts a;
        a.model = fourtank_dynamics(cfg.plant);
        const json& l = j.at("L");
        a.L.Lx = mat_from_json(l.at("Lx"), "L.Lx");
        a.L.Lv = mat_from_json(l.at("Lv"), "L.Lv");
        a.L.Lw = mat_from_json(l.at("Lw"), "L.Lw");
        a.L.certificate.samples = l.at("samples").get<std::size_t>();
        a.L.certificate.max_residual = vec_from_json(l.at("max_residual"), "L.max_residual");
        a.L.certificate.seed = l.at("seed").get<std::uint64_t>();
        a.L.certificate.certified = l.at("certified").get<bool>();
        a.tubes = build_tubes_from(a.L.Lx, vec_from_json(j.at("F0"), "F0"), cfg.horizon,
                                   a.model.state_box.half_width());

        const json& t = j.at("terminal");
        a.terminal.K = mat_from_json(t.at("K"), "terminal.K");
        a.terminal.P = mat_from_json(t.at("P"), "terminal.P");
        a.terminal.rho = num_from_json(t.at("rho"), "terminal.rho");
        a.terminal.zeta = t.at("zeta").get<double>();
        a.terminal.alpha_f_bar = num_from_json(t.at("alpha_f_bar"), "terminal.alpha_f_bar");
        a.terminal.rho_omega = num_from_json(t.at("rho_omega"), "terminal.rho_omega");
        a.terminal.mu_F = num_from_json(t.at("mu_F"), "terminal.mu_F");
        a.constraints = tighten(a.model.state_box, a.model.input_box, a.terminal.K, a.tubes);

        const json& r = j.at("region");
        a.region.polytope.A = mat_from_json(r.at("A"), "region.A");
        a.region.polytope.b = vec_from_json(r.at("b"), "region.b");
        for (const auto& v : r.at("vertices")) a.region.polytope.vertices.push_back(vec_from_json(v, "region.vertices"));
        a.region.eps = r.at("eps").get<double>();
        for (const auto& v : r.at("feasible_points"))
            a.region.feasible_points.push_back(vec_from_json(v, "region.feasible_points"));
        a.region.grid_points = r.at("grid_points").get<std::size_t>();
        a.region.hull_points_rejected = r.at("hull_points_rejected").get<std::size_t>();

        a.P_given = mat_from_json(j.at("P_given"), "P_given");
        a.P_scale = j.at("P_scale").get<double>();
        a.vertices = vertex_report_from_json(j.at("vertices"));
        a.vertices_given = vertex_report_from_json(j.at("vertices_given"));
        if (j.contains("sizing")) {
            const json& s = j["sizing"];
            TerminalSizing z;
            z.rho = num_from_json(s.at("rho"), "sizing.rho");
            z.rho_max = num_from_json(s.at("rho_max"), "sizing.rho_max");
            z.rho_omega = num_from_json(s.at("rho_omega"), "sizing.rho_omega");
            z.mu_F = num_from_json(s.at("mu_F"), "sizing.mu_F");
            z.trials = s.at("trials").get<int>();
            z.last_failure = s.at("last_failure").get<std::string>();
            a.sizing = z;
        }
        a.L_g = num_from_json(j.at("L_g"), "L_g");
        a.assumption9.b1 = num_from_json(j.at("assumption9").at("b1"), "assumption9.b1");
        a.assumption9.b2 = num_from_json(j.at("assumption9").at("b2"), "assumption9.b2");
        a.assumption9.pass = j.at("assumption9").at("pass").get<bool>();
        a.notes = j.at("notes").get<std::vector<std::string>>();
        return a;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("artifacts: ") + e.what());
    }
}

/// Pipeline artifacts, reused from `dir`/pipeline.json when the stored key
/// matches the configuration.
inline PipelineArtifacts load_or_build(const RunConfig& rc, const std::string& dir, bool* cache_hit = nullptr)
{
    namespace fs = std::filesystem;
    const std::string key = pipeline_key(rc);
    const fs::path file = fs::path(dir) / "pipeline.json";
    if (cache_hit) *cache_hit = false;
    if (fs::exists(file)) {
        std::ifstream f(file, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        try {
            const json j = json::parse(ss.str());
            if (j.value("key", "") == key) {
                auto a = artifacts_from_json(rc.pipeline, j);
                if (cache_hit) *cache_hit = true;
                return a;
            }
        } catch (const std::exception&) {
            // unreadable cache: rebuild
        }
    }
    auto a = build_pipeline(rc.pipeline);
    fs::create_directories(dir);
    save_json(file.string(), artifacts_to_json(a, key));
    return a;
}

} // namespace tmpc::io
