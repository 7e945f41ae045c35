// tmpc: command-line front end for the four-tank tube MPC pipeline.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <tmpc/io/config.hpp>
#include <tmpc/io/csv.hpp>
#include <tmpc/io/plots.hpp>
#include <tmpc/io/svg.hpp>
#include <tmpc/pipeline.hpp>

namespace fs = std::filesystem;
using namespace tmpc;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_failure = 3;

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool verify_only = false;
    bool inject = false;

    std::vector<double> x0, yt, w;
    bool trajectory = false;
    std::string trace;
    std::size_t verify_samples = 100000;
    std::size_t decrease_samples = 10000;
};

struct Context {
    io::RunConfig rc;
    std::string out;
    bool inject = false;
};

Context make_context(const Options& o)
{
    Context ctx;
    if (!o.config.empty()) ctx.rc = io::load_config(o.config);
    if (o.seed) {
        ctx.rc.pipeline.seed = *o.seed;
        ctx.rc.pipeline.lipschitz.seed = *o.seed;
    }
    if (o.inject) ctx.rc.pipeline.inject_reference_values();
    ctx.inject = o.inject;
    ctx.out = o.out.empty() ? ctx.rc.output_dir : o.out;
    io::validate_config(ctx.rc.pipeline);
    fs::create_directories(ctx.out);
    return ctx;
}

std::string path_in(const Context& ctx, const std::string& name) { return (fs::path(ctx.out) / name).string(); }

std::string fmt(double v, int decimals = 6) { return io::format_number(v, decimals); }

std::string fmt(const Vec& v, int decimals = 6)
{
    std::string s = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], decimals);
    return s + ")";
}

Vec vec_arg(const std::vector<double>& v, Eigen::Index n, const char* name)
{
    if (static_cast<Eigen::Index>(v.size()) != n)
        throw ConfigError(std::string(name) + ": expected " + std::to_string(n) + " comma-separated values");
    return Eigen::Map<const Vec>(v.data(), n);
}

PipelineArtifacts artifacts(const Context& ctx)
{
    bool hit = false;
    const auto t0 = std::chrono::steady_clock::now();
    auto a = io::load_or_build(ctx.rc, ctx.out, &hit);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "pipeline: " << (hit ? "reused cached artifacts" : "computed") << " (" << fmt(dt, 2) << " s)\n";
    for (const auto& n : a.notes) std::cerr << "note: " << n << '\n';
    return a;
}

void print_matrix(std::ostream& os, const std::string& name, const Mat& M, int decimals = 4)
{
    os << name << ":\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        os << "  ";
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? "  " : "") << fmt(M(i, j), decimals);
        os << '\n';
    }
}

// ---- subcommands ----

int cmd_lipschitz(const Options& o)
{
    Context ctx = make_context(o);
    PipelineConfig& cfg = ctx.rc.pipeline;
    if (ctx.inject) cfg.L = four_tank_reference_L();
    const PlantModel model = fourtank_dynamics(cfg.plant);
    const EquilibriumMaps maps(model);
    const auto [K, P] = resolve_gain(cfg, maps);
    (void)P;
    const AffinePolicy pol{K};

    if (o.verify_only) {
        if (!cfg.L) throw ConfigError("--verify-only needs Lx, Lv and Lw in the config or --inject-paper-values");
        const auto rep = verify_constants(model, pol, LipschitzRegion::of(model), *cfg.L, o.verify_samples,
                                          cfg.lipschitz.seed ^ 0x9e3779b97f4a7c15ULL);
        io::CsvTable t;
        t.header = {"row", "max_residual", "worst_pair"};
        std::cout << "verification on " << rep.samples << " fresh pairs\n";
        for (int i = 0; i < model.n; ++i) {
            t.rows.push_back({std::to_string(i + 1), io::format_number(rep.max_residual[i]),
                              std::to_string(rep.worst[static_cast<size_t>(i)].pair_index)});
            std::cout << "  e_" << i + 1 << " = " << io::format_number(rep.max_residual[i]) << '\n';
        }
        io::save(path_in(ctx, "lipschitz_verification.csv"), t);
        std::cout << (rep.pass ? "certified" : "NOT certified") << " (tolerance 1e-9)\n";
        return rep.pass ? exit_ok : exit_failure;
    }

    const auto L = resolve_lipschitz(cfg, model, K);
    io::save(path_in(ctx, "lipschitz_Lx.csv"), io::matrix_table(L.Lx, "Lx"));
    io::save(path_in(ctx, "lipschitz_Lv.csv"), io::matrix_table(L.Lv, "Lv"));
    io::save(path_in(ctx, "lipschitz_Lw.csv"), io::matrix_table(L.Lw, "Lw"));
    print_matrix(std::cout, "Lx", L.Lx);
    print_matrix(std::cout, "Lv", L.Lv);
    print_matrix(std::cout, "Lw", L.Lw);
    bool certified = L.certificate.certified;
    if (cfg.L) {
        const auto rep = verify_constants(model, pol, LipschitzRegion::of(model), L, o.verify_samples,
                                          cfg.lipschitz.seed ^ 0x9e3779b97f4a7c15ULL);
        certified = rep.pass;
        std::cout << "injected constants, max residual " << io::format_number(rep.max_residual.maxCoeff()) << '\n';
    } else {
        std::cout << "estimated on " << L.certificate.samples << " pairs, max residual "
                  << io::format_number(L.certificate.max_residual.maxCoeff()) << '\n';
    }
    std::cout << (certified ? "certified" : "NOT certified") << '\n';
    return certified ? exit_ok : exit_failure;
}

int cmd_tubes(const Options& o)
{
    Context ctx = make_context(o);
    PipelineConfig& cfg = ctx.rc.pipeline;
    if (ctx.inject) {
        cfg.L = four_tank_reference_L();
        cfg.F0 = four_tank_reference_F0();
    }
    const PlantModel model = fourtank_dynamics(cfg.plant);
    const EquilibriumMaps maps(model);
    const auto [K, P] = resolve_gain(cfg, maps);
    (void)P;
    const auto L = resolve_lipschitz(cfg, model, K);
    const auto tubes = resolve_tubes(cfg, model, L);
    const auto table = io::tubes_table(tubes);
    io::save(path_in(ctx, "tubes.csv"), table);
    io::write_csv(std::cout, table);
    for (const auto& w : tubes.warnings) std::cerr << "warning: " << w << '\n';
    tighten(model.state_box, model.input_box, K, tubes); // throws naming the empty stage
    return exit_ok;
}

int cmd_terminal(const Options& o)
{
    Context ctx = make_context(o);
    const PipelineConfig& cfg = ctx.rc.pipeline;
    const auto a = artifacts(ctx);
    const EquilibriumMaps maps(a.model);
    const auto pts = region_check_points(a.region, cfg.sizing.setpoint_grid);

    const auto dec = verify_lyapunov_decrease(maps, a.terminal, cfg.Q, cfg.R, pts, o.decrease_samples, a.terminal.rho,
                                              cfg.seed, 1e-6);
    TerminalIngredients given = a.terminal;
    given.set_P(a.P_given);
    const double rho_given = a.terminal.rho / a.P_scale;
    const auto dec_given =
        verify_lyapunov_decrease(maps, given, cfg.Q, cfg.R, pts, o.decrease_samples, rho_given, cfg.seed, 1e-6);

    print_matrix(std::cout, "K", a.terminal.K);
    print_matrix(std::cout, "P (given)", a.P_given);
    std::cout << "P scale: " << fmt(a.P_scale) << "\n";
    std::cout << "rho: " << fmt(a.terminal.rho) << " (scaled P), " << fmt(rho_given) << " in units of the given P; "
              << "reported benchmark value " << fmt(four_tank_reference_rho, 4) << "; band [0.06, 0.25] "
              << (rho_given >= 0.06 && rho_given <= 0.25 ? "holds" : "missed") << "\n";
    std::cout << "vertex check (given P): max Lyapunov eigenvalue " << fmt(a.vertices_given.max_lyapunov_eig)
              << ", contraction " << fmt(a.vertices_given.max_contraction) << "\n";
    std::cout << "vertex check (scaled P): max Lyapunov eigenvalue " << fmt(a.vertices.max_lyapunov_eig)
              << ", contraction " << fmt(a.vertices.max_contraction) << "\n";
    std::cout << "sampled decrease (scaled P): max " << io::format_number(dec.max_decrement) << " over "
              << dec.samples << " samples -> " << (dec.pass ? "pass" : "FAIL") << "\n";
    std::cout << "sampled decrease (given P): max " << io::format_number(dec_given.max_decrement) << " over "
              << dec_given.samples << " samples -> " << (dec_given.pass ? "pass" : "FAIL") << "\n";
    std::cout << "L_g " << fmt(a.L_g) << ", b1 = b2 = " << io::format_number(a.assumption9.b1) << "\n";

    io::save(path_in(ctx, "terminal_K.csv"), io::matrix_table(a.terminal.K, "K", -1));
    io::save(path_in(ctx, "terminal_P.csv"), io::matrix_table(a.terminal.P, "P", -1));
    io::json j = {{"rho", a.terminal.rho},
                  {"rho_given_units", rho_given},
                  {"P_scale", a.P_scale},
                  {"decrease_max", io::num_to_json(dec.max_decrement)},
                  {"decrease_pass", dec.pass},
                  {"decrease_given_max", io::num_to_json(dec_given.max_decrement)},
                  {"decrease_given_pass", dec_given.pass},
                  {"L_g", a.L_g},
                  {"b1", a.assumption9.b1}};
    io::save_json(path_in(ctx, "terminal.json"), j);
    return dec.pass && a.assumption9.pass ? exit_ok : exit_failure;
}

int cmd_yt(const Options& o)
{
    Context ctx = make_context(o);
    const auto a = artifacts(ctx);
    io::CsvTable t;
    t.header = {"vertex", "y1", "y2"};
    for (std::size_t i = 0; i < a.region.polytope.vertices.size(); ++i) {
        const Vec& v = a.region.polytope.vertices[i];
        t.rows.push_back({std::to_string(i + 1), io::format_number(v[0]), io::format_number(v[1])});
    }
    io::save(path_in(ctx, "yt_vertices.csv"), t);
    std::cout << "Y_t: " << a.region.polytope.vertices.size() << " vertices, " << a.region.feasible_points.size()
              << " admissible grid points of " << a.region.grid_points << "\n";
    for (const auto& e : ctx.rc.pipeline.schedule) {
        const Vec b = best_setpoint(e.y_t, a.region, ctx.rc.pipeline.T);
        std::cout << "  y_t " << fmt(e.y_t, 4) << (a.region.contains(e.y_t) ? " inside" : " outside")
                  << ", best admissible " << fmt(b, 4) << "\n";
    }
    return exit_ok;
}

int cmd_solve(const Options& o)
{
    Context ctx = make_context(o);
    const PipelineConfig& cfg = ctx.rc.pipeline;
    const auto a = artifacts(ctx);
    const auto pb = make_problem(cfg, a);
    const Vec x0 = o.x0.empty() ? cfg.x0 : vec_arg(o.x0, pb.n(), "--x0");
    const Vec yt = o.yt.empty() ? cfg.schedule.front().y_t : vec_arg(o.yt, pb.p(), "--yt");
    const Solution s = solve(pb, x0, yt);
    std::cout << "status: " << to_string(s.status) << "\n"
              << "cost: " << io::format_number(s.cost) << "\n"
              << "iterations: " << s.iterations << "\n"
              << "kkt_residual: " << io::format_number(s.kkt_residual) << "\n"
              << "max_violation: " << io::format_number(s.max_violation) << "\n"
              << "y_s: " << fmt(s.y_s, 8) << "\n"
              << "x_s: " << fmt(s.x_s, 8) << "\n"
              << "v_s: " << fmt(s.v_s, 8) << "\n";
    for (int j = 0; j < pb.N; ++j) std::cout << "v_" << j << ": " << fmt(Vec(s.v_seq.col(j)), 8) << "\n";
    if (o.trajectory) {
        io::CsvTable t;
        t.header = {"j", "x1", "x2", "x3", "x4", "v1", "v2"};
        for (Eigen::Index j = 0; j < s.predicted_states.rows(); ++j) {
            std::vector<std::string> r{std::to_string(j)};
            for (Eigen::Index i = 0; i < s.predicted_states.cols(); ++i)
                r.push_back(io::format_number(s.predicted_states(j, i)));
            for (Eigen::Index i = 0; i < s.v_seq.rows(); ++i)
                r.push_back(j < s.v_seq.cols() ? io::format_number(s.v_seq(i, j)) : "nan");
            t.rows.push_back(std::move(r));
        }
        io::save(path_in(ctx, "prediction.csv"), t);
    }
    return exit_ok;
}

void print_metrics(std::ostream& os, const TraceMetrics& m)
{
    os << "violations: " << m.violations << "\n"
       << "max_violation: " << io::format_number(m.max_violation) << "\n"
       << "infeasible_steps: " << m.infeasible_steps << "\n"
       << "feasible_to_infeasible: " << m.feasible_to_infeasible << "\n"
       << "fallback_steps: " << m.fallback_steps << "\n"
       << "W_increases: " << m.W_increases << "\n";
    for (std::size_t s = 0; s < m.segments.size(); ++s) {
        const auto& g = m.segments[s];
        os << "segment " << s + 1 << ": y_t " << fmt(g.y_t, 4) << ", best " << fmt(g.best, 4) << ", final |y - best| "
           << io::format_number(g.final_error, 8) << ", |y - y_t| " << io::format_number(g.final_target_error, 8) << "\n";
    }
}

int cmd_simulate(const Options& o)
{
    Context ctx = make_context(o);
    const PipelineConfig& cfg = ctx.rc.pipeline;
    const auto a = artifacts(ctx);
    const auto pb = make_problem(cfg, a);
    Scenario sc = make_scenario(cfg);
    sc.w_const = o.w.empty() ? Vec::Zero(pb.model().r) : vec_arg(o.w, pb.model().r, "--w");
    try {
        sc.validate(pb.model());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    const Trace tr = run_closed_loop(pb, sc);
    const auto m = compute_metrics(tr, pb, sc);
    io::save(path_in(ctx, "trace.csv"), io::trace_table(tr, pb.n(), pb.m(), pb.p()));
    io::save_svg(path_in(ctx, "states.svg"), io::states_figure(tr, pb.model()));
    io::save_svg(path_in(ctx, "inputs.svg"), io::inputs_figure(tr, pb.model()));
    std::cout << "steps: " << tr.steps.size() << "\nw: " << fmt(*sc.w_const) << "\n";
    print_metrics(std::cout, m);
    return m.violations == 0 && m.infeasible_steps == 0 ? exit_ok : exit_failure;
}

std::string batch_report_text(const BatchReport& rep)
{
    std::ostringstream os;
    int W_inc = 0, fallbacks = 0;
    for (const auto& m : rep.metrics) {
        W_inc += m.W_increases;
        fallbacks += m.fallback_steps;
    }
    os << "scenarios: " << rep.traces.size() << "\n"
       << "total_steps: " << rep.total_steps << "\n"
       << "violations: " << rep.violations << "\n"
       << "infeasible_steps: " << rep.infeasible_steps << "\n"
       << "feasible_to_infeasible: " << rep.feasible_to_infeasible << "\n"
       << "feasibility_rate: " << io::format_number(rep.feasibility_rate) << "\n"
       << "W_increases: " << W_inc << "\n"
       << "fallback_steps: " << fallbacks << "\n";
    for (std::size_t s = 0; s < rep.max_final_error.size(); ++s)
        os << "segment " << s + 1 << " max final |y - best|: " << io::format_number(rep.max_final_error[s]) << "\n";
    os << "per scenario (w1, w2, violations, infeasible, W_increases, final errors):\n";
    for (std::size_t i = 0; i < rep.traces.size(); ++i) {
        const auto& m = rep.metrics[i];
        os << "  " << i << ": " << io::format_number(rep.w_values[i][0]) << ", " << io::format_number(rep.w_values[i][1])
           << ", " << m.violations << ", " << m.infeasible_steps << ", " << m.W_increases;
        for (const auto& g : m.segments) os << ", " << io::format_number(g.final_error);
        os << "\n";
    }
    return os.str();
}

int cmd_batch(const Options& o)
{
    Context ctx = make_context(o);
    const PipelineConfig& cfg = ctx.rc.pipeline;
    const auto a = artifacts(ctx);
    const auto pb = make_problem(cfg, a);
    const Scenario base = make_scenario(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = run_batch(pb, base, cfg.w_grid, cfg.threads);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "batch: " << rep.traces.size() << " scenarios in " << fmt(dt, 1) << " s\n";

    const fs::path dir = fs::path(ctx.out) / "batch";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < rep.traces.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "trace_%03zu.csv", i);
        io::save((dir / name).string(), io::trace_table(rep.traces[i], pb.n(), pb.m(), pb.p()));
    }
    io::save(path_in(ctx, "envelope.csv"), io::envelope_table(rep, base.sample_min));
    io::save_svg(path_in(ctx, "envelope.svg"), io::envelope_figure(rep, base, pb.model()));
    const std::string text = batch_report_text(rep);
    {
        std::ofstream f(path_in(ctx, "batch_report.txt"), std::ios::binary);
        f << text;
    }
    std::cout << text.substr(0, text.find("per scenario"));
    return rep.violations == 0 && rep.infeasible_steps == 0 ? exit_ok : exit_failure;
}

int cmd_plot(const Options& o)
{
    Context ctx = make_context(o);
    const std::string src = o.trace.empty() ? path_in(ctx, "trace.csv") : o.trace;
    const Trace tr = io::trace_from_table(io::load(src));
    const PlantModel model = fourtank_dynamics(ctx.rc.pipeline.plant);
    if (!tr.steps.empty() && (tr.steps.front().x.size() != model.n || tr.steps.front().u.size() != model.m))
        throw ConfigError("plot: trace dimensions do not match the plant");
    io::save_svg(path_in(ctx, "states.svg"), io::states_figure(tr, model));
    io::save_svg(path_in(ctx, "inputs.svg"), io::inputs_figure(tr, model));
    std::cout << "plotted " << tr.steps.size() << " steps from " << src << "\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tube-based tracking MPC for the four-tank process"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "output directory (default: output_dir of the config)");
    app.add_option("--seed", o.seed, "seed for every sampling stage");
    app.add_flag("--verify-only", o.verify_only, "check given constants instead of estimating them");
    app.add_flag("--inject-paper-values", o.inject, "use the reported benchmark K, P (and L, F(0) for lipschitz/tubes)");

    auto* lip = app.add_subcommand("lipschitz", "estimate or verify the component-wise Lipschitz constants");
    lip->add_option("--samples", o.verify_samples, "fresh verification pairs");
    app.add_subcommand("tubes", "uncertainty propagation sequences F(j), R(j)");
    auto* term = app.add_subcommand("terminal", "terminal ingredients and their checks");
    term->add_option("--samples", o.decrease_samples, "samples for the decrease check");
    app.add_subcommand("yt", "admissible setpoint region");
    auto* sol = app.add_subcommand("solve", "one tracking problem");
    sol->add_option("--x0", o.x0, "initial state, comma separated")->delimiter(',');
    sol->add_option("--yt", o.yt, "target output, comma separated")->delimiter(',');
    sol->add_flag("--trajectory", o.trajectory, "write the predicted trajectory to prediction.csv");
    auto* sim = app.add_subcommand("simulate", "one closed-loop run");
    sim->add_option("--w", o.w, "constant disturbance, comma separated (default 0)")->delimiter(',');
    app.add_subcommand("batch", "closed loop over the disturbance grid");
    auto* plt = app.add_subcommand("plot", "SVG figures from a trace CSV");
    plt->add_option("--trace", o.trace, "trace file (default <out>/trace.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "lipschitz") return cmd_lipschitz(o);
        if (name == "tubes") return cmd_tubes(o);
        if (name == "terminal") return cmd_terminal(o);
        if (name == "yt") return cmd_yt(o);
        if (name == "solve") return cmd_solve(o);
        if (name == "simulate") return cmd_simulate(o);
        if (name == "batch") return cmd_batch(o);
        if (name == "plot") return cmd_plot(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_config;
}
