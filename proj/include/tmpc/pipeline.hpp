#pragma once

#include <optional>
#include <string>
#include <vector>

#include "four_tank.hpp"
#include "lipschitz.hpp"
#include "ocp.hpp"
#include "setpoints.hpp"
#include "sim.hpp"
#include "terminal.hpp"
#include "tubes.hpp"

namespace tmpc {

/// Gain and terminal weight reported for the four-tank benchmark.
inline Mat four_tank_reference_K()
{
    return Mat{{-0.2117, -1.0663, 1.0632, -2.2400}, {-2.9453, 0.3358, -2.9568, 1.5166}};
}

inline Mat four_tank_reference_P()
{
    return Mat{{23.7301, -4.6424, 10.2060, -8.5938},
               {-4.6425, 8.8324, -4.7139, 3.8709},
               {10.2060, -4.7139, 12.6887, -7.8934},
               {-8.5938, 3.8709, -7.8934, 9.4075}};
}

inline constexpr double four_tank_reference_rho = 0.1273;

/// Lipschitz constants reported for the benchmark, four decimals.
inline LipschitzMatrices four_tank_reference_L()
{
    LipschitzMatrices L;
    L.Lx = Mat{{0.9388, 0.0250, 0.1375, 0.0500},
               {0.0850, 0.9388, 0.0795, 0.1600},
               {0.1225, 0.0145, 0.8375, 0.0750},
               {0.0125, 0.0600, 0.0600, 0.8500}};
    L.Lv = Mat{{0.0225, 0.0250}, {0.0500, 0.0350}, {0.0100, 0.1700}, {0.1500, 0.0100}};
    L.Lw = Mat{{0.2400, 0.0125}, {0.0088, 0.2638}, {0.00006, 0.2675}, {0.2450, 0.0125}};
    return L;
}

/// First tube cross-section reported for the benchmark.
inline Vec four_tank_reference_F0() { return Vec{{0.0019, 0.0020, 0.0020, 0.0019}}; }

/// Everything needed to build the four-tank controller and its scenarios.
struct PipelineConfig {
    FourTankParams plant;
    int horizon = 4;
    Mat Q = Vec{{5.0, 2.5, 1.0, 1.0}}.asDiagonal();
    Mat R = 0.01 * Mat::Identity(2, 2);
    Mat T = 1e4 * Mat::Identity(2, 2);

    std::optional<Mat> K;                // synthesized when absent
    std::optional<Mat> P;
    double zeta = 0.95;
    bool rescale_P = true;               // scale P until the vertex decrease holds
    double rescale_safety = 1.1;

    LipschitzOptions lipschitz;
    std::optional<LipschitzMatrices> L;  // injected constants skip the estimation
    std::optional<Vec> F0;               // injected first tube cross-section

    Hyperbox yt_candidate{Vec::Constant(2, 0.35), Vec::Constant(2, 0.80)};
    SetpointGridOptions yt_grid;
    std::optional<std::vector<Vec>> yt_vertices;
    double yt_level = 0.08;              // terminal ellipsoid each reference must carry, units of the given P

    std::optional<double> rho;           // injected level, in the units of the given P
    TerminalSizingOptions sizing;

    SolverOptions solver;

    Vec x0 = Vec{{0.2837, 0.2943, 0.2168, 0.2864}};
    std::vector<ScheduleEntry> schedule{{0.0, Vec{{0.65, 0.65}}},
                                        {25.0, Vec{{0.35, 0.35}}},
                                        {50.0, Vec{{0.60, 0.75}}},
                                        {75.0, Vec{{0.90, 0.75}}}};
    double duration_min = 100.0;
    std::vector<double> w_grid{-0.005, -0.0039, -0.0028, -0.0017, -0.00055, 0.00055, 0.0017, 0.0028, 0.0039, 0.005};
    int threads = 0; // 0: hardware concurrency
    std::uint64_t seed = 1;

    /// Reported gain and terminal weight in place of the synthesized ones. The
    /// reported level and tube constants are not injected: they belong to a
    /// different setpoint region and leave the terminal set without room here.
    void inject_reference_values()
    {
        K = four_tank_reference_K();
        P = four_tank_reference_P();
    }
};

struct PipelineArtifacts {
    PlantModel model;
    LipschitzMatrices L;
    TubeSystem tubes;
    TightenedConstraints constraints;
    SetpointRegion region;
    TerminalIngredients terminal;
    Mat P_given;                   // P before rescaling
    double P_scale = 1.0;          // terminal.P = P_scale * P_given
    VertexReport vertices;         // with the rescaled P
    VertexReport vertices_given;   // with P_given
    std::optional<TerminalSizing> sizing;
    double L_g = 0.0;
    Assumption9Report assumption9;
    std::vector<std::string> notes;
};

inline std::vector<Vec> region_check_points(const SetpointRegion& region, int density = 3)
{
    auto pts = region_grid(region, density);
    for (const Vec& v : region.polytope.vertices) pts.push_back(v);
    return pts;
}

/// K and P from the configuration, synthesized at the candidate box corners
/// and centre when absent.
inline std::pair<Mat, Mat> resolve_gain(const PipelineConfig& cfg, const EquilibriumMaps& maps,
                                        std::vector<std::string>* notes = nullptr)
{
    const PlantModel& model = maps.model();
    Mat K = cfg.K ? *cfg.K : Mat();
    Mat P = cfg.P ? *cfg.P : Mat();
    if (!cfg.K || !cfg.P) {
        const auto c = cfg.yt_candidate;
        std::vector<Vec> corners = Polytope::from_box(c).vertices;
        corners.push_back(c.center());
        auto ti = synthesize_gain(maps, corners, cfg.Q, cfg.R, cfg.zeta);
        if (!cfg.K) K = ti.K;
        if (!cfg.P) P = ti.P;
        if (notes) notes->push_back("terminal gain synthesized from the Riccati equation");
    }
    if (K.rows() != model.m || K.cols() != model.n || P.rows() != model.n || P.cols() != model.n)
        throw DimensionError("pipeline: K or P has the wrong dimensions");
    return {K, P};
}

inline LipschitzMatrices resolve_lipschitz(const PipelineConfig& cfg, const PlantModel& model, const Mat& K)
{
    if (cfg.L) return *cfg.L;
    return estimate_constants(model, AffinePolicy{K}, LipschitzRegion::of(model), cfg.lipschitz);
}

inline TubeSystem resolve_tubes(const PipelineConfig& cfg, const PlantModel& model, const LipschitzMatrices& L)
{
    return cfg.F0 ? build_tubes_from(L.Lx, *cfg.F0, cfg.horizon, model.state_box.half_width())
                  : build_tubes(L, model.dist_box.upper(), cfg.horizon, model.state_box.half_width());
}

inline PipelineArtifacts build_pipeline(const PipelineConfig& cfg)
{
    PipelineArtifacts a;
    a.model = fourtank_dynamics(cfg.plant);
    const EquilibriumMaps maps(a.model);

    auto [K, P] = resolve_gain(cfg, maps, &a.notes);
    a.L = resolve_lipschitz(cfg, a.model, K);
    a.tubes = resolve_tubes(cfg, a.model, a.L);
    a.constraints = tighten(a.model.state_box, a.model.input_box, K, a.tubes);

    a.P_given = symmetrize(P);
    std::optional<TerminalFit> fit;
    if (cfg.yt_level > 0) fit = TerminalFit{a.P_given, K, cfg.yt_level};
    a.region = cfg.yt_vertices ? region_from_vertices(*cfg.yt_vertices, cfg.yt_grid.eps)
                               : build_Yt(maps, a.constraints, cfg.horizon, cfg.yt_candidate, cfg.yt_grid, fit);

    const auto verts = vertex_linearizations(maps, region_check_points(a.region));
    a.vertices_given = check_vertices(K, a.P_given, cfg.Q, cfg.R, verts, cfg.zeta);
    if (cfg.rescale_P && !a.vertices_given.lyapunov_ok) {
        const double c = lyapunov_scaling(K, a.P_given, cfg.Q, cfg.R, verts, cfg.rescale_safety);
        if (!std::isfinite(c)) throw SynthesisFailedError("pipeline: P does not contract at every vertex");
        a.P_scale = std::max(1.0, c);
    }
    a.terminal.K = K;
    a.terminal.set_P(a.P_scale * a.P_given);
    a.terminal.zeta = cfg.zeta;
    a.vertices = check_vertices(K, a.terminal.P, cfg.Q, cfg.R, verts, cfg.zeta);

    if (cfg.rho) {
        a.terminal.rho = a.P_scale * *cfg.rho;
    } else {
        a.sizing = size_terminal_level(maps, a.terminal, a.constraints, a.tubes, a.region, cfg.sizing);
        a.terminal.rho = a.sizing->rho;
        a.terminal.rho_omega = a.sizing->rho_omega;
        a.terminal.mu_F = a.sizing->mu_F;
    }

    a.L_g = estimate_Lg(maps, a.region, 2000, cfg.seed);
    a.assumption9 = check_assumption9(cfg.T, a.terminal.alpha_f_bar, a.L_g);
    for (const auto& w : a.tubes.warnings) a.notes.push_back(w);
    return a;
}

inline TrackingProblem make_problem(const PipelineConfig& cfg, const PipelineArtifacts& a)
{
    TrackingProblem pb{EquilibriumMaps(a.model), a.tubes, a.constraints, a.terminal, a.region, cfg.horizon,
                       cfg.Q, cfg.R, cfg.T, cfg.solver};
    pb.validate();
    return pb;
}

/// Base scenario of the configuration, without disturbance.
inline Scenario make_scenario(const PipelineConfig& cfg)
{
    Scenario sc;
    sc.x0 = cfg.x0;
    sc.schedule = cfg.schedule;
    sc.duration_min = cfg.duration_min;
    sc.sample_min = cfg.plant.Ts / 60.0;
    return sc;
}

} // namespace tmpc
