#include <gtest/gtest.h>

#include <random>

#include <tmpc/four_tank.hpp>
#include <tmpc/setpoints.hpp>

using namespace tmpc;

namespace {

PlantModel scalar_plant()
{
    const Mat A{{0.5}}, B{{1.0}}, E = Mat::Zero(1, 1), C{{1.0}}, D{{0.0}};
    return linear_model(A, B, E, C, D, Hyperbox(Vec{{-10.0}}, Vec{{10.0}}), Hyperbox(Vec{{-10.0}}, Vec{{10.0}}),
                        Hyperbox::origin(1));
}

// x+ = 0.5 x + u (two decoupled channels), y = x.
PlantModel planar_plant(double box = 1.0)
{
    const Mat A = 0.5 * Mat::Identity(2, 2), B = Mat::Identity(2, 2), E = Mat::Identity(2, 2);
    return linear_model(A, B, E, Mat::Identity(2, 2), Mat::Zero(2, 2),
                        Hyperbox(Vec::Constant(2, -box), Vec::Constant(2, box)),
                        Hyperbox(Vec::Constant(2, -box), Vec::Constant(2, box)), Hyperbox::origin(2));
}

} // namespace

TEST(Equilibrium, ScalarLinear)
{
    const auto [x, u] = solve_equilibrium(scalar_plant(), Vec{{1.0}});
    EXPECT_NEAR(x[0], 1.0, 1e-12);
    EXPECT_NEAR(u[0], 0.5, 1e-12);
}

TEST(Equilibrium, FourTankResiduals)
{
    const FourTankParams p;
    const auto model = fourtank_dynamics(p);
    const Vec y{{0.65, 0.65}};
    const auto [x, u] = solve_equilibrium(model, y);
    EXPECT_LE((model.step(x, u, Vec::Zero(2)) - x).norm(), 1e-10);
    EXPECT_LE((model.output(x, u) - y).norm(), 1e-10);

    // Same model without the closed form goes through Newton.
    PlantModel generic = model;
    generic.steady_state = nullptr;
    const auto [xn, un] = solve_equilibrium(generic, y);
    EXPECT_LE((xn - x).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((un - u).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Equilibrium, AboveLevelLimitHasNoEquilibrium)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    EXPECT_THROW(solve_equilibrium(model, Vec{{1.5, 0.65}}), NoEquilibriumError);
}

TEST(Equilibrium, OutsideInputBoxIsInfeasible)
{
    // Steady input 0.5 * y exceeds the box for y close to the state limit.
    const Mat A{{0.5}}, B{{1.0}}, E = Mat::Zero(1, 1), C{{1.0}}, D{{0.0}};
    const auto model = linear_model(A, B, E, C, D, Hyperbox(Vec{{-10.0}}, Vec{{10.0}}),
                                    Hyperbox(Vec{{-1.0}}, Vec{{1.0}}), Hyperbox::origin(1));
    EXPECT_THROW(solve_equilibrium(model, Vec{{3.0}}), InfeasibleEquilibriumError);
}

TEST(Equilibrium, MapsAgreeWithSolver)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    const EquilibriumMaps maps(model);
    const Vec y{{0.5, 0.7}};
    const auto [x, u] = solve_equilibrium(model, y);
    EXPECT_EQ(maps.state(y), x);
    EXPECT_EQ(maps.policy_input(y), u);
    Mat Gx, Gv;
    maps.jacobians(y, Gx, Gv);
    EXPECT_NEAR(Gx(0, 0), 1.0, 1e-8);
    EXPECT_NEAR(Gx(1, 0), 0.0, 1e-8);
}

TEST(Assumption3, ScalarDeterminant)
{
    const auto rep = check_assumption3(scalar_plant(), {Vec{{1.0}}, Vec{{-2.0}}});
    EXPECT_TRUE(rep.ok);
    EXPECT_NEAR(rep.min_abs_det, 1.0, 1e-8);
}

TEST(Assumption3, ConstantOutputIsSingular)
{
    PlantModel model = scalar_plant();
    model.output = [](const Vec&, const Vec&) { return Vec::Zero(1).eval(); };
    model.steady_state = [](const Vec&) { return std::pair<Vec, Vec>{Vec{{1.0}}, Vec{{0.5}}}; };
    const auto rep = check_assumption3(model, {Vec{{0.0}}});
    EXPECT_FALSE(rep.ok);
    ASSERT_EQ(rep.offending.size(), 1u);
    EXPECT_LT(rep.min_singular_value, 1e-8);
}

TEST(Assumption3, FourTankGrid)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    std::vector<Vec> grid;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) grid.push_back(Vec{{0.35 + 0.05 * i, 0.35 + 0.05 * j}});
    const auto rep = check_assumption3(model, grid);
    EXPECT_TRUE(rep.ok);
    EXPECT_GT(rep.min_singular_value, 1e-8);
}

TEST(Setpoints, ZeroDisturbanceGivesShrunkSteadyRange)
{
    const auto model = planar_plant();
    const EquilibriumMaps maps(model);
    TubeSystem tubes = build_tubes_from(Mat::Zero(2, 2), Vec::Zero(2), 3);
    const auto tc = tighten(model.state_box, model.input_box, Mat::Zero(2, 2), tubes);
    // Steady input is 0.5 y, so the state box binds: |y| <= 1 - eps.
    const double eps = 1e-3;
    const Hyperbox cand(Vec::Constant(2, -1.0 + 1.5 * eps), Vec::Constant(2, 1.0 - 1.5 * eps));
    SetpointGridOptions opt;
    opt.density = 5;
    opt.eps = eps;
    const auto reg = build_Yt(maps, tc, 3, cand, opt);
    EXPECT_EQ(reg.feasible_points.size(), 25u);
    for (const Vec& c : Polytope::from_box(cand).vertices) EXPECT_TRUE(reg.contains(c, 1e-12));
    EXPECT_FALSE(reg.contains(Vec{{1.0, 0.0}}, 1e-12));
}

TEST(Setpoints, DensityTwoUsesFourCheckedCorners)
{
    const auto model = planar_plant(2.0);
    const EquilibriumMaps maps(model);
    const auto tubes = build_tubes_from(Mat::Zero(2, 2), Vec::Constant(2, 0.1), 2);
    const auto tc = tighten(model.state_box, model.input_box, Mat::Zero(2, 2), tubes);
    const Hyperbox cand(Vec{{-1.0, -1.0}}, Vec{{1.0, 1.5}});
    SetpointGridOptions opt;
    opt.density = 2;
    const auto reg = build_Yt(maps, tc, 2, cand, opt);
    // Brute force: state bound 2 - 0.1, steady input 0.5 y within 2 - 0.1.
    std::size_t expected = 0;
    for (const Vec& c : Polytope::from_box(cand).vertices)
        if ((c.cwiseAbs().array() <= 1.9 - 1e-6).all()) ++expected;
    EXPECT_EQ(reg.feasible_points.size(), expected);
    EXPECT_EQ(reg.polytope.vertices.size(), 4u);
}

TEST(Setpoints, EmptyGridThrows)
{
    const auto model = planar_plant();
    const EquilibriumMaps maps(model);
    const auto tubes = build_tubes_from(Mat::Zero(2, 2), Vec::Zero(2), 1);
    const auto tc = tighten(model.state_box, model.input_box, Mat::Zero(2, 2), tubes);
    EXPECT_THROW(build_Yt(maps, tc, 1, Hyperbox(Vec::Constant(2, 3.0), Vec::Constant(2, 4.0))), EmptyRegionError);
}

TEST(Setpoints, InscribedBoxInsideHull)
{
    const auto model = planar_plant();
    const EquilibriumMaps maps(model);
    const auto tubes = build_tubes_from(Mat::Zero(2, 2), Vec::Zero(2), 1);
    const auto tc = tighten(model.state_box, model.input_box, Mat::Zero(2, 2), tubes);
    SetpointGridOptions opt;
    opt.density = 9;
    opt.inscribed_box = true;
    const auto reg = build_Yt(maps, tc, 1, Hyperbox(Vec::Constant(2, -0.8), Vec::Constant(2, 0.8)), opt);
    EXPECT_EQ(reg.polytope.vertices.size(), 4u);
    EXPECT_TRUE(reg.contains(Vec{{0.8, 0.8}}, 1e-12));
}

TEST(BestSetpoint, InteriorIsUnchanged)
{
    const auto reg = region_from_vertices(Polytope::from_box(Hyperbox(Vec::Zero(2), Vec::Ones(2))).vertices);
    const Vec yt{{0.4, 0.3}};
    EXPECT_EQ(best_setpoint(yt, reg, Mat::Identity(2, 2)), yt);
}

TEST(BestSetpoint, AxisProjection)
{
    const auto reg = region_from_vertices(Polytope::from_box(Hyperbox(Vec::Zero(2), Vec::Ones(2))).vertices);
    const Vec y = best_setpoint(Vec{{2.0, 0.5}}, reg, Mat::Identity(2, 2));
    EXPECT_NEAR(y[0], 1.0, 1e-12);
    EXPECT_NEAR(y[1], 0.5, 1e-12);
}

TEST(BestSetpoint, MatchesGridSearchAndRandomPoints)
{
    const std::vector<Vec> V{Vec{{0.35, 0.35}}, Vec{{0.8, 0.4}}, Vec{{0.85, 0.6}}, Vec{{0.6, 0.8}}, Vec{{0.35, 0.7}}};
    const auto reg = region_from_vertices(V);
    const Mat T{{2.0, 0.3}, {0.3, 1.0}};
    const Vec yt{{0.95, 0.85}};
    const Vec ys = best_setpoint(yt, reg, T);
    const auto VO = [&](const Vec& y) { return (y - yt).dot(T * (y - yt)); };
    EXPECT_LE(reg.polytope.violation(ys), 1e-10);
    Vec best_grid;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 400; ++i)
        for (int j = 0; j < 400; ++j) {
            const Vec y{{0.35 + 0.5 * i / 399.0, 0.35 + 0.45 * j / 399.0}};
            if (!reg.contains(y)) continue;
            if (VO(y) < best) {
                best = VO(y);
                best_grid = y;
            }
        }
    EXPECT_LE(VO(ys), best + 1e-12);
    EXPECT_LE(best - VO(ys), 1e-3);
    EXPECT_LE((best_grid - ys).norm(), 2.0 * 0.5 / 399.0);
    std::mt19937_64 rng(5);
    for (int k = 0; k < 1000; ++k) EXPECT_LE(VO(ys), VO(sample_in_region(reg, rng)) + 1e-12);
}

TEST(EquilibriumMaps, SampledLipschitzBound)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    const EquilibriumMaps maps(model);
    const auto reg = region_from_vertices(
        Polytope::from_box(Hyperbox(Vec::Constant(2, 0.35), Vec::Constant(2, 0.8))).vertices);
    const double Lg = estimate_Lg(maps, reg, 1000, 3);
    std::mt19937_64 rng(99);
    for (int k = 0; k < 500; ++k) {
        const Vec a = sample_in_region(reg, rng), b = sample_in_region(reg, rng);
        EXPECT_LE((maps.state(a) - maps.state(b)).norm(), Lg * (a - b).norm() + 1e-12);
    }
}
