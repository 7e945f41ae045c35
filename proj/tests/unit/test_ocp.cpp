#include <gtest/gtest.h>

#include <random>

#include <tmpc/pipeline.hpp>

using namespace tmpc;

namespace {

// Four-tank controller with the benchmark gain and weight, built once.
struct FourTank {
    PipelineConfig cfg;
    PipelineArtifacts art;
    TrackingProblem pb;

    static FourTank make()
    {
        PipelineConfig cfg;
        cfg.K = four_tank_reference_K();
        cfg.P = four_tank_reference_P();
        auto art = build_pipeline(cfg);
        auto pb = make_problem(cfg, art);
        return {cfg, std::move(art), std::move(pb)};
    }
};

const FourTank& four_tank()
{
    static const FourTank ft = FourTank::make();
    return ft;
}

Vec at_equilibrium(const TrackingProblem& pb, const Vec& y)
{
    const Vec v = pb.maps.policy_input(y);
    return pb.pack(v.replicate(1, pb.N), y);
}

// x+ = A x + B u, y = x with boxes wide enough never to bind.
struct LtiProblem {
    Mat A{{0.95, 0.1, 0.0}, {0.0, 0.9, 0.2}, {0.05, 0.0, 0.85}};
    Mat B{{0.3, 0.0}, {0.1, 0.2}, {0.0, 0.4}};
    Mat C{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    Mat D{{0.0, 0.0}, {0.0, 0.0}};

    TrackingProblem make(int N) const
    {
        auto model = linear_model(A, B, Mat::Zero(3, 1), C, D, Hyperbox::symmetric(Vec::Constant(3, 100.0)),
                                  Hyperbox::symmetric(Vec::Constant(2, 100.0)), Hyperbox::symmetric(Vec{{1.0}}));
        const Mat Q = Vec{{2.0, 1.0, 0.5}}.asDiagonal();
        const Mat R = Vec{{0.3, 0.1}}.asDiagonal();
        const auto dare = solve_dare(A, B, Q, R);
        TerminalIngredients ti;
        ti.K = dare.K;
        ti.set_P(dare.P);
        ti.rho = 1e8;
        auto tubes = build_tubes_from(Mat::Zero(3, 3), Vec::Zero(3), N);
        auto tc = tighten(model.state_box, model.input_box, ti.K, tubes);
        auto region = region_from_vertices({Vec{{-10.0, -10.0}}, Vec{{10.0, -10.0}}, Vec{{10.0, 10.0}}, Vec{{-10.0, 10.0}}});
        TrackingProblem pb{EquilibriumMaps(model), tubes, tc, ti, region, N, Q, R, Vec{{3.0, 5.0}}.asDiagonal(), {}};
        pb.validate();
        return pb;
    }
};

} // namespace

TEST(Cost, ZeroAtTargetEquilibrium)
{
    const auto& ft = four_tank();
    const Vec y{{0.6, 0.6}};
    Vec grad;
    const double c = evaluate_cost(ft.pb, ft.pb.maps.state(y), y, at_equilibrium(ft.pb, y), &grad);
    EXPECT_NEAR(c, 0.0, 1e-20);
    EXPECT_LE(grad.lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Cost, OffsetTermOfShiftedReference)
{
    const auto& ft = four_tank();
    const Vec y_t{{0.6, 0.6}};
    const Vec y_s = y_t + Vec{{0.01, 0.0}};
    const double c = evaluate_cost(ft.pb, ft.pb.maps.state(y_s), y_t, at_equilibrium(ft.pb, y_s));
    EXPECT_NEAR(c, 1e4 * 0.01 * 0.01, 1e-9);
}

TEST(Cost, GradientMatchesCentralDifferences)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int done = 0;
    while (done < 100) {
        const Vec y_s = sample_in_region(pb.region, rng);
        const Vec y_t{{0.3 + 0.6 * U(rng), 0.3 + 0.6 * U(rng)}};
        const Vec x0 = pb.maps.state(y_s) + 0.05 * Vec::NullaryExpr(4, [&](Eigen::Index) { return U(rng) - 0.5; });
        Vec z(pb.nz());
        for (int j = 0; j < pb.N; ++j)
            z.segment(2 * j, 2) = pb.maps.policy_input(y_s) + 0.3 * Vec{{U(rng) - 0.5, U(rng) - 0.5}};
        z.tail(2) = y_s;
        Vec grad;
        try {
            evaluate_cost(pb, x0, y_t, z, &grad);
        } catch (const CostEvaluationError&) {
            continue;
        }
        Vec fd(pb.nz());
        for (int k = 0; k < pb.nz(); ++k) {
            Vec zp = z, zm = z;
            zp[k] += 1e-6;
            zm[k] -= 1e-6;
            fd[k] = (evaluate_cost(pb, x0, y_t, zp) - evaluate_cost(pb, x0, y_t, zm)) / 2e-6;
        }
        EXPECT_LE((grad - fd).lpNorm<Eigen::Infinity>(), 1e-5 * std::max(1.0, fd.lpNorm<Eigen::Infinity>()));
        ++done;
    }
}

TEST(Cost, OutsideModelDomainThrows)
{
    const auto& ft = four_tank();
    const Vec y{{0.6, 0.6}};
    EXPECT_THROW(evaluate_cost(ft.pb, Vec{{-1.0, 0.3, 0.3, 0.3}}, y, at_equilibrium(ft.pb, y)), CostEvaluationError);
}

TEST(Shift, DropsFirstInputAndAppendsSteadyInput)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    Solution prev;
    prev.y_s = Vec{{0.6, 0.6}};
    prev.v_seq = Mat{{1.0, 2.0, 3.0, 4.0}, {5.0, 6.0, 7.0, 8.0}};
    const Vec c = shift_candidate(pb, prev);
    const Vec vs = pb.maps.policy_input(prev.y_s);
    EXPECT_EQ(c.segment(0, 2), Vec({{2.0, 6.0}}));
    EXPECT_EQ(c.segment(2, 2), Vec({{3.0, 7.0}}));
    EXPECT_EQ(c.segment(4, 2), Vec({{4.0, 8.0}}));
    EXPECT_EQ(c.segment(6, 2), vs);
    EXPECT_EQ(c.tail(2), prev.y_s);

    prev.v_seq = vs.replicate(1, 4);
    EXPECT_EQ(shift_candidate(pb, prev), at_equilibrium(pb, prev.y_s));
}

TEST(Solve, EquilibriumStartIsOptimal)
{
    const auto& ft = four_tank();
    const Vec y{{0.6, 0.6}};
    ASSERT_TRUE(ft.pb.region.contains(y));
    const auto sol = solve(ft.pb, ft.pb.maps.state(y), y);
    EXPECT_LE(sol.cost, 1e-8);
    EXPECT_LE((sol.y_s - y).lpNorm<Eigen::Infinity>(), 1e-5);
    EXPECT_EQ(sol.status, SolveStatus::optimal);
}

TEST(Solve, UnconstrainedLtiMatchesRiccatiRecursion)
{
    const LtiProblem lti;
    const int N = 5;
    const auto pb = lti.make(N);
    const Mat& P = pb.terminal.P;
    const Mat& K = pb.terminal.K;
    const Mat AK = lti.A + lti.B * K;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> Nd(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec x0{{Nd(rng), Nd(rng), Nd(rng)}};
        const Vec y_t{{Nd(rng), Nd(rng)}};

        // Backward recursion on e+ = A_K e + B dv with stage cost e'Qe + dv'R dv.
        std::vector<Mat> Pj(static_cast<size_t>(N + 1)), G(static_cast<size_t>(N));
        Pj[static_cast<size_t>(N)] = P;
        for (int j = N - 1; j >= 0; --j) {
            const Mat& Pn = Pj[static_cast<size_t>(j + 1)];
            const Mat S = pb.R + lti.B.transpose() * Pn * lti.B;
            G[static_cast<size_t>(j)] = S.inverse() * lti.B.transpose() * Pn * AK;
            Pj[static_cast<size_t>(j)] = pb.Q + AK.transpose() * Pn * AK - AK.transpose() * Pn * lti.B * G[static_cast<size_t>(j)];
        }
        // Steady state of y_s: x_s = M y_s, u_s = Nu y_s from [(A - I) B; C D] [x; u] = [0; y].
        Mat E(5, 5);
        E << lti.A - Mat::Identity(3, 3), lti.B, lti.C, lti.D;
        Mat rhs = Mat::Zero(5, 2);
        rhs.bottomRows(2) = Mat::Identity(2, 2);
        const Mat XU = E.inverse() * rhs;
        const Mat M = XU.topRows(3), Nu = XU.bottomRows(2);
        // Value (x0 - M y)'P_0(x0 - M y) + (y - y_t)'T(y - y_t), minimized in y.
        const Mat& P0 = Pj[0];
        const Vec ys = (M.transpose() * P0 * M + pb.T).ldlt().solve(M.transpose() * P0 * x0 + pb.T * y_t);
        Mat v(2, N);
        Vec e = x0 - M * ys;
        for (int j = 0; j < N; ++j) {
            const Vec dv = -G[static_cast<size_t>(j)] * e;
            v.col(j) = Nu * ys + dv;
            e = AK * e + lti.B * dv;
        }

        const auto sol = solve(pb, x0, y_t);
        EXPECT_EQ(sol.status, SolveStatus::optimal);
        EXPECT_LE((sol.v_seq - v).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE((sol.y_s - ys).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Solve, SolutionIsConsistentAndFeasible)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    const auto sol = solve(pb, ft.cfg.x0, Vec{{0.65, 0.65}});
    EXPECT_NEAR(evaluate_cost(pb, ft.cfg.x0, Vec{{0.65, 0.65}}, pb.pack(sol.v_seq, sol.y_s)), sol.cost, 1e-10);
    EXPECT_LE(sol.max_violation, 1e-8);
    ASSERT_EQ(sol.predicted_states.rows(), pb.N + 1);
    EXPECT_EQ(Vec(sol.predicted_states.row(0).transpose()), ft.cfg.x0);
    for (int j = 0; j < pb.N; ++j) {
        const Vec x = sol.predicted_states.row(j).transpose();
        const Vec u = pb.terminal.K * (x - sol.x_s) + sol.v_seq.col(j);
        const Vec xn = pb.model().step(x, u, pb.model().zero_disturbance());
        EXPECT_LE((xn - sol.predicted_states.row(j + 1).transpose()).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_TRUE(membership(x, sol.v_seq.col(j), j, sol.x_s, pb.constraints));
    }
    const Vec eN = sol.predicted_states.row(pb.N).transpose() - sol.x_s;
    EXPECT_LE(pb.terminal.cost(eN), pb.terminal.rho + 1e-8);
    EXPECT_TRUE(pb.region.contains(sol.y_s, 1e-8));
}

TEST(Solve, NeverWorseThanFeasibleWarmStart)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    Vec x = ft.cfg.x0;
    const Vec y_t{{0.35, 0.35}};
    std::optional<Vec> warm;
    for (int k = 0; k < 30; ++k) {
        if (warm) {
            const double cw = evaluate_cost(pb, x, y_t, *warm);
            const auto sol = solve(pb, x, y_t, warm);
            EXPECT_LE(sol.cost, cw + 1e-8);
        }
        auto [u, sol] = control_law(pb, x, y_t, warm);
        x = pb.model().step(x, u, Vec{{0.003, -0.004}});
        warm = shift_candidate(pb, sol);
    }
}

TEST(Solve, ForcedFallbackReturnsCandidate)
{
    const auto& ft = four_tank();
    TrackingProblem pb = ft.pb;
    const Vec y_t{{0.65, 0.65}};
    const auto first = solve(pb, ft.cfg.x0, y_t);
    const Vec x1 = pb.model().step(ft.cfg.x0, pb.terminal.K * (ft.cfg.x0 - first.x_s) + first.v_seq.col(0),
                                   pb.model().zero_disturbance());
    const Vec cand = shift_candidate(pb, first);
    pb.solver.max_iter = 0;
    const auto [u, sol] = control_law(pb, x1, y_t, cand);
    EXPECT_EQ(sol.status, SolveStatus::fallback_candidate);
    EXPECT_EQ(pb.pack(sol.v_seq, sol.y_s), cand);
    const Vec x_s = pb.maps.state(cand.tail(2));
    EXPECT_LE((u - (pb.terminal.K * (x1 - x_s) + cand.head(2))).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Solve, InfeasibleWithoutWarmStartThrows)
{
    const auto& ft = four_tank();
    TrackingProblem pb = ft.pb;
    pb.solver.max_iter = 20;
    const Vec full = pb.model().state_box.upper();
    EXPECT_THROW(solve(pb, full, Vec{{0.35, 0.35}}), InfeasibleProblemError);
}

TEST(ControlLaw, EquilibriumGivesSteadyInput)
{
    const auto& ft = four_tank();
    const Vec y{{0.6, 0.6}};
    const auto [u, sol] = control_law(ft.pb, ft.pb.maps.state(y), y);
    EXPECT_LE((u - ft.pb.maps.input(y)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ControlLaw, InputAlwaysInBox)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    int solved = 0;
    for (int k = 0; k < 1000; ++k) {
        const Vec ys = sample_in_region(pb.region, rng);
        const Vec x = pb.maps.state(ys) + 0.02 * Vec::NullaryExpr(4, [&](Eigen::Index) { return U(rng); });
        const Vec y_t{{0.6 + 0.3 * U(rng), 0.6 + 0.3 * U(rng)}};
        try {
            const auto [u, sol] = control_law(pb, x, y_t);
            EXPECT_TRUE(pb.model().input_box.contains(u));
            ++solved;
        } catch (const InfeasibleProblemError&) {
        }
    }
    EXPECT_GT(solved, 500);
}

TEST(Solve, UnreachableTargetSettlesNearBestSetpoint)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    const Vec y_t{{0.90, 0.75}};
    ASSERT_FALSE(pb.region.contains(y_t));
    Vec x = pb.maps.state(Vec{{0.6, 0.7}});
    std::optional<Vec> warm;
    Solution sol;
    for (int k = 0; k < 100; ++k) {
        auto [u, s] = control_law(pb, x, y_t, warm);
        sol = s;
        x = pb.model().step(x, u, pb.model().zero_disturbance());
        warm = shift_candidate(pb, sol);
    }
    // Grid search oracle: the point of the region closest to y_t in the T norm.
    const auto pts = region_grid(pb.region, 401);
    Vec best = pts.front();
    for (const Vec& y : pts)
        if ((y - y_t).squaredNorm() < (best - y_t).squaredNorm()) best = y;
    EXPECT_LE((sol.y_s - best).norm(), 1e-2);
    // on the boundary
    const double face = (pb.region.polytope.A * sol.y_s - pb.region.polytope.b).maxCoeff();
    EXPECT_LE(face, 1e-8);
    EXPECT_GE(face, -1e-6);
}

TEST(Solve, ShiftedCandidateFeasibleForSuccessor)
{
    const auto& ft = four_tank();
    const auto& pb = ft.pb;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const Vec wmax = pb.model().dist_box.upper();
    int trials = 0, failures = 0;
    for (int k = 0; k < 200; ++k) {
        const Vec ys = sample_in_region(pb.region, rng);
        const Vec x = pb.maps.state(ys) + 0.03 * Vec::NullaryExpr(4, [&](Eigen::Index) { return U(rng); });
        const Vec y_t{{0.6 + 0.3 * U(rng), 0.6 + 0.3 * U(rng)}};
        Solution sol;
        Vec u;
        try {
            std::tie(u, sol) = control_law(pb, x, y_t);
        } catch (const InfeasibleProblemError&) {
            continue;
        }
        const Vec w = wmax.cwiseProduct(Vec{{U(rng), U(rng)}});
        const Vec xn = pb.model().step(x, u, w);
        ++trials;
        if (constraint_violation(pb, xn, shift_candidate(pb, sol)) > 1e-8) ++failures;
    }
    EXPECT_GT(trials, 100);
    EXPECT_EQ(failures, 0);
}
