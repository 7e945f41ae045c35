#include <gtest/gtest.h>

#include <tmpc/pipeline.hpp>

using namespace tmpc;

namespace {

struct Setup {
    PipelineConfig cfg;
    PipelineArtifacts art;
    TrackingProblem pb;
};

const Setup& setup()
{
    static const Setup s = [] {
        PipelineConfig cfg;
        cfg.K = four_tank_reference_K();
        cfg.P = four_tank_reference_P();
        auto art = build_pipeline(cfg);
        auto pb = make_problem(cfg, art);
        return Setup{cfg, std::move(art), std::move(pb)};
    }();
    return s;
}

} // namespace

TEST(ClosedLoop, EquilibriumStaysPut)
{
    const auto& s = setup();
    const Vec y{{0.6, 0.6}};
    Scenario sc = make_scenario(s.cfg);
    sc.x0 = s.pb.maps.state(y);
    sc.schedule = {{0.0, y}};
    sc.duration_min = 5.0;
    sc.w_const = Vec::Zero(2);
    const auto tr = run_closed_loop(s.pb, sc);
    ASSERT_EQ(tr.steps.size(), 20u);
    for (const auto& st : tr.steps) {
        EXPECT_LE((st.x - sc.x0).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((st.u - tr.steps.front().u).cwiseAbs().maxCoeff(), 1e-9);
    }
    const auto m = compute_metrics(tr, s.pb, sc);
    ASSERT_EQ(m.segments.size(), 1u);
    EXPECT_LE(m.segments[0].final_error, 1e-9);
    EXPECT_EQ(m.violations, 0);
}

TEST(ClosedLoop, NominalScheduleDescendsAndConverges)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.w_const = Vec::Zero(2);
    const auto tr = run_closed_loop(s.pb, sc);
    ASSERT_EQ(tr.steps.size(), 400u);
    const auto m = compute_metrics(tr, s.pb, sc);
    EXPECT_EQ(m.violations, 0);
    EXPECT_EQ(m.W_increases, 0);
    EXPECT_EQ(m.infeasible_steps, 0);
    for (const auto& seg : m.segments) {
        if (s.pb.region.contains(seg.y_t)) {
            EXPECT_LE(seg.final_target_error, 1e-4);
        }
        EXPECT_LE(seg.final_error, 1e-4);
    }
}

TEST(ClosedLoop, ReplayIsExact)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.duration_min = 10.0;
    sc.w_const = Vec{{0.004, -0.002}};
    const auto tr = run_closed_loop(s.pb, sc);
    Vec x = sc.x0;
    for (const auto& st : tr.steps) {
        EXPECT_EQ(st.x, x);
        x = s.pb.model().step(x, st.u, st.w);
    }
    EXPECT_EQ(x, tr.x_final);
}

TEST(ClosedLoop, PerturbedScheduleStaysFeasible)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.w_const = Vec{{0.005, 0.005}};
    const auto tr = run_closed_loop(s.pb, sc);
    const auto m = compute_metrics(tr, s.pb, sc);
    EXPECT_EQ(tr.steps.size(), 400u);
    EXPECT_EQ(m.violations, 0);
    EXPECT_EQ(m.infeasible_steps, 0);
    for (const auto& st : tr.steps) EXPECT_GE(st.min_slack, 0.0);
    for (const auto& seg : m.segments) EXPECT_TRUE(std::isfinite(seg.final_error));
}

TEST(ClosedLoop, InfeasibleInitialStateThrows)
{
    const auto& s = setup();
    TrackingProblem pb = s.pb;
    pb.solver.max_iter = 20;
    Scenario sc = make_scenario(s.cfg);
    sc.x0 = pb.model().state_box.upper();
    sc.w_const = Vec::Zero(2);
    EXPECT_THROW(run_closed_loop(pb, sc), ScenarioInfeasibleError);
}

TEST(Scenario, Validation)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.w_const = Vec{{0.01, 0.0}};
    EXPECT_THROW(sc.validate(s.pb.model()), ConfigError);
    sc.w_const = Vec::Zero(2);
    sc.schedule.front().t_min = 1.0;
    EXPECT_THROW(sc.validate(s.pb.model()), ConfigError);
    sc = make_scenario(s.cfg);
    sc.schedule[2].t_min = sc.schedule[1].t_min;
    EXPECT_THROW(sc.validate(s.pb.model()), ConfigError);
}

TEST(Scenario, SegmentChangesAtStepStart)
{
    const auto& s = setup();
    const Scenario sc = make_scenario(s.cfg);
    EXPECT_EQ(sc.steps(), 400);
    EXPECT_EQ(sc.segment_at(99), 0u);
    EXPECT_EQ(sc.segment_at(100), 1u);
    EXPECT_EQ(sc.segment_at(399), 3u);
}

TEST(Batch, SingleGridValueMatchesClosedLoop)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.duration_min = 10.0;
    const auto rep = run_batch(s.pb, sc, {0.0}, 1);
    ASSERT_EQ(rep.traces.size(), 1u);
    sc.w_const = Vec::Zero(2);
    const auto tr = run_closed_loop(s.pb, sc);
    ASSERT_EQ(rep.traces[0].steps.size(), tr.steps.size());
    for (std::size_t k = 0; k < tr.steps.size(); ++k) {
        EXPECT_EQ(rep.traces[0].steps[k].x, tr.steps[k].x);
        EXPECT_EQ(rep.traces[0].steps[k].u, tr.steps[k].u);
    }
    EXPECT_EQ(rep.violations, 0);
    EXPECT_DOUBLE_EQ(rep.feasibility_rate, 1.0);
}

TEST(Batch, ThreadCountDoesNotChangeResults)
{
    const auto& s = setup();
    Scenario sc = make_scenario(s.cfg);
    sc.duration_min = 5.0;
    const auto a = run_batch(s.pb, sc, {-0.005, 0.005}, 1);
    const auto b = run_batch(s.pb, sc, {-0.005, 0.005}, 3);
    ASSERT_EQ(a.traces.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.traces[i].x_final, b.traces[i].x_final);
    EXPECT_EQ(a.x_max, b.x_max);
}

TEST(Batch, GridOutsideDisturbanceSetRejected)
{
    const auto& s = setup();
    EXPECT_THROW(run_batch(s.pb, make_scenario(s.cfg), {0.01}, 1), ConfigError);
}
