#include <gtest/gtest.h>

#include <random>

#include <tmpc/terminal.hpp>

using namespace tmpc;

namespace {

// x+ = A x + B u + E w, y = x. Every output is a steady output.
struct Lti {
    Mat A{{0.9, 0.1}, {0.0, 0.8}};
    Mat B{{0.5, 0.0}, {0.1, 0.4}};
    Mat Q = Mat::Identity(2, 2);
    Mat R = 0.1 * Mat::Identity(2, 2);

    PlantModel model(double state_half = 1.0, double input_half = 10.0) const
    {
        return linear_model(A, B, 0.01 * Mat::Identity(2, 2), Mat::Identity(2, 2), Mat::Zero(2, 2),
                            Hyperbox::symmetric(Vec::Constant(2, state_half)),
                            Hyperbox::symmetric(Vec::Constant(2, input_half)),
                            Hyperbox::symmetric(Vec::Constant(2, 1.0)));
    }
};

SetpointRegion square(double h)
{
    return region_from_vertices({Vec{{-h, -h}}, Vec{{h, -h}}, Vec{{h, h}}, Vec{{-h, h}}});
}

// Riccati residual A'PA - P + Q - A'PB (R + B'PB)^-1 B'PA.
Mat riccati_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P)
{
    const Mat BtP = B.transpose() * P;
    return A.transpose() * P * A - P + Q - A.transpose() * P * B * (R + BtP * B).inverse() * BtP * A;
}

} // namespace

TEST(Synthesis, SingleVertexEqualsRiccatiSolution)
{
    const Lti s;
    const EquilibriumMaps maps(s.model());
    const auto ti = synthesize_gain(maps, {Vec{{0.1, -0.2}}}, s.Q, s.R, 0.99);
    EXPECT_LT(riccati_residual(s.A, s.B, s.Q, s.R, ti.P).cwiseAbs().maxCoeff(), 1e-8);
    const Mat K = -(s.R + s.B.transpose() * ti.P * s.B).inverse() * s.B.transpose() * ti.P * s.A;
    EXPECT_LT((K - ti.K).cwiseAbs().maxCoeff(), 1e-8);

    const auto rep = check_vertices(ti.K, ti.P, s.Q, s.R, vertex_linearizations(maps, {Vec{{0.1, -0.2}}}), 0.99);
    EXPECT_TRUE(rep.lyapunov_ok);
    EXPECT_TRUE(rep.contraction_ok);
    EXPECT_LE(rep.max_lyapunov_eig, 1e-8);
    EXPECT_DOUBLE_EQ(ti.alpha_f_bar, max_eigenvalue(ti.P));
}

TEST(Synthesis, UnstabilizablePairFails)
{
    // x+ = 2x, y = x + u: the equilibrium exists (x = 0, u = y) but no gain helps.
    const auto model = linear_model(Mat{{2.0}}, Mat{{0.0}}, Mat{{0.0}}, Mat{{1.0}}, Mat{{1.0}},
                                    Hyperbox::symmetric(Vec{{1.0}}), Hyperbox::symmetric(Vec{{1.0}}),
                                    Hyperbox::symmetric(Vec{{1.0}}));
    const EquilibriumMaps maps(model);
    EXPECT_THROW(synthesize_gain(maps, {Vec{{0.0}}}, Mat{{1.0}}, Mat{{1.0}}, 0.95), SynthesisFailedError);
}

TEST(Synthesis, ContractionImpliesStableClosedLoop)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        const Mat A = Mat::NullaryExpr(3, 3, [&](Eigen::Index, Eigen::Index) { return U(rng); });
        const Mat B = Mat::NullaryExpr(3, 2, [&](Eigen::Index, Eigen::Index) { return U(rng); });
        const auto dare = solve_dare(A, B, Mat::Identity(3, 3), Mat::Identity(2, 2));
        if (!dare.converged) continue;
        const auto rep = check_vertices(dare.K, dare.P, Mat::Identity(3, 3), Mat::Identity(2, 2), {{Vec(), A, B}}, 1.0);
        if (rep.max_contraction < 1.0) {
            EXPECT_LT(rep.max_spectral_radius, 1.0);
            ++checked;
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(Ingredients, RejectsIndefiniteP)
{
    TerminalIngredients ti;
    EXPECT_THROW(ti.set_P(Mat{{1.0, 0.0}, {0.0, -1.0}}), DomainError);
    ti.set_P(Mat{{2.0, 1.0}, {0.0, 2.0}});
    EXPECT_EQ(ti.P, ti.P.transpose());
    std::mt19937_64 rng(4);
    std::normal_distribution<double> N(0.0, 1.0);
    const double lmin = min_eigenvalue(ti.P);
    for (int k = 0; k < 1000; ++k) {
        const Vec e{{N(rng), N(rng)}};
        EXPECT_GE(ti.cost(e), lmin * e.squaredNorm() * (1 - 1e-12));
        EXPECT_LE(ti.cost(e), ti.alpha_f_bar * e.squaredNorm() * (1 + 1e-12));
    }
}

TEST(LyapunovDecrease, ZeroAtEquilibrium)
{
    const Lti s;
    const EquilibriumMaps maps(s.model());
    const auto ti = synthesize_gain(maps, {Vec{{0.0, 0.0}}}, s.Q, s.R, 0.99);
    const auto rep = verify_lyapunov_decrease(maps, ti, s.Q, s.R, {Vec{{0.3, 0.2}}}, 1, 0.1, 1);
    EXPECT_EQ(rep.samples, 1u);
    EXPECT_NEAR(rep.max_decrement, 0.0, 1e-14);
}

TEST(LyapunovDecrease, LtiMatchesRiccatiIdentity)
{
    // For the Riccati pair the decrement is exactly -e'K'RKe.
    const Lti s;
    const EquilibriumMaps maps(s.model());
    const auto ti = synthesize_gain(maps, {Vec{{0.0, 0.0}}}, s.Q, s.R, 0.99);
    const auto rep = verify_lyapunov_decrease(maps, ti, s.Q, s.R, {Vec{{0.0, 0.0}}, Vec{{0.2, -0.1}}}, 4000, 0.5, 2);
    EXPECT_TRUE(rep.pass);
    EXPECT_LE(rep.max_decrement, 1e-10);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, 0.1);
    for (int k = 0; k < 100; ++k) {
        const Vec e{{N(rng), N(rng)}};
        const Vec xn = (s.A + s.B * ti.K) * e;
        const double dec = ti.cost(xn) - ti.cost(e) + e.dot(s.Q * e);
        const Vec Ke = ti.K * e;
        EXPECT_NEAR(dec, -Ke.dot(s.R * Ke), 1e-10);
        EXPECT_LT(dec, 0.0);
    }
}

namespace {

struct SizingCase {
    EquilibriumMaps maps;
    TerminalIngredients ti;
    TubeSystem tubes;
    TightenedConstraints tc;
};

SizingCase sizing_case(double state_half, double tube)
{
    const Lti s;
    SizingCase c{EquilibriumMaps(s.model(state_half)), {}, {}, {}};
    c.ti = synthesize_gain(c.maps, {Vec{{0.0, 0.0}}}, s.Q, s.R, 0.99);
    c.tubes = build_tubes_from(0.5 * Mat::Identity(2, 2), Vec::Constant(2, tube), 4);
    c.tc = tighten(c.maps.model().state_box, c.maps.model().input_box, c.ti.K, c.tubes);
    return c;
}

} // namespace

TEST(TerminalSizing, UnconstrainedLtiLimitedOnlyByBoxes)
{
    auto c = sizing_case(1.0, 0.0);
    const auto sz = size_terminal_level(c.maps, c.ti, c.tc, c.tubes, square(1e-7));
    EXPECT_EQ(sz.trials, 1);
    EXPECT_DOUBLE_EQ(sz.rho, sz.rho_max);

    // Largest level of {e'Pe <= r} inside |x_i| <= 1 and |K_j e| <= 10.
    const Mat Pinv = c.ti.P.inverse();
    double r = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 2; ++i) r = std::min(r, 1.0 / Pinv(i, i));
    const Mat KPK = c.ti.K * Pinv * c.ti.K.transpose();
    for (int j = 0; j < 2; ++j) r = std::min(r, 100.0 / KPK(j, j));
    EXPECT_NEAR(sz.rho, r, 1e-5 * r);
}

TEST(TerminalSizing, SmallerStateBoxGivesSmallerLevel)
{
    auto wide = sizing_case(1.0, 1e-3);
    auto narrow = sizing_case(0.1, 1e-3);
    const auto a = size_terminal_level(wide.maps, wide.ti, wide.tc, wide.tubes, square(0.01));
    const auto b = size_terminal_level(narrow.maps, narrow.ti, narrow.tc, narrow.tubes, square(0.01));
    EXPECT_LT(b.rho, a.rho);
    EXPECT_GT(b.rho, 0.0);
}

TEST(TerminalSizing, LevelSetNesting)
{
    auto c = sizing_case(1.0, 1e-3);
    const auto pts = region_grid(square(0.01), 3);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    TerminalSizingOptions opt;
    opt.samples_per_setpoint = 50;
    for (int t = 0; t < 30; ++t) {
        const double rho = 2.0 * U(rng);
        const double smaller = rho * U(rng);
        if (check_terminal_level(c.maps, c.ti, c.tc, c.tubes, pts, rho, opt).empty()) {
            EXPECT_TRUE(check_terminal_level(c.maps, c.ti, c.tc, c.tubes, pts, smaller, opt).empty());
        }
    }
}

TEST(TerminalSizing, NoRoomThrows)
{
    // The setpoint region touches the state bound, so no positive level fits.
    auto c = sizing_case(1.0, 0.0);
    const auto edge = region_from_vertices({Vec{{0.9, 0.0}}, Vec{{1.0, 0.0}}, Vec{{1.0, 0.1}}});
    EXPECT_THROW(size_terminal_level(c.maps, c.ti, c.tc, c.tubes, edge), TerminalDesignError);
}

TEST(Assumption9, DirectFormula)
{
    const auto rep = check_assumption9(Mat::Identity(2, 2), 1.0, 0.5);
    EXPECT_DOUBLE_EQ(rep.b1, 1.0);
    EXPECT_DOUBLE_EQ(rep.b2, 1.0);
    EXPECT_TRUE(rep.pass);
}

TEST(Assumption9, DegenerateOffsetWeightFails)
{
    const auto rep = check_assumption9(Mat{{1.0, 0.0}, {0.0, 0.0}}, 1.0, 0.5);
    EXPECT_EQ(rep.b1, 0.0);
    EXPECT_FALSE(rep.pass);
}
