#include <gtest/gtest.h>

#include <random>

#include <tmpc/four_tank.hpp>
#include <tmpc/model.hpp>

using namespace tmpc;

namespace {

// Continuous steady state of the four tanks with levels h1, h2 fixed, found by
// Newton on (h3, h4, qa, qb) with a finite-difference Jacobian.
std::pair<Vec, Vec> newton_oracle(const FourTankParams& p, double y1, double y2)
{
    Vec z{{0.5, 0.5, 1.5, 1.5}};
    const Vec w = Vec::Zero(2);
    const auto F = [&](const Vec& s) {
        Vec x{{y1, y2, s[0], s[1]}};
        Vec u{{s[2], s[3]}};
        return four_tank_ode(p, x, u, w);
    };
    for (int it = 0; it < 60; ++it) {
        const Vec r = F(z);
        Mat J(4, 4);
        for (int k = 0; k < 4; ++k) {
            Vec zp = z, zm = z;
            zp[k] += 1e-7;
            zm[k] -= 1e-7;
            J.col(k) = (F(zp) - F(zm)) / 2e-7;
        }
        z -= J.lu().solve(r);
    }
    return {Vec{{y1, y2, z[0], z[1]}}, Vec{{z[2], z[3]}}};
}

} // namespace

TEST(Rk4, ZeroFieldIsFixedPoint)
{
    const auto zero = [](const Vec& x, const Vec&, const Vec&) { return Vec::Zero(x.size()).eval(); };
    const Vec x{{0.3, -1.0, 2.0}};
    EXPECT_EQ(rk4_step(zero, x, Vec::Zero(1), Vec::Zero(0), 15.0), x);
}

TEST(Rk4, ExponentialDecayPolynomial)
{
    const auto decay = [](const Vec& x, const Vec&, const Vec&) { return (-x).eval(); };
    const double h = 0.1;
    const double poly = 1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
    const Vec x1 = rk4_step(decay, Vec::Ones(1), Vec::Zero(0), Vec::Zero(0), h);
    EXPECT_NEAR(x1[0], poly, 1e-15);
    EXPECT_NEAR(x1[0], 0.9048375, 1e-15);
    // Local truncation error of the fourth-order polynomial.
    EXPECT_NEAR(x1[0], std::exp(-h), std::pow(h, 5) / 120.0);
}

TEST(Rk4, NonFiniteStageIsReported)
{
    const auto bad = [](const Vec& x, const Vec&, const Vec&) {
        Vec d = Vec::Ones(x.size());
        if (x[0] > 1.0) d[0] = std::nan("");
        return d;
    };
    try {
        rk4_step(bad, Vec::Ones(1), Vec::Zero(0), Vec::Zero(0), 1.0);
        FAIL() << "expected IntegrationError";
    } catch (const IntegrationError& e) {
        EXPECT_NE(std::string(e.what()).find("k2"), std::string::npos);
    }
}

TEST(Rk4, LinearInStateForLinearOde)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N(0.0, 1.0);
    Mat A = Mat::NullaryExpr(4, 4, [&](Eigen::Index, Eigen::Index) { return N(rng); });
    A -= 3.0 * Mat::Identity(4, 4);
    const auto ode = [&](const Vec& x, const Vec&, const Vec&) { return (A * x).eval(); };
    const Vec x = Vec::NullaryExpr(4, [&](Eigen::Index) { return N(rng); });
    const Vec y = Vec::NullaryExpr(4, [&](Eigen::Index) { return N(rng); });
    const double a = 0.7, b = -1.3;
    const Vec lhs = rk4_step(ode, a * x + b * y, Vec::Zero(0), Vec::Zero(0), 0.2);
    const Vec rhs = a * rk4_step(ode, x, Vec::Zero(0), Vec::Zero(0), 0.2) +
                    b * rk4_step(ode, y, Vec::Zero(0), Vec::Zero(0), 0.2);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Rk4, ExactJacobianMatchesDifferences)
{
    const FourTankParams p;
    const auto ode = [&](const Vec& x, const Vec& u, const Vec& w) { return four_tank_ode(p, x, u, w); };
    const auto jac = [&](const Vec& x, const Vec& u, const Vec& w, Mat& Jx, Mat& Ju) {
        four_tank_ode_jacobian(p, x, u, w, Jx, Ju);
    };
    const Vec x{{0.6, 0.7, 0.5, 0.4}}, u{{1.8, 2.1}}, w{{0.002, -0.004}};
    Mat A, B;
    rk4_step_jacobian(ode, jac, x, u, w, p.Ts, 1, A, B);
    for (int k = 0; k < 4; ++k) {
        Vec xp = x, xm = x;
        xp[k] += 1e-6;
        xm[k] -= 1e-6;
        const Vec col = (rk4_step(ode, xp, u, w, p.Ts) - rk4_step(ode, xm, u, w, p.Ts)) / 2e-6;
        EXPECT_LE((A.col(k) - col).cwiseAbs().maxCoeff(), 1e-7);
    }
    for (int k = 0; k < 2; ++k) {
        Vec up = u, um = u;
        up[k] += 1e-6;
        um[k] -= 1e-6;
        const Vec col = (rk4_step(ode, x, up, w, p.Ts) - rk4_step(ode, x, um, w, p.Ts)) / 2e-6;
        EXPECT_LE((B.col(k) - col).cwiseAbs().maxCoeff(), 1e-7);
    }
}

TEST(FourTank, SteadyStateIsFixedPointOfTheStep)
{
    const FourTankParams p;
    const auto model = fourtank_dynamics(p);
    const auto [xs, us] = newton_oracle(p, 0.65, 0.65);
    EXPECT_LE((model.step(xs, us, Vec::Zero(2)) - xs).norm(), 1e-12);
    const auto [xc, uc] = four_tank_steady_state(p, Vec{{0.65, 0.65}});
    EXPECT_LE((xc - xs).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((uc - us).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FourTank, ZeroDisturbanceMatchesNominal)
{
    FourTankParams p;
    const auto model = fourtank_dynamics(p);
    Vec x{{0.5, 0.6, 0.4, 0.45}};
    const Vec u{{1.5, 2.0}};
    const auto ode = [&](const Vec& xx, const Vec& uu, const Vec&) {
        return four_tank_ode(p, xx, uu, Vec::Zero(2));
    };
    for (int k = 0; k < 10; ++k) {
        const Vec a = model.step(x, u, Vec::Zero(2));
        const Vec b = rk4_step(ode, x, u, Vec::Zero(2), p.Ts);
        EXPECT_EQ(a, b);
        x = a;
    }
}

TEST(FourTank, FlowIncreaseRaisesFedTanks)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> h(0.3, 1.2), q(0.2, 3.0);
    for (int t = 0; t < 200; ++t) {
        const Vec x{{h(rng), h(rng), h(rng), h(rng)}};
        const Vec u{{q(rng), q(rng)}};
        const Vec up = u + Vec{{0.05, 0.0}};
        const Vec a = model.step(x, u, Vec::Zero(2));
        const Vec b = model.step(x, up, Vec::Zero(2));
        EXPECT_GE(b[0], a[0]);
        EXPECT_GE(b[3], a[3]);
    }
}

TEST(FourTank, NegativeLevelIsDomainError)
{
    const auto model = fourtank_dynamics(FourTankParams{});
    EXPECT_THROW(model.step(Vec{{-0.01, 0.5, 0.5, 0.5}}, Vec{{1.0, 1.0}}, Vec::Zero(2)), DomainError);
}

TEST(FourTank, InvalidParametersRejected)
{
    FourTankParams p;
    p.gamma_a = 0.998;
    EXPECT_THROW(p.validate(), Error);
    p = FourTankParams{};
    p.S = 0.0;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Hyperbox, MinkowskiAndPontryagin)
{
    const Hyperbox a(Vec{{0.0, -1.0}}, Vec{{2.0, 1.0}});
    const Hyperbox b = Hyperbox::symmetric(Vec{{0.5, 0.25}});
    const Hyperbox s = a + b;
    EXPECT_EQ(s.half_width(), a.half_width() + b.half_width());
    EXPECT_EQ((s - b), a);
    EXPECT_THROW(a.shrink(Vec{{1.5, 0.0}}), DomainError);
    EXPECT_TRUE(a.shrink_is_empty(Vec{{1.5, 0.0}}));
    EXPECT_THROW(Hyperbox(Vec{{1.0}}, Vec{{0.0}}), DomainError);
}
