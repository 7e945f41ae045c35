#pragma once

#include <array>
#include <cmath>

#include "model.hpp"

namespace tmpc {

/// Quadruple-tank process. Levels h1..h4 [m], pump flows qa, qb [m^3/h], valve
/// split perturbations w1, w2 [-]. Defaults are the benchmark plant of the
/// nonlinear tracking MPC literature (Alvarado's quadruple-tank rig).
struct FourTankParams {
    double S = 0.06;                                      // tank cross-section [m^2]
    std::array<double, 4> a = {1.310e-4, 1.507e-4, 9.267e-5, 8.816e-5}; // hole sections [m^2]
    double gamma_a = 0.3;
    double gamma_b = 0.4;
    double g = 9.81;
    double Ts = 15.0;                                     // sampling time [s]
    int substeps = 1;                                     // RK4 steps per sample
    std::array<double, 4> h_min = {0.2, 0.2, 0.2, 0.2};
    std::array<double, 4> h_max = {1.36, 1.36, 1.30, 1.30};
    std::array<double, 2> q_min = {0.0, 0.0};
    std::array<double, 2> q_max = {3.6, 4.0};
    std::array<double, 2> w_bar = {0.005, 0.005};

    void validate() const
    {
        if (!(S > 0)) throw DomainError("four-tank: S must be positive");
        for (double ai : a)
            if (!(ai > 0)) throw DomainError("four-tank: hole sections must be positive");
        if (!(g > 0) || !(Ts > 0) || substeps < 1)
            throw DomainError("four-tank: g, Ts and substeps must be positive");
        const auto split_ok = [](double gam, double wb) { return gam - wb > 0 && gam + wb < 1; };
        if (!split_ok(gamma_a, w_bar[0]) || !split_ok(gamma_b, w_bar[1]))
            throw DomainError("four-tank: valve splits must satisfy 0 < gamma +- w_bar < 1");
        for (int i = 0; i < 4; ++i)
            if (!(h_min[i] < h_max[i])) throw DomainError("four-tank: h_min must be < h_max");
        for (int i = 0; i < 2; ++i) {
            if (!(q_min[i] < q_max[i])) throw DomainError("four-tank: q_min must be < q_max");
            if (w_bar[i] < 0) throw DomainError("four-tank: w_bar must be nonnegative");
        }
        if (std::abs(gamma_a + gamma_b - 1.0) < 1e-12)
            throw DomainError("four-tank: gamma_a + gamma_b = 1 makes the steady state singular");
    }
};

namespace detail {

inline void check_levels(const Vec& x)
{
    for (int i = 0; i < 4; ++i)
        if (!(x[i] >= 0.0))
            throw DomainError("four-tank: negative level in tank " + std::to_string(i + 1));
}

} // namespace detail

/// Continuous-time vector field dh/dt.
inline Vec four_tank_ode(const FourTankParams& p, const Vec& x, const Vec& u, const Vec& w)
{
    detail::check_levels(x);
    const double ga = p.gamma_a + w[0];
    const double gb = p.gamma_b + w[1];
    const double c = 1.0 / (3600.0 * p.S);
    std::array<double, 4> out;
    std::array<double, 4> q;
    for (int i = 0; i < 4; ++i) out[i] = p.a[i] / p.S * std::sqrt(2.0 * p.g * x[i]);
    q[0] = -out[0] + out[2] + ga * c * u[0];
    q[1] = -out[1] + out[3] + gb * c * u[1];
    q[2] = -out[2] + (1.0 - gb) * c * u[1];
    q[3] = -out[3] + (1.0 - ga) * c * u[0];
    Vec dx(4);
    dx << q[0], q[1], q[2], q[3];
    return dx;
}

inline void four_tank_ode_jacobian(const FourTankParams& p, const Vec& x, const Vec& /*u*/,
                                   const Vec& w, Mat& Jx, Mat& Ju)
{
    detail::check_levels(x);
    const double ga = p.gamma_a + w[0];
    const double gb = p.gamma_b + w[1];
    const double c = 1.0 / (3600.0 * p.S);
    std::array<double, 4> d;
    for (int i = 0; i < 4; ++i) {
        if (x[i] <= 0.0) throw DomainError("four-tank: Jacobian undefined at an empty tank");
        d[i] = p.a[i] / p.S * std::sqrt(2.0 * p.g) * 0.5 / std::sqrt(x[i]);
    }
    Jx.setZero(4, 4);
    Jx(0, 0) = -d[0];
    Jx(0, 2) = d[2];
    Jx(1, 1) = -d[1];
    Jx(1, 3) = d[3];
    Jx(2, 2) = -d[2];
    Jx(3, 3) = -d[3];
    Ju.setZero(4, 2);
    Ju(0, 0) = ga * c;
    Ju(1, 1) = gb * c;
    Ju(2, 1) = (1.0 - gb) * c;
    Ju(3, 0) = (1.0 - ga) * c;
}

/// Closed-form steady state for the output y = (h1, h2). Tanks 3 and 4
/// balances reduce to a 2x2 linear system in the pump flows.
inline std::pair<Vec, Vec> four_tank_steady_state(const FourTankParams& p, const Vec& y)
{
    if (y.size() != 2) throw DimensionError("four-tank: output has 2 components");
    if (!(y[0] > 0) || !(y[1] > 0))
        throw NoEquilibriumError("four-tank: steady levels must be positive");
    const double ga = p.gamma_a, gb = p.gamma_b;
    const double r1 = 3600.0 * p.a[0] * std::sqrt(2.0 * p.g * y[0]);
    const double r2 = 3600.0 * p.a[1] * std::sqrt(2.0 * p.g * y[1]);
    // [ga, 1-gb; 1-ga, gb] q = r
    const double det = ga * gb - (1.0 - gb) * (1.0 - ga);
    const double qa = (gb * r1 - (1.0 - gb) * r2) / det;
    const double qb = (ga * r2 - (1.0 - ga) * r1) / det;
    if (!(qa >= 0) || !(qb >= 0))
        throw NoEquilibriumError("four-tank: output requires a negative pump flow");
    const double s3 = (1.0 - gb) * qb / (3600.0 * p.a[2]);
    const double s4 = (1.0 - ga) * qa / (3600.0 * p.a[3]);
    Vec x(4), u(2);
    x << y[0], y[1], s3 * s3 / (2.0 * p.g), s4 * s4 / (2.0 * p.g);
    u << qa, qb;
    return {x, u};
}

/// Discrete four-tank plant: one (or `substeps`) RK4 step(s) per sample,
/// gamma_a = gamma_a_nom + w1, gamma_b = gamma_b_nom + w2, output (h1, h2).
inline PlantModel fourtank_dynamics(const FourTankParams& params)
{
    params.validate();
    PlantModel model;
    model.n = 4;
    model.m = 2;
    model.p = 2;
    model.r = 2;
    const FourTankParams p = params;
    model.step = [p](const Vec& x, const Vec& u, const Vec& w) -> Vec {
        return rk4_step([&p](const Vec& xx, const Vec& uu, const Vec& ww) { return four_tank_ode(p, xx, uu, ww); },
                        x, u, w, p.Ts, p.substeps);
    };
    model.step_jacobian = [p](const Vec& x, const Vec& u, const Vec& w, Mat& A, Mat& B) {
        rk4_step_jacobian(
            [&p](const Vec& xx, const Vec& uu, const Vec& ww) { return four_tank_ode(p, xx, uu, ww); },
            [&p](const Vec& xx, const Vec& uu, const Vec& ww, Mat& Jx, Mat& Ju) {
                four_tank_ode_jacobian(p, xx, uu, ww, Jx, Ju);
            },
            x, u, w, p.Ts, p.substeps, A, B);
    };
    model.output = [](const Vec& x, const Vec&) -> Vec { return x.head(2); };
    model.steady_state = [p](const Vec& y) { return four_tank_steady_state(p, y); };

    Vec hl(4), hu(4), ql(2), qu(2), wb(2);
    for (int i = 0; i < 4; ++i) {
        hl[i] = p.h_min[i];
        hu[i] = p.h_max[i];
    }
    for (int i = 0; i < 2; ++i) {
        ql[i] = p.q_min[i];
        qu[i] = p.q_max[i];
        wb[i] = p.w_bar[i];
    }
    model.state_box = Hyperbox(hl, hu);
    model.input_box = Hyperbox(ql, qu);
    model.dist_box = Hyperbox::symmetric(wb);
    model.output_box = Hyperbox(hl.head(2), hu.head(2));
    model.validate();
    return model;
}

} // namespace tmpc
