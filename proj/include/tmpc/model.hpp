#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "hyperbox.hpp"

namespace tmpc {

/// Discrete-time perturbed plant x+ = f(x, u, w), y = h(x, u) with box
/// constraints. Immutable after construction; the callables must be pure.
struct PlantModel {
    using StepFn = std::function<Vec(const Vec& x, const Vec& u, const Vec& w)>;
    using OutputFn = std::function<Vec(const Vec& x, const Vec& u)>;
    using JacobianFn = std::function<void(const Vec& x, const Vec& u, const Vec& w, Mat& A, Mat& B)>;
    using SteadyStateFn = std::function<std::pair<Vec, Vec>(const Vec& y)>;

    int n = 0;  // states
    int m = 0;  // inputs
    int p = 0;  // outputs
    int r = 0;  // disturbances

    StepFn step;
    OutputFn output;
    Hyperbox state_box;
    Hyperbox input_box;
    Hyperbox dist_box;

    /// Optional analytic Jacobians of `step` with respect to (x, u).
    JacobianFn step_jacobian;
    /// Optional closed-form steady state (x_s, u_s) for an output y_s.
    SteadyStateFn steady_state;
    /// Optional bounds of the steady outputs the plant can physically reach.
    std::optional<Hyperbox> output_box;

    void validate() const
    {
        if (n <= 0 || m <= 0 || p <= 0 || r < 0)
            throw DimensionError("PlantModel: non-positive dimension");
        if (!step || !output) throw DimensionError("PlantModel: step and output are required");
        if (state_box.dim() != n) throw DimensionError("PlantModel: state box dimension != n");
        if (input_box.dim() != m) throw DimensionError("PlantModel: input box dimension != m");
        if (dist_box.dim() != r) throw DimensionError("PlantModel: disturbance box dimension != r");
        if (output_box && output_box->dim() != p)
            throw DimensionError("PlantModel: output box dimension != p");
    }

    Vec zero_disturbance() const { return Vec::Zero(r); }
};

namespace detail {

inline double fd_step(double v) { return 1e-6 * std::max(1.0, std::abs(v)); }

inline void check_finite(const Vec& k, int stage)
{
    if (!k.allFinite())
        throw IntegrationError("rk4: non-finite derivative at stage k" + std::to_string(stage));
}

} // namespace detail

/// Classical RK4 over one sampling period, split into `substeps` equal steps.
/// The input and disturbance are held constant over the period.
template <typename Ode>
Vec rk4_step(const Ode& ode, const Vec& x, const Vec& u, const Vec& w, double Ts, int substeps = 1)
{
    if (!(Ts > 0.0)) throw IntegrationError("rk4: sampling time must be positive");
    if (substeps < 1) throw IntegrationError("rk4: substeps must be >= 1");
    const double h = Ts / substeps;
    Vec xk = x;
    for (int s = 0; s < substeps; ++s) {
        const Vec k1 = ode(xk, u, w);
        detail::check_finite(k1, 1);
        const Vec k2 = ode(xk + 0.5 * h * k1, u, w);
        detail::check_finite(k2, 2);
        const Vec k3 = ode(xk + 0.5 * h * k2, u, w);
        detail::check_finite(k3, 3);
        const Vec k4 = ode(xk + h * k3, u, w);
        detail::check_finite(k4, 4);
        xk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return xk;
}

/// RK4 step together with its exact Jacobians d x+/dx and d x+/du, obtained by
/// differentiating the stage recursion. `ode_jac(x, u, w, Jx, Ju)` supplies the
/// vector-field Jacobians.
template <typename Ode, typename OdeJac>
Vec rk4_step_jacobian(const Ode& ode, const OdeJac& ode_jac, const Vec& x, const Vec& u,
                      const Vec& w, double Ts, int substeps, Mat& A, Mat& B)
{
    const auto n = x.size();
    const auto m = u.size();
    const double h = Ts / substeps;
    Vec xk = x;
    A = Mat::Identity(n, n);
    B = Mat::Zero(n, m);
    Mat Jx(n, n), Ju(n, m);
    for (int s = 0; s < substeps; ++s) {
        const Vec k1 = ode(xk, u, w);
        ode_jac(xk, u, w, Jx, Ju);
        const Mat k1x = Jx * A, k1u = Jx * B + Ju;

        const Vec x2 = xk + 0.5 * h * k1;
        const Vec k2 = ode(x2, u, w);
        ode_jac(x2, u, w, Jx, Ju);
        const Mat k2x = Jx * (A + 0.5 * h * k1x), k2u = Jx * (B + 0.5 * h * k1u) + Ju;

        const Vec x3 = xk + 0.5 * h * k2;
        const Vec k3 = ode(x3, u, w);
        ode_jac(x3, u, w, Jx, Ju);
        const Mat k3x = Jx * (A + 0.5 * h * k2x), k3u = Jx * (B + 0.5 * h * k2u) + Ju;

        const Vec x4 = xk + h * k3;
        const Vec k4 = ode(x4, u, w);
        ode_jac(x4, u, w, Jx, Ju);
        const Mat k4x = Jx * (A + h * k3x), k4u = Jx * (B + h * k3u) + Ju;

        xk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        A += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        B += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    }
    return xk;
}

/// Jacobians (A, B) of the discrete step at (x, u, w). Analytic when the model
/// provides them, central differences otherwise.
inline void step_jacobians(const PlantModel& model, const Vec& x, const Vec& u, const Vec& w,
                           Mat& A, Mat& B)
{
    if (model.step_jacobian) {
        model.step_jacobian(x, u, w, A, B);
        return;
    }
    A.resize(model.n, model.n);
    B.resize(model.n, model.m);
    Vec xp = x, xm = x;
    for (int i = 0; i < model.n; ++i) {
        const double h = detail::fd_step(x[i]);
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        A.col(i) = (model.step(xp, u, w) - model.step(xm, u, w)) / (2 * h);
        xp[i] = xm[i] = x[i];
    }
    Vec up = u, um = u;
    for (int i = 0; i < model.m; ++i) {
        const double h = detail::fd_step(u[i]);
        up[i] = u[i] + h;
        um[i] = u[i] - h;
        B.col(i) = (model.step(x, up, w) - model.step(x, um, w)) / (2 * h);
        up[i] = um[i] = u[i];
    }
}

/// Output Jacobians (C, D) by central differences.
inline void output_jacobians(const PlantModel& model, const Vec& x, const Vec& u, Mat& C, Mat& D)
{
    C.resize(model.p, model.n);
    D.resize(model.p, model.m);
    Vec xp = x, xm = x;
    for (int i = 0; i < model.n; ++i) {
        const double h = detail::fd_step(x[i]);
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        C.col(i) = (model.output(xp, u) - model.output(xm, u)) / (2 * h);
        xp[i] = xm[i] = x[i];
    }
    Vec up = u, um = u;
    for (int i = 0; i < model.m; ++i) {
        const double h = detail::fd_step(u[i]);
        up[i] = u[i] + h;
        um[i] = u[i] - h;
        D.col(i) = (model.output(x, up) - model.output(x, um)) / (2 * h);
        up[i] = um[i] = u[i];
    }
}

/// Linear time-invariant plant x+ = A x + B u + E w, y = C x + D u.
inline PlantModel linear_model(const Mat& A, const Mat& B, const Mat& E, const Mat& C, const Mat& D,
                               Hyperbox state_box, Hyperbox input_box, Hyperbox dist_box)
{
    PlantModel model;
    model.n = static_cast<int>(A.rows());
    model.m = static_cast<int>(B.cols());
    model.p = static_cast<int>(C.rows());
    model.r = static_cast<int>(E.cols());
    model.step = [A, B, E](const Vec& x, const Vec& u, const Vec& w) -> Vec {
        return A * x + B * u + E * w;
    };
    model.output = [C, D](const Vec& x, const Vec& u) -> Vec { return C * x + D * u; };
    model.step_jacobian = [A, B](const Vec&, const Vec&, const Vec&, Mat& Ao, Mat& Bo) {
        Ao = A;
        Bo = B;
    };
    model.state_box = std::move(state_box);
    model.input_box = std::move(input_box);
    model.dist_box = std::move(dist_box);
    model.validate();
    return model;
}

} // namespace tmpc
