#pragma once

#include <random>
#include <tuple>
#include <vector>

#include "linalg.hpp"
#include "model.hpp"

namespace tmpc {

struct EquilibriumOptions {
    double eps = 1e-6;          // margin of the Z-hat interior check
    double residual_tol = 1e-10;
    int max_newton_iter = 100;
};

namespace detail {

inline Vec steady_residual(const PlantModel& model, const Vec& x, const Vec& u, const Vec& y)
{
    Vec res(model.n + model.p);
    res << model.step(x, u, model.zero_disturbance()) - x, model.output(x, u) - y;
    return res;
}

inline void fd_step_jacobians(const PlantModel& model, const Vec& x, const Vec& u, Mat& A, Mat& B)
{
    PlantModel fd = model;
    fd.step_jacobian = nullptr;
    step_jacobians(fd, x, u, model.zero_disturbance(), A, B);
}

inline std::pair<Vec, Vec> newton_steady_state(const PlantModel& model, const Vec& y,
                                               const EquilibriumOptions& opt)
{
    if (model.m != model.p)
        throw DimensionError("solve_equilibrium: Newton path needs as many inputs as outputs");
    const int n = model.n, m = model.m;
    Vec x = model.state_box.center();
    Vec u = model.input_box.center();
    Vec res = steady_residual(model, x, u, y);
    Mat A, B, C, D;
    for (int it = 0; it < opt.max_newton_iter; ++it) {
        if (res.lpNorm<Eigen::Infinity>() <= 0.01 * opt.residual_tol) return {x, u};
        detail::fd_step_jacobians(model, x, u, A, B);
        output_jacobians(model, x, u, C, D);
        Mat Jac(n + m, n + m);
        Jac << A - Mat::Identity(n, n), B, C, D;
        const Vec dz = Jac.fullPivLu().solve(-res);
        if (!dz.allFinite()) break;
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
            const Vec xn = x + alpha * dz.head(n);
            const Vec un = u + alpha * dz.tail(m);
            try {
                const Vec rn = steady_residual(model, xn, un, y);
                if (rn.allFinite() && rn.norm() < (1.0 - 1e-4 * alpha) * res.norm()) {
                    x = xn;
                    u = un;
                    res = rn;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                // outside the model domain; shorten the step
            }
        }
        if (!accepted) break;
    }
    if (res.lpNorm<Eigen::Infinity>() <= opt.residual_tol) return {x, u};
    throw NoEquilibriumError("solve_equilibrium: Newton did not converge for the requested output");
}

} // namespace detail

/// Steady state (x_s, u_s) with f(x_s, u_s, 0) = x_s and h(x_s, u_s) = y_s.
/// Uses the model's closed form when available and Newton otherwise. With
/// `check_interior` the pair must lie in the constraint boxes shrunk by eps.
inline std::pair<Vec, Vec> solve_equilibrium(const PlantModel& model, const Vec& y_s,
                                             const EquilibriumOptions& opt = {},
                                             bool check_interior = true)
{
    if (y_s.size() != model.p) throw DimensionError("solve_equilibrium: output dimension");
    if (model.output_box && !model.output_box->contains(y_s))
        throw NoEquilibriumError("solve_equilibrium: output outside the achievable steady range");
    auto [x, u] = model.steady_state ? model.steady_state(y_s) : detail::newton_steady_state(model, y_s, opt);
    const Vec res = detail::steady_residual(model, x, u, y_s);
    if (!(res.lpNorm<Eigen::Infinity>() <= opt.residual_tol))
        throw NoEquilibriumError("solve_equilibrium: residual above tolerance");
    if (check_interior) {
        const Vec ex = Vec::Constant(model.n, opt.eps);
        const Vec eu = Vec::Constant(model.m, opt.eps);
        if (model.state_box.shrink_is_empty(ex) || model.input_box.shrink_is_empty(eu) ||
            !model.state_box.shrink(ex).contains(x) || !model.input_box.shrink(eu).contains(u))
            throw InfeasibleEquilibriumError("solve_equilibrium: equilibrium violates the constraint margin");
    }
    return {std::move(x), std::move(u)};
}

/// Steady-state maps g_x, g_u, g_v of an output setpoint under the affine
/// policy (g_v = g_u). Evaluation does not enforce the interior margin so the
/// maps can be differentiated on the boundary of a setpoint region.
class EquilibriumMaps {
public:
    explicit EquilibriumMaps(PlantModel model, EquilibriumOptions opt = {})
        : model_(std::move(model)), opt_(opt)
    {
    }

    std::pair<Vec, Vec> steady(const Vec& y) const { return solve_equilibrium(model_, y, opt_, false); }
    Vec state(const Vec& y) const { return steady(y).first; }
    Vec input(const Vec& y) const { return steady(y).second; }
    Vec policy_input(const Vec& y) const { return input(y); }

    /// Central-difference Jacobians dg_x/dy and dg_v/dy.
    void jacobians(const Vec& y, Mat& Gx, Mat& Gv) const
    {
        Gx.resize(model_.n, model_.p);
        Gv.resize(model_.m, model_.p);
        Vec yp = y, ym = y;
        for (int i = 0; i < model_.p; ++i) {
            const double h = detail::fd_step(y[i]);
            yp[i] = y[i] + h;
            ym[i] = y[i] - h;
            const auto [xp, up] = steady(yp);
            const auto [xm, um] = steady(ym);
            Gx.col(i) = (xp - xm) / (2 * h);
            Gv.col(i) = (up - um) / (2 * h);
            yp[i] = ym[i] = y[i];
        }
    }

    const PlantModel& model() const { return model_; }
    const EquilibriumOptions& options() const { return opt_; }

    double L_g = 0.0; // Lipschitz constant of g_x over the setpoint region

private:
    PlantModel model_;
    EquilibriumOptions opt_;
};

struct Assumption3Report {
    bool ok = true;
    double min_singular_value = std::numeric_limits<double>::infinity();
    double min_abs_det = std::numeric_limits<double>::infinity();
    std::vector<Vec> offending;
};

/// Nonsingularity of [(A - I) B; C D] at the equilibria of the given outputs,
/// Jacobians by central differences.
inline Assumption3Report check_assumption3(const PlantModel& model, const std::vector<Vec>& y_grid,
                                           double singular_tol = 1e-8)
{
    Assumption3Report rep;
    Mat A, B, C, D;
    for (const Vec& y : y_grid) {
        Vec x, u;
        try {
            std::tie(x, u) = solve_equilibrium(model, y, {}, false);
        } catch (const Error&) {
            rep.ok = false;
            rep.offending.push_back(y);
            continue;
        }
        detail::fd_step_jacobians(model, x, u, A, B);
        output_jacobians(model, x, u, C, D);
        Mat M(model.n + model.p, model.n + model.m);
        M << A - Mat::Identity(model.n, model.n), B, C, D;
        Eigen::JacobiSVD<Mat> svd(M);
        const double smin = svd.singularValues().minCoeff();
        const double det = M.rows() == M.cols() ? std::abs(M.determinant()) : 0.0;
        rep.min_singular_value = std::min(rep.min_singular_value, smin);
        rep.min_abs_det = std::min(rep.min_abs_det, det);
        if (!(smin >= singular_tol) || M.rows() != M.cols()) {
            rep.ok = false;
            rep.offending.push_back(y);
        }
    }
    return rep;
}

} // namespace tmpc
