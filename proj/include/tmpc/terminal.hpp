#pragma once

#include <random>
#include <sstream>
#include <vector>

#include "linalg.hpp"
#include "policy.hpp"
#include "setpoints.hpp"

namespace tmpc {

/// Terminal cost V_f(e) = e'Pe, terminal gain K and level rho of the terminal
/// set {V_f <= rho}. Omega = {V_f <= rho_omega} is the enlarged set used for
/// the invariance checks.
struct TerminalIngredients {
    Mat K;
    Mat P;
    double rho = 0.0;
    double zeta = 0.95;
    double alpha_f_bar = 0.0; // lambda_max(P)
    double rho_omega = 0.0;
    double mu_F = 0.0;        // largest P-norm over the vertices of F(N - 1)

    void set_P(const Mat& p)
    {
        P = symmetrize(p);
        if (!is_positive_definite(P)) throw DomainError("terminal: P is not positive definite");
        alpha_f_bar = max_eigenvalue(P);
    }

    double cost(const Vec& e) const { return e.dot(P * e); }
};

/// Linearization of the plant at the equilibrium of one setpoint.
struct VertexModel {
    Vec y_s;
    Mat A;
    Mat B;
};

inline std::vector<VertexModel> vertex_linearizations(const EquilibriumMaps& maps, const std::vector<Vec>& setpoints)
{
    std::vector<VertexModel> out;
    for (const Vec& y : setpoints) {
        const auto [x, u] = maps.steady(y);
        VertexModel vm{y, {}, {}};
        detail::fd_step_jacobians(maps.model(), x, u, vm.A, vm.B);
        out.push_back(std::move(vm));
    }
    return out;
}

struct VertexReport {
    double max_lyapunov_eig = -std::numeric_limits<double>::infinity(); // of A_K'PA_K - P + Q + K'RK
    double max_contraction = 0.0;                                       // max gen. eig of (A_K'PA_K, P)
    double max_spectral_radius = 0.0;
    std::size_t worst_vertex = 0;
    bool lyapunov_ok = false;
    bool contraction_ok = false;
};

inline VertexReport check_vertices(const Mat& K, const Mat& P, const Mat& Q, const Mat& R,
                                   const std::vector<VertexModel>& vertices, double zeta, double tol = 1e-9)
{
    VertexReport rep;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Mat AK = vertices[i].A + vertices[i].B * K;
        const Mat M = AK.transpose() * P * AK;
        const double ly = max_eigenvalue(M - P + Q + K.transpose() * R * K);
        if (ly > rep.max_lyapunov_eig) {
            rep.max_lyapunov_eig = ly;
            rep.worst_vertex = i;
        }
        rep.max_contraction = std::max(rep.max_contraction, max_generalized_eigenvalue(M, P));
        rep.max_spectral_radius = std::max(rep.max_spectral_radius, spectral_radius(AK));
    }
    rep.lyapunov_ok = rep.max_lyapunov_eig <= tol * std::max(1.0, max_eigenvalue(P));
    rep.contraction_ok = rep.max_contraction <= zeta;
    return rep;
}

/// Smallest c with c (P - A_K'PA_K) >= Q + K'RK at every vertex, times a
/// safety factor; infinity when P does not contract at some vertex.
inline double lyapunov_scaling(const Mat& K, const Mat& P, const Mat& Q, const Mat& R,
                               const std::vector<VertexModel>& vertices, double safety = 1.0)
{
    double c = 0.0;
    for (const auto& v : vertices) {
        const Mat AK = v.A + v.B * K;
        const Mat D = symmetrize(P - AK.transpose() * P * AK);
        if (!is_positive_definite(D)) return std::numeric_limits<double>::infinity();
        c = std::max(c, max_generalized_eigenvalue(Q + K.transpose() * R * K, D));
    }
    return safety * c;
}

/// DARE at the central setpoint, checked at every vertex; Q is scaled up on
/// failure (at most max_retries times).
inline TerminalIngredients synthesize_gain(const EquilibriumMaps& maps, const std::vector<Vec>& vertex_setpoints,
                                           const Mat& Q, const Mat& R, double zeta_target, int max_retries = 10,
                                           double q_growth = 2.0)
{
    if (vertex_setpoints.empty()) throw SynthesisFailedError("synthesize_gain: no vertex setpoints");
    Vec center = Vec::Zero(vertex_setpoints.front().size());
    for (const Vec& y : vertex_setpoints) center += y;
    center /= static_cast<double>(vertex_setpoints.size());
    const auto central = vertex_linearizations(maps, {center}).front();
    const auto vertices = vertex_linearizations(maps, vertex_setpoints);

    std::ostringstream log;
    double scale = 1.0;
    for (int attempt = 0; attempt <= max_retries; ++attempt, scale *= q_growth) {
        const auto dare = solve_dare(central.A, central.B, scale * Q, R);
        if (!dare.converged) {
            log << " attempt " << attempt << ": Riccati iteration did not converge;";
            continue;
        }
        const auto rep = check_vertices(dare.K, dare.P, Q, R, vertices, zeta_target);
        if (rep.lyapunov_ok && rep.contraction_ok) {
            TerminalIngredients ti;
            ti.K = dare.K;
            ti.set_P(dare.P);
            ti.zeta = zeta_target;
            return ti;
        }
        log << " attempt " << attempt << ": worst vertex " << rep.worst_vertex << " Lyapunov eig "
            << rep.max_lyapunov_eig << ", contraction " << rep.max_contraction << ";";
    }
    throw SynthesisFailedError("synthesize_gain: no certified gain;" + log.str());
}

namespace detail {

// Point e with e'Pe = level * t^2 along a uniformly random direction.
inline Vec ellipsoid_point(const Mat& Uinv, double level, double t, std::mt19937_64& rng)
{
    std::normal_distribution<double> N(0.0, 1.0);
    Vec s(Uinv.rows());
    do {
        for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = N(rng);
    } while (s.norm() < 1e-12);
    s.normalize();
    return Uinv * (std::sqrt(level) * t * s);
}

// Half of the samples on the level-set boundary, the rest uniform inside.
inline std::vector<Vec> level_set_samples(const Mat& P, double level, std::size_t count, std::mt19937_64& rng)
{
    const Mat U = cholesky_upper(P);
    const Mat Uinv = U.inverse();
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    const double n = static_cast<double>(P.rows());
    std::vector<Vec> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = k % 2 == 0 ? 1.0 : std::pow(U01(rng), 1.0 / n);
        out.push_back(ellipsoid_point(Uinv, level, t, rng));
    }
    return out;
}

} // namespace detail

struct DecreaseReport {
    double max_decrement = -std::numeric_limits<double>::infinity();
    Vec worst_y_s;
    Vec worst_x;
    std::size_t samples = 0;
    std::size_t domain_failures = 0;
    bool pass = false;
};

/// max over samples x in {V_f(x - x_s) <= level} of
/// V_f(f(x, K(x - x_s) + v_s, 0) - x_s) - V_f(x - x_s) + l(x - x_s, 0).
inline DecreaseReport verify_lyapunov_decrease(const EquilibriumMaps& maps, const TerminalIngredients& ti,
                                               const Mat& Q, const Mat& R, const std::vector<Vec>& setpoints,
                                               std::size_t total_samples, double level, std::uint64_t seed,
                                               double tol = 1e-8)
{
    (void)R; // v - v_s vanishes under the terminal input v_f = g_v
    const PlantModel& model = maps.model();
    const AffinePolicy pol{ti.K};
    std::mt19937_64 rng(seed);
    DecreaseReport rep;
    const std::size_t per = std::max<std::size_t>(1, total_samples / std::max<std::size_t>(1, setpoints.size()));
    const Vec w0 = model.zero_disturbance();
    for (const Vec& y : setpoints) {
        const auto [xs, vs] = maps.steady(y);
        auto samples = detail::level_set_samples(ti.P, level, per, rng);
        samples.front().setZero(); // the equilibrium itself
        for (const Vec& e : samples) {
            const Vec x = xs + e;
            ++rep.samples;
            try {
                const Vec xn = model.step(x, pol.apply(xs, x, vs), w0);
                const double dec = ti.cost(xn - xs) - ti.cost(e) + e.dot(Q * e);
                if (dec > rep.max_decrement) {
                    rep.max_decrement = dec;
                    rep.worst_y_s = y;
                    rep.worst_x = x;
                }
            } catch (const Error&) {
                ++rep.domain_failures;
            }
        }
    }
    rep.pass = rep.domain_failures == 0 && rep.max_decrement <= tol;
    return rep;
}

struct TerminalSizingOptions {
    std::size_t samples_per_setpoint = 400; // item (c) samples in Omega
    int setpoint_grid = 5;                  // grid density over Y_t (plus its vertices)
    double rho_min = 1e-6;
    double shrink = 0.8;                    // geometric search factor from the top
    int bisection_steps = 30;
    std::uint64_t seed = 11;
};

struct TerminalSizing {
    double rho = 0.0;
    double rho_max = 0.0;  // analytic bound from the stage-N containment
    double rho_omega = 0.0;
    double mu_F = 0.0;
    int trials = 0;
    std::string last_failure;
};

namespace detail {

// Largest P-norm over the vertices of a symmetric box.
inline double box_p_norm(const Mat& P, const Vec& half_width)
{
    const auto n = half_width.size();
    double best = 0.0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? half_width[i] : -half_width[i];
        best = std::max(best, std::sqrt(v.dot(P * v)));
    }
    return best;
}

} // namespace detail

/// Checks the terminal-set conditions for a level rho on the sampled setpoints.
/// Returns an empty string on success, otherwise the first failed condition.
inline std::string check_terminal_level(const EquilibriumMaps& maps, const TerminalIngredients& ti,
                                        const TightenedConstraints& tc, const TubeSystem& tubes,
                                        const std::vector<Vec>& setpoints, double rho,
                                        const TerminalSizingOptions& opt, double* rho_omega_out = nullptr)
{
    const int N = tubes.horizon;
    const Mat Pinv = ti.P.inverse();
    const double mu = detail::box_p_norm(ti.P, tubes.c.col(N - 1));
    const double rho_omega = std::pow(std::sqrt(rho) + mu, 2);
    if (rho_omega_out) *rho_omega_out = rho_omega;
    const auto sN = static_cast<size_t>(N), sN1 = static_cast<size_t>(N - 1);
    const AffinePolicy pol{ti.K};
    const PlantModel& model = maps.model();
    std::mt19937_64 rng(opt.seed);
    for (const Vec& y : setpoints) {
        const auto [xs, vs] = maps.steady(y);
        std::ostringstream at;
        at << " at y_s = (" << y.transpose() << ")";
        if (detail::level_limit(Pinv, ti.K, xs, vs, tc.state_boxes[sN], tc.input_boxes[sN]) < rho)
            return "terminal set leaves the stage-N constraints" + at.str();
        if (detail::level_limit(Pinv, ti.K, xs, vs, tc.state_boxes[sN1], tc.input_boxes[sN1]) < rho_omega)
            return "enlarged set leaves the stage-(N-1) constraints" + at.str();
        for (const Vec& e : detail::level_set_samples(ti.P, rho_omega, opt.samples_per_setpoint, rng)) {
            const Vec x = xs + e;
            Vec xn;
            try {
                xn = model.step(x, pol.apply(xs, x, vs), model.zero_disturbance());
            } catch (const Error& err) {
                return std::string("plant evaluation failed in the enlarged set") + at.str() + ": " + err.what();
            }
            if (ti.cost(xn - xs) > rho) return "one-step image of the enlarged set leaves the terminal set" + at.str();
        }
    }
    return {};
}

/// Largest-first search for a terminal level: geometric decrease from the
/// analytic containment bound until all conditions hold, then bisection
/// against the last failing level.
inline TerminalSizing size_terminal_level(const EquilibriumMaps& maps, const TerminalIngredients& ti,
                                          const TightenedConstraints& tc, const TubeSystem& tubes,
                                          const SetpointRegion& region, const TerminalSizingOptions& opt = {})
{
    if (tubes.horizon < 1 || tc.horizon() < tubes.horizon) throw DimensionError("size_terminal_level: bad horizon");
    auto setpoints = region_grid(region, opt.setpoint_grid);
    for (const Vec& v : region.polytope.vertices) setpoints.push_back(v);

    TerminalSizing out;
    out.mu_F = detail::box_p_norm(ti.P, tubes.c.col(tubes.horizon - 1));
    const Mat Pinv = ti.P.inverse();
    const auto sN = static_cast<size_t>(tubes.horizon);
    double hi = std::numeric_limits<double>::infinity();
    for (const Vec& y : setpoints) {
        const auto [xs, vs] = maps.steady(y);
        hi = std::min(hi, detail::level_limit(Pinv, ti.K, xs, vs, tc.state_boxes[sN], tc.input_boxes[sN]));
    }
    out.rho_max = hi;
    if (!(hi > opt.rho_min)) throw TerminalDesignError("size_terminal_level: stage-N constraints leave no room");

    double fail = -1.0, ok = -1.0;
    for (double rho = hi; rho > opt.rho_min; rho *= opt.shrink) {
        ++out.trials;
        const auto why = check_terminal_level(maps, ti, tc, tubes, setpoints, rho, opt);
        if (why.empty()) {
            ok = rho;
            break;
        }
        out.last_failure = why;
        fail = rho;
    }
    if (ok < 0) throw TerminalDesignError("size_terminal_level: no level passes; last failure: " + out.last_failure);
    if (fail > 0) {
        for (int s = 0; s < opt.bisection_steps; ++s) {
            const double mid = 0.5 * (ok + fail);
            ++out.trials;
            (check_terminal_level(maps, ti, tc, tubes, setpoints, mid, opt).empty() ? ok : fail) = mid;
        }
    }
    out.rho = ok;
    check_terminal_level(maps, ti, tc, tubes, setpoints, ok, opt, &out.rho_omega);
    return out;
}

struct Assumption9Report {
    double b1 = 0.0;
    double b2 = 0.0;
    bool pass = false;
};

/// b1 = b2 = lambda_min(T) / (4 alpha_f_bar L_g^2) for quadratic offset and
/// terminal bounds.
inline Assumption9Report check_assumption9(const Mat& T, double alpha_f_bar, double L_g)
{
    Assumption9Report rep;
    const double lam = std::max(0.0, min_eigenvalue(T));
    if (!(alpha_f_bar > 0) || !(L_g > 0)) throw DomainError("check_assumption9: alpha_f and L_g must be positive");
    rep.b1 = rep.b2 = lam / (4.0 * alpha_f_bar * L_g * L_g);
    rep.pass = rep.b1 > 0;
    return rep;
}

} // namespace tmpc
