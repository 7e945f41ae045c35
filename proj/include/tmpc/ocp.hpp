#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qp.hpp"
#include "setpoints.hpp"
#include "terminal.hpp"
#include "tubes.hpp"

namespace tmpc {

struct SolverOptions {
    int max_iter = 100;
    double stationarity_tol = 1e-6;
    double feasibility_tol = 1e-8;
    double constraint_backoff = 1e-10; // linearized constraints aim slightly inside
    double initial_radius = 0.25;       // trust region, fraction of each variable's box width
    double max_radius = 1.0;
    double min_radius = 1e-12;
    double hessian_reg = 1e-10;
};

/// Finite-horizon tracking problem with an artificial reference y_s. The
/// decision vector is z = (v_0, ..., v_{N-1}, y_s).
struct TrackingProblem {
    EquilibriumMaps maps;
    TubeSystem tubes;
    TightenedConstraints constraints;
    TerminalIngredients terminal;
    SetpointRegion region;
    int N = 0;
    Mat Q, R, T;
    SolverOptions solver;

    const PlantModel& model() const { return maps.model(); }
    int n() const { return model().n; }
    int m() const { return model().m; }
    int p() const { return model().p; }
    int nz() const { return m() * N + p(); }
    AffinePolicy policy() const { return {terminal.K}; }

    void validate() const
    {
        if (N < 1) throw DimensionError("TrackingProblem: horizon must be >= 1");
        if (constraints.horizon() < N || tubes.horizon < N)
            throw DimensionError("TrackingProblem: tube sequences shorter than the horizon");
        if (Q.rows() != n() || R.rows() != m() || T.rows() != p())
            throw DimensionError("TrackingProblem: weight dimensions");
        if (terminal.K.rows() != m() || terminal.K.cols() != n() || terminal.P.rows() != n())
            throw DimensionError("TrackingProblem: terminal ingredient dimensions");
        if (!is_positive_definite(R) || !is_positive_definite(T))
            throw DomainError("TrackingProblem: R and T must be positive definite");
        if (min_eigenvalue(Q) < 0) throw DomainError("TrackingProblem: Q must be positive semidefinite");
    }

    Vec pack(const Mat& v_seq, const Vec& y_s) const
    {
        Vec z(nz());
        for (int j = 0; j < N; ++j) z.segment(j * m(), m()) = v_seq.col(j);
        z.tail(p()) = y_s;
        return z;
    }

    Mat unpack_v(const Vec& z) const
    {
        Mat v(m(), N);
        for (int j = 0; j < N; ++j) v.col(j) = z.segment(j * m(), m());
        return v;
    }
};

enum class SolveStatus { optimal, max_iter, fallback_candidate };

inline const char* to_string(SolveStatus s)
{
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::fallback_candidate: return "fallback-candidate";
    }
    return "?";
}

struct Solution {
    Mat v_seq;            // m x N
    Vec y_s;
    Vec x_s;
    Vec v_s;
    double cost = 0.0;
    SolveStatus status = SolveStatus::optimal;
    double kkt_residual = 0.0;
    Mat predicted_states; // (N + 1) x n
    int iterations = 0;
    double max_violation = 0.0; // of the tightened constraints, <= 0 when feasible
};

namespace detail {

// Square-root factor U with U'U = S for S >= 0.
inline Mat sqrt_factor(const Mat& S)
{
    Eigen::LLT<Mat> llt(symmetrize(S));
    if (llt.info() == Eigen::Success) return llt.matrixU();
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S));
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

struct Rollout {
    std::vector<Vec> x;       // N + 1 states
    std::vector<Vec> u;       // N inputs
    std::vector<Mat> A, B;    // step Jacobians along the trajectory
    Vec x_s, v_s;
    Mat Gx, Gv;
};

inline Rollout rollout(const TrackingProblem& pb, const Vec& x0, const Vec& z, bool jacobians)
{
    Rollout ro;
    const int m = pb.m();
    const Vec y = z.tail(pb.p());
    std::tie(ro.x_s, ro.v_s) = pb.maps.steady(y);
    if (jacobians) pb.maps.jacobians(y, ro.Gx, ro.Gv);
    const Mat& K = pb.terminal.K;
    const Vec w0 = pb.model().zero_disturbance();
    ro.x.push_back(x0);
    for (int j = 0; j < pb.N; ++j) {
        const Vec& xj = ro.x.back();
        ro.u.push_back(K * (xj - ro.x_s) + z.segment(j * m, m));
        if (jacobians) {
            Mat A, B;
            step_jacobians(pb.model(), xj, ro.u.back(), w0, A, B);
            ro.A.push_back(std::move(A));
            ro.B.push_back(std::move(B));
        }
        ro.x.push_back(pb.model().step(xj, ro.u.back(), w0));
    }
    return ro;
}

inline double cost_of(const TrackingProblem& pb, const Rollout& ro, const Vec& z, const Vec& y_t)
{
    const int m = pb.m();
    double c = 0.0;
    for (int j = 0; j < pb.N; ++j) {
        const Vec e = ro.x[static_cast<size_t>(j)] - ro.x_s;
        const Vec dv = z.segment(j * m, m) - ro.v_s;
        c += e.dot(pb.Q * e) + dv.dot(pb.R * dv);
    }
    const Vec eN = ro.x.back() - ro.x_s;
    const Vec dy = z.tail(pb.p()) - y_t;
    return c + pb.terminal.cost(eN) + dy.dot(pb.T * dy);
}

// Inequality constraints g(z) <= 0 with their Jacobian. Row order: inputs at
// every stage (upper then lower), states at stages 1..N-1, terminal level,
// setpoint half-planes.
struct ConstraintEval {
    Vec g;
    Mat J;
    // Terminal error in whitened coordinates, te = U e_N, and d te / dz.
    int terminal_row = -1;
    Vec te;
    Mat TE;
};

inline int constraint_count(const TrackingProblem& pb)
{
    return 2 * pb.m() * pb.N + 2 * pb.n() * (pb.N - 1) + 1 + static_cast<int>(pb.region.polytope.A.rows());
}

inline ConstraintEval constraints_of(const TrackingProblem& pb, const Rollout& ro, const Vec& z,
                                     const std::vector<Mat>* S)
{
    const int n = pb.n(), m = pb.m(), p = pb.p(), N = pb.N, nz = pb.nz();
    const int nc = constraint_count(pb);
    ConstraintEval ce;
    ce.g.resize(nc);
    if (S) ce.J = Mat::Zero(nc, nz);
    const Mat& K = pb.terminal.K;
    int row = 0;
    for (int j = 0; j < N; ++j) {
        const auto sj = static_cast<size_t>(j);
        const Hyperbox& U = pb.constraints.input_boxes[sj];
        const Vec& u = ro.u[sj];
        Mat du;
        if (S) {
            du = K * (*S)[sj];
            du.middleCols(j * m, m) += Mat::Identity(m, m);
            du.rightCols(p) -= K * ro.Gx;
        }
        for (int b = 0; b < m; ++b) {
            ce.g[row] = u[b] - U.upper()[b];
            if (S) ce.J.row(row) = du.row(b);
            ++row;
            ce.g[row] = U.lower()[b] - u[b];
            if (S) ce.J.row(row) = -du.row(b);
            ++row;
        }
    }
    for (int j = 1; j < N; ++j) {
        const auto sj = static_cast<size_t>(j);
        const Hyperbox& X = pb.constraints.state_boxes[sj];
        const Vec& x = ro.x[sj];
        for (int i = 0; i < n; ++i) {
            ce.g[row] = x[i] - X.upper()[i];
            if (S) ce.J.row(row) = (*S)[sj].row(i);
            ++row;
            ce.g[row] = X.lower()[i] - x[i];
            if (S) ce.J.row(row) = -(*S)[sj].row(i);
            ++row;
        }
    }
    // Terminal level in norm form ||U e|| <= sqrt(rho), U'U = P: same set,
    // better conditioned linearization far from the ellipsoid.
    const Vec eN = ro.x.back() - ro.x_s;
    const double nrm = std::sqrt(pb.terminal.cost(eN));
    ce.g[row] = nrm - std::sqrt(pb.terminal.rho);
    ce.terminal_row = row;
    if (S) {
        Mat de = (*S)[static_cast<size_t>(N)];
        de.rightCols(p) -= ro.Gx;
        if (nrm > 0.0) ce.J.row(row) = (pb.terminal.P * eN).transpose() * de / nrm;
        const Mat Up = sqrt_factor(pb.terminal.P);
        ce.te = Up * eN;
        ce.TE = Up * de;
    }
    ++row;
    const Polytope& Y = pb.region.polytope;
    const Vec y = z.tail(p);
    for (Eigen::Index k = 0; k < Y.A.rows(); ++k) {
        ce.g[row] = Y.A.row(k).dot(y) - Y.b[k];
        if (S) ce.J.row(row).tail(p) = Y.A.row(k);
        ++row;
    }
    return ce;
}

// State sensitivities S_j = d x_j / d z along the rollout.
inline std::vector<Mat> sensitivities(const TrackingProblem& pb, const Rollout& ro)
{
    const int n = pb.n(), m = pb.m(), p = pb.p(), nz = pb.nz();
    const Mat& K = pb.terminal.K;
    std::vector<Mat> S{Mat::Zero(n, nz)};
    for (int j = 0; j < pb.N; ++j) {
        const auto sj = static_cast<size_t>(j);
        const Mat& A = ro.A[sj];
        const Mat& B = ro.B[sj];
        Mat next = (A + B * K) * S.back();
        next.middleCols(j * m, m) += B;
        next.rightCols(p) -= B * K * ro.Gx;
        S.push_back(std::move(next));
    }
    return S;
}

// Stacked residual r with cost = r'r, and its Jacobian.
inline void residuals(const TrackingProblem& pb, const Rollout& ro, const std::vector<Mat>& S, const Vec& z,
                      const Vec& y_t, const Mat& Uq, const Mat& Ur, const Mat& Up, const Mat& Ut, Vec& r, Mat& Jr)
{
    const int n = pb.n(), m = pb.m(), p = pb.p(), N = pb.N, nz = pb.nz();
    const int nr = N * (n + m) + n + p;
    r.resize(nr);
    Jr = Mat::Zero(nr, nz);
    int row = 0;
    for (int j = 0; j < N; ++j) {
        const auto sj = static_cast<size_t>(j);
        Mat de = S[sj];
        de.rightCols(p) -= ro.Gx;
        r.segment(row, n) = Uq * (ro.x[sj] - ro.x_s);
        Jr.middleRows(row, n) = Uq * de;
        row += n;
        Mat dv = Mat::Zero(m, nz);
        dv.middleCols(j * m, m) = Mat::Identity(m, m);
        dv.rightCols(p) -= ro.Gv;
        r.segment(row, m) = Ur * (z.segment(j * m, m) - ro.v_s);
        Jr.middleRows(row, m) = Ur * dv;
        row += m;
    }
    Mat de = S[static_cast<size_t>(N)];
    de.rightCols(p) -= ro.Gx;
    r.segment(row, n) = Up * (ro.x.back() - ro.x_s);
    Jr.middleRows(row, n) = Up * de;
    row += n;
    r.segment(row, p) = Ut * (z.tail(p) - y_t);
    Jr.block(row, nz - p, p, p) = Ut;
}

} // namespace detail

/// Cost of (v_seq, y_s) from x0 and its gradient with respect to z, the
/// latter by an adjoint sweep through the nominal rollout.
inline double evaluate_cost(const TrackingProblem& pb, const Vec& x0, const Vec& y_t, const Vec& z, Vec* grad = nullptr)
{
    detail::Rollout ro;
    try {
        ro = detail::rollout(pb, x0, z, grad != nullptr);
    } catch (const Error& e) {
        throw CostEvaluationError(std::string("evaluate_cost: rollout failed: ") + e.what());
    }
    const double c = detail::cost_of(pb, ro, z, y_t);
    if (!grad) return c;
    const int m = pb.m(), p = pb.p(), N = pb.N;
    const Mat& K = pb.terminal.K;
    grad->setZero(pb.nz());
    Vec lam = 2.0 * pb.terminal.P * (ro.x.back() - ro.x_s);
    Vec gx_s = -lam; // d cost / d x_s, accumulated
    Vec gv_s = Vec::Zero(m);
    for (int j = N - 1; j >= 0; --j) {
        const auto sj = static_cast<size_t>(j);
        const Vec e = ro.x[sj] - ro.x_s;
        const Vec dv = z.segment(j * m, m) - ro.v_s;
        const Vec BtL = ro.B[sj].transpose() * lam;
        grad->segment(j * m, m) = 2.0 * pb.R * dv + BtL;
        gv_s -= 2.0 * pb.R * dv;
        gx_s -= 2.0 * pb.Q * e + K.transpose() * BtL;
        lam = 2.0 * pb.Q * e + (ro.A[sj] + ro.B[sj] * K).transpose() * lam;
    }
    grad->tail(p) = ro.Gx.transpose() * gx_s + ro.Gv.transpose() * gv_s + 2.0 * pb.T * (z.tail(p) - y_t);
    return c;
}

/// Largest tightened-constraint value g_i(z) (<= 0 when feasible).
inline double constraint_violation(const TrackingProblem& pb, const Vec& x0, const Vec& z)
{
    try {
        const auto ro = detail::rollout(pb, x0, z, false);
        return detail::constraints_of(pb, ro, z, nullptr).g.maxCoeff();
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline Solution make_solution(const TrackingProblem& pb, const Vec& x0, const Vec& y_t, const Vec& z,
                              SolveStatus status, int iterations, double kkt)
{
    const auto ro = detail::rollout(pb, x0, z, false);
    Solution s;
    s.v_seq = pb.unpack_v(z);
    s.y_s = z.tail(pb.p());
    s.x_s = ro.x_s;
    s.v_s = ro.v_s;
    s.cost = detail::cost_of(pb, ro, z, y_t);
    s.status = status;
    s.kkt_residual = kkt;
    s.iterations = iterations;
    s.predicted_states.resize(pb.N + 1, pb.n());
    for (int j = 0; j <= pb.N; ++j) s.predicted_states.row(j) = ro.x[static_cast<size_t>(j)].transpose();
    s.max_violation = detail::constraints_of(pb, ro, z, nullptr).g.maxCoeff();
    return s;
}

/// Candidate for the successor problem: drop the first input, append the
/// terminal input g_v(y_s) and keep the reference.
inline Vec shift_candidate(const TrackingProblem& pb, const Solution& prev)
{
    Mat v(pb.m(), pb.N);
    for (int j = 0; j + 1 < pb.N; ++j) v.col(j) = prev.v_seq.col(j + 1);
    v.col(pb.N - 1) = pb.maps.policy_input(prev.y_s);
    return pb.pack(v, prev.y_s);
}

/// Initial guess: the steady input of the best admissible reference.
inline Vec steady_guess(const TrackingProblem& pb, const Vec& y_t)
{
    const Vec ys = best_setpoint(y_t, pb.region, pb.T);
    const Vec vs = pb.maps.policy_input(ys);
    return pb.pack(vs.replicate(1, pb.N), ys);
}

namespace detail {

struct SqpPoint {
    Rollout ro;
    std::vector<Mat> S;
    double cost = 0.0;
    Vec grad;
    Mat H;
    ConstraintEval ce;
};

inline std::optional<SqpPoint> linearize(const TrackingProblem& pb, const Vec& x0, const Vec& y_t, const Vec& z,
                                         const Mat& Uq, const Mat& Ur, const Mat& Up, const Mat& Ut)
{
    SqpPoint pt;
    try {
        pt.ro = rollout(pb, x0, z, true);
    } catch (const Error&) {
        return std::nullopt;
    }
    pt.S = sensitivities(pb, pt.ro);
    Vec r;
    Mat Jr;
    residuals(pb, pt.ro, pt.S, z, y_t, Uq, Ur, Up, Ut, r, Jr);
    pt.cost = r.squaredNorm();
    pt.grad = 2.0 * Jr.transpose() * r;
    pt.H = 2.0 * Jr.transpose() * Jr;
    pt.H += pb.solver.hessian_reg * std::max(1.0, pt.H.diagonal().maxCoeff()) * Mat::Identity(pb.nz(), pb.nz());
    pt.ce = constraints_of(pb, pt.ro, z, &pt.S);
    return pt;
}

// Cost and constraint values without derivatives; nullopt outside the domain.
inline std::optional<std::pair<double, Vec>> values_at(const TrackingProblem& pb, const Vec& x0, const Vec& y_t,
                                                       const Vec& z)
{
    try {
        const auto ro = rollout(pb, x0, z, false);
        return std::make_pair(cost_of(pb, ro, z, y_t), constraints_of(pb, ro, z, nullptr).g);
    } catch (const Error&) {
        return std::nullopt;
    }
}

} // namespace detail

namespace detail {

// Unit directions of the polyhedral outer approximation of the terminal ball
// used inside the QP: the current error direction, the axes, and the
// orthant diagonals when there are few of them.
inline std::vector<Vec> terminal_cut_directions(const Vec& te)
{
    const auto n = te.size();
    std::vector<Vec> dirs;
    if (te.norm() > 0.0) dirs.push_back(te.normalized());
    for (Eigen::Index i = 0; i < n; ++i) {
        dirs.push_back(Vec::Unit(n, i));
        dirs.push_back(-Vec::Unit(n, i));
    }
    if (n <= 6) {
        for (long mask = 0; mask < (1L << n); ++mask) {
            Vec d(n);
            for (Eigen::Index i = 0; i < n; ++i) d[i] = (mask >> i) & 1 ? 1.0 : -1.0;
            dirs.push_back(d / std::sqrt(static_cast<double>(n)));
        }
    }
    return dirs;
}

// Step of the l1 trust-region subproblem
//   min grad'd + d'Hd/2 + M sum(max(0, g + J d))  s.t. |d_i| <= delta_i,
// solved as a plain QP first and in elastic form when that is infeasible. The
// terminal row is replaced by tangent cuts of the whitened terminal ball.
struct TrStep {
    Vec d;
    Vec jtl;           // J' lambda over all linearized rows
    double lambda_max = 0.0;
    bool ok = false;

    // Model of the l1 merit; the terminal term uses the exact norm of the
    // linearized error.
    double model_merit(const SqpPoint& pt, double M, double sqrt_rho) const
    {
        Vec lin = pt.ce.g + pt.ce.J * d;
        lin[pt.ce.terminal_row] = (pt.ce.te + pt.ce.TE * d).norm() - sqrt_rho;
        return pt.cost + pt.grad.dot(d) + 0.5 * d.dot(pt.H * d) + M * lin.cwiseMax(0.0).sum();
    }
};

inline TrStep trust_region_step_with(const SqpPoint& pt, const Vec& delta, double M, double sqrt_rho, double backoff,
                                     const std::vector<Vec>& dirs)
{
    const auto nz = pt.grad.size();
    const auto n0 = pt.ce.g.size();
    const auto nc = n0 - 1 + static_cast<Eigen::Index>(dirs.size());
    Mat J(nc, nz);
    Vec g(nc);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < n0; ++i) {
        if (i == pt.ce.terminal_row) continue;
        J.row(row) = pt.ce.J.row(i);
        g[row++] = pt.ce.g[i];
    }
    for (const Vec& u : dirs) {
        J.row(row) = u.transpose() * pt.ce.TE;
        g[row++] = u.dot(pt.ce.te) - sqrt_rho;
    }

    TrStep st;
    Vec lambda;
    QuadraticProgram qp;
    qp.H = pt.H;
    qp.g = pt.grad;
    qp.A_in.resize(nc + 2 * nz, nz);
    qp.A_in << J, Mat::Identity(nz, nz), -Mat::Identity(nz, nz);
    qp.b_in.resize(nc + 2 * nz);
    qp.b_in << -g - Vec::Constant(nc, backoff), delta, delta;
    auto res = solve_qp(qp);
    if (res.status == QpStatus::optimal) {
        st.d = res.x;
        lambda = res.lambda_in.head(nc);
    } else {
        QuadraticProgram el;
        el.H = Mat::Zero(nz + nc, nz + nc);
        el.H.topLeftCorner(nz, nz) = pt.H;
        el.H.bottomRightCorner(nc, nc) = 1e-10 * M * Mat::Identity(nc, nc);
        el.g.resize(nz + nc);
        el.g << pt.grad, Vec::Constant(nc, M);
        el.A_in = Mat::Zero(2 * nc + 2 * nz, nz + nc);
        el.A_in.topLeftCorner(nc, nz) = J;
        el.A_in.topRightCorner(nc, nc) = -Mat::Identity(nc, nc);
        el.A_in.block(nc, nz, nc, nc) = -Mat::Identity(nc, nc);
        el.A_in.block(2 * nc, 0, nz, nz) = Mat::Identity(nz, nz);
        el.A_in.block(2 * nc + nz, 0, nz, nz) = -Mat::Identity(nz, nz);
        el.b_in.resize(2 * nc + 2 * nz);
        el.b_in << -g - Vec::Constant(nc, backoff), Vec::Zero(nc), delta, delta;
        res = solve_qp(el);
        if (res.status != QpStatus::optimal) return st;
        st.d = res.x.head(nz);
        lambda = res.lambda_in.head(nc);
    }
    st.jtl = J.transpose() * lambda;
    const auto nt = static_cast<Eigen::Index>(dirs.size());
    st.lambda_max = std::max(lambda.head(nc - nt).cwiseAbs().maxCoeff(), lambda.tail(nt).cwiseAbs().sum());
    st.ok = true;
    return st;
}

// Adds tangent cuts at the linearized trial error until the polyhedral
// model agrees with the ball.
inline TrStep trust_region_step(const SqpPoint& pt, const Vec& delta, double M, double sqrt_rho, double backoff)
{
    auto dirs = terminal_cut_directions(pt.ce.te);
    TrStep st;
    for (int round = 0; round < 20; ++round) {
        st = trust_region_step_with(pt, delta, M, sqrt_rho, backoff, dirs);
        if (!st.ok) return st;
        const Vec te = pt.ce.te + pt.ce.TE * st.d;
        const double nrm = te.norm();
        if (nrm <= sqrt_rho * (1.0 + 1e-9) + backoff) break;
        dirs.push_back(te / nrm);
    }
    return st;
}

} // namespace detail

/// Gauss-Newton SQP on an l1 merit function with a box trust region. The
/// returned solution is never worse than a feasible warm start, and never
/// infeasible.
inline Solution solve(const TrackingProblem& pb, const Vec& x0, const Vec& y_t,
                      const std::optional<Vec>& warm_start = std::nullopt)
{
    const SolverOptions& so = pb.solver;
    const Mat Uq = detail::sqrt_factor(pb.Q), Ur = detail::sqrt_factor(pb.R);
    const Mat Up = detail::sqrt_factor(pb.terminal.P), Ut = detail::sqrt_factor(pb.T);
    const int nz = pb.nz(), m = pb.m(), p = pb.p();

    const Vec z0 = warm_start ? *warm_start : steady_guess(pb, y_t);
    if (z0.size() != nz) throw DimensionError("solve: warm start has the wrong size");
    const auto warm_vals = detail::values_at(pb, x0, y_t, z0);
    const bool warm_feasible = warm_vals && warm_vals->second.maxCoeff() <= so.feasibility_tol;

    // Trust-region radius per variable, relative to the box widths.
    Vec width(nz);
    const Vec uw = pb.model().input_box.upper() - pb.model().input_box.lower();
    for (int j = 0; j < pb.N; ++j) width.segment(j * m, m) = uw;
    if (pb.model().output_box)
        width.tail(p) = pb.model().output_box->upper() - pb.model().output_box->lower();
    else
        width.tail(p).setOnes();
    double radius = so.initial_radius;
    const double sqrt_rho = std::sqrt(pb.terminal.rho);

    Vec z = z0;
    double mu = 10.0;
    int it = 0;
    double kkt = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::optional<detail::SqpPoint> pt = detail::linearize(pb, x0, y_t, z, Uq, Ur, Up, Ut);
    for (; it < so.max_iter && pt; ++it) {
        const Vec& g = pt->ce.g;
        const double viol = std::max(0.0, g.maxCoeff());
        const auto st = detail::trust_region_step(*pt, radius * width, mu, sqrt_rho, so.constraint_backoff);
        if (!st.ok) break;
        // penalty must dominate the multipliers for the step to descend on the merit
        mu = std::max(mu, 1.1 * st.lambda_max + 1.0);
        const double M = mu;
        kkt = (pt->grad + st.jtl).cwiseAbs().maxCoeff();
        const double dmax = (st.d.cwiseQuotient(width)).cwiseAbs().maxCoeff();
        const bool interior_step = dmax < 0.99 * radius;
        if (viol <= so.feasibility_tol && ((interior_step && kkt <= so.stationarity_tol) || dmax <= 1e-13)) {
            converged = true;
            break;
        }
        const double phi0 = pt->cost + M * g.cwiseMax(0.0).sum();
        const double pred = phi0 - st.model_merit(*pt, M, sqrt_rho);
        if (!(pred > 1e-14 * std::max(1.0, std::abs(pt->cost)))) {
            // the model sees no descent inside the region
            if (viol <= so.feasibility_tol) {
                converged = true;
                break;
            }
            radius *= 0.25;
            if (radius < so.min_radius) break;
            continue;
        }
        const Vec zt = z + st.d;
        const auto vals = detail::values_at(pb, x0, y_t, zt);
        const double ared = vals ? phi0 - (vals->first + M * vals->second.cwiseMax(0.0).sum())
                                 : -std::numeric_limits<double>::infinity();
        const double ratio = ared / pred;
        if (ratio >= 0.1) {
            z = zt;
            if (ratio >= 0.75 && !interior_step) radius = std::min(2.0 * radius, so.max_radius);
            pt = detail::linearize(pb, x0, y_t, z, Uq, Ur, Up, Ut);
        } else {
            radius = 0.25 * std::min(radius, dmax);
            if (radius < so.min_radius) break;
        }
    }

    const auto final_vals = detail::values_at(pb, x0, y_t, z);
    const bool final_feasible = final_vals && final_vals->second.maxCoeff() <= so.feasibility_tol;
    // an unconverged run counts only if it strictly improved on the warm start
    const bool improved = !warm_feasible || (converged ? final_vals->first <= warm_vals->first
                                                       : final_vals->first < warm_vals->first);
    if (final_feasible && improved)
        return make_solution(pb, x0, y_t, z, converged ? SolveStatus::optimal : SolveStatus::max_iter, it, kkt);
    if (warm_feasible) return make_solution(pb, x0, y_t, z0, SolveStatus::fallback_candidate, it, kkt);
    throw InfeasibleProblemError("solve: no feasible point found for the tracking problem");
}

/// Receding-horizon law: first input of the optimal sequence through the policy.
/// Stage-0 membership holds up to the feasibility tolerance; that residue is
/// projected away so the applied input lies in U exactly.
inline std::pair<Vec, Solution> control_law(const TrackingProblem& pb, const Vec& x, const Vec& y_t,
                                            const std::optional<Vec>& warm_start = std::nullopt)
{
    Solution s = solve(pb, x, y_t, warm_start);
    const Hyperbox& U = pb.model().input_box;
    const Vec raw = pb.terminal.K * (x - s.x_s) + s.v_seq.col(0);
    if (!U.contains(raw, pb.solver.feasibility_tol))
        throw InfeasibleProblemError("control_law: first input leaves the input box");
    return {U.clamp(raw), std::move(s)};
}

} // namespace tmpc
