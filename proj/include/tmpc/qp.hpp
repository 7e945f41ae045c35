#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "hyperbox.hpp"

namespace tmpc {

/// min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QuadraticProgram {
    Mat H;
    Vec g;
    Mat A_eq;
    Vec b_eq;
    Mat A_in;
    Vec b_in;
};

enum class QpStatus { optimal, infeasible, max_iter, not_convex };

struct QpResult {
    QpStatus status = QpStatus::infeasible;
    Vec x;
    Vec lambda_eq;        // multipliers of A_eq x = b_eq
    Vec lambda_in;        // multipliers of A_in x <= b_in, >= 0
    std::vector<int> active; // active inequality indices
    double objective = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

namespace detail {

inline double hypot2(double a, double b) { return std::hypot(a, b); }

// Givens update of (J, R) after appending the constraint whose transformed
// normal is d = J' n. Returns false when the constraint is linearly dependent.
inline bool gi_add_constraint(Mat& R, Mat& J, Vec& d, int& iq, double& R_norm)
{
    const auto n = J.rows();
    for (auto j = n - 1; j >= iq + 1; --j) {
        double cc = d(j - 1), ss = d(j);
        const double h = hypot2(cc, ss);
        if (h == 0.0) continue;
        d(j) = 0.0;
        ss /= h;
        cc /= h;
        if (cc < 0.0) {
            cc = -cc;
            ss = -ss;
            d(j - 1) = -h;
        } else {
            d(j - 1) = h;
        }
        const double xny = ss / (1.0 + cc);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t1 = J(k, j - 1), t2 = J(k, j);
            J(k, j - 1) = t1 * cc + t2 * ss;
            J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
        }
    }
    ++iq;
    R.col(iq - 1).head(iq) = d.head(iq);
    if (std::abs(d(iq - 1)) <= std::numeric_limits<double>::epsilon() * R_norm) return false;
    R_norm = std::max(R_norm, std::abs(d(iq - 1)));
    return true;
}

inline void gi_delete_constraint(Mat& R, Mat& J, std::vector<int>& A, Vec& u, int me, int& iq, int l)
{
    const auto n = J.rows();
    int qq = -1;
    for (int i = me; i < iq; ++i)
        if (A[i] == l) {
            qq = i;
            break;
        }
    if (qq < 0) return;
    for (int i = qq; i < iq - 1; ++i) {
        A[i] = A[i + 1];
        u(i) = u(i + 1);
        R.col(i) = R.col(i + 1);
    }
    A[iq - 1] = A[iq];
    u(iq - 1) = u(iq);
    A[iq] = 0;
    u(iq) = 0.0;
    for (int j = 0; j < iq; ++j) R(j, iq - 1) = 0.0;
    --iq;
    if (iq == 0) return;
    for (int j = qq; j < iq; ++j) {
        double cc = R(j, j), ss = R(j + 1, j);
        const double h = hypot2(cc, ss);
        if (h == 0.0) continue;
        cc /= h;
        ss /= h;
        R(j + 1, j) = 0.0;
        if (cc < 0.0) {
            R(j, j) = -h;
            cc = -cc;
            ss = -ss;
        } else {
            R(j, j) = h;
        }
        const double xny = ss / (1.0 + cc);
        for (int k = j + 1; k < iq; ++k) {
            const double t1 = R(j, k), t2 = R(j + 1, k);
            R(j, k) = t1 * cc + t2 * ss;
            R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            const double t1 = J(k, j), t2 = J(k, j + 1);
            J(k, j) = t1 * cc + t2 * ss;
            J(k, j + 1) = xny * (J(k, j) + t1) - t2;
        }
    }
}

} // namespace detail

/// Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
/// The most violated constraint enters first; ties go to the lowest index.
inline QpResult solve_qp(const QuadraticProgram& qp, int max_iter = 0)
{
    const auto n = qp.H.rows();
    const int me = static_cast<int>(qp.A_eq.rows());
    const int mi = static_cast<int>(qp.A_in.rows());
    if (qp.H.cols() != n || qp.g.size() != n || (me > 0 && qp.A_eq.cols() != n) ||
        (mi > 0 && qp.A_in.cols() != n) || qp.b_eq.size() != me || qp.b_in.size() != mi)
        throw DimensionError("solve_qp: inconsistent dimensions");
    if (max_iter <= 0) max_iter = 50 * static_cast<int>(n + me + mi) + 100;

    QpResult res;
    constexpr double inf = std::numeric_limits<double>::infinity();

    Eigen::LLT<Mat> llt(qp.H);
    if (llt.info() != Eigen::Success) {
        res.status = QpStatus::not_convex;
        return res;
    }
    // J = L^{-T}, so that H^{-1} = J J'.
    Mat J = llt.matrixU().solve(Mat::Identity(n, n));
    const double c1 = qp.H.trace();
    const double c2 = J.trace();

    Vec x = -llt.solve(qp.g);
    double f = 0.5 * qp.g.dot(x);

    // Constraints in the form  n_i' x + b_i >= 0  (inequalities) and  = 0.
    const Mat CE = qp.A_eq.transpose();
    const Vec ce0 = -qp.b_eq;
    const Mat CI = -qp.A_in.transpose();
    const Vec ci0 = qp.b_in;

    Mat R = Mat::Zero(n, n);
    Vec u = Vec::Zero(n + 1);
    Vec d(n), z(n), r = Vec::Zero(n + 1), s(mi);
    std::vector<int> A(n + 1, 0), A_old(n + 1, 0);
    Vec u_old = Vec::Zero(n + 1), x_old = x;
    std::vector<int> iai(mi), iaexcl(mi, 1);
    double R_norm = 1.0;
    int iq = 0;

    const auto compute_step = [&](const Vec& np) {
        d = J.transpose() * np;
        z = J.rightCols(n - iq) * d.tail(n - iq);
        if (iq > 0)
            r.head(iq) = R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
    };

    for (int i = 0; i < me; ++i) {
        const Vec np = CE.col(i);
        compute_step(np);
        double t2 = 0.0;
        if (std::abs(z.dot(z)) > std::numeric_limits<double>::epsilon())
            t2 = (-np.dot(x) - ce0(i)) / z.dot(np);
        x += t2 * z;
        u(iq) = t2;
        if (iq > 0) u.head(iq) -= t2 * r.head(iq);
        f += 0.5 * t2 * t2 * z.dot(np);
        A[i] = -i - 1;
        if (!detail::gi_add_constraint(R, J, d, iq, R_norm)) {
            res.status = QpStatus::infeasible; // dependent equality constraints
            return res;
        }
    }

    for (int i = 0; i < mi; ++i) iai[i] = i;

    int iter = 0;
    int ip = 0;
    while (true) {
        // Step 1: pick the most violated inequality.
        ++iter;
        if (iter > max_iter) {
            res.status = QpStatus::max_iter;
            break;
        }
        for (int i = me; i < iq; ++i) iai[A[i]] = -1;
        double psi = 0.0;
        for (int i = 0; i < mi; ++i) {
            iaexcl[i] = 1;
            s(i) = CI.col(i).dot(x) + ci0(i);
            psi += std::min(0.0, s(i));
        }
        if (std::abs(psi) <= mi * std::numeric_limits<double>::epsilon() * c1 * c2 * 100.0) {
            res.status = QpStatus::optimal;
            break;
        }
        u_old.head(iq) = u.head(iq);
        std::copy(A.begin(), A.begin() + iq, A_old.begin());
        x_old = x;

    step2:
        double ss = 0.0;
        for (int i = 0; i < mi; ++i)
            if (s(i) < ss && iai[i] != -1 && iaexcl[i]) {
                ss = s(i);
                ip = i;
            }
        if (ss >= 0.0) {
            res.status = QpStatus::optimal;
            break;
        }
        const Vec np = CI.col(ip);
        u(iq) = 0.0;
        A[iq] = ip;

        bool restart = false;
        while (true) {
            if (++iter > max_iter) break;
            compute_step(np);
            // Partial (dual) step length.
            double t1 = inf;
            int l = 0;
            for (int k = me; k < iq; ++k) {
                if (r(k) > 0.0) {
                    const double tmp = u(k) / r(k);
                    if (tmp < t1) {
                        t1 = tmp;
                        l = A[k];
                    }
                }
            }
            // Full (primal) step length.
            double t2 = inf;
            if (std::abs(z.dot(z)) > std::numeric_limits<double>::epsilon()) t2 = -s(ip) / z.dot(np);
            const double t = std::min(t1, t2);
            if (t >= inf) {
                res.status = QpStatus::infeasible;
                res.x = x;
                res.iterations = iter;
                return res;
            }
            if (t2 >= inf) {
                if (iq > 0) u.head(iq) -= t * r.head(iq);
                u(iq) += t;
                iai[l] = l;
                detail::gi_delete_constraint(R, J, A, u, me, iq, l);
                continue;
            }
            x += t * z;
            f += t * z.dot(np) * (0.5 * t + u(iq));
            if (iq > 0) u.head(iq) -= t * r.head(iq);
            u(iq) += t;
            if (t == t2) {
                if (!detail::gi_add_constraint(R, J, d, iq, R_norm)) {
                    iaexcl[ip] = 0;
                    detail::gi_delete_constraint(R, J, A, u, me, iq, ip);
                    for (int i = 0; i < mi; ++i) iai[i] = i;
                    for (int i = 0; i < iq; ++i) {
                        A[i] = A_old[i];
                        if (A[i] >= 0) iai[A[i]] = -1;
                        u(i) = u_old(i);
                    }
                    x = x_old;
                    restart = true;
                } else {
                    iai[ip] = -1;
                }
                break;
            }
            iai[l] = l;
            detail::gi_delete_constraint(R, J, A, u, me, iq, l);
            s(ip) = CI.col(ip).dot(x) + ci0(ip);
        }
        if (iter > max_iter) {
            res.status = QpStatus::max_iter;
            break;
        }
        if (restart) goto step2;
    }

    res.x = x;
    res.iterations = iter;
    res.objective = 0.5 * x.dot(qp.H * x) + qp.g.dot(x);
    res.lambda_eq = Vec::Zero(me);
    res.lambda_in = Vec::Zero(mi);
    for (int i = 0; i < iq; ++i) {
        if (A[i] < 0)
            res.lambda_eq(-A[i] - 1) = -u(i);
        else {
            res.lambda_in(A[i]) = u(i);
            res.active.push_back(A[i]);
        }
    }
    return res;
}

} // namespace tmpc
