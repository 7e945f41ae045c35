#pragma once

#include <Eigen/Eigenvalues>

#include <complex>

#include "hyperbox.hpp"

namespace tmpc {

inline Mat symmetrize(const Mat& M) { return 0.5 * (M + M.transpose()); }

inline double min_eigenvalue(const Mat& S)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat& S)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline double spectral_radius(const Mat& A)
{
    Eigen::EigenSolver<Mat> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest generalized eigenvalue of (M, P): max x'Mx / x'Px for P > 0.
inline double max_generalized_eigenvalue(const Mat& M, const Mat& P)
{
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(symmetrize(M), symmetrize(P), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

/// Upper-triangular U with U'U = S (S symmetric positive definite); quadratic
/// forms x'Sx become ||U x||^2.
inline Mat cholesky_upper(const Mat& S)
{
    Eigen::LLT<Mat> llt(symmetrize(S));
    if (llt.info() != Eigen::Success) throw DomainError("cholesky: matrix is not positive definite");
    return llt.matrixU();
}

inline bool is_positive_definite(const Mat& S)
{
    Eigen::LLT<Mat> llt(symmetrize(S));
    return llt.info() == Eigen::Success;
}

struct DareSolution {
    Mat P;
    Mat K; // u = K x, i.e. A + B K is the closed loop
    int iterations = 0;
    bool converged = false;
};

/// Discrete algebraic Riccati equation by value iteration.
inline DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                               double tol = 1e-12, int max_iter = 100000)
{
    DareSolution sol;
    Mat P = Q;
    for (int it = 0; it < max_iter; ++it) {
        const Mat BtP = B.transpose() * P;
        const Mat S = R + BtP * B;
        const Mat Kt = S.ldlt().solve(BtP * A);
        const Mat Pn = symmetrize(A.transpose() * P * A - A.transpose() * P * B * Kt + Q);
        if (!Pn.allFinite() || Pn.norm() > 1e14) break;
        const double diff = (Pn - P).lpNorm<Eigen::Infinity>();
        P = Pn;
        sol.iterations = it + 1;
        if (diff <= tol * std::max(1.0, P.lpNorm<Eigen::Infinity>())) {
            sol.converged = true;
            break;
        }
    }
    sol.P = P;
    const Mat BtP = B.transpose() * P;
    sol.K = -(R + BtP * B).ldlt().solve(BtP * A);
    if (sol.converged && !(spectral_radius(A + B * sol.K) < 1.0)) sol.converged = false;
    return sol;
}

} // namespace tmpc
