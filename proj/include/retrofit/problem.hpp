#pragma once

// Optimization-problem data recovered by reverse-engineering: unconstrained
// quadratics with a metric (gradient-descent form) and equality-constrained
// saddle problems (primal-dual form).

#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/linalg.hpp"

namespace retrofit {

/// f(x) = 1/2 x^T Q x + x^T r minimized by the iteration x+ = x - P (Q x + r).
struct QuadraticObjectiveO {
    MatrixXd Q;       // symmetric PSD Hessian
    VectorXd r;       // linear term
    MatrixXd P;       // symmetric PD metric
    double eps_nominal = 1.0; // step size implied by the decomposition I - A = eps * Q_eff

    Eigen::Index n() const { return Q.rows(); }
    VectorXd gradient(const VectorXd& x) const { return Q * x + r; }
    double value(const VectorXd& x) const { return 0.5 * x.dot(Q * x) + r.dot(x); }

    /// Hessian of the problem after the metric change of variables; its
    /// spectrum equals that of P Q (and of I - A for the source system).
    MatrixXd effective_hessian() const {
        MatrixXd ph = spd_sqrt(P);
        return ph * Q * ph;
    }
};

/// max_lambda min_x f(x) + lambda^T (B x - b) with f(x) = 1/2 x^T Q22 x + r^T x.
struct SaddleProblem {
    MatrixXd Q22; // symmetric PSD Hessian of f
    VectorXd r;
    MatrixXd B;   // m x n constraint matrix
    VectorXd b;
    double eps1 = 1.0; // primal step size
    double eps2 = 1.0; // dual step size

    Eigen::Index n() const { return Q22.rows(); }
    Eigen::Index m() const { return B.rows(); }
    VectorXd grad_f(const VectorXd& x) const { return Q22 * x + r; }
    double f(const VectorXd& x) const { return 0.5 * x.dot(Q22 * x) + r.dot(x); }

    std::pair<double, double> singular_value_range() const {
        Eigen::JacobiSVD<MatrixXd> svd(B);
        const VectorXd& s = svd.singularValues();
        return {s(s.size() - 1), s(0)};
    }
    bool full_row_rank(double tol_rank = 1e-10) const {
        return numerical_rank(B, tol_rank) == B.rows();
    }
};

/// Saddle point of the Lagrangian from the KKT system
///   Q22 x + B^T lambda = -r,  B x = b.
/// Falls back to a minimum-norm solve when B is rank-deficient.
struct SaddlePoint {
    VectorXd x;
    VectorXd lambda;
    bool unique = true;
};

inline SaddlePoint solve_kkt(const SaddleProblem& prob, double tol_rank = 1e-10) {
    Eigen::Index n = prob.n(), m = prob.m();
    MatrixXd K(n + m, n + m);
    K.topLeftCorner(n, n) = prob.Q22;
    K.topRightCorner(n, m) = prob.B.transpose();
    K.bottomLeftCorner(m, n) = prob.B;
    K.bottomRightCorner(m, m).setZero();
    VectorXd rhs(n + m);
    rhs.head(n) = -prob.r;
    rhs.tail(m) = prob.b;
    LeastSquaresSolution ls = min_norm_solve(K, rhs, tol_rank);
    if (ls.residual > 1e-8 * (1.0 + rhs.norm()))
        throw Error(ErrorCode::Degenerate, "solve_kkt: KKT system has no solution");
    SaddlePoint sp;
    sp.x = ls.x.head(n);
    sp.lambda = ls.x.tail(m);
    sp.unique = ls.rank == n + m;
    return sp;
}

/// Strong convexity modulus and gradient Lipschitz constant of an objective.
struct FunctionClassParams {
    double mu = 0.0;
    double L = 0.0;

    double kappa() const {
        return mu > 0.0 ? L / mu : std::numeric_limits<double>::infinity();
    }
    bool strongly_convex() const { return mu > 0.0; }
};

} // namespace retrofit
