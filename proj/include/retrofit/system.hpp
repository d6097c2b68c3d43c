#pragma once

// Discrete-time LTI system types: x_{k+1} = A x_k + C w, plus the
// two-block partitioned view used by saddle-point classification.

#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/linalg.hpp"
#include "retrofit/tolerances.hpp"

namespace retrofit {

struct LtiSystem {
    MatrixXd A; // n x n state map
    MatrixXd C; // n x p input map
    VectorXd w; // exogenous input, constant unless an event schedule overrides it

    LtiSystem() = default;
    LtiSystem(MatrixXd A_, MatrixXd C_, VectorXd w_)
        : A(std::move(A_)), C(std::move(C_)), w(std::move(w_)) {
        validate();
    }

    /// Convenience: system with a direct constant offset, x_{k+1} = A x + c.
    static LtiSystem with_offset(MatrixXd A_, VectorXd c) {
        Eigen::Index n = A_.rows();
        return LtiSystem(std::move(A_), MatrixXd::Identity(n, n), std::move(c));
    }

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index p() const { return C.cols(); }
    VectorXd input_offset() const { return C * w; } // the constant term C w

    void validate() const {
        if (A.rows() != A.cols())
            throw Error(ErrorCode::InvalidArgument, "LtiSystem: A must be square");
        if (A.rows() == 0)
            throw Error(ErrorCode::InvalidArgument, "LtiSystem: empty state");
        if (C.rows() != A.rows())
            throw Error(ErrorCode::InvalidArgument, "LtiSystem: C row count must match A");
        if (w.size() != C.cols())
            throw Error(ErrorCode::InvalidArgument, "LtiSystem: w length must match C columns");
        if (!all_finite(A) || !all_finite(C) || !w.allFinite())
            throw Error(ErrorCode::InvalidArgument, "LtiSystem: non-finite entries");
    }
};

/// Two-block partition of an LtiSystem. Block 1 plays the maximizer
/// (dual-like) role, block 2 the minimizer role.
struct PartitionedLtiSystem {
    LtiSystem base;
    Eigen::Index n1 = 0;
    Eigen::Index n2 = 0;

    PartitionedLtiSystem() = default;
    PartitionedLtiSystem(LtiSystem sys, Eigen::Index n1_)
        : base(std::move(sys)), n1(n1_), n2(base.n() - n1_) {
        if (n1 <= 0 || n2 <= 0)
            throw Error(ErrorCode::InvalidArgument,
                        "PartitionedLtiSystem: both blocks must be non-empty");
    }

    Eigen::Index n() const { return base.n(); }
    MatrixXd A11() const { return base.A.topLeftCorner(n1, n1); }
    MatrixXd A12() const { return base.A.topRightCorner(n1, n2); }
    MatrixXd A21() const { return base.A.bottomLeftCorner(n2, n1); }
    MatrixXd A22() const { return base.A.bottomRightCorner(n2, n2); }
    VectorXd offset1() const { return base.input_offset().head(n1); }
    VectorXd offset2() const { return base.input_offset().tail(n2); }
};

struct FixedPoint {
    VectorXd x;
    bool unique = true;   // false when (I - A) is rank-deficient
    double residual = 0;  // ||(I - A) x - C w||
};

/// Minimum-norm solution of (I - A) x = C w, or nullopt when the system has
/// no fixed point (C w outside the range of I - A).
inline std::optional<FixedPoint> try_fixed_point(const LtiSystem& sys,
                                                 const Tolerances& tol = {}) {
    MatrixXd M = MatrixXd::Identity(sys.n(), sys.n()) - sys.A;
    VectorXd rhs = sys.input_offset();
    LeastSquaresSolution ls = min_norm_solve(M, rhs, tol.tol_rank);
    if (ls.residual > 1e-10 * (1.0 + rhs.norm())) return std::nullopt;
    FixedPoint fp;
    fp.x = ls.x;
    fp.unique = ls.rank == sys.n();
    fp.residual = ls.residual;
    return fp;
}

/// As try_fixed_point, but throws Degenerate when no solution exists.
inline FixedPoint fixed_point(const LtiSystem& sys, const Tolerances& tol = {}) {
    auto fp = try_fixed_point(sys, tol);
    if (!fp)
        throw Error(ErrorCode::Degenerate,
                    "fixed_point: C w is outside the range of (I - A)");
    return *fp;
}

inline Stability stability_verdict(const LtiSystem& sys, const Tolerances& tol = {}) {
    return stability_verdict_matrix(sys.A, tol);
}

} // namespace retrofit
