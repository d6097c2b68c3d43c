#pragma once

// Forward-engineering: synthesize the extra dynamics added to a classified
// system. Heavy-ball and accelerated-gradient retrofits for gradient-descent
// systems; augmented-Lagrangian and tracking-variable (hat-x) retrofits for
// primal-dual systems.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "retrofit/classify.hpp"
#include "retrofit/errors.hpp"
#include "retrofit/linalg.hpp"
#include "retrofit/problem.hpp"
#include "retrofit/system.hpp"

namespace retrofit {

enum class Method { None, HB, AGD, AL, HATX };
enum class BetaSchedule { Constant, Nesterov };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::None: return "od";
        case Method::HB: return "hb";
        case Method::AGD: return "agd";
        case Method::AL: return "al";
        case Method::HATX: return "hatx";
    }
    return "unknown";
}

struct RedesignSpec {
    Method method = Method::None;
    double beta = 0.0;       // HB momentum / AGD constant coefficient
    BetaSchedule schedule = BetaSchedule::Constant;
    double alpha = 0.0;      // AL / hat-x penalty weight
    double eps_star = 1.0;   // retuned gradient step (HB/AGD with retune_step)
    bool retune_step = true;

    /// Momentum coefficient at step k (1-based); the varying schedule is
    /// beta_k = (k-1)/(k+2).
    double beta_at(long k) const {
        if (schedule == BetaSchedule::Constant) return beta;
        if (k < 1) return 0.0;
        return static_cast<double>(k - 1) / static_cast<double>(k + 2);
    }
};

struct RedesignOverrides {
    std::optional<double> beta;
    std::optional<double> eps;
    std::optional<bool> retune_step;
    std::optional<BetaSchedule> schedule;
};

/// Block layout of the physical state: the dual block (when present) comes
/// first, matching the partitioned system convention.
struct StateLayout {
    Eigen::Index dual_len = 0;
    Eigen::Index primal_len = 0;
    Eigen::Index xhat_len = 0;

    Eigen::Index physical_dim() const { return dual_len + primal_len; }
    Eigen::Index state_dim() const { return dual_len + primal_len + xhat_len; }
};

/// A retrofitted linear system: the original dynamics plus an extra-dynamics
/// rule Delta u. Simulation works from the stored pieces so that event
/// schedules (changing w) stay exact; extended_matrix() freezes the constant-w
/// linear part for spectral analysis.
struct RedesignedSystem {
    RedesignSpec spec;
    LtiSystem base;        // system being retrofitted (dual block first for class S)
    StateLayout layout;

    // Class-S payload (AL / hat-x)
    MatrixXd B;
    VectorXd b;
    double eps1 = 1.0;
    double eps2 = 1.0;

    // Advisory condition-number report
    double kappa0 = std::numeric_limits<double>::quiet_NaN();
    double kappa_g = std::numeric_limits<double>::quiet_NaN();
    bool al_improves = false;
    std::optional<std::pair<double, double>> kappa_h_bracket;

    Eigen::Index physical_dim() const { return base.n(); }

    /// Dimension of the augmented state: momentum history for HB/AGD, the
    /// tracking block for hat-x.
    Eigen::Index extended_dim() const {
        switch (spec.method) {
            case Method::HB:
            case Method::AGD: return 2 * base.n();
            case Method::HATX: return base.n() + layout.primal_len;
            default: return base.n();
        }
    }

    /// Gradient map used by HB/AGD: the reverse-engineered unit-step field
    /// scaled to eps_star when retuning, the original map otherwise.
    MatrixXd gradient_step_matrix() const {
        const Eigen::Index n = base.n();
        if (spec.retune_step)
            return (1.0 - spec.eps_star) * MatrixXd::Identity(n, n) + spec.eps_star * base.A;
        return base.A;
    }
    VectorXd gradient_step_offset(const VectorXd& w) const {
        VectorXd c = base.C * w;
        return spec.retune_step ? VectorXd(spec.eps_star * c) : c;
    }

    /// Frozen linear part of the augmented iteration (constant w, constant
    /// coefficients). Throws for the varying AGD schedule.
    MatrixXd extended_matrix() const {
        const Eigen::Index n = base.n();
        switch (spec.method) {
            case Method::None: return base.A;
            case Method::HB: {
                MatrixXd M = gradient_step_matrix();
                MatrixXd E = MatrixXd::Zero(2 * n, 2 * n);
                E.topLeftCorner(n, n) = M + spec.beta * MatrixXd::Identity(n, n);
                E.topRightCorner(n, n) = -spec.beta * MatrixXd::Identity(n, n);
                E.bottomLeftCorner(n, n).setIdentity();
                return E;
            }
            case Method::AGD: {
                if (spec.schedule != BetaSchedule::Constant)
                    throw Error(ErrorCode::NotApplicable,
                                "extended_matrix: varying schedule has no constant matrix");
                MatrixXd M = gradient_step_matrix();
                MatrixXd E = MatrixXd::Zero(2 * n, 2 * n);
                E.topLeftCorner(n, n) = (1.0 + spec.beta) * M;
                E.topRightCorner(n, n) = -spec.beta * M;
                E.bottomLeftCorner(n, n).setIdentity();
                return E;
            }
            case Method::AL: {
                MatrixXd E = base.A;
                const Eigen::Index n1 = layout.dual_len, n2 = layout.primal_len;
                E.bottomRightCorner(n2, n2) -= eps1 * spec.alpha * B.transpose() * B;
                (void)n1;
                return E;
            }
            case Method::HATX: {
                const Eigen::Index n1 = layout.dual_len, n2 = layout.primal_len;
                MatrixXd E = MatrixXd::Zero(n + n2, n + n2);
                E.topLeftCorner(n, n) = base.A;
                double a = eps1 * spec.alpha;
                E.block(n1, n1, n2, n2) -= a * MatrixXd::Identity(n2, n2);
                E.block(n1, n, n2, n2) = a * MatrixXd::Identity(n2, n2);
                E.block(n, n1, n2, n2) = a * MatrixXd::Identity(n2, n2);
                E.bottomRightCorner(n2, n2) = (1.0 - a) * MatrixXd::Identity(n2, n2);
                return E;
            }
        }
        throw Error(ErrorCode::InvalidArgument, "extended_matrix: unknown method");
    }

    VectorXd extended_offset() const {
        const Eigen::Index n = base.n();
        switch (spec.method) {
            case Method::None: return base.input_offset();
            case Method::HB:
            case Method::AGD: {
                if (spec.method == Method::AGD && spec.schedule != BetaSchedule::Constant)
                    throw Error(ErrorCode::NotApplicable,
                                "extended_offset: varying schedule has no constant offset");
                VectorXd c = gradient_step_offset(base.w);
                VectorXd o = VectorXd::Zero(2 * n);
                o.head(n) = c;
                return o;
            }
            case Method::AL: {
                VectorXd o = base.input_offset();
                o.tail(layout.primal_len) += eps1 * spec.alpha * B.transpose() * b;
                return o;
            }
            case Method::HATX: {
                VectorXd o = VectorXd::Zero(n + layout.primal_len);
                o.head(n) = base.input_offset();
                return o;
            }
        }
        throw Error(ErrorCode::InvalidArgument, "extended_offset: unknown method");
    }

    /// The explicit extra-dynamics rule as an affine map over the extended
    /// state: Delta u = Du * x_ext + du0. Defined for constant coefficients.
    std::pair<MatrixXd, VectorXd> delta_u_map() const {
        const Eigen::Index n = base.n();
        switch (spec.method) {
            case Method::None:
                return {MatrixXd::Zero(n, n), VectorXd::Zero(n)};
            case Method::HB: {
                MatrixXd D(n, 2 * n);
                D << spec.beta * MatrixXd::Identity(n, n), -spec.beta * MatrixXd::Identity(n, n);
                return {D, VectorXd::Zero(n)};
            }
            case Method::AGD: {
                if (spec.schedule != BetaSchedule::Constant)
                    throw Error(ErrorCode::NotApplicable, "delta_u_map: varying schedule");
                MatrixXd M = gradient_step_matrix();
                MatrixXd D(n, 2 * n);
                D << spec.beta * M, -spec.beta * M;
                return {D, VectorXd::Zero(n)};
            }
            case Method::AL: {
                const Eigen::Index n1 = layout.dual_len, n2 = layout.primal_len;
                MatrixXd D = MatrixXd::Zero(n2, n);
                D.rightCols(n2) = -eps1 * spec.alpha * B.transpose() * B;
                (void)n1;
                return {D, VectorXd(eps1 * spec.alpha * B.transpose() * b)};
            }
            case Method::HATX: {
                const Eigen::Index n1 = layout.dual_len, n2 = layout.primal_len;
                double a = eps1 * spec.alpha;
                MatrixXd D = MatrixXd::Zero(n2, n + n2);
                D.block(0, n1, n2, n2) = -a * MatrixXd::Identity(n2, n2);
                D.block(0, n, n2, n2) = a * MatrixXd::Identity(n2, n2);
                return {D, VectorXd::Zero(n2)};
            }
        }
        throw Error(ErrorCode::InvalidArgument, "delta_u_map: unknown method");
    }
};

// ---------------------------------------------------------------------------
// Class-O retrofits

namespace detail {
inline void require_momentum_inputs(const FunctionClassParams& params,
                                    const RedesignOverrides& ov, const char* where) {
    if (!params.strongly_convex() && !ov.beta)
        throw Error(ErrorCode::MissingCoefficient,
                    std::string(where) + ": mu = 0 requires an explicit beta override");
}
} // namespace detail

/// Heavy-ball retrofit. With theorem coefficients (retune_step, mu > 0):
/// eps* = 4/(sqrt(L)+sqrt(mu))^2 and beta = ((sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)))^2,
/// the momentum that attains the optimal rate (sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)).
inline RedesignedSystem hb_redesign(const LtiSystem& sys, const FunctionClassParams& params,
                                    const RedesignOverrides& ov = {}) {
    detail::require_momentum_inputs(params, ov, "hb_redesign");
    RedesignedSystem rs;
    rs.spec.method = Method::HB;
    rs.spec.retune_step = ov.retune_step.value_or(true);
    double sl = std::sqrt(params.L), sm = std::sqrt(params.mu);
    if (ov.beta) {
        rs.spec.beta = *ov.beta;
    } else {
        double rho = (sl - sm) / (sl + sm);
        rs.spec.beta = rho * rho;
    }
    if (rs.spec.beta < 0.0 || rs.spec.beta >= 1.0)
        throw Error(ErrorCode::InvalidArgument, "hb_redesign: beta must lie in [0, 1)");
    rs.spec.eps_star = ov.eps ? *ov.eps : 4.0 / ((sl + sm) * (sl + sm));
    if (rs.spec.retune_step && rs.spec.eps_star <= 0.0)
        throw Error(ErrorCode::StepSizeOutOfRange, "hb_redesign: retuned step must be positive");
    rs.base = sys;
    rs.layout.primal_len = sys.n();
    return rs;
}

inline RedesignedSystem hb_redesign(const QuadraticObjectiveO& obj,
                                    const FunctionClassParams& params,
                                    const RedesignOverrides& ov = {}) {
    MatrixXd A = MatrixXd::Identity(obj.n(), obj.n()) - obj.P * obj.Q;
    return hb_redesign(LtiSystem::with_offset(std::move(A), -obj.P * obj.r), params, ov);
}

/// Accelerated-gradient retrofit in the combined single-sequence form
///   x+ = G(x_k) + beta_k (G(x_k) - G(x_{k-1})),   G(x) = x - eps grad f(x).
/// Theorem coefficients: eps = 1/L with beta = (sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu))
/// for mu > 0, or the varying schedule beta_k = (k-1)/(k+2) for mu = 0.
inline RedesignedSystem agd_redesign(const LtiSystem& sys, const FunctionClassParams& params,
                                     const RedesignOverrides& ov = {}) {
    RedesignedSystem rs;
    rs.spec.method = Method::AGD;
    rs.spec.retune_step = ov.retune_step.value_or(true);
    rs.spec.schedule = ov.schedule.value_or(params.strongly_convex() ? BetaSchedule::Constant
                                                                     : BetaSchedule::Nesterov);
    if (rs.spec.schedule == BetaSchedule::Constant) {
        if (ov.beta) {
            rs.spec.beta = *ov.beta;
        } else if (params.strongly_convex()) {
            double sl = std::sqrt(params.L), sm = std::sqrt(params.mu);
            rs.spec.beta = (sl - sm) / (sl + sm);
        } else {
            throw Error(ErrorCode::MissingCoefficient,
                        "agd_redesign: mu = 0 with a constant coefficient requires a beta override");
        }
        if (rs.spec.beta < 0.0 || rs.spec.beta >= 1.0)
            throw Error(ErrorCode::InvalidArgument, "agd_redesign: beta must lie in [0, 1)");
    }
    if (ov.eps) {
        rs.spec.eps_star = *ov.eps;
    } else if (params.L > 0.0) {
        rs.spec.eps_star = 1.0 / params.L;
    } else {
        throw Error(ErrorCode::MissingCoefficient, "agd_redesign: need L or an eps override");
    }
    if (rs.spec.retune_step && rs.spec.eps_star <= 0.0)
        throw Error(ErrorCode::StepSizeOutOfRange, "agd_redesign: retuned step must be positive");
    rs.base = sys;
    rs.layout.primal_len = sys.n();
    return rs;
}

inline RedesignedSystem agd_redesign(const QuadraticObjectiveO& obj,
                                     const FunctionClassParams& params,
                                     const RedesignOverrides& ov = {}) {
    MatrixXd A = MatrixXd::Identity(obj.n(), obj.n()) - obj.P * obj.Q;
    return agd_redesign(LtiSystem::with_offset(std::move(A), -obj.P * obj.r), params, ov);
}

// ---------------------------------------------------------------------------
// Class-S retrofits

/// The primal-dual gradient iteration of a saddle problem written as an LTI
/// system, dual block first.
inline LtiSystem pdg_system(const SaddleProblem& prob) {
    const Eigen::Index n = prob.n(), m = prob.m();
    MatrixXd A(m + n, m + n);
    A.topLeftCorner(m, m).setIdentity();
    A.topRightCorner(m, n) = prob.eps2 * prob.B;
    A.bottomLeftCorner(n, m) = -prob.eps1 * prob.B.transpose();
    A.bottomRightCorner(n, n) =
        MatrixXd::Identity(n, n) - prob.eps1 * prob.Q22;
    VectorXd c(m + n);
    c.head(m) = -prob.eps2 * prob.b;
    c.tail(n) = -prob.eps1 * prob.r;
    return LtiSystem::with_offset(std::move(A), std::move(c));
}

namespace detail {
inline void fill_al_advisory(RedesignedSystem& rs, const MatrixXd& H_f, double alpha) {
    MatrixXd H_g = H_f + alpha * rs.B.transpose() * rs.B;
    VectorXd ef = symmetric_eigenvalues(H_f);
    VectorXd eg = symmetric_eigenvalues(H_g);
    auto cond_of = [](const VectorXd& ev) {
        return ev(0) > 0.0 ? ev(ev.size() - 1) / ev(0)
                           : std::numeric_limits<double>::infinity();
    };
    rs.kappa0 = cond_of(ef);
    rs.kappa_g = cond_of(eg);
    rs.al_improves = rs.kappa_g < rs.kappa0;
}
} // namespace detail

/// Augmented-Lagrangian retrofit of a partitioned system: the primal rows
/// gain Delta u = -eps1 alpha B^T (B x - b); the dual rows are untouched.
/// Reports kappa of the penalized Hessian next to the original as guidance
/// (alpha worth using only when it shrinks the condition number).
inline RedesignedSystem al_redesign(const PartitionedLtiSystem& sys, const MatrixXd& B,
                                    const VectorXd& b, double eps1, double eps2, double alpha) {
    if (alpha < 0.0)
        throw Error(ErrorCode::InvalidArgument, "al_redesign: alpha must be nonnegative");
    if (B.cols() != sys.n2 || b.size() != B.rows())
        throw Error(ErrorCode::InvalidArgument, "al_redesign: constraint dimensions mismatch");
    RedesignedSystem rs;
    rs.spec.method = Method::AL;
    rs.spec.alpha = alpha;
    rs.spec.retune_step = false;
    rs.base = sys.base;
    rs.layout.dual_len = sys.n1;
    rs.layout.primal_len = sys.n2;
    rs.B = B;
    rs.b = b;
    rs.eps1 = eps1;
    rs.eps2 = eps2;
    MatrixXd H_f = (MatrixXd::Identity(sys.n2, sys.n2) - sys.A22()) / eps1;
    detail::fill_al_advisory(rs, 0.5 * (H_f + H_f.transpose()), alpha);
    return rs;
}

inline RedesignedSystem al_redesign(const SaddleProblem& prob, double alpha) {
    PartitionedLtiSystem part(pdg_system(prob), prob.m());
    RedesignedSystem rs = al_redesign(part, prob.B, prob.b, prob.eps1, prob.eps2, alpha);
    detail::fill_al_advisory(rs, prob.Q22, alpha);
    return rs;
}

inline std::pair<double, double> kappa_h_bounds(const FunctionClassParams& params, double alpha);

/// Hat-x retrofit: augments the primal block with a tracking variable,
///   x+    = ... + Delta u,   Delta u = -eps1 alpha (x - xhat)
///   xhat+ = xhat + eps1 alpha (x - xhat).
inline RedesignedSystem hatx_redesign(const PartitionedLtiSystem& sys, double eps1, double eps2,
                                      double alpha,
                                      const std::optional<FunctionClassParams>& params = {}) {
    if (alpha < 0.0)
        throw Error(ErrorCode::InvalidArgument, "hatx_redesign: alpha must be nonnegative");
    RedesignedSystem rs;
    rs.spec.method = Method::HATX;
    rs.spec.alpha = alpha;
    rs.spec.retune_step = false;
    rs.base = sys.base;
    rs.layout.dual_len = sys.n1;
    rs.layout.primal_len = sys.n2;
    rs.layout.xhat_len = sys.n2;
    rs.eps1 = eps1;
    rs.eps2 = eps2;
    if (params && params->strongly_convex() && alpha > 0.0)
        rs.kappa_h_bracket = kappa_h_bounds(*params, alpha);
    return rs;
}

inline RedesignedSystem hatx_redesign(const SaddleProblem& prob, double alpha,
                                      const std::optional<FunctionClassParams>& params = {}) {
    PartitionedLtiSystem part(pdg_system(prob), prob.m());
    RedesignedSystem rs = hatx_redesign(part, prob.eps1, prob.eps2, alpha, params);
    rs.B = prob.B;
    rs.b = prob.b;
    return rs;
}

// ---------------------------------------------------------------------------
// Condition-number analyses

/// Bracket on the condition number of the lifted hat-x objective
/// h(x, xhat) = f(x) + alpha/2 ||x - xhat||^2 for f with mu I <= H_f <= L I.
inline std::pair<double, double> kappa_h_bounds(const FunctionClassParams& params, double alpha) {
    if (!params.strongly_convex())
        throw Error(ErrorCode::DegenerateObjective, "kappa_h_bounds: requires mu > 0");
    if (alpha <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "kappa_h_bounds: requires alpha > 0");
    double mu = params.mu, L = params.L;
    double sm = std::sqrt(mu * mu + 4.0 * alpha * alpha);
    double sL = std::sqrt(L * L + 4.0 * alpha * alpha);
    double lower = (2.0 * alpha + mu + sm) / (2.0 * alpha + L - sL);
    double upper = (2.0 * alpha + L + sL) / (2.0 * alpha + mu - sm);
    return {lower, upper};
}

/// Smallest alpha (within 1e-6 relative) making H_f + alpha B^T B positive
/// definite; requires H_f positive definite on the nullspace of B.
inline double convexification_alpha(const MatrixXd& H_f, const MatrixXd& B,
                                    const Tolerances& tol = {}) {
    if (!is_symmetric(H_f, 1e-8))
        throw Error(ErrorCode::InvalidArgument, "convexification_alpha: H_f must be symmetric");
    if (B.cols() != H_f.rows())
        throw Error(ErrorCode::InvalidArgument, "convexification_alpha: dimension mismatch");
    const double margin = 1e-10;

    MatrixXd Z = nullspace_basis(B, tol.tol_rank);
    if (Z.cols() > 0) {
        double lmin_proj = lambda_min(Z.transpose() * H_f * Z);
        if (lmin_proj <= 1e-12 * (1.0 + H_f.norm()))
            throw Error(ErrorCode::NotConvexifiable,
                        "convexification_alpha: H_f is not PD on the nullspace of B");
    }
    if (lambda_min(H_f) >= margin) return 0.0;

    MatrixXd BtB = B.transpose() * B;
    auto ok = [&](double a) { return lambda_min(H_f + a * BtB) >= margin; };
    double hi = 1.0;
    while (!ok(hi)) {
        hi *= 2.0;
        if (hi > std::ldexp(1.0, 60))
            throw Error(ErrorCode::NotConvexifiable,
                        "convexification_alpha: no convexifying alpha below 2^60");
    }
    double lo = 0.0;
    while (hi - lo > 1e-6 * hi) {
        double mid = 0.5 * (lo + hi);
        if (ok(mid))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

} // namespace retrofit
