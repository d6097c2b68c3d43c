#pragma once

// Convergence-rate certificates for the original and retrofitted iterations,
// plus the potential-function machinery that certifies primal-dual decay.
// Certificates are plain data, decoupled from simulation: any trajectory with
// matching problem data can be checked against one.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/classify.hpp"
#include "retrofit/errors.hpp"
#include "retrofit/problem.hpp"
#include "retrofit/redesign.hpp"
#include "retrofit/trajectory.hpp"

namespace retrofit {

enum class TheoremId { T3, T4, C1, T5, T6, T7, T9, C2, C3 };

inline const char* theorem_name(TheoremId id) {
    switch (id) {
        case TheoremId::T3: return "T3";
        case TheoremId::T4: return "T4";
        case TheoremId::C1: return "C1";
        case TheoremId::T5: return "T5";
        case TheoremId::T6: return "T6";
        case TheoremId::T7: return "T7";
        case TheoremId::T9: return "T9";
        case TheoremId::C2: return "C2";
        case TheoremId::C3: return "C3";
    }
    return "?";
}

struct RateCertificate {
    TheoremId id = TheoremId::T3;
    enum class Kind { SublinearInverseK, SublinearInverseK2, Geometric } kind = Kind::Geometric;
    double ratio = 0.0;       // geometric decay factor
    double gap_factor = 0.0;  // sublinear: bound = gap_factor * ||x0 - x*||^2 / k or /(k+1)^2
    bool feasible = true;     // false when the certified factor is >= 1
    std::string applicability;
    std::map<std::string, double> constants;
};

// ---------------------------------------------------------------------------
// Certificate constructors

/// Original gradient-descent rates: sublinear gap decay for merely convex
/// objectives, geometric state decay for strongly convex ones (with the
/// boundary step size earning the optimal-rate label).
inline RateCertificate gd_certificate(const FunctionClassParams& p, double eps) {
    if (eps <= 0.0)
        throw Error(ErrorCode::StepSizeOutOfRange, "gd_certificate: step must be positive");
    RateCertificate cert;
    cert.constants = {{"mu", p.mu}, {"L", p.L}, {"eps", eps}};
    if (p.strongly_convex() && eps <= 2.0 / (p.mu + p.L) * (1.0 + 1e-12)) {
        double boundary = 2.0 / (p.mu + p.L);
        bool at_boundary = std::abs(eps - boundary) <= 1e-12 * boundary;
        cert.id = at_boundary ? TheoremId::C1 : TheoremId::T4;
        cert.kind = RateCertificate::Kind::Geometric;
        cert.ratio = at_boundary ? (p.L - p.mu) / (p.L + p.mu) : 1.0 - p.mu * eps;
        cert.applicability = "S_muL";
        return cert;
    }
    if (eps < 2.0 / p.L) {
        cert.id = TheoremId::T3;
        cert.kind = RateCertificate::Kind::SublinearInverseK;
        cert.gap_factor = 2.0 / eps;
        cert.applicability = "F_L";
        return cert;
    }
    throw Error(ErrorCode::StepSizeOutOfRange, "gd_certificate: eps must satisfy eps < 2/L");
}

/// Heavy-ball optimal rate (sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)). Certified
/// through the extended-matrix spectral radius; momentum admits transient
/// growth, so no per-step constant is claimed.
inline RateCertificate hb_certificate(const FunctionClassParams& p) {
    if (!p.strongly_convex())
        throw Error(ErrorCode::NotApplicable, "hb_certificate: requires mu > 0");
    double sl = std::sqrt(p.L), sm = std::sqrt(p.mu);
    double rho = (sl - sm) / (sl + sm);
    RateCertificate cert;
    cert.id = TheoremId::T5;
    cert.kind = RateCertificate::Kind::Geometric;
    cert.ratio = rho;
    cert.applicability = "S_muL";
    cert.constants = {{"mu", p.mu},
                      {"L", p.L},
                      {"eps", 4.0 / ((sl + sm) * (sl + sm))},
                      {"beta", rho * rho}};
    return cert;
}

/// Accelerated-gradient rates: 1/k^2 gap decay under the varying schedule,
/// geometric decay 1 - sqrt(mu/L) under the constant scheme with eps = 1/L.
inline RateCertificate agd_certificate(const FunctionClassParams& p, BetaSchedule schedule,
                                       std::optional<double> eps = {}) {
    RateCertificate cert;
    if (schedule == BetaSchedule::Nesterov) {
        double e = eps.value_or(p.L > 0.0 ? 1.0 / p.L : 0.0);
        if (e <= 0.0 || e > (1.0 / p.L) * (1.0 + 1e-12))
            throw Error(ErrorCode::StepSizeOutOfRange,
                        "agd_certificate: schedule bound needs 0 < eps <= 1/L");
        cert.id = TheoremId::T6;
        cert.kind = RateCertificate::Kind::SublinearInverseK2;
        cert.gap_factor = 8.0 / (3.0 * e);
        cert.applicability = "F_L";
        cert.constants = {{"mu", p.mu}, {"L", p.L}, {"eps", e}};
        return cert;
    }
    if (!p.strongly_convex())
        throw Error(ErrorCode::NotApplicable, "agd_certificate: constant scheme requires mu > 0");
    double required = 1.0 / p.L;
    if (eps && std::abs(*eps - required) > 1e-12 * required)
        throw Error(ErrorCode::StepSizeOutOfRange, "agd_certificate: constant scheme needs eps = 1/L");
    cert.id = TheoremId::T7;
    cert.kind = RateCertificate::Kind::Geometric;
    cert.ratio = 1.0 - std::sqrt(p.mu / p.L);
    cert.applicability = "S_muL";
    double sl = std::sqrt(p.L), sm = std::sqrt(p.mu);
    cert.constants = {{"mu", p.mu}, {"L", p.L}, {"eps", required}, {"beta", (sl - sm) / (sl + sm)}};
    return cert;
}

/// Primal-dual potential decay: V_{k+1} <= c V_k with
///   c1 = 1 - mu e1 + e2 smax^2/mu + e2 smax/gamma,
///   c2 = 1 - e2 smin^2/L + e2 gamma smax^3/mu^2,  c = max(c1, c2).
/// Flags infeasible (rather than throwing) when c >= 1.
inline RateCertificate pdg_certificate(const SaddleProblem& prob, const FunctionClassParams& p,
                                       double gamma, double eps1, double eps2,
                                       const Tolerances& tol = {}) {
    if (!prob.full_row_rank(tol.tol_rank))
        throw Error(ErrorCode::RankDeficient, "pdg_certificate: B must have full row rank");
    if (!p.strongly_convex())
        throw Error(ErrorCode::NotApplicable, "pdg_certificate: requires mu > 0");
    if (gamma <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "pdg_certificate: gamma must be positive");
    auto [smin, smax] = prob.singular_value_range();
    if (eps1 <= 0.0 || eps1 > 2.0 / (p.L + p.mu) * (1.0 + 1e-12))
        throw Error(ErrorCode::StepSizeOutOfRange, "pdg_certificate: eps1 out of range");
    double eps2_cap = 2.0 / (smin * smin / p.L + smax * smax / p.mu);
    if (eps2 <= 0.0 || eps2 > eps2_cap * (1.0 + 1e-12))
        throw Error(ErrorCode::StepSizeOutOfRange, "pdg_certificate: eps2 out of range");

    double c1 = 1.0 - p.mu * eps1 + eps2 * smax * smax / p.mu + eps2 * smax / gamma;
    double c2 = 1.0 - eps2 * smin * smin / p.L + eps2 * gamma * smax * smax * smax / (p.mu * p.mu);
    RateCertificate cert;
    cert.id = TheoremId::T9;
    cert.kind = RateCertificate::Kind::Geometric;
    cert.ratio = std::max(c1, c2);
    cert.feasible = cert.ratio < 1.0;
    cert.applicability = "S_muL saddle";
    cert.constants = {{"mu", p.mu},         {"L", p.L},     {"gamma", gamma},
                      {"eps1", eps1},       {"eps2", eps2}, {"sigma_min", smin},
                      {"sigma_max", smax},  {"c1", c1},     {"c2", c2},
                      {"c", cert.ratio},
                      {"gamma_limit", p.mu * p.mu * smin * smin / (p.L * smax * smax * smax)}};
    return cert;
}

/// Balanced step sizes: eps1 at its cap, eps2 chosen so c1 = c2, with
/// gamma at half its limit. Carries the resulting condition-number bound
/// c <= 1 - 1/(kappa^3 (4 tau^2 + 2 tau + 1)).
struct PdgTuning {
    double eps1 = 0, eps2 = 0, gamma = 0;
    double c = 0;
    double c_bound = 0; // condition-number bound on c
    double kappa = 0, tau = 0;
    RateCertificate certificate;
};

inline PdgTuning optimal_pdg_steps(const SaddleProblem& prob, const FunctionClassParams& p,
                                   const Tolerances& tol = {}) {
    if (!prob.full_row_rank(tol.tol_rank))
        throw Error(ErrorCode::RankDeficient, "optimal_pdg_steps: B must have full row rank");
    if (!p.strongly_convex())
        throw Error(ErrorCode::NotApplicable, "optimal_pdg_steps: requires mu > 0");
    auto [smin, smax] = prob.singular_value_range();
    PdgTuning t;
    t.gamma = p.mu * p.mu * smin * smin / (2.0 * p.L * smax * smax * smax);
    t.eps1 = 2.0 / (p.L + p.mu);
    double denom = smax * smax / p.mu + smax / t.gamma + smin * smin / p.L -
                   t.gamma * smax * smax * smax / (p.mu * p.mu);
    t.eps2 = (2.0 * p.mu / (p.L + p.mu)) / denom;
    t.certificate = pdg_certificate(prob, p, t.gamma, t.eps1, t.eps2, tol);
    t.c = t.certificate.ratio;
    t.kappa = p.kappa();
    t.tau = (smax * smax) / (smin * smin);
    t.c_bound = 1.0 - 1.0 / (t.kappa * t.kappa * t.kappa * (4.0 * t.tau * t.tau + 2.0 * t.tau + 1.0));
    t.certificate.id = TheoremId::C2;
    t.certificate.constants["c_bound"] = t.c_bound;
    t.certificate.constants["kappa"] = t.kappa;
    t.certificate.constants["tau"] = t.tau;
    return t;
}

// ---------------------------------------------------------------------------
// Potential function

/// a_k = ||x_k - grad f*(-B^T lambda_k)||, b_k = ||lambda_k - lambda*||,
/// V_k = gamma a_k + b_k. For a quadratic f the conjugate-gradient map is the
/// solve Q22 z = -(r + B^T lambda).
struct PotentialTrace {
    std::vector<double> a, b, V;
    double gamma = 0;
    VectorXd x_star, lambda_star;
};

inline PotentialTrace potential_trace(const SaddleProblem& prob, const Trajectory& traj,
                                      double gamma, const Tolerances& tol = {}) {
    if (lambda_min(prob.Q22) <= tol.tol_psd)
        throw Error(ErrorCode::SingularHessian,
                    "potential_trace: requires a strongly convex quadratic objective");
    auto it = traj.aux.find("lambda");
    if (it == traj.aux.end() || it->second.size() != traj.states.size())
        throw Error(ErrorCode::InvalidArgument, "potential_trace: trajectory carries no dual iterates");
    SaddlePoint sp = solve_kkt(prob, tol.tol_rank);

    Eigen::LLT<MatrixXd> llt(prob.Q22);
    PotentialTrace pt;
    pt.gamma = gamma;
    pt.x_star = sp.x;
    pt.lambda_star = sp.lambda;
    pt.a.reserve(traj.states.size());
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const VectorXd& x = traj.states[k];
        const VectorXd& lam = it->second[k];
        VectorXd z = llt.solve(-(prob.r + prob.B.transpose() * lam));
        pt.a.push_back((x - z).norm());
        pt.b.push_back((lam - sp.lambda).norm());
        pt.V.push_back(gamma * pt.a.back() + pt.b.back());
    }
    return pt;
}

/// Strong convexity and gradient smoothness of the reduced dual function
/// g(lambda) = f*(-B^T lambda) + lambda^T b.
inline FunctionClassParams conjugate_params(const FunctionClassParams& p,
                                            const SaddleProblem& prob,
                                            const Tolerances& tol = {}) {
    if (!prob.full_row_rank(tol.tol_rank))
        throw Error(ErrorCode::RankDeficient, "conjugate_params: B must have full row rank");
    if (!p.strongly_convex())
        throw Error(ErrorCode::DegenerateObjective, "conjugate_params: requires mu > 0");
    auto [smin, smax] = prob.singular_value_range();
    FunctionClassParams g;
    g.mu = smin * smin / p.L;
    g.L = smax * smax / p.mu;
    return g;
}

// ---------------------------------------------------------------------------
// Matrix ordering (self-test primitive)

struct OrderCheck {
    double lmin1 = 0, lmax1 = 0, lmin2 = 0, lmax2 = 0;
    bool max_ordered = false;
    bool min_ordered = false;
};

/// Given A1 <= A2 in the semidefinite order, confirms that both extreme
/// eigenvalues are ordered accordingly.
inline OrderCheck matrix_order_check(const MatrixXd& A1, const MatrixXd& A2,
                                     const Tolerances& tol = {}) {
    if (!is_symmetric(A1, 1e-8) || !is_symmetric(A2, 1e-8))
        throw Error(ErrorCode::InvalidArgument, "matrix_order_check: inputs must be symmetric");
    if (A1.rows() != A2.rows())
        throw Error(ErrorCode::InvalidArgument, "matrix_order_check: dimension mismatch");
    double scale = 1.0 + std::max(A1.norm(), A2.norm());
    if (lambda_min(A2 - A1) < -tol.tol_psd * scale)
        throw Error(ErrorCode::NotOrdered, "matrix_order_check: A2 - A1 is not PSD");
    OrderCheck oc;
    VectorXd e1 = symmetric_eigenvalues(A1), e2 = symmetric_eigenvalues(A2);
    oc.lmin1 = e1(0);
    oc.lmax1 = e1(e1.size() - 1);
    oc.lmin2 = e2(0);
    oc.lmax2 = e2(e2.size() - 1);
    double slack = tol.tol_psd * scale;
    oc.max_ordered = oc.lmax1 <= oc.lmax2 + slack;
    oc.min_ordered = oc.lmin1 <= oc.lmin2 + slack;
    return oc;
}

// ---------------------------------------------------------------------------
// Trajectory checks

struct CertCheck {
    bool pass = true;
    long worst_step = -1;
    double worst_violation = 0; // max over steps of (observed - bound)
};

struct CheckOptions {
    double slack_abs = 1e-10;
    long skip_steps = 0;              // exclude early transients
    std::optional<MatrixXd> metric;   // P of the reverse-engineered metric;
                                      // errors are measured as ||P^{-1/2}(x - x*)||
};

namespace detail {
inline double metric_error(const VectorXd& x, const VectorXd& x_star,
                           const std::optional<Eigen::LLT<MatrixXd>>& llt) {
    VectorXd d = x - x_star;
    if (!llt) return d.norm();
    return std::sqrt(d.dot(llt->solve(d)));
}
} // namespace detail

/// Pathwise geometric bound ||x_k - x*|| <= ratio^k ||x0 - x*|| + slack.
inline CertCheck check_state_certificate(const RateCertificate& cert, const Trajectory& traj,
                                         const VectorXd& x_star, const CheckOptions& opts = {}) {
    if (cert.kind != RateCertificate::Kind::Geometric)
        throw Error(ErrorCode::InvalidArgument, "check_state_certificate: not a geometric bound");
    std::optional<Eigen::LLT<MatrixXd>> llt;
    if (opts.metric) llt.emplace(*opts.metric);
    CertCheck out;
    if (traj.states.empty()) return out;
    double e0 = detail::metric_error(traj.states.front(), x_star, llt);
    double bound = e0;
    for (size_t k = 1; k < traj.states.size(); ++k) {
        bound *= cert.ratio;
        if (static_cast<long>(k) < opts.skip_steps) continue;
        double err = detail::metric_error(traj.states[k], x_star, llt);
        double violation = err - (bound + opts.slack_abs);
        if (violation > out.worst_violation) {
            out.worst_violation = violation;
            out.worst_step = static_cast<long>(k);
            out.pass = false;
        }
    }
    return out;
}

/// Pathwise sublinear gap bound f(x_k) - f* <= gap_factor ||x0-x*||^2 / k
/// (or /(k+1)^2) + slack, for quadratic objectives.
inline CertCheck check_gap_certificate(const RateCertificate& cert, const Trajectory& traj,
                                       const MatrixXd& Q, const VectorXd& r,
                                       const VectorXd& x_star, const CheckOptions& opts = {}) {
    if (cert.kind == RateCertificate::Kind::Geometric)
        throw Error(ErrorCode::InvalidArgument, "check_gap_certificate: not a sublinear bound");
    auto f = [&](const VectorXd& x) { return 0.5 * x.dot(Q * x) + r.dot(x); };
    CertCheck out;
    if (traj.states.empty()) return out;
    double fstar = f(x_star);
    double d0 = (traj.states.front() - x_star).squaredNorm();
    for (size_t k = 1; k < traj.states.size(); ++k) {
        if (static_cast<long>(k) < opts.skip_steps) continue;
        double gap = f(traj.states[k]) - fstar;
        double denom = cert.kind == RateCertificate::Kind::SublinearInverseK
                           ? static_cast<double>(k)
                           : static_cast<double>(k + 1) * static_cast<double>(k + 1);
        double bound = cert.gap_factor * d0 / denom + opts.slack_abs;
        double violation = gap - bound;
        if (violation > out.worst_violation) {
            out.worst_violation = violation;
            out.worst_step = static_cast<long>(k);
            out.pass = false;
        }
    }
    return out;
}

/// Per-step potential decay V_{k+1} <= c V_k with relative slack.
inline CertCheck check_potential_decay(const RateCertificate& cert, const PotentialTrace& pt,
                                       double rel_slack = 1e-12) {
    CertCheck out;
    for (size_t k = 0; k + 1 < pt.V.size(); ++k) {
        if (pt.V[k] < 1e-250) break; // below this the ratio is floating-point noise
        double bound = cert.ratio * pt.V[k] * (1.0 + rel_slack) + 1e-300;
        double violation = pt.V[k + 1] - bound;
        if (violation > out.worst_violation) {
            out.worst_violation = violation;
            out.worst_step = static_cast<long>(k + 1);
            out.pass = false;
        }
    }
    return out;
}

/// Error domination by the potential: ||lambda_k - lambda*|| <= V_k and
/// ||x_k - x*|| <= max(1/gamma, sigma_max/mu) V_k.
inline CertCheck check_potential_domination(const PotentialTrace& pt, const Trajectory& traj,
                                            const SaddleProblem& prob,
                                            const FunctionClassParams& p, double slack = 1e-10) {
    auto [smin, smax] = prob.singular_value_range();
    (void)smin;
    double cx = std::max(1.0 / pt.gamma, smax / p.mu);
    CertCheck out;
    const auto& lam = traj.aux.at("lambda");
    for (size_t k = 0; k < traj.states.size(); ++k) {
        double v1 = (lam[k] - pt.lambda_star).norm() - (pt.V[k] + slack);
        double v2 = (traj.states[k] - pt.x_star).norm() - (cx * pt.V[k] + slack);
        double violation = std::max(v1, v2);
        if (violation > out.worst_violation) {
            out.worst_violation = violation;
            out.worst_step = static_cast<long>(k);
            out.pass = false;
        }
    }
    return out;
}

} // namespace retrofit
