#pragma once

// Membership tests and reverse-engineering constructions: decide whether an
// LTI system is a gradient-descent iteration (class O) or a primal-dual
// gradient iteration (class S), and recover the optimization problem it
// solves.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/linalg.hpp"
#include "retrofit/problem.hpp"
#include "retrofit/system.hpp"

namespace retrofit {

// ---------------------------------------------------------------------------
// Class O

struct ClassOVerdict {
    bool in_class = false;
    std::string reason;          // first failed condition, empty when in class
    bool fixed_point_exists = false;
    Stability stability = Stability::Unstable;
    SpectrumReport ia_spectrum;  // spectrum of I - A; carries J, lambda on success
};

/// Class-O membership: (a) fixed-point set nonempty, (b) marginal or
/// asymptotic stability, (c) real spectrum of I - A, (d) I - A
/// diagonalizable. The reason code names the first failed condition.
inline ClassOVerdict classify_O(const LtiSystem& sys, const Tolerances& tol = {}) {
    ClassOVerdict v;
    v.fixed_point_exists = try_fixed_point(sys, tol).has_value();
    if (!v.fixed_point_exists) {
        v.reason = "no_fixed_point";
        return v;
    }
    v.stability = stability_verdict(sys, tol);
    if (v.stability == Stability::Unstable) {
        v.reason = "unstable";
        return v;
    }
    MatrixXd ia = MatrixXd::Identity(sys.n(), sys.n()) - sys.A;
    v.ia_spectrum = spectrum(ia, tol);
    if (!v.ia_spectrum.real_spectrum) {
        v.reason = "complex_spectrum";
        return v;
    }
    if (!v.ia_spectrum.diagonalizable) {
        v.reason = "not_diagonalizable";
        return v;
    }
    v.in_class = true;
    return v;
}

/// Constructs one valid (P, Q, r) triple from the eigendecomposition
/// I - A = J L J^{-1}: P = J J^T and Q = J^{-T} L J^{-1}, so that the
/// gradient step x - P(Qx + r) reproduces A x + C w exactly.
inline QuadraticObjectiveO reverse_engineer_O(const LtiSystem& sys,
                                              const Tolerances& tol = {}) {
    ClassOVerdict v = classify_O(sys, tol);
    if (!v.in_class)
        throw Error(ErrorCode::NotInClass, "reverse_engineer_O: " + v.reason);

    const MatrixXd& J = *v.ia_spectrum.J;
    const VectorXd& lam = *v.ia_spectrum.lambda;
    MatrixXd Jinv = J.inverse();

    QuadraticObjectiveO obj;
    obj.P = J * J.transpose();
    obj.Q = Jinv.transpose() * lam.asDiagonal() * Jinv;
    obj.Q = 0.5 * (obj.Q + obj.Q.transpose());
    obj.r = -obj.P.llt().solve(sys.input_offset());
    obj.eps_nominal = 1.0;

    MatrixXd recon = MatrixXd::Identity(sys.n(), sys.n()) - obj.P * obj.Q;
    if ((recon - sys.A).norm() > tol.tol_recon * (1.0 + sys.A.norm()))
        throw Error(ErrorCode::NotInClass, "reverse_engineer_O: reconstruction residual too large");
    return obj;
}

// ---------------------------------------------------------------------------
// Function-class parameters

namespace detail {
inline FunctionClassParams params_from_hessian(const MatrixXd& H, const Tolerances& tol) {
    if (!is_symmetric(H, 1e-8))
        throw Error(ErrorCode::InvalidArgument, "extract_params: Hessian must be symmetric");
    VectorXd ev = symmetric_eigenvalues(H);
    FunctionClassParams p;
    p.L = ev(ev.size() - 1);
    if (p.L <= 0.0)
        throw Error(ErrorCode::DegenerateObjective, "extract_params: Hessian has no positive curvature");
    double lmin = ev(0);
    // Numerical zeros count as zero curvature, not as tiny strong convexity.
    p.mu = lmin > tol.tol_psd * std::max(1.0, p.L) ? lmin : 0.0;
    return p;
}
} // namespace detail

inline FunctionClassParams extract_params(const QuadraticObjectiveO& obj,
                                          const Tolerances& tol = {}) {
    return detail::params_from_hessian(obj.effective_hessian(), tol);
}

inline FunctionClassParams extract_params(const SaddleProblem& prob,
                                          const Tolerances& tol = {}) {
    return detail::params_from_hessian(prob.Q22, tol);
}

// ---------------------------------------------------------------------------
// Class S

struct SaddleWitness {
    MatrixXd V1; // negative definite, commutes with Lambda1
    MatrixXd V2;
    double coupling_residual = 0;  // relative residual of the coupling line
    double commute_residual = 0;   // max of the two commutation residuals
    double margin1 = 0;            // -lambda_max(Vi) / ||Vi||
    double margin2 = 0;
};

struct ClassSVerdict {
    bool in_class = false;
    std::string reason;
    Eigen::Index n1 = 0, n2 = 0;
    Stability stability = Stability::Unstable;
    SpectrumReport block1; // spectrum of A11 - I
    SpectrumReport block2; // spectrum of A22 - I
    std::optional<SaddleWitness> witness;
};

namespace detail {

inline std::vector<std::vector<int>> cluster_eigenvalues(const VectorXd& lam, double ctol) {
    std::vector<std::vector<int>> groups;
    std::vector<bool> used(static_cast<size_t>(lam.size()), false);
    for (int i = 0; i < lam.size(); ++i) {
        if (used[static_cast<size_t>(i)]) continue;
        std::vector<int> g;
        for (int j = 0; j < lam.size(); ++j) {
            if (!used[static_cast<size_t>(j)] && std::abs(lam(j) - lam(i)) <= ctol) {
                used[static_cast<size_t>(j)] = true;
                g.push_back(j);
            }
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

/// Symmetric basis matrices spanning all block-diagonal symmetric matrices
/// compatible with the eigenvalue clusters (commutation-safe parameterization).
inline std::vector<MatrixXd> commuting_symmetric_basis(
    const std::vector<std::vector<int>>& clusters, Eigen::Index n) {
    std::vector<MatrixXd> basis;
    for (const auto& c : clusters) {
        for (size_t a = 0; a < c.size(); ++a) {
            for (size_t b = a; b < c.size(); ++b) {
                MatrixXd E = MatrixXd::Zero(n, n);
                E(c[a], c[b]) = 1.0;
                E(c[b], c[a]) = 1.0;
                basis.push_back(std::move(E));
            }
        }
    }
    return basis;
}

struct WitnessSearchSpace {
    std::vector<MatrixXd> basis1, basis2;
    MatrixXd M;          // coupling operator over the parameterization
    MatrixXd W1op, W2op; // J^{-T} (.) J^{-1} congruence factors
    Eigen::Index p1 = 0; // number of V1 parameters
    double sigma_max = 0;

    MatrixXd V1(const VectorXd& p) const {
        MatrixXd v = MatrixXd::Zero(W1op.rows(), W1op.rows());
        for (Eigen::Index i = 0; i < p1; ++i) v += p(i) * basis1[static_cast<size_t>(i)];
        return v;
    }
    MatrixXd V2(const VectorXd& p) const {
        MatrixXd v = MatrixXd::Zero(W2op.rows(), W2op.rows());
        for (size_t i = 0; i < basis2.size(); ++i)
            v += p(p1 + static_cast<Eigen::Index>(i)) * basis2[i];
        return v;
    }
    /// Projects a symmetric pair onto the commuting block parameterization.
    VectorXd params_for(const MatrixXd& v1, const MatrixXd& v2) const {
        VectorXd p(p1 + static_cast<Eigen::Index>(basis2.size()));
        Eigen::Index k = 0;
        for (const auto& E : basis1)
            p(k++) = (E.array() * v1.array()).sum() / (E.array() * E.array()).sum();
        for (const auto& E : basis2)
            p(k++) = (E.array() * v2.array()).sum() / (E.array() * E.array()).sum();
        return p;
    }
};

inline VectorXd flatten(const MatrixXd& m) {
    return Eigen::Map<const VectorXd>(m.data(), m.size());
}

inline WitnessSearchSpace build_witness_space(const MatrixXd& J1, const VectorXd& lam1,
                                              const MatrixXd& J2, const VectorXd& lam2,
                                              const MatrixXd& A12, const MatrixXd& A21) {
    WitnessSearchSpace ws;
    double ctol1 = 1e-9 * (1.0 + lam1.cwiseAbs().maxCoeff());
    double ctol2 = 1e-9 * (1.0 + lam2.cwiseAbs().maxCoeff());
    ws.basis1 = commuting_symmetric_basis(cluster_eigenvalues(lam1, ctol1), J1.rows());
    ws.basis2 = commuting_symmetric_basis(cluster_eigenvalues(lam2, ctol2), J2.rows());
    ws.p1 = static_cast<Eigen::Index>(ws.basis1.size());

    MatrixXd J1inv = J1.inverse();
    MatrixXd J2inv = J2.inverse();
    ws.W1op = J1inv;
    ws.W2op = J2inv;

    Eigen::Index rows = A12.rows() * A12.cols();
    ws.M.resize(rows, ws.p1 + static_cast<Eigen::Index>(ws.basis2.size()));
    Eigen::Index col = 0;
    for (const auto& E : ws.basis1)
        ws.M.col(col++) = flatten((J1inv.transpose() * E * J1inv) * A12);
    for (const auto& E : ws.basis2)
        ws.M.col(col++) = flatten(A21.transpose() * (J2inv.transpose() * E * J2inv));
    Eigen::JacobiSVD<MatrixXd> svd(ws.M);
    ws.sigma_max = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    return ws;
}

/// Negative-definiteness margin: -lambda_max(V) / ||V||_2; positive iff ND.
inline double nd_margin(const MatrixXd& V) {
    VectorXd ev = symmetric_eigenvalues(V);
    double scale = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
    if (scale <= 0.0) return -1.0;
    return -ev(ev.size() - 1) / scale;
}

/// Clip all eigenvalues to at most -delta * ||V||, preserving eigenvectors.
inline MatrixXd clip_negative_definite(const MatrixXd& V, double delta) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (V + V.transpose()));
    VectorXd ev = es.eigenvalues();
    double scale = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
    if (scale <= 0.0) scale = 1.0;
    VectorXd clipped = ev.cwiseMin(-delta * scale);
    return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Searches for negative-definite V1, V2 (commuting with Lambda1, Lambda2 by
/// construction) solving the homogeneous coupling equation
///   J1^{-T} V1 J1^{-1} A12 + A21^T J2^{-T} V2 J2^{-1} = 0.
/// Tries closed-form candidates first (scaled identities, one side fixed),
/// then alternating projections between the equation's nullspace and the
/// negative-definite cone.
inline std::optional<SaddleWitness> find_coupling_witness(
    const MatrixXd& J1, const VectorXd& lam1, const MatrixXd& J2, const VectorXd& lam2,
    const MatrixXd& A12, const MatrixXd& A21, const Tolerances& tol = {}) {
    using detail::WitnessSearchSpace;

    WitnessSearchSpace ws = detail::build_witness_space(J1, lam1, J2, lam2, A12, A21);
    const Eigen::Index np = ws.M.cols();

    auto evaluate = [&](VectorXd p) -> std::optional<SaddleWitness> {
        double pn = p.norm();
        if (pn <= 0.0) return std::nullopt;
        p /= pn;
        MatrixXd V1 = ws.V1(p), V2 = ws.V2(p);
        // A witness and its negation solve the same equation; orient it ND.
        if (V1.trace() + V2.trace() > 0.0) {
            V1 = -V1;
            V2 = -V2;
            p = -p;
        }
        double m1 = detail::nd_margin(V1);
        double m2 = detail::nd_margin(V2);
        if (m1 < tol.witness_margin || m2 < tol.witness_margin) return std::nullopt;
        double denom = std::max(ws.sigma_max, 1e-300);
        double res = (ws.M * p).norm() / denom;
        if (res > tol.tol_feas) return std::nullopt;
        // Normalize so that max block norm is one.
        double s = std::max(V1.norm(), V2.norm());
        V1 /= s;
        V2 /= s;
        SaddleWitness w;
        w.V1 = V1;
        w.V2 = V2;
        MatrixXd coupling = (J1.inverse().transpose() * V1 * J1.inverse()) * A12 +
                            A21.transpose() * (J2.inverse().transpose() * V2 * J2.inverse());
        w.coupling_residual = coupling.norm() / (1.0 + A12.norm() + A21.norm());
        double c1 = (V1 * lam1.asDiagonal() - lam1.asDiagonal() * V1).norm() /
                    (V1.norm() * (1.0 + lam1.cwiseAbs().maxCoeff()));
        double c2 = (V2 * lam2.asDiagonal() - lam2.asDiagonal() * V2).norm() /
                    (V2.norm() * (1.0 + lam2.cwiseAbs().maxCoeff()));
        w.commute_residual = std::max(c1, c2);
        w.margin1 = m1;
        w.margin2 = m2;
        if (w.coupling_residual > tol.tol_feas) return std::nullopt;
        return w;
    };

    // Degenerate coupling (decoupled blocks): any ND pair works.
    MatrixXd I1 = MatrixXd::Identity(J1.rows(), J1.rows());
    MatrixXd I2 = MatrixXd::Identity(J2.rows(), J2.rows());
    if (ws.sigma_max <= 1e-300) {
        if (auto w = evaluate(ws.params_for(-I1, -I2))) return w;
    }

    // Candidate 1: scaled identity pair V1 = -a I, V2 = -b I.
    {
        VectorXd u1 = ws.M * ws.params_for(-I1, MatrixXd::Zero(J2.rows(), J2.rows()));
        VectorXd u2 = ws.M * ws.params_for(MatrixXd::Zero(J1.rows(), J1.rows()), -I2);
        MatrixXd U(u1.size(), 2);
        U.col(0) = u1;
        U.col(1) = u2;
        Eigen::JacobiSVD<MatrixXd> svd(U, Eigen::ComputeFullV);
        VectorXd ab = svd.matrixV().col(1);
        if (ab(0) * ab(1) > 0.0) {
            double a = std::abs(ab(0)), b = std::abs(ab(1));
            if (auto w = evaluate(ws.params_for(-a * I1, -b * I2))) return w;
        }
    }

    // Candidates 2 and 3: fix one side to -I, least-squares solve the other.
    {
        MatrixXd M1 = ws.M.leftCols(ws.p1);
        MatrixXd M2 = ws.M.rightCols(np - ws.p1);
        VectorXd rhs2 = ws.M * ws.params_for(MatrixXd::Zero(J1.rows(), J1.rows()), -I2);
        LeastSquaresSolution s1 = min_norm_solve(M1, -rhs2, tol.tol_rank);
        VectorXd cand(np);
        cand.head(ws.p1) = s1.x;
        cand.tail(np - ws.p1) = ws.params_for(MatrixXd::Zero(J1.rows(), J1.rows()), -I2).tail(np - ws.p1);
        if (auto w = evaluate(cand)) return w;

        VectorXd rhs1 = ws.M * ws.params_for(-I1, MatrixXd::Zero(J2.rows(), J2.rows()));
        LeastSquaresSolution s2 = min_norm_solve(M2, -rhs1, tol.tol_rank);
        cand.head(ws.p1) = ws.params_for(-I1, MatrixXd::Zero(J2.rows(), J2.rows())).head(ws.p1);
        cand.tail(np - ws.p1) = s2.x;
        if (auto w = evaluate(cand)) return w;
    }

    // Candidate 4: smallest singular vector of the coupling operator.
    {
        Eigen::JacobiSVD<MatrixXd> svd(ws.M, Eigen::ComputeFullV);
        VectorXd p = svd.matrixV().col(np - 1);
        if (auto w = evaluate(p)) return w;
    }

    // General search: alternate between the nullspace of the coupling
    // operator and the negative-definite cone.
    MatrixXd N = nullspace_basis(ws.M, tol.tol_rank);
    if (N.cols() == 0) return std::nullopt;
    VectorXd p = N * (N.transpose() * ws.params_for(-I1, -I2));
    if (p.norm() <= 1e-14) p = N.col(0);
    p.normalize();
    for (int it = 0; it < 300; ++it) {
        MatrixXd V1 = detail::clip_negative_definite(ws.V1(p), 2.0 * tol.witness_margin);
        MatrixXd V2 = detail::clip_negative_definite(ws.V2(p), 2.0 * tol.witness_margin);
        VectorXd q = N * (N.transpose() * ws.params_for(V1, V2));
        if (q.norm() <= 1e-14) break;
        q.normalize();
        if ((q - p).norm() < 1e-13) {
            p = q;
            break;
        }
        p = q;
    }
    return evaluate(p);
}

/// Class-S membership per the three conditions: overall stability,
/// non-positive real diagonalizable block spectra, and feasibility of the
/// coupling equation with negative-definite commuting witnesses.
inline ClassSVerdict classify_S(const PartitionedLtiSystem& sys, const Tolerances& tol = {}) {
    ClassSVerdict v;
    v.n1 = sys.n1;
    v.n2 = sys.n2;

    v.stability = stability_verdict(sys.base, tol);
    if (v.stability == Stability::Unstable) {
        v.reason = "unstable";
        return v;
    }

    MatrixXd B1 = sys.A11() - MatrixXd::Identity(sys.n1, sys.n1);
    MatrixXd B2 = sys.A22() - MatrixXd::Identity(sys.n2, sys.n2);
    v.block1 = spectrum(B1, tol);
    v.block2 = spectrum(B2, tol);

    auto check_block = [&](const SpectrumReport& rep, const MatrixXd& B,
                           const std::string& name) -> std::string {
        if (!rep.real_spectrum) return name + "_complex_spectrum";
        double band = 1e-9 * (1.0 + B.norm());
        for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
            if (rep.eigenvalues(i).real() > band) return name + "_positive_eigenvalue";
        if (!rep.diagonalizable) return name + "_defective";
        return "";
    };
    v.reason = check_block(v.block1, B1, "block1");
    if (!v.reason.empty()) return v;
    v.reason = check_block(v.block2, B2, "block2");
    if (!v.reason.empty()) return v;

    v.witness = find_coupling_witness(*v.block1.J, *v.block1.lambda, *v.block2.J,
                                      *v.block2.lambda, sys.A12(), sys.A21(), tol);
    if (!v.witness) {
        v.reason = "coupling_infeasible";
        return v;
    }
    v.in_class = true;
    return v;
}

// ---------------------------------------------------------------------------
// Class-S reverse-engineering

enum class DualScaling { Identity, Diagonal, General };

struct ReverseSResult {
    SaddleProblem problem;
    DualScaling scaling = DualScaling::Identity;
    VectorXd diag_scaling;        // S for the diagonal case
    MatrixXd dual_metric;         // P such that A12 = eps2 * P * B (general case)
    bool dual_metric_pd = true;   // symmetric part of the metric is PD
    double consistency_residual = 0;
};

/// Inverts the primal-dual gradient pattern: reads the dual update
/// lambda+ = lambda + eps2 (B_d x - b_d) off the first block row, the primal
/// Hessian off the second, and reconciles the two constraint views
/// (A21 vs -eps1 B_d^T S) through a positive diagonal scaling S, falling back
/// to a general invertible dual metric when no diagonal scaling exists.
inline ReverseSResult reverse_engineer_S(const PartitionedLtiSystem& sys, double eps1 = 1.0,
                                         double eps2 = 1.0, const Tolerances& tol = {}) {
    if (eps1 <= 0.0 || eps2 <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "reverse_engineer_S: step sizes must be positive");
    const Eigen::Index n1 = sys.n1, n2 = sys.n2;
    double ascale = 1.0 + sys.base.A.norm();

    if ((sys.A11() - MatrixXd::Identity(n1, n1)).norm() > tol.tol_recon * ascale)
        throw Error(ErrorCode::NotInClass, "reverse_engineer_S: A11 must equal the identity");

    MatrixXd Q22 = (MatrixXd::Identity(n2, n2) - sys.A22()) / eps1;
    if (!is_symmetric(Q22, tol.tol_recon))
        throw Error(ErrorCode::NotInClass, "reverse_engineer_S: primal Hessian is not symmetric");
    Q22 = 0.5 * (Q22 + Q22.transpose());
    if (lambda_min(Q22) < -tol.tol_psd * (1.0 + Q22.norm()))
        throw Error(ErrorCode::NotInClass, "reverse_engineer_S: primal Hessian is not PSD");

    MatrixXd B_dual = sys.A12() / eps2;
    VectorXd b_dual = -sys.offset1() / eps2;
    MatrixXd A21 = sys.A21();

    ReverseSResult out;
    out.problem.Q22 = std::move(Q22);
    out.problem.r = -sys.offset2() / eps1;
    out.problem.eps1 = eps1;
    out.problem.eps2 = eps2;

    // Per-dual-row diagonal scaling: minimize ||A21 + eps1 B_dual^T S||
    // column by column.
    VectorXd s(n1);
    bool diag_ok = true;
    MatrixXd Bt = B_dual.transpose(); // n2 x n1
    for (Eigen::Index j = 0; j < n1; ++j) {
        double denom = Bt.col(j).squaredNorm();
        if (denom <= 1e-300) {
            if (A21.col(j).norm() > tol.tol_recon * ascale) diag_ok = false;
            s(j) = 1.0;
            continue;
        }
        s(j) = -A21.col(j).dot(Bt.col(j)) / (eps1 * denom);
        if (s(j) <= 0.0) diag_ok = false;
    }
    if (diag_ok) {
        double res = (A21 + eps1 * Bt * s.asDiagonal()).norm() / (1.0 + A21.norm());
        if (res <= tol.tol_recon) {
            out.diag_scaling = s;
            out.consistency_residual = res;
            out.scaling = (s - VectorXd::Ones(n1)).cwiseAbs().maxCoeff() <= tol.tol_recon
                              ? DualScaling::Identity
                              : DualScaling::Diagonal;
            out.problem.B = s.asDiagonal() * B_dual;
            out.problem.b = s.asDiagonal() * b_dual;
            return out;
        }
    }

    // General dual metric: the constraint matrix as seen by the primal
    // gradient, with the dual row driven by the same residuals through an
    // invertible mixing P: A12 = eps2 P B.
    MatrixXd B = -A21.transpose() / eps1; // n1 x n2
    MatrixXd BBt = B * B.transpose();
    if (numerical_rank(BBt, tol.tol_rank) < n1)
        throw Error(ErrorCode::InconsistentScaling,
                    "reverse_engineer_S: no diagonal scaling and primal constraint matrix "
                    "is row rank deficient");
    MatrixXd P = (sys.A12() * B.transpose()) * BBt.inverse() / eps2;
    double res = (eps2 * P * B - sys.A12()).norm() / (1.0 + sys.A12().norm());
    if (res > tol.tol_recon)
        throw Error(ErrorCode::InconsistentScaling,
                    "reverse_engineer_S: dual update is not driven by the primal "
                    "constraint residuals");
    if (numerical_rank(P, tol.tol_rank) < n1)
        throw Error(ErrorCode::InconsistentScaling,
                    "reverse_engineer_S: dual metric is singular");
    out.scaling = DualScaling::General;
    out.dual_metric = P;
    out.dual_metric_pd = lambda_min(0.5 * (P + P.transpose())) > 0.0;
    out.consistency_residual = res;
    out.problem.B = std::move(B);
    // C w restricted to the dual rows equals -eps2 P b.
    out.problem.b = -P.partialPivLu().solve(sys.offset1()) / eps2;
    return out;
}

// ---------------------------------------------------------------------------
// Combined verdict for reports

struct ClassVerdict {
    ClassOVerdict class_o;
    std::optional<ClassSVerdict> class_s; // present when a partition was supplied
};

inline ClassVerdict classify(const LtiSystem& sys, std::optional<Eigen::Index> n1 = {},
                             const Tolerances& tol = {}) {
    ClassVerdict v;
    v.class_o = classify_O(sys, tol);
    if (n1) v.class_s = classify_S(PartitionedLtiSystem(sys, *n1), tol);
    return v;
}

} // namespace retrofit
