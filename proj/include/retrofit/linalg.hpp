#pragma once

// Dense linear-algebra utilities shared by the classifier, redesign and
// rates layers: eigendecomposition reports, discrete-time stability
// verdicts, rank-revealing least squares and a few spectral helpers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/tolerances.hpp"

namespace retrofit {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

/// 2-norm condition number via SVD. Returns +inf for (numerically) singular input.
template <typename Mat>
double condition_number(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    double smin = s(s.size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

inline double spectral_radius(const MatrixXd& m) {
    return Eigen::EigenSolver<MatrixXd>(m, /*computeEigenvectors=*/false)
        .eigenvalues()
        .cwiseAbs()
        .maxCoeff();
}

/// Eigenvalues of a symmetric matrix, ascending. Input is symmetrized first.
inline VectorXd symmetric_eigenvalues(const MatrixXd& m) {
    MatrixXd s = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues();
}

inline double lambda_min(const MatrixXd& m) { return symmetric_eigenvalues(m)(0); }
inline double lambda_max(const MatrixXd& m) {
    VectorXd ev = symmetric_eigenvalues(m);
    return ev(ev.size() - 1);
}

inline bool is_symmetric(const MatrixXd& m, double tol = 1e-10) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

/// Principal square root of a symmetric positive definite matrix.
inline MatrixXd spd_sqrt(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
    if (es.eigenvalues()(0) <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "spd_sqrt: matrix is not positive definite");
    return es.operatorSqrt();
}

struct LeastSquaresSolution {
    VectorXd x;          // minimum-norm least-squares solution
    Eigen::Index rank = 0;
    double residual = 0; // ||M x - rhs||
};

/// Minimum-norm least squares with singular values below tol_rank * sigma_max
/// treated as zero.
inline LeastSquaresSolution min_norm_solve(const MatrixXd& M, const VectorXd& rhs,
                                           double tol_rank = 1e-10) {
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& s = svd.singularValues();
    double cutoff = s.size() > 0 ? tol_rank * s(0) : 0.0;
    VectorXd inv = VectorXd::Zero(s.size());
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) {
            inv(i) = 1.0 / s(i);
            ++rank;
        }
    }
    LeastSquaresSolution out;
    out.x = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * rhs);
    out.rank = rank;
    out.residual = (M * out.x - rhs).norm();
    return out;
}

/// Orthonormal basis of the nullspace of M (columns). Empty matrix when trivial.
inline MatrixXd nullspace_basis(const MatrixXd& M, double tol_rank = 1e-10) {
    Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeFullV);
    const VectorXd& s = svd.singularValues();
    double cutoff = s.size() > 0 ? tol_rank * std::max(s(0), 1e-300) : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff) ++rank;
    Eigen::Index n = M.cols();
    return svd.matrixV().rightCols(n - rank);
}

inline Eigen::Index numerical_rank(const MatrixXd& M, double tol_rank = 1e-10) {
    Eigen::JacobiSVD<MatrixXd> svd(M);
    const VectorXd& s = svd.singularValues();
    if (s.size() == 0) return 0;
    double cutoff = tol_rank * s(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > cutoff) ++rank;
    return rank;
}

// ---------------------------------------------------------------------------
// Eigendecomposition report

struct SpectrumReport {
    VectorXcd eigenvalues;
    bool real_spectrum = false;   // all imaginary parts at dust level
    bool diagonalizable = false;  // eigenvector matrix condition below tol_diag
    double eigvec_cond = 0.0;
    // Real factors, available when the spectrum is real and the matrix is
    // diagonalizable: M = J * diag(lambda) * J^{-1}.
    std::optional<MatrixXd> J;
    std::optional<VectorXd> lambda;
    double recon_residual = 0.0;  // ||J L J^{-1} - M|| relative to ||M||
};

/// Full eigendecomposition report with diagonalizability and real-spectrum
/// verdicts. Verdicts are numerical: defectiveness shows up as an
/// ill-conditioned eigenvector matrix.
inline SpectrumReport spectrum(const MatrixXd& M, const Tolerances& tol = {}) {
    if (M.rows() != M.cols())
        throw Error(ErrorCode::InvalidArgument, "spectrum: matrix must be square");
    if (!all_finite(M))
        throw Error(ErrorCode::InvalidArgument, "spectrum: matrix has non-finite entries");

    SpectrumReport rep;
    const Eigen::Index n = M.rows();
    if (n == 0) {
        rep.real_spectrum = true;
        rep.diagonalizable = true;
        rep.eigvec_cond = 1.0;
        rep.J = MatrixXd::Identity(0, 0);
        rep.lambda = VectorXd(0);
        return rep;
    }

    Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/true);
    rep.eigenvalues = es.eigenvalues();

    rep.real_spectrum = true;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(rep.eigenvalues(i).imag()) >
            tol.tol_imag * (1.0 + std::abs(rep.eigenvalues(i)))) {
            rep.real_spectrum = false;
            break;
        }
    }

    rep.eigvec_cond = condition_number<MatrixXcd>(es.eigenvectors());
    rep.diagonalizable = rep.eigvec_cond <= tol.tol_diag;

    if (rep.real_spectrum && rep.diagonalizable) {
        // Rotate each eigenvector to be (numerically) real: for a real
        // eigenvalue of a real matrix the eigenvector is real up to a
        // complex phase.
        MatrixXd J(n, n);
        for (Eigen::Index c = 0; c < n; ++c) {
            VectorXcd v = es.eigenvectors().col(c);
            Eigen::Index imax = 0;
            v.cwiseAbs().maxCoeff(&imax);
            std::complex<double> phase = v(imax) / std::abs(v(imax));
            VectorXd vr = (v / phase).real();
            double nv = vr.norm();
            J.col(c) = nv > 0 ? VectorXd(vr / nv) : vr;
        }
        VectorXd lam = rep.eigenvalues.real();
        MatrixXd recon = J * lam.asDiagonal() * J.inverse();
        double scale = std::max(1.0, M.norm());
        rep.recon_residual = (recon - M).norm() / scale;
        rep.J = std::move(J);
        rep.lambda = std::move(lam);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Discrete-time stability

enum class Stability { Asymptotic, Marginal, Unstable };

inline const char* stability_name(Stability s) {
    switch (s) {
        case Stability::Asymptotic: return "asymptotic";
        case Stability::Marginal: return "marginal";
        case Stability::Unstable: return "unstable";
    }
    return "unknown";
}

/// Discrete-time stability: spectral radius at most one, and every eigenvalue
/// on the unit circle must be semisimple (1x1 Jordan blocks). Semisimplicity
/// is decided by comparing algebraic and geometric multiplicities of
/// clustered unit-circle eigenvalues.
inline Stability stability_verdict_matrix(const MatrixXd& A, const Tolerances& tol = {}) {
    if (A.rows() != A.cols())
        throw Error(ErrorCode::InvalidArgument, "stability_verdict: matrix must be square");
    const Eigen::Index n = A.rows();
    if (n == 0) return Stability::Asymptotic;

    VectorXcd ev = Eigen::EigenSolver<MatrixXd>(A, false).eigenvalues();
    double band = tol.tol_unit;
    bool any_on_circle = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mag = std::abs(ev(i));
        if (mag > 1.0 + band) return Stability::Unstable;
        if (mag >= 1.0 - band) any_on_circle = true;
    }
    if (!any_on_circle) return Stability::Asymptotic;

    // Cluster unit-circle eigenvalues and check geometric multiplicity.
    double scale = std::max(1.0, A.norm());
    std::vector<bool> used(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (used[static_cast<size_t>(i)]) continue;
        if (std::abs(ev(i)) < 1.0 - band) continue;
        std::complex<double> center = ev(i);
        Eigen::Index algebraic = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (std::abs(ev(j) - center) <= 1e-6 * scale) {
                if (!used[static_cast<size_t>(j)]) {
                    used[static_cast<size_t>(j)] = true;
                    ++algebraic;
                }
            }
        }
        MatrixXcd shifted = A.cast<std::complex<double>>();
        shifted.diagonal().array() -= center;
        Eigen::JacobiSVD<MatrixXcd> svd(shifted);
        const auto& s = svd.singularValues();
        double cutoff = 1e-8 * scale;
        Eigen::Index rank = 0;
        for (Eigen::Index k = 0; k < s.size(); ++k)
            if (s(k) > cutoff) ++rank;
        Eigen::Index geometric = n - rank;
        if (geometric < algebraic) return Stability::Unstable;
    }
    return Stability::Marginal;
}

} // namespace retrofit
