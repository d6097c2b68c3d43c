#pragma once

#include <stdexcept>
#include <string>

namespace retrofit {

enum class ErrorCode {
    Degenerate,          // no fixed point / inconsistent linear system
    NotInClass,          // reverse-engineering precondition violated
    InconsistentScaling, // dual-row and primal-row constraint views disagree
    DegenerateObjective, // Hessian has no positive curvature
    MissingCoefficient,  // momentum coefficient needed but not supplied
    NotApplicable,       // theorem preconditions not met for this function class
    StepSizeOutOfRange,
    RankDeficient,       // constraint matrix violates the full-row-rank assumption
    SingularHessian,
    NotOrdered,          // matrices not ordered in the semidefinite sense
    NotConvexifiable,    // Hessian indefinite on the constraint nullspace
    ConfigError,
    DisconnectedGraph,
    InvalidArgument,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Degenerate: return "Degenerate";
        case ErrorCode::NotInClass: return "NotInClass";
        case ErrorCode::InconsistentScaling: return "InconsistentScaling";
        case ErrorCode::DegenerateObjective: return "DegenerateObjective";
        case ErrorCode::MissingCoefficient: return "MissingCoefficient";
        case ErrorCode::NotApplicable: return "NotApplicable";
        case ErrorCode::StepSizeOutOfRange: return "StepSizeOutOfRange";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::SingularHessian: return "SingularHessian";
        case ErrorCode::NotOrdered: return "NotOrdered";
        case ErrorCode::NotConvexifiable: return "NotConvexifiable";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Library-wide exception carrying a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace retrofit
