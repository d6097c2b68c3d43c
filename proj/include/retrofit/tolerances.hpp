#pragma once

#include <cstdlib>
#include <string>

#include "json.hpp"

#include "retrofit/errors.hpp"

namespace retrofit {

/// Numerical thresholds used across the toolkit. All values can be overridden
/// through the RETROFIT_TOL_OVERRIDES environment variable, a JSON map from
/// tolerance name to value, e.g. {"tol_recon": 1e-6}.
struct Tolerances {
    double tol_psd = 1e-10;   // slack below zero still counted as PSD
    double tol_recon = 1e-8;  // relative reconstruction / consistency residual
    double tol_feas = 1e-8;   // coupling-equation feasibility residual
    double tol_rank = 1e-10;  // relative singular-value cutoff
    double tol_diag = 1e8;    // eigenvector condition number bound for diagonalizability
    double tol_unit = 1e-8;   // half-width of the unit-circle band for stability
    double tol_imag = 1e-9;   // relative imaginary part treated as eigenvalue dust
    double witness_margin = 1e-6;    // definiteness margin for Eq.-feasibility witnesses
    double overflow_guard = 1e12;    // simulation divergence guard
    int transient_skip = 5;          // steps excluded from momentum pathwise rate checks

    static Tolerances from_env() {
        Tolerances t;
        const char* raw = std::getenv("RETROFIT_TOL_OVERRIDES");
        if (raw == nullptr || *raw == '\0') return t;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ConfigError,
                        std::string("RETROFIT_TOL_OVERRIDES is not valid JSON: ") + e.what());
        }
        if (!j.is_object())
            throw Error(ErrorCode::ConfigError, "RETROFIT_TOL_OVERRIDES must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k == "tol_psd") t.tol_psd = it.value().get<double>();
            else if (k == "tol_recon") t.tol_recon = it.value().get<double>();
            else if (k == "tol_feas") t.tol_feas = it.value().get<double>();
            else if (k == "tol_rank") t.tol_rank = it.value().get<double>();
            else if (k == "tol_diag") t.tol_diag = it.value().get<double>();
            else if (k == "tol_unit") t.tol_unit = it.value().get<double>();
            else if (k == "tol_imag") t.tol_imag = it.value().get<double>();
            else if (k == "witness_margin") t.witness_margin = it.value().get<double>();
            else if (k == "overflow_guard") t.overflow_guard = it.value().get<double>();
            else if (k == "transient_skip") t.transient_skip = it.value().get<int>();
            else
                throw Error(ErrorCode::ConfigError, "unknown tolerance override: " + k);
        }
        return t;
    }
};

} // namespace retrofit
