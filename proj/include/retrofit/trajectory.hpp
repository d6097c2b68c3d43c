#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace retrofit {

/// Recorded rollout. `states` holds the primal/state vector per step
/// (index 0 is the initial condition); named auxiliary sequences carry
/// dual iterates ("lambda"), tracking variables ("xhat"), momentum
/// history ("x_prev") and the AGD auxiliary sequence ("y").
struct Trajectory {
    std::vector<Eigen::VectorXd> states;
    std::map<std::string, std::vector<Eigen::VectorXd>> aux;
    std::string scenario_id;
    std::string redesign_id;
    bool diverged = false;
    long truncated_at = -1; // step at which the overflow guard tripped

    long steps() const { return static_cast<long>(states.size()) - 1; }
    Eigen::Index dim() const { return states.empty() ? 0 : states.front().size(); }
};

} // namespace retrofit
