#pragma once

// Scenario builders for the two bundled applications: primal congestion
// control over a routed network (gradient-descent class) and distributed PI
// consensus control over a graph (primal-dual class).

#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/problem.hpp"
#include "retrofit/redesign.hpp"
#include "retrofit/simulate.hpp"
#include "retrofit/system.hpp"

namespace retrofit {

// ---------------------------------------------------------------------------
// Congestion control

struct LogUtility {};
struct QuadraticUtility {
    VectorXd q;  // per-source curvature, U_i' = -q_i x_i + r1_i
    VectorXd r1;
};
using Utility = std::variant<LogUtility, QuadraticUtility>;

struct KellyPenalty {
    double sigma = 0.1;
    VectorXd capacities; // per link
};
struct LinearPenalty {
    VectorXd r2; // per-link slope
    VectorXd s2;
};
using Penalty = std::variant<KellyPenalty, LinearPenalty>;

/// The source-rate iteration x+ = x + eps diag(k)(U'(x) - R^T f(Rx)).
struct CongestionDynamics {
    MatrixXd routing; // links x sources, 0/1
    VectorXd gains;   // k_i > 0
    double eps = 1.0;
    Utility utility;
    Penalty penalty;

    Eigen::Index sources() const { return routing.cols(); }
    Eigen::Index links() const { return routing.rows(); }

    VectorXd marginal_utility(const VectorXd& x) const {
        if (std::holds_alternative<LogUtility>(utility)) return x.cwiseInverse();
        const auto& qu = std::get<QuadraticUtility>(utility);
        return -qu.q.cwiseProduct(x) + qu.r1;
    }

    VectorXd link_prices(const VectorXd& y) const {
        if (const auto* kp = std::get_if<KellyPenalty>(&penalty)) {
            // Kelly barrier (y - c + sigma)^+ / sigma^2, right-continuous at the kink.
            return (y - kp->capacities + VectorXd::Constant(y.size(), kp->sigma))
                       .cwiseMax(0.0) /
                   (kp->sigma * kp->sigma);
        }
        const auto& lp = std::get<LinearPenalty>(penalty);
        return lp.r2.cwiseProduct(y) + lp.s2;
    }

    /// One step of the original dynamics.
    VectorXd step(const VectorXd& x) const {
        VectorXd y = routing * x;
        VectorXd q = routing.transpose() * link_prices(y);
        return x + eps * gains.cwiseProduct(marginal_utility(x) - q);
    }
};

struct CongestionScenario {
    MatrixXd routing;
    VectorXd gains;
    double eps = 1.0;
    Utility utility;
    Penalty penalty;
    VectorXd x0;
    bool clamp_nonnegative = false;
};

struct CongestionBuild {
    CongestionDynamics dynamics;
    // Emitted only when utilities are quadratic and penalties linear; then the
    // iteration is exactly x+ = (I - eps diag(k)(Q + R^T R2 R)) x + eps diag(k)(r1 - R^T s2).
    std::optional<LtiSystem> linear;
};

inline CongestionBuild build_congestion(const CongestionScenario& sc) {
    const Eigen::Index M = sc.routing.rows(), N = sc.routing.cols();
    if (M == 0 || N == 0)
        throw Error(ErrorCode::ConfigError, "congestion: routing matrix must be non-empty");
    for (Eigen::Index l = 0; l < M; ++l)
        for (Eigen::Index i = 0; i < N; ++i)
            if (sc.routing(l, i) != 0.0 && sc.routing(l, i) != 1.0)
                throw Error(ErrorCode::ConfigError, "congestion: routing entries must be 0 or 1");
    for (Eigen::Index i = 0; i < N; ++i)
        if (sc.routing.col(i).sum() < 1.0)
            throw Error(ErrorCode::ConfigError,
                        "congestion: every source must use at least one link");
    if (sc.gains.size() != N || (sc.gains.array() <= 0.0).any())
        throw Error(ErrorCode::ConfigError, "congestion: gains must be positive, one per source");
    if (sc.eps <= 0.0) throw Error(ErrorCode::ConfigError, "congestion: eps must be positive");
    if (const auto* kp = std::get_if<KellyPenalty>(&sc.penalty)) {
        if (kp->sigma <= 0.0)
            throw Error(ErrorCode::ConfigError, "congestion: penalty sigma must be positive");
        if (kp->capacities.size() != M || (kp->capacities.array() <= 0.0).any())
            throw Error(ErrorCode::ConfigError,
                        "congestion: capacities must be positive, one per link");
    } else {
        const auto& lp = std::get<LinearPenalty>(sc.penalty);
        if (lp.r2.size() != M || lp.s2.size() != M)
            throw Error(ErrorCode::ConfigError, "congestion: linear penalty needs r2, s2 per link");
        if ((lp.r2.array() <= 0.0).any())
            throw Error(ErrorCode::ConfigError, "congestion: penalty slopes must be positive");
    }
    if (const auto* qu = std::get_if<QuadraticUtility>(&sc.utility)) {
        if (qu->q.size() != N || qu->r1.size() != N)
            throw Error(ErrorCode::ConfigError, "congestion: quadratic utility needs q, r1 per source");
        if ((qu->q.array() <= 0.0).any())
            throw Error(ErrorCode::ConfigError, "congestion: utility curvatures must be positive");
    }
    if (sc.x0.size() != 0 && sc.x0.size() != N)
        throw Error(ErrorCode::ConfigError, "congestion: x0 must have one rate per source");

    CongestionBuild out;
    out.dynamics.routing = sc.routing;
    out.dynamics.gains = sc.gains;
    out.dynamics.eps = sc.eps;
    out.dynamics.utility = sc.utility;
    out.dynamics.penalty = sc.penalty;

    const auto* qu = std::get_if<QuadraticUtility>(&sc.utility);
    const auto* lp = std::get_if<LinearPenalty>(&sc.penalty);
    if (qu && lp) {
        MatrixXd H = MatrixXd(qu->q.asDiagonal()) +
                     sc.routing.transpose() * lp->r2.asDiagonal() * sc.routing;
        MatrixXd A = MatrixXd::Identity(N, N) - sc.eps * sc.gains.asDiagonal() * H;
        VectorXd c = sc.eps * sc.gains.cwiseProduct(qu->r1 - sc.routing.transpose() * lp->s2);
        out.linear = LtiSystem::with_offset(std::move(A), std::move(c));
    }
    return out;
}

/// Rollout of the congestion iteration, original or with momentum retrofits.
/// Capacity events mutate the Kelly penalty; momentum histories initialize
/// with x_{-1} = x_0.
inline Trajectory simulate(const CongestionDynamics& dyn_in, const RedesignSpec& spec,
                           const VectorXd& x0, long steps, const SimOptions& opts = {}) {
    if (x0.size() != dyn_in.sources())
        throw Error(ErrorCode::InvalidArgument, "simulate: x0 dimension mismatch");
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "simulate: steps must be >= 1");
    if (opts.delay.delay_steps > 0)
        throw Error(ErrorCode::InvalidArgument,
                    "simulate: the buffered delay model applies to linear network iterations");
    if (spec.method != Method::None && spec.method != Method::HB && spec.method != Method::AGD)
        throw Error(ErrorCode::InvalidArgument,
                    "simulate: congestion retrofits are HB or AGD");
    opts.schedule.validate();

    CongestionDynamics dyn = dyn_in;
    Trajectory traj;
    traj.scenario_id = opts.scenario_id;
    traj.redesign_id = opts.redesign_id.empty() ? method_name(spec.method) : opts.redesign_id;

    size_t next_event = 0;
    auto apply_events = [&](long k) {
        while (next_event < opts.schedule.events.size() &&
               opts.schedule.events[next_event].step <= k) {
            const auto& ev = opts.schedule.events[next_event];
            if (const auto* sc = std::get_if<SetCapacities>(&ev.mutation)) {
                auto* kp = std::get_if<KellyPenalty>(&dyn.penalty);
                if (kp == nullptr)
                    throw Error(ErrorCode::InvalidArgument,
                                "simulate: capacity events need a capacity-based penalty");
                if (sc->capacities.size() != kp->capacities.size())
                    throw Error(ErrorCode::InvalidArgument,
                                "simulate: event capacity dimension mismatch");
                kp->capacities = sc->capacities;
            } else {
                throw Error(ErrorCode::InvalidArgument,
                            "simulate: only capacity events apply to congestion scenarios");
            }
            ++next_event;
        }
    };

    traj.states.push_back(x0);
    const bool momentum = spec.method != Method::None;
    if (momentum) traj.aux["x_prev"].push_back(x0);

    VectorXd x = x0, x_prev = x0;
    VectorXd g_prev;
    if (spec.method == Method::AGD) g_prev = dyn.step(x0);

    for (long k = 0; k < steps; ++k) {
        apply_events(k);
        VectorXd g = dyn.step(x);
        VectorXd x_next;
        double beta_k = spec.beta_at(k + 1);
        switch (spec.method) {
            case Method::None: x_next = g; break;
            case Method::HB:
                x_next = beta_k == 0.0 ? g : VectorXd(g + beta_k * (x - x_prev));
                break;
            case Method::AGD:
                x_next = beta_k == 0.0 ? g : VectorXd(g + beta_k * (g - g_prev));
                g_prev = g;
                break;
            default: break;
        }
        if (opts.clamp_nonnegative) x_next = x_next.cwiseMax(0.0);
        if (detail::guard_tripped(x_next, opts.overflow_guard)) {
            traj.diverged = true;
            traj.truncated_at = k + 1;
            break;
        }
        x_prev = x;
        x = std::move(x_next);
        traj.states.push_back(x);
        if (momentum) traj.aux["x_prev"].push_back(x_prev);
    }
    return traj;
}

/// Equilibrium rates of the congestion scenario under its current
/// capacities, found by damped fixed-point iteration (the dynamics are a
/// contraction near the operating point for sane step sizes).
inline VectorXd congestion_equilibrium(const CongestionDynamics& dyn, const VectorXd& x_init,
                                       long max_steps = 200000, double tol = 1e-12) {
    VectorXd x = x_init;
    for (long k = 0; k < max_steps; ++k) {
        VectorXd x_next = dyn.step(x);
        if (!x_next.allFinite())
            throw Error(ErrorCode::Degenerate, "congestion_equilibrium: iteration diverged");
        double move = (x_next - x).norm();
        x = x_next;
        if (move <= tol * (1.0 + x.norm())) return x;
    }
    throw Error(ErrorCode::Degenerate, "congestion_equilibrium: no convergence");
}

// ---------------------------------------------------------------------------
// Distributed PI consensus

struct PiScenario {
    MatrixXd adjacency; // n x n symmetric 0/1, zero diagonal
    double rho1 = 1.0;  // integral gain
    double rho2 = 1.0;  // static gain
    double delta = 1.0;
    VectorXd disturbance;
    VectorXd y0;
    double eps1 = 0.05;
    double eps2 = 0.05;
};

struct PiBuild {
    PartitionedLtiSystem system; // state [z; y], z in R^{n-1}
    SaddleProblem saddle;        // H_f = rho2 L + delta I, constraint Ltilde^T y = 0
    MatrixXd laplacian;
    VectorXd x0;                 // [0; y0]
    DelayConfig delay_template;  // agent ownership of [z; y]
};

inline MatrixXd graph_laplacian(const MatrixXd& adjacency) {
    const Eigen::Index n = adjacency.rows();
    if (adjacency.cols() != n)
        throw Error(ErrorCode::ConfigError, "pi: adjacency must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (adjacency(i, i) != 0.0)
            throw Error(ErrorCode::ConfigError, "pi: adjacency diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (adjacency(i, j) != 0.0 && adjacency(i, j) != 1.0)
                throw Error(ErrorCode::ConfigError, "pi: adjacency entries must be 0 or 1");
            if (adjacency(i, j) != adjacency(j, i))
                throw Error(ErrorCode::ConfigError, "pi: adjacency must be symmetric");
        }
    }
    return MatrixXd(adjacency.rowwise().sum().asDiagonal()) - adjacency;
}

inline bool graph_connected(const MatrixXd& adjacency) {
    const Eigen::Index n = adjacency.rows();
    if (n == 0) return false;
    std::vector<bool> seen(static_cast<size_t>(n), false);
    std::deque<Eigen::Index> queue{0};
    seen[0] = true;
    Eigen::Index count = 1;
    while (!queue.empty()) {
        Eigen::Index u = queue.front();
        queue.pop_front();
        for (Eigen::Index v = 0; v < n; ++v) {
            if (adjacency(u, v) != 0.0 && !seen[static_cast<size_t>(v)]) {
                seen[static_cast<size_t>(v)] = true;
                ++count;
                queue.push_back(v);
            }
        }
    }
    return count == n;
}

/// Assembles the (2n-1)-state partitioned system
///   z+ = z + eps2 D y,   y+ = y - eps1 (rho2 L + delta I) y - eps1 rho1 Ltilde z
///        + eps1 (d + delta y0)
/// with D = [I, -1] and Ltilde the Laplacian minus its last column.
inline PiBuild build_pi(const PiScenario& sc) {
    MatrixXd L = graph_laplacian(sc.adjacency);
    const Eigen::Index n = L.rows();
    if (n < 2) throw Error(ErrorCode::ConfigError, "pi: need at least two agents");
    if (!graph_connected(sc.adjacency))
        throw Error(ErrorCode::DisconnectedGraph, "pi: agent network must be connected");
    if (sc.rho1 <= 0.0 || sc.rho2 <= 0.0 || sc.delta <= 0.0)
        throw Error(ErrorCode::ConfigError, "pi: gains rho1, rho2, delta must be positive");
    if (sc.eps1 <= 0.0 || sc.eps2 <= 0.0)
        throw Error(ErrorCode::ConfigError, "pi: step sizes must be positive");
    if (sc.disturbance.size() != n || sc.y0.size() != n)
        throw Error(ErrorCode::ConfigError, "pi: disturbance and y0 must have one entry per agent");

    MatrixXd Ltilde = L.leftCols(n - 1);
    MatrixXd D(n - 1, n);
    D << MatrixXd::Identity(n - 1, n - 1), -VectorXd::Ones(n - 1);

    MatrixXd A(2 * n - 1, 2 * n - 1);
    A.topLeftCorner(n - 1, n - 1).setIdentity();
    A.topRightCorner(n - 1, n) = sc.eps2 * D;
    A.bottomLeftCorner(n, n - 1) = -sc.eps1 * sc.rho1 * Ltilde;
    A.bottomRightCorner(n, n) = MatrixXd::Identity(n, n) - sc.eps1 * sc.rho2 * L -
                                sc.eps1 * sc.delta * MatrixXd::Identity(n, n);
    MatrixXd C = MatrixXd::Zero(2 * n - 1, n);
    C.bottomRows(n) = sc.eps1 * MatrixXd::Identity(n, n);
    VectorXd w = sc.disturbance + sc.delta * sc.y0;

    PiBuild out;
    out.system = PartitionedLtiSystem(LtiSystem(std::move(A), std::move(C), std::move(w)), n - 1);
    out.laplacian = L;
    out.saddle.Q22 = sc.rho2 * L + sc.delta * MatrixXd::Identity(n, n);
    out.saddle.r = -(sc.disturbance + sc.delta * sc.y0);
    out.saddle.B = Ltilde.transpose();
    out.saddle.b = VectorXd::Zero(n - 1);
    out.saddle.eps1 = sc.eps1;
    out.saddle.eps2 = sc.eps2;
    out.x0 = VectorXd::Zero(2 * n - 1);
    out.x0.tail(n) = sc.y0;
    out.delay_template.agent_of_state.resize(static_cast<size_t>(2 * n - 1));
    for (Eigen::Index i = 0; i < n - 1; ++i)
        out.delay_template.agent_of_state[static_cast<size_t>(i)] = static_cast<int>(i);
    for (Eigen::Index i = 0; i < n; ++i)
        out.delay_template.agent_of_state[static_cast<size_t>(n - 1 + i)] = static_cast<int>(i);
    return out;
}

/// Translation used by event schedules: a disturbance change enters the
/// built system as a new exogenous input w = d + delta y(0).
inline SetExogenousInput pi_disturbance_event(const PiScenario& sc, const VectorXd& d_new) {
    if (d_new.size() != sc.y0.size())
        throw Error(ErrorCode::InvalidArgument, "pi_disturbance_event: dimension mismatch");
    return SetExogenousInput{d_new + sc.delta * sc.y0};
}

} // namespace retrofit
