#pragma once

// Deterministic rollouts of original and retrofitted iterations, with event
// schedules (exogenous-input changes), optional buffered communication delay,
// and error/consensus metric extraction.

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "retrofit/errors.hpp"
#include "retrofit/redesign.hpp"
#include "retrofit/system.hpp"
#include "retrofit/trajectory.hpp"

namespace retrofit {

// ---------------------------------------------------------------------------
// Events and delay

struct SetExogenousInput {
    VectorXd w;
};
struct SetCapacities {
    VectorXd capacities;
};
using Mutation = std::variant<SetExogenousInput, SetCapacities>;

struct EventSchedule {
    struct Event {
        long step = 0;
        Mutation mutation;
    };
    std::vector<Event> events;

    bool empty() const { return events.empty(); }
    void validate() const {
        for (size_t i = 1; i < events.size(); ++i)
            if (events[i].step <= events[i - 1].step)
                throw Error(ErrorCode::InvalidArgument,
                            "EventSchedule: steps must be strictly increasing");
    }
};

/// Buffered fixed-step delay: when updating a state owned by agent a, states
/// owned by other agents are read from step k - delay_steps; the agent's own
/// states are current. Ownership defaults to one agent per state index.
struct DelayConfig {
    int delay_steps = 0;
    std::vector<int> agent_of_state; // empty: identity ownership

    int agent(Eigen::Index i) const {
        if (agent_of_state.empty()) return static_cast<int>(i);
        return agent_of_state[static_cast<size_t>(i)];
    }
};

struct SimOptions {
    EventSchedule schedule;
    DelayConfig delay;
    bool clamp_nonnegative = false; // congestion only
    double overflow_guard = 1e12;
    std::string scenario_id;
    std::string redesign_id;
};

namespace detail {

/// Splits a coupling matrix into same-agent and cross-agent parts so the
/// cross part can read delayed states.
struct DelaySplit {
    MatrixXd own, cross;
    bool active = false;

    DelaySplit() = default;
    DelaySplit(const MatrixXd& A, const DelayConfig& d, Eigen::Index row_offset = 0) {
        active = d.delay_steps > 0;
        if (!active) {
            own = A;
            return;
        }
        own = A;
        cross = MatrixXd::Zero(A.rows(), A.cols());
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            for (Eigen::Index j = 0; j < A.cols(); ++j) {
                if (d.agent(row_offset + i) != d.agent(j)) {
                    cross(i, j) = A(i, j);
                    own(i, j) = 0.0;
                }
            }
        }
    }

    VectorXd apply(const VectorXd& now, const VectorXd& delayed) const {
        if (!active) return own * now;
        return own * now + cross * delayed;
    }
};

inline bool guard_tripped(const VectorXd& x, double guard) {
    return !x.allFinite() || x.cwiseAbs().maxCoeff() > guard;
}

inline void record_state(Trajectory& traj, const VectorXd& x_full, const StateLayout& layout) {
    if (layout.dual_len > 0) {
        traj.states.push_back(x_full.segment(layout.dual_len, layout.primal_len));
        traj.aux["lambda"].push_back(x_full.head(layout.dual_len));
    } else {
        traj.states.push_back(x_full.head(layout.primal_len));
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Linear simulation

/// Rollout of x+ = A x + C w. `layout` controls how the recorded state is
/// split into primal and dual parts.
inline Trajectory simulate(const LtiSystem& sys, const VectorXd& x0, long steps,
                           const SimOptions& opts = {}, const StateLayout* layout_in = nullptr) {
    if (x0.size() != sys.n())
        throw Error(ErrorCode::InvalidArgument, "simulate: x0 dimension mismatch");
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "simulate: steps must be >= 1");
    opts.schedule.validate();

    StateLayout layout;
    if (layout_in)
        layout = *layout_in;
    else
        layout.primal_len = sys.n();

    Trajectory traj;
    traj.scenario_id = opts.scenario_id;
    traj.redesign_id = opts.redesign_id.empty() ? "od" : opts.redesign_id;

    detail::DelaySplit split(sys.A, opts.delay);
    VectorXd w = sys.w;
    size_t next_event = 0;
    std::vector<VectorXd> history;
    history.reserve(static_cast<size_t>(steps) + 1);
    history.push_back(x0);
    detail::record_state(traj, x0, layout);

    VectorXd x = x0;
    for (long k = 0; k < steps; ++k) {
        while (next_event < opts.schedule.events.size() &&
               opts.schedule.events[next_event].step <= k) {
            const auto& ev = opts.schedule.events[next_event];
            if (const auto* sw = std::get_if<SetExogenousInput>(&ev.mutation)) {
                if (sw->w.size() != w.size())
                    throw Error(ErrorCode::InvalidArgument, "simulate: event w dimension mismatch");
                w = sw->w;
            } else {
                throw Error(ErrorCode::InvalidArgument,
                            "simulate: capacity events apply to congestion scenarios only");
            }
            ++next_event;
        }
        const VectorXd& delayed =
            history[static_cast<size_t>(std::max<long>(0, k - opts.delay.delay_steps))];
        VectorXd x_next = split.apply(x, delayed) + sys.C * w;
        if (detail::guard_tripped(x_next, opts.overflow_guard)) {
            traj.diverged = true;
            traj.truncated_at = k + 1;
            break;
        }
        x = std::move(x_next);
        history.push_back(x);
        detail::record_state(traj, x, layout);
    }
    return traj;
}

inline Trajectory simulate(const PartitionedLtiSystem& sys, const VectorXd& x0, long steps,
                           const SimOptions& opts = {}) {
    StateLayout layout;
    layout.dual_len = sys.n1;
    layout.primal_len = sys.n2;
    return simulate(sys.base, x0, steps, opts, &layout);
}

/// Rollout of a retrofitted system. Momentum histories initialize with
/// x_{-1} = x_0; the hat-x tracking block initializes at the primal state.
/// Coefficients that are exactly zero take the original system's code path,
/// so zero-coefficient redesigns reproduce original trajectories bit for bit.
inline Trajectory simulate(const RedesignedSystem& rs, const VectorXd& x0, long steps,
                           const SimOptions& opts_in = {}) {
    SimOptions opts = opts_in;
    if (opts.redesign_id.empty()) opts.redesign_id = method_name(rs.spec.method);

    const Method method = rs.spec.method;
    const bool momentum_free =
        (method == Method::None) ||
        ((method == Method::HB || method == Method::AGD) && !rs.spec.retune_step &&
         rs.spec.schedule == BetaSchedule::Constant && rs.spec.beta == 0.0) ||
        ((method == Method::AL) && rs.spec.alpha == 0.0);
    if (momentum_free) {
        Trajectory traj = simulate(rs.base, x0, steps, opts, &rs.layout);
        return traj;
    }

    if (x0.size() != rs.base.n())
        throw Error(ErrorCode::InvalidArgument, "simulate: x0 dimension mismatch");
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "simulate: steps must be >= 1");
    opts.schedule.validate();

    Trajectory traj;
    traj.scenario_id = opts.scenario_id;
    traj.redesign_id = opts.redesign_id;

    auto next_w = [&](VectorXd& w, size_t& next_event, long k) {
        while (next_event < opts.schedule.events.size() &&
               opts.schedule.events[next_event].step <= k) {
            const auto& ev = opts.schedule.events[next_event];
            if (const auto* sw = std::get_if<SetExogenousInput>(&ev.mutation)) {
                if (sw->w.size() != w.size())
                    throw Error(ErrorCode::InvalidArgument, "simulate: event w dimension mismatch");
                w = sw->w;
            } else {
                throw Error(ErrorCode::InvalidArgument,
                            "simulate: capacity events apply to congestion scenarios only");
            }
            ++next_event;
        }
    };

    if (method == Method::HB || method == Method::AGD) {
        MatrixXd M = rs.gradient_step_matrix();
        detail::DelaySplit split(M, opts.delay);
        VectorXd w = rs.base.w;
        size_t next_event = 0;

        std::vector<VectorXd> history{x0};
        detail::record_state(traj, x0, rs.layout);
        traj.aux["x_prev"].push_back(x0);
        if (method == Method::AGD) traj.aux["y"].push_back(x0);

        VectorXd x = x0, x_prev = x0;
        // AGD keeps the previous step's base map value, evaluated under the
        // exogenous input current at that step.
        VectorXd g_prev;
        if (method == Method::AGD) g_prev = split.apply(x0, x0) + rs.gradient_step_offset(w);

        for (long k = 0; k < steps; ++k) {
            next_w(w, next_event, k);
            const VectorXd& delayed =
                history[static_cast<size_t>(std::max<long>(0, k - opts.delay.delay_steps))];
            VectorXd g = split.apply(x, delayed) + rs.gradient_step_offset(w);
            double beta_k = rs.spec.beta_at(k + 1);
            VectorXd x_next;
            if (method == Method::HB) {
                x_next = beta_k == 0.0 ? g : VectorXd(g + beta_k * (x - x_prev));
            } else {
                x_next = beta_k == 0.0 ? g : VectorXd(g + beta_k * (g - g_prev));
                g_prev = g;
            }
            if (detail::guard_tripped(x_next, opts.overflow_guard)) {
                traj.diverged = true;
                traj.truncated_at = k + 1;
                break;
            }
            x_prev = x;
            x = std::move(x_next);
            history.push_back(x);
            detail::record_state(traj, x, rs.layout);
            traj.aux["x_prev"].push_back(x_prev);
            if (method == Method::AGD) {
                double by = rs.spec.beta_at(k + 2);
                traj.aux["y"].push_back(x + by * (x - x_prev));
            }
        }
        return traj;
    }

    if (method == Method::AL) {
        // Same state dimension; the penalty term joins the primal rows.
        MatrixXd A = rs.extended_matrix();
        detail::DelaySplit split(A, opts.delay);
        VectorXd w = rs.base.w;
        size_t next_event = 0;
        const Eigen::Index n2 = rs.layout.primal_len;

        std::vector<VectorXd> history{x0};
        detail::record_state(traj, x0, rs.layout);

        VectorXd penalty_offset = VectorXd::Zero(rs.base.n());
        penalty_offset.tail(n2) = rs.eps1 * rs.spec.alpha * rs.B.transpose() * rs.b;

        VectorXd x = x0;
        for (long k = 0; k < steps; ++k) {
            next_w(w, next_event, k);
            const VectorXd& delayed =
                history[static_cast<size_t>(std::max<long>(0, k - opts.delay.delay_steps))];
            VectorXd x_next = split.apply(x, delayed) + rs.base.C * w + penalty_offset;
            if (detail::guard_tripped(x_next, opts.overflow_guard)) {
                traj.diverged = true;
                traj.truncated_at = k + 1;
                break;
            }
            x = std::move(x_next);
            history.push_back(x);
            detail::record_state(traj, x, rs.layout);
        }
        return traj;
    }

    if (method == Method::HATX) {
        const Eigen::Index n1 = rs.layout.dual_len, n2 = rs.layout.primal_len;
        MatrixXd A = rs.base.A;
        detail::DelaySplit split(A, opts.delay);
        VectorXd w = rs.base.w;
        size_t next_event = 0;
        const double a = rs.eps1 * rs.spec.alpha;

        std::vector<VectorXd> history{x0};
        detail::record_state(traj, x0, rs.layout);
        VectorXd xhat = x0.tail(n2);
        traj.aux["xhat"].push_back(xhat);

        VectorXd x = x0;
        for (long k = 0; k < steps; ++k) {
            next_w(w, next_event, k);
            const VectorXd& delayed =
                history[static_cast<size_t>(std::max<long>(0, k - opts.delay.delay_steps))];
            VectorXd x_next = split.apply(x, delayed) + rs.base.C * w;
            if (a != 0.0) {
                VectorXd pull = a * (x.tail(n2) - xhat);
                x_next.tail(n2) -= pull;
                xhat += pull;
            }
            if (detail::guard_tripped(x_next, opts.overflow_guard)) {
                traj.diverged = true;
                traj.truncated_at = k + 1;
                break;
            }
            x = std::move(x_next);
            history.push_back(x);
            detail::record_state(traj, x, rs.layout);
            traj.aux["xhat"].push_back(xhat);
        }
        (void)n1;
        return traj;
    }

    throw Error(ErrorCode::InvalidArgument, "simulate: unknown redesign method");
}

/// Fixed point of the retrofitted iteration from its frozen extended form.
inline VectorXd redesigned_fixed_point(const RedesignedSystem& rs, const Tolerances& tol = {}) {
    MatrixXd E = rs.extended_matrix();
    VectorXd c = rs.extended_offset();
    MatrixXd M = MatrixXd::Identity(E.rows(), E.cols()) - E;
    LeastSquaresSolution ls = min_norm_solve(M, c, tol.tol_rank);
    if (ls.residual > 1e-8 * (1.0 + c.norm()))
        throw Error(ErrorCode::Degenerate, "redesigned_fixed_point: no fixed point");
    return ls.x;
}

// ---------------------------------------------------------------------------
// Metrics

struct ErrorMetrics {
    std::vector<double> error; // ||x_k - reference|| per step
    double final_error = 0;
    double total_variation = 0; // sum_k ||x_{k+1} - x_k||
    long first_below_1e2 = -1;
    long first_below_1e4 = -1;
    long first_below_1e6 = -1;
};

inline long first_step_below(const std::vector<double>& error, double threshold) {
    for (size_t k = 0; k < error.size(); ++k)
        if (error[k] <= threshold) return static_cast<long>(k);
    return -1;
}

inline ErrorMetrics error_metrics(const Trajectory& traj, const VectorXd& reference) {
    if (!traj.states.empty() && reference.size() != traj.states.front().size())
        throw Error(ErrorCode::InvalidArgument, "error_metrics: reference dimension mismatch");
    ErrorMetrics m;
    m.error.reserve(traj.states.size());
    for (const auto& x : traj.states) m.error.push_back((x - reference).norm());
    for (size_t k = 0; k + 1 < traj.states.size(); ++k)
        m.total_variation += (traj.states[k + 1] - traj.states[k]).norm();
    m.final_error = m.error.empty() ? 0.0 : m.error.back();
    m.first_below_1e2 = first_step_below(m.error, 1e-2);
    m.first_below_1e4 = first_step_below(m.error, 1e-4);
    m.first_below_1e6 = first_step_below(m.error, 1e-6);
    return m;
}

struct ConsensusMetrics {
    std::vector<double> disagreement; // max_{i,j} |x_i - x_j| per step
    double final_disagreement = 0;
};

inline ConsensusMetrics consensus_metrics(const Trajectory& traj) {
    ConsensusMetrics m;
    m.disagreement.reserve(traj.states.size());
    for (const auto& x : traj.states) {
        double d = x.size() > 0 ? x.maxCoeff() - x.minCoeff() : 0.0;
        m.disagreement.push_back(d);
    }
    m.final_disagreement = m.disagreement.empty() ? 0.0 : m.disagreement.back();
    return m;
}

} // namespace retrofit
