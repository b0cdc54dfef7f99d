#include "hybridgrid/control.hpp"

#include <algorithm>
#include <cmath>

#include "hybridgrid/log.hpp"

namespace hybridgrid {

std::string to_string(OperatingState s) {
    switch (s) {
        case OperatingState::GridConnected: return "grid_connected";
        case OperatingState::PrepareForIsland: return "prepare_for_island";
        case OperatingState::Island: return "island";
        case OperatingState::Resynchronisation: return "resynchronisation";
    }
    return "?";
}

std::string to_string(TransitionCommand c) {
    switch (c) {
        case TransitionCommand::EssToVoltageMode: return "ess_to_voltage_mode";
        case TransitionCommand::IcToForming: return "ic_to_forming";
        case TransitionCommand::OpenBreaker: return "open_breaker";
        case TransitionCommand::CloseBreaker: return "close_breaker";
        case TransitionCommand::IcToFollowing: return "ic_to_following";
        case TransitionCommand::EssToPowerMode: return "ess_to_power_mode";
    }
    return "?";
}

bool synchro_check(const BreakerPhasor& upstream, const BreakerPhasor& downstream,
                   const SynchroCheckTolerances& tol) {
    const double dmag = std::abs(upstream.magnitude_v - downstream.magnitude_v);
    const double dang = std::abs(wrap_angle_deg(upstream.angle_deg - downstream.angle_deg));
    const double dfreq = std::abs(upstream.frequency_hz - downstream.frequency_hz);
    return dmag <= tol.magnitude_v && dang <= tol.angle_deg && dfreq <= tol.frequency_hz;
}

double angle_pi_step(double angle_error_deg, PiState& pi, double dt_s) {
    if (dt_s <= 0.0) throw Error("angle_pi_step: dt must be positive");
    pi.integral_deg_s += angle_error_deg * dt_s;
    double out = pi.kp_hz_per_deg * angle_error_deg + pi.ki_hz_per_deg_s * pi.integral_deg_s;
    if (out > pi.output_limit_hz) {
        if (pi.ki_hz_per_deg_s > 0.0)
            pi.integral_deg_s =
                (pi.output_limit_hz - pi.kp_hz_per_deg * angle_error_deg) / pi.ki_hz_per_deg_s;
        out = pi.output_limit_hz;
    } else if (out < -pi.output_limit_hz) {
        if (pi.ki_hz_per_deg_s > 0.0)
            pi.integral_deg_s =
                (-pi.output_limit_hz - pi.kp_hz_per_deg * angle_error_deg) / pi.ki_hz_per_deg_s;
        out = -pi.output_limit_hz;
    }
    return out;
}

std::optional<TransitionCommandSequence> StateMachine::step(const ControlSignals& signals,
                                                            const TransitionMeasurements& m) {
    switch (state_) {
        case OperatingState::GridConnected:
            if (signals.restore_trigger || signals.cancel)
                log_info("state machine: ignoring trigger in grid_connected");
            if (signals.island_trigger) {
                state_ = OperatingState::PrepareForIsland;
                log_info("state machine: grid_connected -> prepare_for_island");
            }
            return std::nullopt;

        case OperatingState::PrepareForIsland: {
            if (signals.cancel) {
                state_ = OperatingState::GridConnected;
                log_info("state machine: prepare_for_island aborted");
                return std::nullopt;
            }
            if (signals.restore_trigger)
                log_info("state machine: ignoring restore trigger in prepare_for_island");
            const bool ready = std::abs(m.p_gcp_w) < criteria_.epsilon_w &&
                               std::abs(m.q_gcp_var) < criteria_.epsilon_var &&
                               std::abs(m.p_forming_w) < criteria_.epsilon_w &&
                               std::abs(m.q_forming_var) < criteria_.epsilon_var;
            if (!ready) return std::nullopt;
            state_ = OperatingState::Island;
            log_info("state machine: prepare_for_island -> island");
            TransitionCommandSequence seq{
                {0.0, TransitionCommand::EssToVoltageMode},
                {0.0, TransitionCommand::IcToForming},
                {criteria_.breaker_open_delay_s, TransitionCommand::OpenBreaker},
            };
            return seq;
        }

        case OperatingState::Island:
            if (signals.island_trigger || signals.cancel)
                log_info("state machine: ignoring trigger in island");
            if (signals.restore_trigger) {
                state_ = OperatingState::Resynchronisation;
                log_info("state machine: island -> resynchronisation");
            }
            return std::nullopt;

        case OperatingState::Resynchronisation: {
            if (signals.island_trigger || signals.cancel)
                log_info("state machine: ignoring trigger in resynchronisation");
            if (!synchro_check(m.upstream, m.downstream, criteria_.synchro)) return std::nullopt;
            state_ = OperatingState::GridConnected;
            log_info("state machine: resynchronisation -> grid_connected");
            TransitionCommandSequence seq{
                {0.0, TransitionCommand::CloseBreaker},
                {0.1, TransitionCommand::IcToFollowing},
                {0.2, TransitionCommand::EssToPowerMode},
            };
            return seq;
        }
    }
    return std::nullopt;
}

} // namespace hybridgrid
