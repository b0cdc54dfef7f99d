#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hybridgrid/types.hpp"

namespace hybridgrid {

enum class OperatingState { GridConnected, PrepareForIsland, Island, Resynchronisation };

std::string to_string(OperatingState s);

/// Tolerances of the synchro-check relay, in physical units.
struct SynchroCheckTolerances {
    double magnitude_v = 5.0;
    double angle_deg = 2.0;
    double frequency_hz = 0.02;
};

/// Direct-sequence voltage phasor at one side of the main breaker.
struct BreakerPhasor {
    double magnitude_v = 0.0;
    double angle_deg = 0.0;
    double frequency_hz = 0.0;
};

/// True iff magnitude, wrapped angle and frequency differences are all
/// within tolerance.
bool synchro_check(const BreakerPhasor& upstream, const BreakerPhasor& downstream,
                   const SynchroCheckTolerances& tol = {});

/// PI regulator with anti-windup tracking the angle difference across the
/// breaker by offsetting the forming converter frequency.
struct PiState {
    double kp_hz_per_deg = 0.002;
    double ki_hz_per_deg_s = 0.0004;
    double output_limit_hz = 0.1;
    double update_period_s = 0.1;
    double integral_deg_s = 0.0;

    void reset() { integral_deg_s = 0.0; }
};

/// One PI update; returns the frequency offset in hertz, clamped to the
/// output limit with the integral back-calculated so it never winds up.
double angle_pi_step(double angle_error_deg, PiState& pi, double dt_s);

enum class TransitionCommand {
    EssToVoltageMode,
    IcToForming,
    OpenBreaker,
    CloseBreaker,
    IcToFollowing,
    EssToPowerMode,
};

std::string to_string(TransitionCommand c);

struct TimedCommand {
    double delay_s = 0.0;
    TransitionCommand command;
};

using TransitionCommandSequence = std::vector<TimedCommand>;

/// External trigger signals consumed by the state machine.
struct ControlSignals {
    bool island_trigger = false;
    bool restore_trigger = false;
    bool cancel = false;
};

/// Grid measurements the transition criteria are evaluated on.
struct TransitionMeasurements {
    double p_gcp_w = 0.0;
    double q_gcp_var = 0.0;
    double p_forming_w = 0.0; // IC designated to form, AC side
    double q_forming_var = 0.0;
    BreakerPhasor upstream;
    BreakerPhasor downstream;
};

struct TransitionCriteria {
    double epsilon_w = 500.0;     // prepare -> island power threshold
    double epsilon_var = 500.0;
    double breaker_open_delay_s = 2.0;
    SynchroCheckTolerances synchro;
};

/// Four-state islanding/resynchronisation machine. Illegal triggers for the
/// current state are ignored (logged); transitions follow
/// GridConnected -> PrepareForIsland -> Island -> Resynchronisation ->
/// GridConnected, plus the PrepareForIsland -> GridConnected abort.
class StateMachine {
public:
    explicit StateMachine(TransitionCriteria criteria = {}) : criteria_(criteria) {}

    OperatingState state() const { return state_; }
    const TransitionCriteria& criteria() const { return criteria_; }

    /// Advances one control tick. A returned sequence must be executed on
    /// the simulation clock.
    std::optional<TransitionCommandSequence> step(const ControlSignals& signals,
                                                  const TransitionMeasurements& m);

private:
    OperatingState state_ = OperatingState::GridConnected;
    TransitionCriteria criteria_;
};

} // namespace hybridgrid
