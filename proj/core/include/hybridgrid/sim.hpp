#pragma once

#include <optional>
#include <random>

#include "hybridgrid/loadflow.hpp"
#include "hybridgrid/scenario.hpp"

namespace hybridgrid {

/// Ground-truth plant: the grid state plus every piece of operational
/// bookkeeping the quasi-static simulation carries between ticks.
struct PlantState {
    GridState grid;
    std::vector<double> soc; // per storage device, scenario order
    bool breaker_closed = true;
    bool forming_active = false;
    bool ess_voltage_mode = false;
    double time_s = 0.0;
    /// Electrical angles in a common 50 Hz synchronous frame.
    double angle_up_abs_deg = 0.0;
    double angle_shift_island_deg = 0.0;
    double pi_offset_hz = 0.0;
};

struct TickRecord {
    double t = 0.0;
    OperatingState op_state = OperatingState::GridConnected;
    bool breaker_closed = true;
    double p_gcp_w = 0.0;
    double q_gcp_var = 0.0;
    std::vector<double> ic_p_w;
    std::vector<double> ic_q_var;
    std::vector<double> v_bus_v;
    std::vector<double> i_branch_a;
    double angle_up_deg = 0.0;
    double angle_down_deg = 0.0;
    double dangle_deg = 0.0;
    double freq_up_hz = 0.0;
    double freq_down_hz = 0.0;
    std::vector<double> soc;
    std::vector<double> p_storage_w;
    bool opf_ran = false;
    double opf_kkt = 0.0;
    double opf_pred_imargin_pu = 0.0; // min predicted ampacity margin of the dispatch
    double vmargin_pu = 0.0; // min distance to a voltage bound
    double imargin_pu = 0.0; // min distance to an ampacity bound
};

/// Wall-clock timings are kept apart from the deterministic records.
struct TimingRecord {
    double t = 0.0;
    double sc_ms = 0.0;
    double build_ms = 0.0;
    double solve_ms = 0.0;
    double kkt = 0.0;
};

struct SimulationOutput {
    std::string scenario_name;
    double tick_s = 0.1;
    std::vector<std::string> bus_names;
    std::vector<std::string> branch_names;
    std::vector<std::string> link_names;
    std::vector<std::string> storage_names;
    std::vector<TickRecord> records;
    std::vector<TimingRecord> timing;
    std::vector<std::pair<double, OperatingState>> transitions;

    // Run-level aggregates for the summary file.
    double max_ac_step_frac = 0.0;
    double max_dc_step_frac = 0.0;
    double max_ac_dev_frac = 0.0;
    double max_dc_dev_frac = 0.0;
    double max_ampacity_ratio = 0.0;
    int ampacity_violations = 0;
    int opf_count = 0;
    int opf_infeasible = 0;
    double opf_kkt_max = 0.0;
    double lookahead_gap_pu = 0.0;
    std::optional<double> handoff_t;
    double handoff_p_gcp_w = 0.0;
    double handoff_q_gcp_var = 0.0;
    double handoff_p_forming_w = 0.0;
    double handoff_q_forming_var = 0.0;
    std::optional<double> resync_start_t;
    std::optional<double> resync_locked_t;
    double dangle_at_close_deg = 0.0;
    double dfreq_at_close_hz = 0.0;
    double max_dangle_deg = 0.0;
    std::vector<std::pair<std::string, std::pair<double, double>>> soc_minmax;
    /// Max |SoC - ref| per storage, transition windows excluded.
    std::vector<std::pair<std::string, double>> soc_dev_outside_transitions;
};

struct SimOptions {
    bool control_enabled = true;
    std::optional<std::uint64_t> seed_override;
    double lf_tolerance = 1e-12;
    /// Window around transitions excluded from the SoC deviation aggregate.
    double transition_window_s = 10.0;
};

/// Quasi-static closed-loop simulator: plant truth by full nonlinear load
/// flow each tick, the state machine and PI on the 100 ms grid, the
/// SC-based OPF on the control period.
class Simulator {
public:
    Simulator(const Scenario& scenario, const SimOptions& options = {});

    SimulationOutput run();

    /// Advances the plant one tick under the current setpoints and modes.
    /// Returns the solved truth state.
    const PlantState& plant_step();

    BreakerPhasor upstream_phasor() const;
    BreakerPhasor downstream_phasor() const;

    const PlantState& plant() const { return plant_; }
    const NetworkModel& current_model() const { return model_; }
    const SetpointSet& setpoints() const { return setpoints_; }
    OperatingState op_state() const { return machine_.state(); }

private:
    void rebuild_model();
    void apply_profiles(std::size_t tick);
    void execute(TransitionCommand cmd);
    void dispatch(std::size_t tick, TickRecord& rec);
    OpfConfig opf_config(std::size_t tick, bool islanded) const;
    void record_tick(std::size_t tick, TickRecord& rec);

    Scenario scenario_;
    SimOptions options_;
    NetworkModel model_;
    AdmittanceMatrices adm_;
    SetpointSet setpoints_;
    PlantState plant_;
    StateMachine machine_;
    PiState pi_;
    std::mt19937_64 rng_;
    std::vector<std::pair<double, TransitionCommand>> pending_; // absolute times
    std::vector<int> storage_devices_;                          // scenario device idx
    SimulationOutput out_;
    int slack_bus_ = -1;
    bool prev_valid_ = false;
    std::vector<double> prev_v_pu_;
};

SimulationOutput run_simulation(const Scenario& scenario, const SimOptions& options = {});

} // namespace hybridgrid
