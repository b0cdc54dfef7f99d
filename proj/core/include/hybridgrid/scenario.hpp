#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridgrid/control.hpp"
#include "hybridgrid/network.hpp"
#include "hybridgrid/opf.hpp"

namespace hybridgrid {

enum class DeviceKind { Load, Pv, Storage };

/// One resource attached to a bus. Profile values are injections in watts
/// (loads negative); for PV the profile is the available power and the
/// dispatch may curtail below it.
struct ScenarioDevice {
    std::string name;
    int bus = -1;
    DeviceKind kind = DeviceKind::Load;
    bool controllable = false;
    std::string profile_p; // profile name, empty -> constant 0
    std::string profile_q;
    double p_max_w = 0.0;
    double q_max_var = 0.0;
    // Storage parameters.
    double p0_w = 0.0; // initial dispatch for controllable storage
    double energy_wh = 0.0;
    double soc0 = 0.5;
    double soc_min = 0.1;
    double soc_max = 0.9;
    double soc_ref = 0.5;
    double eta = 1.0;
    bool island_slack = false;
};

struct ScenarioIc {
    std::string link_name;
    double p0_w = 0.0;
    double q0_var = 0.0;
    double e_dc0_v = 720.0;
    double q_max_var = 45000.0;
    double ramp_w_per_step = 4500.0;
};

enum class EventType { IslandTrigger, RestoreTrigger, Cancel };

struct ScenarioEvent {
    double t_s = 0.0;
    EventType type = EventType::IslandTrigger;
};

struct NoiseSpec {
    bool enabled = false;
    double sigma_p_w = 0.0;
    double sigma_v_v = 0.0;
};

/// Fully resolved scenario: the network model, per-tick profiles (linearly
/// interpolated onto the tick grid, zero-order held within a tick), events
/// and every controller parameter.
struct Scenario {
    std::string name;
    NetworkModel network;
    double duration_s = 0.0;
    double tick_s = 0.1;
    double control_period_s = 1.0;
    std::uint64_t seed = 1;
    double upstream_offset_hz = 0.0;

    TransitionCriteria criteria;
    int forming_link = 0;
    int island_slack_bus = -1;
    double island_slack_voltage_pu = 0.9;

    PiState pi;
    OpfWeights weights;
    double current_margin = 0.97;
    double e_dc_ref_pu = 0.9;
    /// Whether the OPF may move the forming-IC voltage setpoint. Off by
    /// default: with no AC-voltage objective term the loss term walks the
    /// island voltage to its bound.
    bool control_forming_vmag = false;

    std::vector<ScenarioDevice> devices;
    std::vector<ScenarioIc> ic;
    std::vector<ScenarioEvent> events;
    NoiseSpec noise;

    /// Per-tick resolved profile samples, keyed by profile name.
    std::map<std::string, std::vector<double>> profiles;

    std::size_t tick_count() const {
        return static_cast<std::size_t>(duration_s / tick_s + 0.5);
    }
    double profile_value(const std::string& name, std::size_t tick) const;
    int link_index(const std::string& name) const;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& base_dir);

} // namespace hybridgrid
