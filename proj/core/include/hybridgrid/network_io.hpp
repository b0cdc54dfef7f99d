#pragma once

#include <string>

#include "hybridgrid/loadflow.hpp"
#include "hybridgrid/network.hpp"
#include "hybridgrid/setpoints.hpp"

namespace hybridgrid {

/// Parses a network description file. All electrical quantities in the file
/// are physical SI units (ohm, siemens, ampere, volt, watt); loss parameters
/// are per-unit as identified. Filters present on links are embedded into
/// the model on load.
NetworkModel load_network(const std::string& path);
NetworkModel parse_network(const std::string& json_text);
std::string network_to_json(const NetworkModel& model);

/// Setpoint file: entries per bus (watt/var/volt) mapped by bus name or id.
SetpointSet load_setpoints(const std::string& path, const NetworkModel& model);
SetpointSet parse_setpoints(const std::string& json_text, const NetworkModel& model);

std::string state_to_json(const NetworkModel& model, const GridState& state,
                          const LoadflowResult* result = nullptr);
GridState parse_state(const std::string& json_text, const NetworkModel& model);
GridState load_state(const std::string& path, const NetworkModel& model);

} // namespace hybridgrid
