#pragma once

#include <vector>

#include "hybridgrid/network.hpp"

namespace hybridgrid {

/// Controlled quantities per bus, all in per-unit, indexed by bus id. The
/// bus role decides which entries are read:
///   slack        v_mag, v_ang_deg
///   PQ / IC-PQ   p, q           (injection convention)
///   PV           p, v_mag
///   DC P-node    p
///   DC V-node    v_mag
///   IC VdcQ      q (AC bus), v_mag (DC bus)
///   IC forming   v_mag, v_ang_deg (AC bus)
struct SetpointSet {
    std::vector<double> p;
    std::vector<double> q;
    std::vector<double> v_mag;
    std::vector<double> v_ang_deg;

    static SetpointSet zeros(std::size_t n_buses) {
        SetpointSet s;
        s.p.assign(n_buses, 0.0);
        s.q.assign(n_buses, 0.0);
        s.v_mag.assign(n_buses, 1.0);
        s.v_ang_deg.assign(n_buses, 0.0);
        return s;
    }

    void resize_like(const NetworkModel& model) {
        const std::size_t n = model.buses.size();
        p.resize(n, 0.0);
        q.resize(n, 0.0);
        v_mag.resize(n, 1.0);
        v_ang_deg.resize(n, 0.0);
    }
};

/// Checks sizes and finiteness of every entry the model's roles consume.
void validate_setpoints(const NetworkModel& model, const SetpointSet& sp);

} // namespace hybridgrid
