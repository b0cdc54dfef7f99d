#include "hybridgrid/setpoints.hpp"

#include <cmath>

namespace hybridgrid {

namespace {
bool finite(double v) { return std::isfinite(v); }
}

void validate_setpoints(const NetworkModel& model, const SetpointSet& sp) {
    const std::size_t n = model.buses.size();
    if (sp.p.size() != n || sp.q.size() != n || sp.v_mag.size() != n || sp.v_ang_deg.size() != n)
        throw Error("setpoint vectors must have one entry per bus");

    for (const Bus& b : model.buses) {
        const int id = b.id;
        switch (b.role) {
            case BusRole::AcSlack:
            case BusRole::IcAcForming:
                if (!finite(sp.v_mag[id]) || sp.v_mag[id] <= 0.0 || !finite(sp.v_ang_deg[id]))
                    throw Error("bus " + b.name + ": voltage setpoint must be finite and positive");
                break;
            case BusRole::AcPQ:
            case BusRole::IcAcPower:
                if (!finite(sp.p[id]) || !finite(sp.q[id]))
                    throw Error("bus " + b.name + ": P/Q setpoints must be finite");
                break;
            case BusRole::AcPV:
                if (!finite(sp.p[id]) || !finite(sp.v_mag[id]) || sp.v_mag[id] <= 0.0)
                    throw Error("bus " + b.name + ": P/|E| setpoints must be finite");
                break;
            case BusRole::IcAcVoltage:
                if (!finite(sp.q[id])) throw Error("bus " + b.name + ": Q setpoint must be finite");
                break;
            case BusRole::DcP:
                if (!finite(sp.p[id])) throw Error("bus " + b.name + ": P setpoint must be finite");
                break;
            case BusRole::DcV:
            case BusRole::IcDcVoltage:
                if (!finite(sp.v_mag[id]) || sp.v_mag[id] <= 0.0)
                    throw Error("bus " + b.name + ": DC voltage setpoint must be finite and positive");
                break;
            case BusRole::IcDcPower:
            case BusRole::IcDcForming:
                break;
        }
    }
}

} // namespace hybridgrid
