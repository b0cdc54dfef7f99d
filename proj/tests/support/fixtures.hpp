#pragma once

#include <hybridgrid/network.hpp>
#include <hybridgrid/setpoints.hpp>

namespace hgtest {

using namespace hybridgrid;

inline Bus make_bus(int id, const std::string& name, BusKind kind, BusRole role) {
    Bus b;
    b.id = id;
    b.name = name;
    b.kind = kind;
    b.role = role;
    b.vmin_v = kind == BusKind::Ac ? 360.0 : 640.0;
    b.vmax_v = kind == BusKind::Ac ? 440.0 : 800.0;
    return b;
}

inline Branch make_branch(int from, int to, double r, double x, double ampacity = 120.0) {
    Branch br;
    br.from = from;
    br.to = to;
    br.r_ohm = r;
    br.x_ohm = x;
    br.ampacity_a = ampacity;
    br.name = "br" + std::to_string(from) + "_" + std::to_string(to);
    return br;
}

inline LossParams datasheet_loss_params() {
    LossParams p;
    p.v0 = 0.0026;
    p.r0 = 0.0028;
    p.u = 0.0059;
    p.v = 0.0903;
    p.w = 1.1e-4;
    p.e_nom = 0.833;
    p.f_sw = 1.0;
    return p;
}

/// Two AC buses: slack (0) and PQ load (1) joined by one line.
inline NetworkModel two_bus_ac(double r_ohm = 0.016, double x_ohm = 0.048) {
    NetworkModel m;
    m.buses = {make_bus(0, "S", BusKind::Ac, BusRole::AcSlack),
               make_bus(1, "L", BusKind::Ac, BusRole::AcPQ)};
    m.branches = {make_branch(0, 1, r_ohm, x_ohm)};
    return m;
}

/// Minimal hybrid grid: AC slack + IC link in DC-voltage mode + one DC
/// P-node anchored by the link's DC terminal.
/// Bus map: 0 slack, 1 IC-ac; 2 IC-dc (E* pinned), 3 DC P.
inline NetworkModel toy4_hybrid(const LossParams& loss = datasheet_loss_params()) {
    NetworkModel m;
    m.buses = {make_bus(0, "S", BusKind::Ac, BusRole::AcSlack),
               make_bus(1, "ICa", BusKind::Ac, BusRole::IcAcVoltage),
               make_bus(2, "ICd", BusKind::Dc, BusRole::IcDcVoltage),
               make_bus(3, "Pdc", BusKind::Dc, BusRole::DcP)};
    m.branches = {make_branch(0, 1, 0.02, 0.012), make_branch(2, 3, 0.08, 0.0)};
    IcLink link;
    link.ac_bus = 1;
    link.dc_bus = 2;
    link.rating_w = 45000;
    link.mode = IcMode::FollowingVdcQ;
    link.loss = loss;
    link.name = "IC";
    m.ic_links = {link};
    return m;
}

/// Minimal island: PQ load (0) + forming IC (1); DC forming terminal (2) +
/// DC voltage slack (3).
inline NetworkModel toy4_island(const LossParams& loss = datasheet_loss_params()) {
    NetworkModel m;
    m.buses = {make_bus(0, "L", BusKind::Ac, BusRole::AcPQ),
               make_bus(1, "ICa", BusKind::Ac, BusRole::IcAcForming),
               make_bus(2, "ICd", BusKind::Dc, BusRole::IcDcForming),
               make_bus(3, "ESS", BusKind::Dc, BusRole::DcV)};
    m.branches = {make_branch(0, 1, 0.02, 0.012), make_branch(2, 3, 0.08, 0.0)};
    IcLink link;
    link.ac_bus = 1;
    link.dc_bus = 2;
    link.rating_w = 45000;
    link.mode = IcMode::Forming;
    link.loss = loss;
    link.name = "IC";
    m.ic_links = {link};
    return m;
}

/// Eight-bus hybrid exercising every role: AC slack(0), PQ(1), PV(2),
/// VdcQ IC ac(3), PQ IC ac(4); DC: VdcQ IC dc(5), PQ IC dc(6), DC P(7).
inline NetworkModel grid8(const LossParams& loss = datasheet_loss_params()) {
    NetworkModel m;
    m.buses = {make_bus(0, "S", BusKind::Ac, BusRole::AcSlack),
               make_bus(1, "L1", BusKind::Ac, BusRole::AcPQ),
               make_bus(2, "G1", BusKind::Ac, BusRole::AcPV),
               make_bus(3, "IC1a", BusKind::Ac, BusRole::IcAcVoltage),
               make_bus(4, "IC2a", BusKind::Ac, BusRole::IcAcPower),
               make_bus(5, "IC1d", BusKind::Dc, BusRole::IcDcVoltage),
               make_bus(6, "IC2d", BusKind::Dc, BusRole::IcDcPower),
               make_bus(7, "Pdc", BusKind::Dc, BusRole::DcP)};
    m.branches = {make_branch(0, 1, 0.02, 0.012), make_branch(1, 2, 0.03, 0.015),
                  make_branch(1, 3, 0.015, 0.01), make_branch(2, 4, 0.015, 0.01),
                  make_branch(5, 7, 0.08, 0.0),   make_branch(6, 7, 0.1, 0.0)};
    IcLink ic1;
    ic1.ac_bus = 3;
    ic1.dc_bus = 5;
    ic1.rating_w = 45000;
    ic1.mode = IcMode::FollowingVdcQ;
    ic1.loss = loss;
    ic1.name = "IC1";
    IcLink ic2;
    ic2.ac_bus = 4;
    ic2.dc_bus = 6;
    ic2.rating_w = 45000;
    ic2.mode = IcMode::FollowingPQ;
    ic2.loss = loss;
    ic2.name = "IC2";
    m.ic_links = {ic1, ic2};
    return m;
}

/// Operating setpoints for grid8 with some flow on every element.
inline SetpointSet grid8_setpoints() {
    SetpointSet sp = SetpointSet::zeros(8);
    sp.v_mag[0] = 1.0;
    sp.p[1] = -0.10;
    sp.q[1] = -0.02;
    sp.p[2] = 0.05;
    sp.v_mag[2] = 1.0;
    sp.q[3] = 0.01;       // VdcQ reactive setpoint
    sp.v_mag[5] = 0.90;   // VdcQ DC voltage
    sp.p[4] = 0.04;
    sp.q[4] = 0.005;
    sp.p[7] = 0.06;       // DC source
    return sp;
}

/// Islanded variant of grid8: slack becomes zero-injection PQ, IC1 forms,
/// the DC P-node becomes the voltage slack.
inline NetworkModel grid8_island(const LossParams& loss = datasheet_loss_params()) {
    return make_islanded(grid8(loss), 0, 7);
}

inline SetpointSet grid8_island_setpoints() {
    SetpointSet sp = grid8_setpoints();
    sp.p[0] = 0.0;
    sp.q[0] = 0.0;
    sp.v_mag[1 + 2] = 1.0; // forming |E| at bus 3
    sp.v_mag[3] = 1.0;
    sp.v_ang_deg[3] = 0.0;
    sp.v_mag[7] = 0.9;     // island DC slack voltage
    return sp;
}

} // namespace hgtest
