#include "hybridgrid/opf.hpp"

#include <cmath>

#include "hybridgrid/loadflow.hpp"

namespace hybridgrid {

int OpfProblem::var_index(OpfVarKind kind, int bus, int link, int device) const {
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const OpfVar& v = vars[i];
        if (v.kind == kind && v.bus == bus && v.link == link && v.device == device)
            return static_cast<int>(i);
    }
    return -1;
}

namespace {

struct GridMeasurements {
    std::vector<Complex> bus_inj;       // per bus
    std::vector<double> link_p_ac;      // per link
    std::vector<double> link_q_ac;
    std::vector<double> link_p_dc_inj;  // injection at the DC terminal
    std::vector<double> link_loss;
    double loss_ac = 0.0;
    double loss_dc = 0.0;
    double qloss_ac = 0.0;
};

GridMeasurements measure(const NetworkModel& model, const AdmittanceMatrices& adm,
                         const GridState& state) {
    GridMeasurements gm;
    gm.bus_inj.resize(model.buses.size());
    for (const Bus& b : model.buses) gm.bus_inj[b.id] = bus_injection(model, adm, state, b.id);

    for (const IcLink& link : model.ic_links) {
        const IcNeighbors nb = ic_neighbors(model, link);
        gm.link_p_ac.push_back(gm.bus_inj[nb.l].real());
        gm.link_q_ac.push_back(gm.bus_inj[nb.l].imag());
        gm.link_p_dc_inj.push_back(gm.bus_inj[nb.k].real());
        gm.link_loss.push_back(
            loss_from_state(state, adm.yac, nb.l, nb.i, model.dc_local(nb.k), link.loss));
    }

    for (const Branch& br : model.branches) {
        if (model.branch_kind(br) == BusKind::Ac) {
            const Complex d = state.e_ac[br.from] - state.e_ac[br.to];
            gm.loss_ac += model.branch_series_admittance_pu(br).real() * std::norm(d);
            gm.loss_ac += model.branch_shunt_from_pu(br).real() * std::norm(state.e_ac[br.from]);
            gm.loss_ac += model.branch_shunt_to_pu(br).real() * std::norm(state.e_ac[br.to]);
            gm.qloss_ac += -model.branch_series_admittance_pu(br).imag() * std::norm(d);
            gm.qloss_ac += -model.branch_shunt_from_pu(br).imag() * std::norm(state.e_ac[br.from]);
            gm.qloss_ac += -model.branch_shunt_to_pu(br).imag() * std::norm(state.e_ac[br.to]);
        } else {
            const double d = state.e_dc[model.dc_local(br.from)] - state.e_dc[model.dc_local(br.to)];
            gm.loss_dc += model.branch_series_admittance_pu(br).real() * d * d;
        }
    }
    return gm;
}

struct RowBuilder {
    std::vector<std::vector<std::pair<int, double>>> rows;
    std::vector<double> lb, ub;
    std::vector<std::string> tags;

    void add(const std::vector<std::pair<int, double>>& coeffs, double lo, double hi,
             const std::string& tag) {
        rows.push_back(coeffs);
        lb.push_back(lo);
        ub.push_back(hi);
        tags.push_back(tag);
    }

    void add_eq(const std::vector<std::pair<int, double>>& coeffs, double value,
                const std::string& tag) {
        add(coeffs, value, value, tag);
    }

    void add_box(int var, double lo, double hi, const std::string& tag) {
        add({{var, 1.0}}, lo, hi, tag);
    }
};

} // namespace

OpfProblem build_opf(const NetworkModel& model, const GridState& state,
                     const SensitivityMatrices& scs, OperatingState op_state,
                     const OpfConfig& cfg, const SetpointSet& prev) {
    const bool islanded_topology = [&] {
        for (const Bus& b : model.buses)
            if (b.role == BusRole::AcSlack) return false;
        return true;
    }();
    const bool island_mode =
        op_state == OperatingState::Island || op_state == OperatingState::Resynchronisation;
    if (island_mode != islanded_topology)
        throw Error("build_opf: operating state " + to_string(op_state) +
                    " is inconsistent with the model topology");
    if (island_mode) {
        bool has_forming = false;
        for (const IcLink& l : model.ic_links) has_forming |= l.mode == IcMode::Forming;
        if (!has_forming) throw Error("build_opf: island objective with no forming IC");
        if (cfg.island_slack_bus < 0 || model.bus(cfg.island_slack_bus).role != BusRole::DcV)
            throw Error("build_opf: island mode requires the DC slack bus");
    }
    if (cfg.ic_limits.size() != model.ic_links.size())
        throw Error("build_opf: ic_limits must match the link count");

    const AdmittanceMatrices adm = build_admittance(model);
    const GridMeasurements gm = measure(model, adm, state);

    OpfProblem prob;
    prob.op_state = op_state;
    for (const Bus& b : model.buses)
        if (b.role == BusRole::AcSlack) prob.slack_bus = b.id;

    auto add_decision = [&](OpfVarKind kind, int bus, int link, int device, double baseline,
                            const ControlVariable& x, const std::string& name) {
        OpfVar v;
        v.kind = kind;
        v.bus = bus;
        v.link = link;
        v.device = device;
        v.baseline = baseline;
        v.is_decision = true;
        v.sc_column = scs.index_of(x);
        v.name = name;
        prob.vars.push_back(v);
    };
    auto add_aux = [&](OpfVarKind kind, int bus, int link, int device, double baseline,
                       const std::string& name) {
        OpfVar v;
        v.kind = kind;
        v.bus = bus;
        v.link = link;
        v.device = device;
        v.baseline = baseline;
        v.name = name;
        prob.vars.push_back(v);
    };

    // Decision variables: DER setpoints.
    for (std::size_t d = 0; d < cfg.devices.size(); ++d) {
        const OpfDevice& dev = cfg.devices[d];
        const BusRole role = model.bus(dev.bus).role;
        const int di = static_cast<int>(d);
        if (dev.control_p && (role == BusRole::AcPQ || role == BusRole::DcP))
            add_decision(OpfVarKind::DeviceP, dev.bus, -1, di, gm.bus_inj[dev.bus].real(),
                         {ControlKind::BusP, dev.bus}, dev.name + ".P");
        if (dev.control_q && role == BusRole::AcPQ)
            add_decision(OpfVarKind::DeviceQ, dev.bus, -1, di, gm.bus_inj[dev.bus].imag(),
                         {ControlKind::BusQ, dev.bus}, dev.name + ".Q");
    }

    // Decision + aux variables per IC link.
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        const IcLink& link = model.ic_links[li];
        const int l = static_cast<int>(li);
        switch (link.mode) {
            case IcMode::FollowingPQ:
                add_decision(OpfVarKind::IcP, link.ac_bus, l, -1, gm.link_p_ac[li],
                             {ControlKind::BusP, link.ac_bus}, link.name + ".P");
                add_decision(OpfVarKind::IcQ, link.ac_bus, l, -1, gm.link_q_ac[li],
                             {ControlKind::BusQ, link.ac_bus}, link.name + ".Q");
                break;
            case IcMode::FollowingVdcQ:
                add_decision(OpfVarKind::IcQ, link.ac_bus, l, -1, gm.link_q_ac[li],
                             {ControlKind::BusQ, link.ac_bus}, link.name + ".Q");
                if (cfg.control_vdcq_edc)
                    add_decision(OpfVarKind::IcEdc, link.dc_bus, l, -1,
                                 state.e_dc[model.dc_local(link.dc_bus)],
                                 {ControlKind::DcVoltage, link.dc_bus}, link.name + ".Edc");
                add_aux(OpfVarKind::AuxIcPac, link.ac_bus, l, -1, gm.link_p_ac[li],
                        link.name + ".Pac");
                break;
            case IcMode::Forming:
                if (cfg.control_forming_vmag)
                    add_decision(OpfVarKind::FormingVmag, link.ac_bus, l, -1,
                                 std::abs(state.e_ac[link.ac_bus]),
                                 {ControlKind::FormingVoltageMag, link.ac_bus},
                                 link.name + ".Vmag");
                add_aux(OpfVarKind::AuxIcPac, link.ac_bus, l, -1, gm.link_p_ac[li],
                        link.name + ".Pac");
                add_aux(OpfVarKind::AuxIcQac, link.ac_bus, l, -1, gm.link_q_ac[li],
                        link.name + ".Qac");
                break;
        }
        add_aux(OpfVarKind::AuxIcPdc, link.dc_bus, l, -1, gm.link_p_dc_inj[li], link.name + ".Pdc");
        add_aux(OpfVarKind::AuxIcLoss, -1, l, -1, gm.link_loss[li], link.name + ".loss");
    }

    if (island_mode && cfg.control_island_slack_voltage)
        add_decision(OpfVarKind::DcSlackVoltage, cfg.island_slack_bus, -1, -1,
                     state.e_dc[model.dc_local(cfg.island_slack_bus)],
                     {ControlKind::DcVoltage, cfg.island_slack_bus}, "ess.Edc");

    // Slack aux: grid-connected GCP P/Q, or the island ESS active power.
    if (!island_mode) {
        add_aux(OpfVarKind::AuxSlackP, prob.slack_bus, -1, -1, gm.bus_inj[prob.slack_bus].real(),
                "slack.P");
        add_aux(OpfVarKind::AuxSlackQ, prob.slack_bus, -1, -1, gm.bus_inj[prob.slack_bus].imag(),
                "slack.Q");
    } else {
        add_aux(OpfVarKind::AuxSlackP, cfg.island_slack_bus, -1, -1,
                gm.bus_inj[cfg.island_slack_bus].real(), "ess.P");
    }

    add_aux(OpfVarKind::AuxLossAc, -1, -1, -1, gm.loss_ac, "loss.ac");
    add_aux(OpfVarKind::AuxLossDc, -1, -1, -1, gm.loss_dc, "loss.dc");
    add_aux(OpfVarKind::AuxQlossAc, -1, -1, -1, gm.qloss_ac, "qloss.ac");

    // SoC aux per storage device.
    for (std::size_t d = 0; d < cfg.devices.size(); ++d) {
        const OpfDevice& dev = cfg.devices[d];
        if (!dev.is_storage) continue;
        if (dev.e_tot_pu_h <= 0.0) throw Error("storage device " + dev.name + " needs e_tot");
        const double p_now = gm.bus_inj[dev.bus].real();
        const double soc_base = dev.soc - dev.eta * p_now * (cfg.t_s / 3600.0) / dev.e_tot_pu_h;
        add_aux(OpfVarKind::AuxSoc, dev.bus, -1, static_cast<int>(d), soc_base, dev.name + ".soc");
    }

    const int n = static_cast<int>(prob.vars.size());
    auto idx = [&](OpfVarKind kind, int bus = -1, int link = -1, int device = -1) {
        const int i = prob.var_index(kind, bus, link, device);
        if (i < 0) throw Error("build_opf: missing variable");
        return i;
    };

    RowBuilder rb;

    // Loss linearisation rows (the SC rows of the grid and converter losses).
    {
        std::vector<std::pair<int, double>> ac{{idx(OpfVarKind::AuxLossAc), 1.0}};
        std::vector<std::pair<int, double>> dc{{idx(OpfVarKind::AuxLossDc), 1.0}};
        std::vector<std::pair<int, double>> ql{{idx(OpfVarKind::AuxQlossAc), 1.0}};
        for (int v = 0; v < n; ++v) {
            if (!prob.vars[v].is_decision) continue;
            const int c = prob.vars[v].sc_column;
            if (scs.dploss_ac_dx(c) != 0.0) ac.push_back({v, -scs.dploss_ac_dx(c)});
            if (scs.dploss_dc_dx(c) != 0.0) dc.push_back({v, -scs.dploss_dc_dx(c)});
            if (scs.dqloss_dx(c) != 0.0) ql.push_back({v, -scs.dqloss_dx(c)});
        }
        rb.add_eq(ac, 0.0, "opf_ploss[ac]");
        rb.add_eq(dc, 0.0, "opf_ploss[dc]");
        rb.add_eq(ql, 0.0, "opf_qloss[ac]");
    }
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        std::vector<std::pair<int, double>> row{
            {idx(OpfVarKind::AuxIcLoss, -1, static_cast<int>(li)), 1.0}};
        for (int v = 0; v < n; ++v) {
            if (!prob.vars[v].is_decision) continue;
            const double k = scs.dploss_ic_dx(static_cast<int>(li), prob.vars[v].sc_column);
            if (k != 0.0) row.push_back({v, -k});
        }
        rb.add_eq(row, 0.0, "opf_ploss_ic[" + model.ic_links[li].name + "]");
    }

    // Converter AC<->DC power mapping per link (P_k = -P_l - P_loss).
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        const IcLink& link = model.ic_links[li];
        const int l = static_cast<int>(li);
        const int pac = link.mode == IcMode::FollowingPQ
                            ? idx(OpfVarKind::IcP, link.ac_bus, l)
                            : idx(OpfVarKind::AuxIcPac, link.ac_bus, l);
        rb.add_eq({{idx(OpfVarKind::AuxIcPdc, link.dc_bus, l), 1.0},
                   {pac, 1.0},
                   {idx(OpfVarKind::AuxIcLoss, -1, l), 1.0}},
                  0.0, "opf_pic[" + link.name + "]");
    }

    // Collect decision groups for the balance rows.
    std::vector<std::pair<int, double>> ac_p_decisions, ac_q_decisions, dc_p_decisions;
    for (int v = 0; v < n; ++v) {
        const OpfVar& var = prob.vars[v];
        if (!var.is_decision) continue;
        if (var.kind == OpfVarKind::DeviceP) {
            if (model.bus(var.bus).kind == BusKind::Ac)
                ac_p_decisions.push_back({v, 1.0});
            else
                dc_p_decisions.push_back({v, 1.0});
        }
        if (var.kind == OpfVarKind::DeviceQ) ac_q_decisions.push_back({v, 1.0});
    }

    // PV buses hold their magnitude and their reactive injection responds to
    // every decision; the reactive balance rows carry that linearised
    // response alongside the explicit decision terms.
    std::vector<std::pair<int, double>> pv_q_response;
    {
        const ScLayout su{model.n_ac(), model.n_dc()};
        const int n_ac = model.n_ac();
        for (const Bus& b : model.buses) {
            if (b.role != BusRole::AcPV) continue;
            Complex i_b(0.0, 0.0);
            for (int nn = 0; nn < n_ac; ++nn) i_b += adm.yac(b.id, nn) * state.e_ac[nn];
            for (int v = 0; v < n; ++v) {
                if (!prob.vars[v].is_decision) continue;
                const int c = prob.vars[v].sc_column;
                double dq = 0.0;
                for (int nn = 0; nn < n_ac; ++nn) {
                    const Complex y = adm.yac(b.id, nn);
                    if (y == Complex(0.0, 0.0) && nn != b.id) continue;
                    const Complex e_b = state.e_ac[b.id];
                    const bool self = nn == b.id;
                    const double dq_re = e_b.imag() * y.real() - e_b.real() * y.imag() +
                                         (self ? -i_b.imag() : 0.0);
                    const double dq_im = -e_b.imag() * y.imag() - e_b.real() * y.real() +
                                         (self ? i_b.real() : 0.0);
                    dq += dq_re * scs.u(su.ac_re(nn), c) + dq_im * scs.u(su.ac_im(nn), c);
                }
                if (dq != 0.0) pv_q_response.push_back({v, dq});
            }
        }
    }

    auto all_link_pac = [&]() {
        std::vector<std::pair<int, double>> out;
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            const IcLink& link = model.ic_links[li];
            const int l = static_cast<int>(li);
            out.push_back({link.mode == IcMode::FollowingPQ
                               ? idx(OpfVarKind::IcP, link.ac_bus, l)
                               : idx(OpfVarKind::AuxIcPac, link.ac_bus, l),
                           1.0});
        }
        return out;
    };

    if (!island_mode) {
        // GCP reactive balance (opf_sq).
        std::vector<std::pair<int, double>> sq{{idx(OpfVarKind::AuxSlackQ, prob.slack_bus), 1.0}};
        for (auto [v, c] : ac_q_decisions) sq.push_back({v, c});
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            const IcLink& link = model.ic_links[li];
            const int qv = prob.var_index(OpfVarKind::IcQ, link.ac_bus, static_cast<int>(li));
            if (qv >= 0) sq.push_back({qv, 1.0});
        }
        for (auto [v, c] : pv_q_response) sq.push_back({v, c});
        sq.push_back({idx(OpfVarKind::AuxQlossAc), -1.0});
        rb.add_eq(sq, 0.0, "opf_sq");

        // GCP active balance (opf_sp).
        std::vector<std::pair<int, double>> sp{{idx(OpfVarKind::AuxSlackP, prob.slack_bus), 1.0}};
        for (auto [v, c] : ac_p_decisions) sp.push_back({v, c});
        for (auto [v, c] : dc_p_decisions) sp.push_back({v, c});
        for (auto [v, c] : all_link_pac()) sp.push_back({v, c});
        for (std::size_t li = 0; li < model.ic_links.size(); ++li)
            sp.push_back({idx(OpfVarKind::AuxIcPdc, model.ic_links[li].dc_bus,
                              static_cast<int>(li)),
                          1.0});
        // Grid losses only: the converter losses are already inside the
        // P_l + P_k sums through the pic rows.
        sp.push_back({idx(OpfVarKind::AuxLossAc), -1.0});
        sp.push_back({idx(OpfVarKind::AuxLossDc), -1.0});
        rb.add_eq(sp, 0.0, "opf_sp");

        // DC active balance pinning the voltage-controlled IC (opf_form).
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            const IcLink& link = model.ic_links[li];
            if (link.mode != IcMode::FollowingVdcQ) continue;
            std::vector<std::pair<int, double>> form{
                {idx(OpfVarKind::AuxIcPdc, link.dc_bus, static_cast<int>(li)), 1.0}};
            for (auto [v, c] : dc_p_decisions) form.push_back({v, c});
            for (std::size_t lj = 0; lj < model.ic_links.size(); ++lj) {
                if (lj == li) continue;
                form.push_back({idx(OpfVarKind::AuxIcPdc, model.ic_links[lj].dc_bus,
                                    static_cast<int>(lj)),
                                1.0});
            }
            form.push_back({idx(OpfVarKind::AuxLossDc), -1.0});
            rb.add_eq(form, 0.0, "opf_form[" + link.name + "]");
        }
    } else {
        int forming_link = -1;
        for (std::size_t li = 0; li < model.ic_links.size(); ++li)
            if (model.ic_links[li].mode == IcMode::Forming) forming_link = static_cast<int>(li);
        const IcLink& fl = model.ic_links[forming_link];

        // Island reactive balance on the forming IC (opf_sq2).
        std::vector<std::pair<int, double>> sq{
            {idx(OpfVarKind::AuxIcQac, fl.ac_bus, forming_link), 1.0}};
        for (auto [v, c] : ac_q_decisions) sq.push_back({v, c});
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            if (static_cast<int>(li) == forming_link) continue;
            const int qv =
                prob.var_index(OpfVarKind::IcQ, model.ic_links[li].ac_bus, static_cast<int>(li));
            if (qv >= 0) sq.push_back({qv, 1.0});
        }
        for (auto [v, c] : pv_q_response) sq.push_back({v, c});
        sq.push_back({idx(OpfVarKind::AuxQlossAc), -1.0});
        rb.add_eq(sq, 0.0, "opf_sq2");

        // Island active balance on the ESS (opf_sp2).
        std::vector<std::pair<int, double>> sp{
            {idx(OpfVarKind::AuxSlackP, cfg.island_slack_bus), 1.0}};
        for (auto [v, c] : ac_p_decisions) sp.push_back({v, c});
        for (auto [v, c] : dc_p_decisions) sp.push_back({v, c});
        for (auto [v, c] : all_link_pac()) sp.push_back({v, c});
        for (std::size_t li = 0; li < model.ic_links.size(); ++li)
            sp.push_back({idx(OpfVarKind::AuxIcPdc, model.ic_links[li].dc_bus,
                              static_cast<int>(li)),
                          1.0});
        sp.push_back({idx(OpfVarKind::AuxLossAc), -1.0});
        sp.push_back({idx(OpfVarKind::AuxLossDc), -1.0});
        rb.add_eq(sp, 0.0, "opf_sp2");

        // AC active balance defining the forming IC injection (opf_form2).
        std::vector<std::pair<int, double>> form{
            {idx(OpfVarKind::AuxIcPac, fl.ac_bus, forming_link), 1.0}};
        for (auto [v, c] : ac_p_decisions) form.push_back({v, c});
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            if (static_cast<int>(li) == forming_link) continue;
            const IcLink& link = model.ic_links[li];
            form.push_back({link.mode == IcMode::FollowingPQ
                                ? idx(OpfVarKind::IcP, link.ac_bus, static_cast<int>(li))
                                : idx(OpfVarKind::AuxIcPac, link.ac_bus, static_cast<int>(li)),
                            1.0});
        }
        form.push_back({idx(OpfVarKind::AuxLossAc), -1.0});
        rb.add_eq(form, 0.0, "opf_form2");
    }

    // SoC dynamics and limits.
    for (int v = 0; v < n; ++v) {
        const OpfVar& var = prob.vars[v];
        if (var.kind != OpfVarKind::AuxSoc) continue;
        const OpfDevice& dev = cfg.devices[var.device];
        const double c = dev.eta * (cfg.t_s / 3600.0) / dev.e_tot_pu_h;
        std::vector<std::pair<int, double>> soc{{v, 1.0}};
        const int pv = prob.var_index(OpfVarKind::DeviceP, dev.bus, -1, var.device);
        if (pv >= 0) {
            soc.push_back({pv, c});
        } else if (island_mode && dev.bus == cfg.island_slack_bus) {
            // Slack ESS: power reconstructed from the balance row.
            soc.push_back({idx(OpfVarKind::AuxSlackP, cfg.island_slack_bus), c});
        }
        rb.add_eq(soc, 0.0, "opf_socmodel[" + dev.name + "]");
        rb.add_box(v, dev.soc_min - var.baseline, dev.soc_max - var.baseline,
                   "opf_soclim[" + dev.name + "]");
    }

    // Grid constraint rows: voltage magnitudes and branch ampacities.
    for (const Bus& b : model.buses) {
        std::vector<std::pair<int, double>> row;
        for (int v = 0; v < n; ++v) {
            if (!prob.vars[v].is_decision) continue;
            const double k = scs.de_dx(b.id, prob.vars[v].sc_column);
            if (k != 0.0) row.push_back({v, k});
        }
        const double e0 = b.kind == BusKind::Ac ? std::abs(state.e_ac[b.id])
                                                : state.e_dc[model.dc_local(b.id)];
        rb.add(row, model.vmin_pu(b) - e0, model.vmax_pu(b) - e0, "opf_vlim[" + b.name + "]");
    }
    for (std::size_t br_idx = 0; br_idx < model.branches.size(); ++br_idx) {
        const Branch& br = model.branches[br_idx];
        if (br.ampacity_a <= 0.0) continue;
        std::vector<std::pair<int, double>> row;
        for (int v = 0; v < n; ++v) {
            if (!prob.vars[v].is_decision) continue;
            const double k = scs.di_dx(static_cast<int>(br_idx), prob.vars[v].sc_column);
            if (k != 0.0) row.push_back({v, k});
        }
        const double i0 = std::abs(branch_current_from(model, state, br));
        const double imax = model.ampacity_pu(br) * cfg.current_margin;
        rb.add(row, -imax - i0, imax - i0, "opf_ilim[" + br.name + "]");
    }

    // Device capacity boxes.
    for (int v = 0; v < n; ++v) {
        const OpfVar& var = prob.vars[v];
        if (!var.is_decision) continue;
        switch (var.kind) {
            case OpfVarKind::DeviceP: {
                const OpfDevice& dev = cfg.devices[var.device];
                const char* tag = model.bus(var.bus).kind == BusKind::Ac ? "opf_pi[" : "opf_pj[";
                rb.add_box(v, dev.p_min_pu - var.baseline, dev.p_max_pu - var.baseline,
                           tag + dev.name + "]");
                break;
            }
            case OpfVarKind::DeviceQ: {
                const OpfDevice& dev = cfg.devices[var.device];
                rb.add_box(v, dev.q_min_pu - var.baseline, dev.q_max_pu - var.baseline,
                           "opf_qi[" + dev.name + "]");
                break;
            }
            case OpfVarKind::IcP: {
                const OpfIcLimits& lim = cfg.ic_limits[var.link];
                rb.add_box(v, -lim.p_max_pu - var.baseline, lim.p_max_pu - var.baseline,
                           "opf_pl[" + model.ic_links[var.link].name + "]");
                break;
            }
            case OpfVarKind::IcQ: {
                const OpfIcLimits& lim = cfg.ic_limits[var.link];
                rb.add_box(v, -lim.q_max_pu - var.baseline, lim.q_max_pu - var.baseline,
                           "opf_ql[" + model.ic_links[var.link].name + "]");
                break;
            }
            case OpfVarKind::IcEdc:
            case OpfVarKind::DcSlackVoltage:
            case OpfVarKind::FormingVmag: {
                const Bus& b = model.bus(var.bus);
                rb.add_box(v, model.vmin_pu(b) - var.baseline, model.vmax_pu(b) - var.baseline,
                           "opf_vset[" + var.name + "]");
                break;
            }
            default:
                break;
        }
    }

    // Capacity of derived link powers and the transition ramp.
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        const IcLink& link = model.ic_links[li];
        const int l = static_cast<int>(li);
        const OpfIcLimits& lim = cfg.ic_limits[li];
        const int pac = prob.var_index(OpfVarKind::AuxIcPac, link.ac_bus, l);
        if (pac >= 0)
            rb.add_box(pac, -lim.p_max_pu - prob.vars[pac].baseline,
                       lim.p_max_pu - prob.vars[pac].baseline,
                       "opf_pl[" + link.name + "]");
        const int qac = prob.var_index(OpfVarKind::AuxIcQac, link.ac_bus, l);
        if (qac >= 0)
            rb.add_box(qac, -lim.q_max_pu - prob.vars[qac].baseline,
                       lim.q_max_pu - prob.vars[qac].baseline,
                       "opf_ql[" + link.name + "]");
    }
    {
        const IcLink& link = model.ic_links[cfg.transition_link];
        const int l = cfg.transition_link;
        const OpfIcLimits& lim = cfg.ic_limits[l];
        const int pac = link.mode == IcMode::FollowingPQ
                            ? idx(OpfVarKind::IcP, link.ac_bus, l)
                            : idx(OpfVarKind::AuxIcPac, link.ac_bus, l);
        // Baseline is the previous-step power, so the ramp is a box on the
        // delta itself.
        rb.add_box(pac, -lim.ramp_pu, lim.ramp_pu,
                   island_mode ? "opf_ramp2[" + link.name + "]" : "opf_ramp[" + link.name + "]");
    }

    // Objective terms.
    auto combo_of = [&](const std::vector<std::pair<int, double>>& coeffs) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        for (auto [v, k] : coeffs) c[v] += k;
        return c;
    };
    auto add_term = [&](const std::string& name, const Eigen::VectorXd& combo, double baseline,
                        double weight, double scale) {
        if (weight <= 0.0) return;
        prob.terms.push_back({name, combo, baseline, weight, scale});
    };
    const OpfWeights& w = cfg.weights;

    if (!island_mode) {
        const int qs = idx(OpfVarKind::AuxSlackQ, prob.slack_bus);
        add_term("w1.q_gcp", combo_of({{qs, 1.0}}), prob.vars[qs].baseline, w.w1_q_gcp,
                 cfg.power_scale_pu);
    }
    {
        std::vector<std::pair<int, double>> tot{{idx(OpfVarKind::AuxLossAc), 1.0},
                                                {idx(OpfVarKind::AuxLossDc), 1.0}};
        double base = gm.loss_ac + gm.loss_dc;
        for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
            tot.push_back({idx(OpfVarKind::AuxIcLoss, -1, static_cast<int>(li)), 1.0});
            base += gm.link_loss[li];
        }
        add_term("w2.losses", combo_of(tot), base, w.w2_losses, cfg.power_scale_pu);
    }
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        const IcLink& link = model.ic_links[li];
        const int l = static_cast<int>(li);
        if (link.mode == IcMode::Forming) continue; // handled by w7/w8
        const int pac = link.mode == IcMode::FollowingPQ
                            ? idx(OpfVarKind::IcP, link.ac_bus, l)
                            : idx(OpfVarKind::AuxIcPac, link.ac_bus, l);
        add_term("w3.p_" + link.name, combo_of({{pac, 1.0}}), prob.vars[pac].baseline, w.w3_ic_p,
                 cfg.power_scale_pu);
        const int qv = prob.var_index(OpfVarKind::IcQ, link.ac_bus, l);
        if (qv >= 0)
            add_term("w4.q_" + link.name, combo_of({{qv, 1.0}}), prob.vars[qv].baseline,
                     w.w4_ic_q, cfg.power_scale_pu);
    }
    for (const Bus& b : model.buses) {
        if (b.kind != BusKind::Dc) continue;
        std::vector<std::pair<int, double>> row;
        for (int v = 0; v < n; ++v) {
            if (!prob.vars[v].is_decision) continue;
            const double k = scs.de_dx(b.id, prob.vars[v].sc_column);
            if (k != 0.0) row.push_back({v, k});
        }
        const double e0 = state.e_dc[model.dc_local(b.id)];
        add_term("w5.vdc_" + b.name, combo_of(row), e0 - cfg.e_dc_ref_pu, w.w5_dc_voltage,
                 cfg.voltage_scale_pu);
    }
    for (int v = 0; v < n; ++v) {
        const OpfVar& var = prob.vars[v];
        if (var.kind != OpfVarKind::AuxSoc) continue;
        const OpfDevice& dev = cfg.devices[var.device];
        add_term("w6.soc_" + dev.name, combo_of({{v, 1.0}}), var.baseline - dev.soc_ref,
                 w.w6_soc, cfg.soc_scale);
    }
    if (op_state == OperatingState::PrepareForIsland ||
        op_state == OperatingState::Resynchronisation) {
        const IcLink& link = model.ic_links[cfg.transition_link];
        const int l = cfg.transition_link;
        const int pac = link.mode == IcMode::FollowingPQ
                            ? idx(OpfVarKind::IcP, link.ac_bus, l)
                            : idx(OpfVarKind::AuxIcPac, link.ac_bus, l);
        add_term("w7.p_forming", combo_of({{pac, 1.0}}), prob.vars[pac].baseline, w.w7_forming_p,
                 cfg.power_scale_pu);
        const int qv = prob.var_index(OpfVarKind::IcQ, link.ac_bus, l);
        const int qac = prob.var_index(OpfVarKind::AuxIcQac, link.ac_bus, l);
        const int q_used = qv >= 0 ? qv : qac;
        if (q_used >= 0)
            add_term("w8.q_forming", combo_of({{q_used, 1.0}}), prob.vars[q_used].baseline,
                     w.w8_forming_q, cfg.power_scale_pu);
    }
    if (op_state == OperatingState::PrepareForIsland) {
        const int ps = idx(OpfVarKind::AuxSlackP, prob.slack_bus);
        add_term("w9.p_gcp", combo_of({{ps, 1.0}}), prob.vars[ps].baseline, w.w9_slack_p,
                 cfg.power_scale_pu);
    }
    // Setpoint-change damping.
    for (int v = 0; v < n; ++v) {
        if (!prob.vars[v].is_decision) continue;
        const bool voltage_like = prob.vars[v].kind == OpfVarKind::IcEdc ||
                                  prob.vars[v].kind == OpfVarKind::FormingVmag ||
                                  prob.vars[v].kind == OpfVarKind::DcSlackVoltage;
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        c[v] = 1.0;
        add_term("reg." + prob.vars[v].name, c, 0.0, w.regularization,
                 voltage_like ? 0.02 : cfg.power_scale_pu);
    }

    // Assemble the dense QP.
    prob.qp.h = Eigen::MatrixXd::Zero(n, n);
    prob.qp.g = Eigen::VectorXd::Zero(n);
    for (const OpfObjectiveTerm& t : prob.terms) {
        const double s = t.weight / (t.scale * t.scale);
        prob.qp.h += 2.0 * s * t.combo * t.combo.transpose();
        prob.qp.g += 2.0 * s * t.baseline * t.combo;
    }
    const int m = static_cast<int>(rb.rows.size());
    prob.qp.a = Eigen::MatrixXd::Zero(m, n);
    prob.qp.lb.resize(m);
    prob.qp.ub.resize(m);
    for (int r = 0; r < m; ++r) {
        for (auto [v, k] : rb.rows[r]) prob.qp.a(r, v) += k;
        prob.qp.lb[r] = rb.lb[r];
        prob.qp.ub[r] = rb.ub[r];
    }
    prob.qp.row_tags = rb.tags;

    (void)prev;
    return prob;
}

OpfSolution solve_opf(const OpfProblem& problem, const QpSettings& settings) {
    OpfSolution sol;
    sol.qp = solve_qp(problem.qp, settings);
    sol.z = sol.qp.x;
    sol.objective = sol.qp.objective;

    if (sol.qp.status == QpStatus::Optimal) {
        const Eigen::VectorXd ax = problem.qp.a * sol.z;
        for (int r = 0; r < problem.qp.num_rows(); ++r) {
            const double margin_lo = ax[r] - problem.qp.lb[r];
            const double margin_hi = problem.qp.ub[r] - ax[r];
            const bool eq = problem.qp.ub[r] - problem.qp.lb[r] < 1e-12;
            if (eq) continue;
            if (margin_lo < 1e-7)
                sol.active.push_back({r, problem.qp.row_tags[r], ax[r], problem.qp.lb[r]});
            else if (margin_hi < 1e-7)
                sol.active.push_back({r, problem.qp.row_tags[r], ax[r], problem.qp.ub[r]});
        }
        for (const OpfObjectiveTerm& t : problem.terms) {
            const double val = t.baseline + t.combo.dot(sol.z);
            sol.objective_breakdown.push_back(
                {t.name, t.weight / (t.scale * t.scale) * val * val});
        }
    }
    return sol;
}

SetpointSet extract_setpoints(const OpfProblem& problem, const OpfSolution& solution,
                              const NetworkModel& model, const OpfConfig& cfg,
                              const SetpointSet& prev) {
    if (solution.qp.status != QpStatus::Optimal)
        throw Error("extract_setpoints: QP not solved to optimality");
    SetpointSet sp = prev;
    const double tol = 1e-5;

    for (std::size_t vi = 0; vi < problem.vars.size(); ++vi) {
        const OpfVar& var = problem.vars[vi];
        if (!var.is_decision) continue;
        const double value = var.baseline + solution.z[static_cast<int>(vi)];
        switch (var.kind) {
            case OpfVarKind::DeviceP: {
                const OpfDevice& dev = cfg.devices[var.device];
                if (value < dev.p_min_pu - tol || value > dev.p_max_pu + tol)
                    throw Error("extracted setpoint out of bounds: " + var.name);
                sp.p[var.bus] = value;
                break;
            }
            case OpfVarKind::DeviceQ: {
                const OpfDevice& dev = cfg.devices[var.device];
                if (value < dev.q_min_pu - tol || value > dev.q_max_pu + tol)
                    throw Error("extracted setpoint out of bounds: " + var.name);
                sp.q[var.bus] = value;
                break;
            }
            case OpfVarKind::IcP: {
                const OpfIcLimits& lim = cfg.ic_limits[var.link];
                if (std::abs(value) > lim.p_max_pu + tol)
                    throw Error("extracted setpoint out of bounds: " + var.name);
                sp.p[var.bus] = value;
                break;
            }
            case OpfVarKind::IcQ: {
                const OpfIcLimits& lim = cfg.ic_limits[var.link];
                if (std::abs(value) > lim.q_max_pu + tol)
                    throw Error("extracted setpoint out of bounds: " + var.name);
                sp.q[var.bus] = value;
                break;
            }
            case OpfVarKind::IcEdc:
            case OpfVarKind::FormingVmag:
            case OpfVarKind::DcSlackVoltage: {
                const Bus& b = model.bus(var.bus);
                if (value < model.vmin_pu(b) - tol || value > model.vmax_pu(b) + tol)
                    throw Error("extracted setpoint out of bounds: " + var.name);
                sp.v_mag[var.bus] = value;
                break;
            }
            default:
                break;
        }
    }
    return sp;
}

} // namespace hybridgrid
