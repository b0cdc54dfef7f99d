#include "hybridgrid/sim.hpp"

#include <chrono>
#include <cmath>

#include "hybridgrid/log.hpp"
#include "hybridgrid/sensitivity.hpp"

namespace hybridgrid {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

} // namespace

Simulator::Simulator(const Scenario& scenario, const SimOptions& options)
    : scenario_(scenario), options_(options), machine_(scenario.criteria), pi_(scenario.pi) {
    if (options_.seed_override) scenario_.seed = *options_.seed_override;
    rng_.seed(scenario_.seed);

    for (const Bus& b : scenario_.network.buses)
        if (b.role == BusRole::AcSlack) slack_bus_ = b.id;
    if (slack_bus_ < 0) throw Error("simulator: scenario network needs an AC slack (GCP)");

    setpoints_ = SetpointSet::zeros(scenario_.network.buses.size());
    setpoints_.v_mag[slack_bus_] = 1.0;

    // Initial IC setpoints.
    for (const ScenarioIc& ic : scenario_.ic) {
        const int li = scenario_.link_index(ic.link_name);
        const IcLink& link = scenario_.network.ic_links[li];
        const double s = scenario_.network.base.power_w;
        if (link.mode == IcMode::FollowingPQ) {
            setpoints_.p[link.ac_bus] = ic.p0_w / s;
            setpoints_.q[link.ac_bus] = ic.q0_var / s;
        } else if (link.mode == IcMode::FollowingVdcQ) {
            setpoints_.q[link.ac_bus] = ic.q0_var / s;
            setpoints_.v_mag[link.dc_bus] = ic.e_dc0_v / scenario_.network.base.voltage_dc_v;
        }
    }

    // Storage bookkeeping and initial dispatch values.
    for (std::size_t d = 0; d < scenario_.devices.size(); ++d) {
        const ScenarioDevice& dev = scenario_.devices[d];
        if (dev.kind == DeviceKind::Storage) {
            storage_devices_.push_back(static_cast<int>(d));
            plant_.soc.push_back(dev.soc0);
            out_.storage_names.push_back(dev.name);
            setpoints_.p[dev.bus] = dev.p0_w / scenario_.network.base.power_w;
        }
    }

    plant_.grid = GridState::flat(scenario_.network.n_ac(), scenario_.network.n_dc(), 0.9);
    rebuild_model();

    out_.scenario_name = scenario_.name;
    out_.tick_s = scenario_.tick_s;
    for (const Bus& b : scenario_.network.buses) out_.bus_names.push_back(b.name);
    for (const Branch& br : scenario_.network.branches) out_.branch_names.push_back(br.name);
    for (const IcLink& l : scenario_.network.ic_links) out_.link_names.push_back(l.name);
}

void Simulator::rebuild_model() {
    NetworkModel m = scenario_.network;
    if (plant_.forming_active) {
        IcLink& link = m.ic_links[scenario_.forming_link];
        link.mode = IcMode::Forming;
        m.buses[link.ac_bus].role = BusRole::IcAcForming;
        m.buses[link.dc_bus].role = BusRole::IcDcForming;
    }
    if (plant_.ess_voltage_mode && scenario_.island_slack_bus >= 0)
        m.buses[scenario_.island_slack_bus].role = BusRole::DcV;
    if (!plant_.breaker_closed) {
        m.buses[slack_bus_].role = BusRole::AcPQ;
        setpoints_.p[slack_bus_] = 0.0;
        setpoints_.q[slack_bus_] = 0.0;
    }
    model_ = std::move(m);
    adm_ = build_admittance(model_);
    prev_valid_ = true; // warm starts remain meaningful across role changes
}

void Simulator::apply_profiles(std::size_t tick) {
    const double s = scenario_.network.base.power_w;
    for (std::size_t d = 0; d < scenario_.devices.size(); ++d) {
        const ScenarioDevice& dev = scenario_.devices[d];
        // A bus in voltage mode has no power setpoint to drive.
        if (plant_.ess_voltage_mode && dev.bus == scenario_.island_slack_bus) continue;
        switch (dev.kind) {
            case DeviceKind::Load:
                if (!dev.profile_p.empty())
                    setpoints_.p[dev.bus] = scenario_.profile_value(dev.profile_p, tick) / s;
                setpoints_.q[dev.bus] =
                    dev.profile_q.empty() ? 0.0 : scenario_.profile_value(dev.profile_q, tick) / s;
                break;
            case DeviceKind::Pv: {
                const double avail =
                    dev.profile_p.empty() ? dev.p_max_w / s
                                          : scenario_.profile_value(dev.profile_p, tick) / s;
                if (!dev.controllable) {
                    setpoints_.p[dev.bus] = avail;
                } else {
                    setpoints_.p[dev.bus] = std::min(setpoints_.p[dev.bus], avail);
                    setpoints_.p[dev.bus] = std::max(setpoints_.p[dev.bus], 0.0);
                }
                break;
            }
            case DeviceKind::Storage:
                break; // dispatch-driven; nothing profile-bound
        }
    }
}

const PlantState& Simulator::plant_step() {
    SolveOptions opt;
    opt.tolerance = options_.lf_tolerance;
    opt.max_iterations = 60;
    const LoadflowResult res =
        solve(model_, setpoints_, opt, prev_valid_ ? &plant_.grid : nullptr);
    if (!res.converged) {
        std::string trace;
        for (double r : res.trace) trace += std::to_string(r) + " ";
        throw Error("load flow divergence at t=" + std::to_string(plant_.time_s) +
                    " s (residual trace: " + trace + ")");
    }
    plant_.grid = res.state;

    // SoC integration (zero-order hold over the tick).
    for (std::size_t si = 0; si < storage_devices_.size(); ++si) {
        const ScenarioDevice& dev = scenario_.devices[storage_devices_[si]];
        const double p_pu = bus_injection(model_, adm_, plant_.grid, dev.bus).real();
        const double e_tot_pu_h = dev.energy_wh / scenario_.network.base.power_w;
        plant_.soc[si] -= dev.eta * p_pu * (scenario_.tick_s / 3600.0) / e_tot_pu_h;
    }

    // Electrical angle bookkeeping in the common 50 Hz frame.
    const double down_lf = plant_.grid.ac_angle_deg(slack_bus_);
    if (plant_.breaker_closed) {
        plant_.angle_up_abs_deg = down_lf + plant_.angle_shift_island_deg;
    } else {
        plant_.angle_up_abs_deg += 360.0 * scenario_.upstream_offset_hz * scenario_.tick_s;
        plant_.angle_shift_island_deg += 360.0 * plant_.pi_offset_hz * scenario_.tick_s;
    }
    return plant_;
}

BreakerPhasor Simulator::upstream_phasor() const {
    BreakerPhasor p;
    p.magnitude_v = plant_.breaker_closed
                        ? plant_.grid.ac_mag(slack_bus_) * scenario_.network.base.voltage_ac_v
                        : scenario_.network.base.voltage_ac_v;
    p.angle_deg = plant_.angle_up_abs_deg;
    p.frequency_hz = scenario_.network.base.frequency_hz + scenario_.upstream_offset_hz;
    return p;
}

BreakerPhasor Simulator::downstream_phasor() const {
    BreakerPhasor p;
    p.magnitude_v = plant_.grid.ac_mag(slack_bus_) * scenario_.network.base.voltage_ac_v;
    p.angle_deg = plant_.grid.ac_angle_deg(slack_bus_) + plant_.angle_shift_island_deg;
    p.frequency_hz = scenario_.network.base.frequency_hz +
                     (plant_.breaker_closed ? scenario_.upstream_offset_hz : plant_.pi_offset_hz);
    return p;
}

void Simulator::execute(TransitionCommand cmd) {
    const IcLink& link = scenario_.network.ic_links[scenario_.forming_link];
    const int l = link.ac_bus;
    const int k = link.dc_bus;
    log_info("executing command: " + to_string(cmd) + " at t=" + std::to_string(plant_.time_s));

    switch (cmd) {
        case TransitionCommand::EssToVoltageMode: {
            const int ess = scenario_.island_slack_bus;
            setpoints_.v_mag[ess] = plant_.grid.e_dc[model_.dc_local(ess)];
            plant_.ess_voltage_mode = true;
            break;
        }
        case TransitionCommand::IcToForming: {
            setpoints_.v_mag[l] = plant_.grid.ac_mag(l);
            setpoints_.v_ang_deg[l] = plant_.grid.ac_angle_deg(l);
            plant_.forming_active = true;
            break;
        }
        case TransitionCommand::OpenBreaker: {
            plant_.angle_up_abs_deg =
                plant_.grid.ac_angle_deg(slack_bus_) + plant_.angle_shift_island_deg;
            plant_.breaker_closed = false;
            break;
        }
        case TransitionCommand::CloseBreaker: {
            setpoints_.v_mag[slack_bus_] = 1.0;
            setpoints_.v_ang_deg[slack_bus_] =
                wrap_angle_deg(plant_.angle_up_abs_deg - plant_.angle_shift_island_deg);
            plant_.breaker_closed = true;
            plant_.pi_offset_hz = 0.0;
            pi_.reset();
            break;
        }
        case TransitionCommand::IcToFollowing: {
            setpoints_.v_mag[k] = plant_.grid.e_dc[model_.dc_local(k)];
            setpoints_.q[l] = bus_injection(model_, adm_, plant_.grid, l).imag();
            plant_.forming_active = false;
            break;
        }
        case TransitionCommand::EssToPowerMode: {
            const int ess = scenario_.island_slack_bus;
            setpoints_.p[ess] = bus_injection(model_, adm_, plant_.grid, ess).real();
            plant_.ess_voltage_mode = false;
            break;
        }
    }
    rebuild_model();
}

OpfConfig Simulator::opf_config(std::size_t tick, bool islanded) const {
    OpfConfig cfg;
    cfg.weights = scenario_.weights;
    cfg.t_s = scenario_.control_period_s;
    cfg.e_dc_ref_pu = scenario_.e_dc_ref_pu;
    cfg.current_margin = scenario_.current_margin;
    cfg.transition_link = scenario_.forming_link;
    cfg.island_slack_bus = scenario_.island_slack_bus;
    cfg.control_forming_vmag = scenario_.control_forming_vmag;

    const double s = scenario_.network.base.power_w;
    for (std::size_t d = 0; d < scenario_.devices.size(); ++d) {
        const ScenarioDevice& dev = scenario_.devices[d];
        if (!dev.controllable) continue;
        OpfDevice od;
        od.name = dev.name;
        od.bus = dev.bus;
        od.control_p = true;
        od.control_q = dev.q_max_var > 0.0;
        od.q_min_pu = -dev.q_max_var / s;
        od.q_max_pu = dev.q_max_var / s;
        if (dev.kind == DeviceKind::Pv) {
            od.p_min_pu = 0.0;
            od.p_max_pu = dev.profile_p.empty() ? dev.p_max_w / s
                                                : scenario_.profile_value(dev.profile_p, tick) / s;
        } else {
            od.p_min_pu = -dev.p_max_w / s;
            od.p_max_pu = dev.p_max_w / s;
        }
        if (dev.kind == DeviceKind::Storage) {
            od.is_storage = true;
            for (std::size_t si = 0; si < storage_devices_.size(); ++si)
                if (storage_devices_[si] == static_cast<int>(d)) od.soc = plant_.soc[si];
            od.soc_min = dev.soc_min;
            od.soc_max = dev.soc_max;
            od.soc_ref = dev.soc_ref;
            od.eta = dev.eta;
            od.e_tot_pu_h = dev.energy_wh / s;
        }
        cfg.devices.push_back(od);
    }

    cfg.ic_limits.assign(scenario_.network.ic_links.size(), OpfIcLimits{});
    for (std::size_t li = 0; li < scenario_.network.ic_links.size(); ++li) {
        cfg.ic_limits[li].p_max_pu = scenario_.network.ic_links[li].rating_w / s;
        cfg.ic_limits[li].q_max_pu = scenario_.network.ic_links[li].rating_w / s;
    }
    for (const ScenarioIc& ic : scenario_.ic) {
        const int li = scenario_.link_index(ic.link_name);
        cfg.ic_limits[li].q_max_pu = ic.q_max_var / s;
        cfg.ic_limits[li].ramp_pu = ic.ramp_w_per_step / s;
    }
    (void)islanded;
    return cfg;
}

void Simulator::dispatch(std::size_t tick, TickRecord& rec) {
    const OperatingState op = machine_.state();
    const bool islanded = op == OperatingState::Island || op == OperatingState::Resynchronisation;

    TimingRecord timing;
    timing.t = plant_.time_s;
    const auto t0 = std::chrono::steady_clock::now();
    SensitivityMatrices scs;
    try {
        scs = compute_sensitivities(model_, adm_, plant_.grid, LossDerivativeMode::Full);
    } catch (const Error& e) {
        log_warn(std::string("sensitivity computation failed: ") + e.what());
        return;
    }
    timing.sc_ms = ms_since(t0);

    const auto t1 = std::chrono::steady_clock::now();
    OpfConfig cfg = opf_config(tick, islanded);
    OpfProblem problem;
    try {
        problem = build_opf(model_, plant_.grid, scs, op, cfg, setpoints_);
    } catch (const Error& e) {
        log_warn(std::string("opf build failed: ") + e.what());
        return;
    }
    timing.build_ms = ms_since(t1);

    const auto t2 = std::chrono::steady_clock::now();
    const OpfSolution sol = solve_opf(problem);
    timing.solve_ms = ms_since(t2);
    timing.kkt = sol.qp.kkt.max();

    ++out_.opf_count;
    out_.timing.push_back(timing);
    if (sol.qp.status != QpStatus::Optimal) {
        ++out_.opf_infeasible;
        log_warn("opf infeasible/unsolved at t=" + std::to_string(plant_.time_s) +
                 (sol.qp.certificate_tag.empty() ? "" : " (" + sol.qp.certificate_tag + ")"));
        return;
    }

    setpoints_ = extract_setpoints(problem, sol, model_, cfg, setpoints_);
    rec.opf_ran = true;
    rec.opf_kkt = sol.qp.kkt.max();
    out_.opf_kkt_max = std::max(out_.opf_kkt_max, rec.opf_kkt);
    {
        double margin = 1e9;
        const Eigen::VectorXd ax = problem.qp.a * sol.z;
        for (int r = 0; r < problem.qp.num_rows(); ++r)
            if (problem.qp.row_tags[r].rfind("opf_ilim", 0) == 0)
                margin = std::min(margin, problem.qp.ub[r] - ax[r]);
        rec.opf_pred_imargin_pu = margin;
    }

    // Prepare-for-island look-ahead: solve the island topology around the
    // current state to verify the precomputed island point stays close.
    if (op == OperatingState::PrepareForIsland) {
        try {
            NetworkModel island =
                make_islanded(model_, scenario_.forming_link, scenario_.island_slack_bus);
            SetpointSet spv = setpoints_;
            spv.p[slack_bus_] = 0.0;
            spv.q[slack_bus_] = 0.0;
            const IcLink& link = scenario_.network.ic_links[scenario_.forming_link];
            spv.v_mag[link.ac_bus] = plant_.grid.ac_mag(link.ac_bus);
            spv.v_ang_deg[link.ac_bus] = plant_.grid.ac_angle_deg(link.ac_bus);
            spv.v_mag[scenario_.island_slack_bus] =
                plant_.grid.e_dc[model_.dc_local(scenario_.island_slack_bus)];
            SolveOptions opt;
            opt.tolerance = options_.lf_tolerance;
            const LoadflowResult look = solve(island, spv, opt, &plant_.grid);
            if (look.converged) {
                double gap = 0.0;
                for (int i = 0; i < model_.n_ac(); ++i)
                    gap = std::max(gap, std::abs(std::abs(look.state.e_ac[i]) -
                                                 std::abs(plant_.grid.e_ac[i])));
                for (int i = 0; i < model_.n_dc(); ++i)
                    gap = std::max(gap, std::abs(look.state.e_dc[i] - plant_.grid.e_dc[i]));
                out_.lookahead_gap_pu = gap;
            }
        } catch (const Error& e) {
            log_debug(std::string("island look-ahead not solvable yet: ") + e.what());
        }
    }
}

void Simulator::record_tick(std::size_t tick, TickRecord& rec) {
    const double s = scenario_.network.base.power_w;
    rec.t = plant_.time_s;
    rec.op_state = machine_.state();
    rec.breaker_closed = plant_.breaker_closed;

    const Complex s_gcp =
        plant_.breaker_closed ? bus_injection(model_, adm_, plant_.grid, slack_bus_) : Complex(0, 0);
    rec.p_gcp_w = s_gcp.real() * s;
    rec.q_gcp_var = s_gcp.imag() * s;

    for (const IcLink& link : model_.ic_links) {
        const Complex inj = bus_injection(model_, adm_, plant_.grid, link.ac_bus);
        rec.ic_p_w.push_back(inj.real() * s);
        rec.ic_q_var.push_back(inj.imag() * s);
    }

    double vmargin = 1e9, imargin = 1e9;
    for (const Bus& b : model_.buses) {
        const double v_pu = b.kind == BusKind::Ac ? plant_.grid.ac_mag(b.id)
                                                  : plant_.grid.e_dc[model_.dc_local(b.id)];
        const double v_base = b.kind == BusKind::Ac ? scenario_.network.base.voltage_ac_v
                                                    : scenario_.network.base.voltage_dc_v;
        rec.v_bus_v.push_back(v_pu * v_base);
        vmargin = std::min(vmargin, std::min(v_pu - model_.vmin_pu(b), model_.vmax_pu(b) - v_pu));

        const double nominal = b.kind == BusKind::Ac ? 1.0 : scenario_.e_dc_ref_pu;
        const double dev = std::abs(v_pu - nominal) / nominal;
        if (b.kind == BusKind::Ac)
            out_.max_ac_dev_frac = std::max(out_.max_ac_dev_frac, dev);
        else
            out_.max_dc_dev_frac = std::max(out_.max_dc_dev_frac, dev);
    }
    for (std::size_t bi = 0; bi < model_.branches.size(); ++bi) {
        const Branch& br = model_.branches[bi];
        const double i_pu = std::abs(branch_current_from(model_, plant_.grid, br));
        const double i_base = model_.branch_kind(br) == BusKind::Ac
                                  ? scenario_.network.base.current_ac_a()
                                  : scenario_.network.base.current_dc_a();
        rec.i_branch_a.push_back(i_pu * i_base);
        if (br.ampacity_a > 0.0) {
            const double ratio = i_pu / model_.ampacity_pu(br);
            out_.max_ampacity_ratio = std::max(out_.max_ampacity_ratio, ratio);
            if (ratio > 1.0) ++out_.ampacity_violations;
            imargin = std::min(imargin, model_.ampacity_pu(br) - i_pu);
        }
    }
    rec.vmargin_pu = vmargin;
    rec.imargin_pu = imargin;

    const BreakerPhasor up = upstream_phasor();
    const BreakerPhasor down = downstream_phasor();
    rec.angle_up_deg = up.angle_deg;
    rec.angle_down_deg = down.angle_deg;
    rec.dangle_deg = wrap_angle_deg(up.angle_deg - down.angle_deg);
    rec.freq_up_hz = up.frequency_hz;
    rec.freq_down_hz = down.frequency_hz;
    if (!plant_.breaker_closed)
        out_.max_dangle_deg = std::max(out_.max_dangle_deg, std::abs(rec.dangle_deg));

    rec.soc = plant_.soc;
    for (std::size_t si = 0; si < storage_devices_.size(); ++si) {
        const ScenarioDevice& dev = scenario_.devices[storage_devices_[si]];
        rec.p_storage_w.push_back(bus_injection(model_, adm_, plant_.grid, dev.bus).real() * s);
    }

    // Voltage step between consecutive ticks, as a fraction of nominal.
    std::vector<double> v_pu(model_.buses.size());
    for (const Bus& b : model_.buses)
        v_pu[b.id] = b.kind == BusKind::Ac ? plant_.grid.ac_mag(b.id)
                                           : plant_.grid.e_dc[model_.dc_local(b.id)];
    if (!prev_v_pu_.empty()) {
        for (const Bus& b : model_.buses) {
            const double nominal = b.kind == BusKind::Ac ? 1.0 : scenario_.e_dc_ref_pu;
            const double step = std::abs(v_pu[b.id] - prev_v_pu_[b.id]) / nominal;
            if (b.kind == BusKind::Ac)
                out_.max_ac_step_frac = std::max(out_.max_ac_step_frac, step);
            else
                out_.max_dc_step_frac = std::max(out_.max_dc_step_frac, step);
        }
    }
    prev_v_pu_ = v_pu;
    (void)tick;
}

SimulationOutput Simulator::run() {
    const std::size_t ticks = scenario_.tick_count();
    const int control_every =
        static_cast<int>(std::llround(scenario_.control_period_s / scenario_.tick_s));
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t tick = 0; tick < ticks; ++tick) {
        plant_.time_s = tick * scenario_.tick_s;

        // Commands due on the simulation clock.
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->first <= plant_.time_s + 1e-9) {
                execute(it->second);
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }

        apply_profiles(tick);
        plant_step();

        TickRecord rec;

        // Measurements for the control layer.
        TransitionMeasurements meas;
        const double s = scenario_.network.base.power_w;
        const Complex s_gcp = plant_.breaker_closed
                                  ? bus_injection(model_, adm_, plant_.grid, slack_bus_)
                                  : Complex(0, 0);
        const IcLink& flink = scenario_.network.ic_links[scenario_.forming_link];
        const Complex s_form = bus_injection(model_, adm_, plant_.grid, flink.ac_bus);
        meas.p_gcp_w = s_gcp.real() * s;
        meas.q_gcp_var = s_gcp.imag() * s;
        meas.p_forming_w = s_form.real() * s;
        meas.q_forming_var = s_form.imag() * s;
        meas.upstream = upstream_phasor();
        meas.downstream = downstream_phasor();
        if (scenario_.noise.enabled) {
            meas.p_gcp_w += gauss(rng_) * scenario_.noise.sigma_p_w;
            meas.q_gcp_var += gauss(rng_) * scenario_.noise.sigma_p_w;
            meas.p_forming_w += gauss(rng_) * scenario_.noise.sigma_p_w;
            meas.q_forming_var += gauss(rng_) * scenario_.noise.sigma_p_w;
            meas.upstream.magnitude_v += gauss(rng_) * scenario_.noise.sigma_v_v;
            meas.downstream.magnitude_v += gauss(rng_) * scenario_.noise.sigma_v_v;
        }

        // External triggers due this tick.
        ControlSignals signals;
        for (const ScenarioEvent& ev : scenario_.events) {
            if (std::abs(ev.t_s - plant_.time_s) < scenario_.tick_s / 2.0) {
                if (ev.type == EventType::IslandTrigger) signals.island_trigger = true;
                if (ev.type == EventType::RestoreTrigger) signals.restore_trigger = true;
                if (ev.type == EventType::Cancel) signals.cancel = true;
            }
        }

        const OperatingState before = machine_.state();
        const auto seq = machine_.step(signals, meas);
        if (machine_.state() != before) {
            out_.transitions.push_back({plant_.time_s, machine_.state()});
            if (before == OperatingState::PrepareForIsland &&
                machine_.state() == OperatingState::Island) {
                out_.handoff_t = plant_.time_s;
                out_.handoff_p_gcp_w = meas.p_gcp_w;
                out_.handoff_q_gcp_var = meas.q_gcp_var;
                out_.handoff_p_forming_w = meas.p_forming_w;
                out_.handoff_q_forming_var = meas.q_forming_var;
            }
            if (machine_.state() == OperatingState::Resynchronisation)
                out_.resync_start_t = plant_.time_s;
            if (before == OperatingState::Resynchronisation &&
                machine_.state() == OperatingState::GridConnected) {
                out_.dangle_at_close_deg = wrap_angle_deg(meas.upstream.angle_deg -
                                                          meas.downstream.angle_deg);
                out_.dfreq_at_close_hz =
                    meas.upstream.frequency_hz - meas.downstream.frequency_hz;
            }
        }
        if (seq) {
            for (const TimedCommand& cmd : *seq)
                pending_.push_back({plant_.time_s + cmd.delay_s, cmd.command});
        }

        if (log_level() >= LogLevel::Debug) {
            std::string cmds;
            if (seq)
                for (const TimedCommand& c : *seq) cmds += " +" + to_string(c.command);
            log_debug("tick t=" + std::to_string(plant_.time_s) + " state=" +
                      to_string(machine_.state()) + " p_gcp=" + std::to_string(meas.p_gcp_w) +
                      " q_gcp=" + std::to_string(meas.q_gcp_var) + " p_form=" +
                      std::to_string(meas.p_forming_w) + " q_form=" +
                      std::to_string(meas.q_forming_var) + " dangle=" +
                      std::to_string(wrap_angle_deg(meas.upstream.angle_deg -
                                                    meas.downstream.angle_deg)) +
                      cmds);
        }

        // PI angle tracking while resynchronising.
        if (machine_.state() == OperatingState::Resynchronisation && !plant_.breaker_closed) {
            const double err = wrap_angle_deg(meas.upstream.angle_deg - meas.downstream.angle_deg);
            plant_.pi_offset_hz = angle_pi_step(err, pi_, pi_.update_period_s);
        }
        if (!out_.resync_locked_t && (machine_.state() == OperatingState::Resynchronisation ||
                                      before == OperatingState::Resynchronisation)) {
            const double derr = wrap_angle_deg(meas.upstream.angle_deg - meas.downstream.angle_deg);
            const double dfreq = meas.upstream.frequency_hz - meas.downstream.frequency_hz;
            if (std::abs(derr) <= scenario_.criteria.synchro.angle_deg &&
                std::abs(dfreq) <= scenario_.criteria.synchro.frequency_hz)
                out_.resync_locked_t = plant_.time_s;
        }

        // OPF dispatch on the control period, outside transition windows.
        if (options_.control_enabled && tick % control_every == 0 && pending_.empty())
            dispatch(tick, rec);

        record_tick(tick, rec);
        out_.records.push_back(std::move(rec));
    }

    // SoC aggregates.
    for (std::size_t si = 0; si < storage_devices_.size(); ++si) {
        const ScenarioDevice& dev = scenario_.devices[storage_devices_[si]];
        double mn = 1.0, mx = 0.0, dev_out = 0.0;
        for (const TickRecord& r : out_.records) {
            mn = std::min(mn, r.soc[si]);
            mx = std::max(mx, r.soc[si]);
            bool near_transition = false;
            for (const auto& [tt, st] : out_.transitions)
                if (std::abs(r.t - tt) <= options_.transition_window_s) near_transition = true;
            if (!near_transition)
                dev_out = std::max(dev_out, std::abs(r.soc[si] - dev.soc_ref));
        }
        out_.soc_minmax.push_back({dev.name, {mn, mx}});
        out_.soc_dev_outside_transitions.push_back({dev.name, dev_out});
    }
    return std::move(out_);
}

SimulationOutput run_simulation(const Scenario& scenario, const SimOptions& options) {
    Simulator sim(scenario, options);
    return sim.run();
}

} // namespace hybridgrid
