// Command-line front end: model validation, one-shot load flow and
// sensitivity computation, one-shot OPF, scenario simulation and report
// emission. Exit codes: 0 success, 1 domain error, 2 usage error.

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include <hybridgrid/io_util.hpp>
#include <hybridgrid/log.hpp>
#include <hybridgrid/network_io.hpp>
#include <hybridgrid/opf.hpp>
#include <hybridgrid/report.hpp>
#include <hybridgrid/scenario.hpp>
#include <hybridgrid/sensitivity.hpp>
#include <hybridgrid/sim.hpp>

using namespace hybridgrid;
using nlohmann::json;

namespace {

int cmd_validate(const std::string& network_path) {
    const NetworkModel model = load_network(network_path);
    const std::vector<Violation> violations = validate(model);
    if (violations.empty()) {
        std::cout << "ok: " << model.buses.size() << " buses (" << model.n_ac() << " AC, "
                  << model.n_dc() << " DC), " << model.branches.size() << " branches, "
                  << model.ic_links.size() << " IC links\n";
        return 0;
    }
    for (const Violation& v : violations)
        std::cout << v.code << ": " << v.message << "\n";
    return 1;
}

int cmd_loadflow(const std::string& network_path, const std::string& setpoints_path,
                 const std::string& out_path, double tol, int max_iter) {
    const NetworkModel model = load_network(network_path);
    const SetpointSet sp = load_setpoints(setpoints_path, model);
    SolveOptions opt;
    opt.tolerance = tol;
    opt.max_iterations = max_iter;
    const LoadflowResult result = solve(model, sp, opt);
    const std::string text = state_to_json(model, result.state, &result);
    if (out_path.empty())
        std::cout << text;
    else
        atomic_write_file(out_path, text);
    std::cout << (result.converged ? "converged" : "NOT converged") << " in "
              << result.iterations << " iterations, residual " << result.residual_norm
              << " p.u.\n";
    return result.converged ? 0 : 1;
}

int cmd_sc(const std::string& network_path, const std::string& state_path,
           const std::string& setpoints_path, const std::string& out_path, bool check_fd,
           double fd_tol) {
    const NetworkModel model = load_network(network_path);

    SetpointSet sp = SetpointSet::zeros(model.buses.size());
    GridState state;
    if (!setpoints_path.empty()) {
        sp = load_setpoints(setpoints_path, model);
        SolveOptions opt;
        opt.tolerance = 1e-12;
        const LoadflowResult lf = solve(model, sp, opt);
        if (!lf.converged) throw Error("sc: load flow did not converge");
        state = lf.state;
    } else if (!state_path.empty()) {
        state = load_state(state_path, model);
    } else {
        throw Error("sc: provide --setpoints or --state");
    }

    const AdmittanceMatrices adm = build_admittance(model);
    const SensitivityMatrices scs = compute_sensitivities(model, adm, state);

    json j;
    j["controls"] = json::array();
    for (const ControlVariable& x : scs.controls) j["controls"].push_back(to_string(x));
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (int r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    j["de_dx"] = matrix(scs.de_dx);
    j["di_dx"] = matrix(scs.di_dx);
    j["dploss_dx"] = matrix(scs.dploss_dx);
    j["dqloss_dx"] = matrix(scs.dqloss_dx);
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        atomic_write_file(out_path, j.dump(2) + "\n");

    if (check_fd) {
        if (setpoints_path.empty())
            throw Error("sc --check-fd needs --setpoints (the check re-solves the load flow)");
        const FdCheckResult fd = fd_check(model, sp);
        std::cout << "fd check: voltage " << fd.voltage << ", current " << fd.current
                  << ", ploss " << fd.ploss << ", qloss " << fd.qloss << " (tolerance " << fd_tol
                  << ")\n";
        return fd.max() < fd_tol ? 0 : 1;
    }
    return 0;
}

OpfConfig parse_opf_config(const json& j, const NetworkModel& model) {
    OpfConfig cfg;
    const double s = model.base.power_w;
    if (j.contains("weights")) {
        const json& jw = j["weights"];
        cfg.weights.w1_q_gcp = jw.value("w1", 1.0);
        cfg.weights.w2_losses = jw.value("w2", 1.0);
        cfg.weights.w3_ic_p = jw.value("w3", 1.0);
        cfg.weights.w4_ic_q = jw.value("w4", 1.0);
        cfg.weights.w5_dc_voltage = jw.value("w5", 1.0);
        cfg.weights.w6_soc = jw.value("w6", 1.0);
        cfg.weights.w7_forming_p = jw.value("w7", 1.0);
        cfg.weights.w8_forming_q = jw.value("w8", 1.0);
        cfg.weights.w9_slack_p = jw.value("w9", 1.0);
        cfg.weights.regularization = jw.value("regularization", 1e-4);
    }
    for (const json& jd : j.value("devices", json::array())) {
        OpfDevice dev;
        dev.name = jd.value("name", "dev");
        if (jd["bus"].is_string()) {
            const std::string name = jd["bus"].get<std::string>();
            dev.bus = -1;
            for (const Bus& b : model.buses)
                if (b.name == name) dev.bus = b.id;
            if (dev.bus < 0) throw Error("opf config: unknown bus " + name);
        } else {
            dev.bus = jd["bus"].get<int>();
        }
        dev.control_p = jd.value("control_p", true);
        dev.control_q = jd.value("control_q", false);
        dev.p_min_pu = jd.value("p_min_w", 0.0) / s;
        dev.p_max_pu = jd.value("p_max_w", 0.0) / s;
        dev.q_min_pu = jd.value("q_min_var", 0.0) / s;
        dev.q_max_pu = jd.value("q_max_var", 0.0) / s;
        dev.is_storage = jd.value("storage", false);
        dev.soc = jd.value("soc", 0.5);
        dev.soc_min = jd.value("soc_min", 0.1);
        dev.soc_max = jd.value("soc_max", 0.9);
        dev.soc_ref = jd.value("soc_ref", 0.5);
        dev.eta = jd.value("eta", 1.0);
        dev.e_tot_pu_h = jd.value("energy_wh", 0.0) / s;
        cfg.devices.push_back(dev);
    }
    cfg.ic_limits.assign(model.ic_links.size(), OpfIcLimits{});
    for (std::size_t li = 0; li < model.ic_links.size(); ++li)
        cfg.ic_limits[li].p_max_pu = cfg.ic_limits[li].q_max_pu =
            model.ic_links[li].rating_w / s;
    if (j.contains("ic")) {
        for (const json& ji : j["ic"]) {
            const std::string name = ji.at("link").get<std::string>();
            int li = -1;
            for (std::size_t i = 0; i < model.ic_links.size(); ++i)
                if (model.ic_links[i].name == name) li = static_cast<int>(i);
            if (li < 0) throw Error("opf config: unknown link " + name);
            if (ji.contains("p_max_w")) cfg.ic_limits[li].p_max_pu = ji["p_max_w"].get<double>() / s;
            if (ji.contains("q_max_var"))
                cfg.ic_limits[li].q_max_pu = ji["q_max_var"].get<double>() / s;
            if (ji.contains("ramp_w_per_step"))
                cfg.ic_limits[li].ramp_pu = ji["ramp_w_per_step"].get<double>() / s;
        }
    }
    cfg.transition_link = j.value("transition_link", 0);
    cfg.island_slack_bus = j.value("island_slack_bus", -1);
    cfg.t_s = j.value("t_s", 1.0);
    cfg.e_dc_ref_pu = j.value("e_dc_ref_v", 720.0) / model.base.voltage_dc_v;
    cfg.current_margin = j.value("current_margin", 0.97);
    return cfg;
}

OperatingState op_state_from_string(const std::string& s) {
    if (s == "grid_connected") return OperatingState::GridConnected;
    if (s == "prepare_for_island") return OperatingState::PrepareForIsland;
    if (s == "island") return OperatingState::Island;
    if (s == "resynchronisation") return OperatingState::Resynchronisation;
    throw Error("unknown operating state: " + s);
}

int cmd_opf(const std::string& network_path, const std::string& setpoints_path,
            const std::string& config_path, const std::string& op_state_name,
            const std::string& out_path) {
    const NetworkModel model = load_network(network_path);
    const SetpointSet sp = load_setpoints(setpoints_path, model);
    SolveOptions opt;
    opt.tolerance = 1e-12;
    const LoadflowResult lf = solve(model, sp, opt);
    if (!lf.converged) throw Error("opf: load flow did not converge");

    json jc = json::parse(read_file(config_path), nullptr, false);
    if (jc.is_discarded()) throw Error("opf: invalid config JSON");
    const OpfConfig cfg = parse_opf_config(jc, model);

    const AdmittanceMatrices adm = build_admittance(model);
    const SensitivityMatrices scs = compute_sensitivities(model, adm, lf.state);
    const OpfProblem problem =
        build_opf(model, lf.state, scs, op_state_from_string(op_state_name), cfg, sp);
    const OpfSolution sol = solve_opf(problem);
    if (sol.qp.status != QpStatus::Optimal) {
        std::cout << "opf: not solved ("
                  << (sol.qp.status == QpStatus::PrimalInfeasible ? "infeasible" : "max iterations")
                  << (sol.qp.certificate_tag.empty() ? "" : ", most violated: " + sol.qp.certificate_tag)
                  << ")\n";
        return 1;
    }

    extract_setpoints(problem, sol, model, cfg, sp); // bound re-check
    json j;
    j["objective"] = sol.objective;
    j["kkt"] = {{"stationarity", sol.qp.kkt.stationarity},
                {"primal", sol.qp.kkt.primal},
                {"complementarity", sol.qp.kkt.complementarity}};
    j["breakdown"] = json::object();
    for (const auto& [name, value] : sol.objective_breakdown) j["breakdown"][name] = value;
    j["active_constraints"] = json::array();
    for (const OpfActiveConstraint& a : sol.active)
        j["active_constraints"].push_back(
            {{"row", a.tag}, {"value", a.value}, {"bound", a.bound}});
    j["setpoints"] = json::array();
    for (std::size_t vi = 0; vi < problem.vars.size(); ++vi) {
        const OpfVar& v = problem.vars[vi];
        if (!v.is_decision) continue;
        j["setpoints"].push_back({{"name", v.name},
                                  {"delta", sol.z[static_cast<int>(vi)]},
                                  {"value_pu", v.baseline + sol.z[static_cast<int>(vi)]}});
    }
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        atomic_write_file(out_path, j.dump(2) + "\n");
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_path,
                 std::string summary_path, const std::string& timing_path,
                 const std::string& timing_summary_path, bool no_control,
                 std::optional<std::uint64_t> seed) {
    const Scenario scenario = load_scenario(scenario_path);
    SimOptions options;
    options.control_enabled = !no_control;
    options.seed_override = seed;
    const SimulationOutput out = run_simulation(scenario, options);

    write_run_csv(out, out_path);
    if (summary_path.empty()) {
        // A run always ships with its summary.
        const std::size_t dot = out_path.rfind('.');
        summary_path = (dot == std::string::npos ? out_path : out_path.substr(0, dot)) +
                       "_summary.json";
    }
    write_summary_json(out, summary_path);
    if (!timing_path.empty()) write_timing_csv(out, timing_path);
    if (!timing_summary_path.empty()) write_timing_json(out, timing_summary_path);

    std::cout << "simulated " << out.records.size() << " ticks, " << out.opf_count
              << " OPF solves";
    if (out.ampacity_violations > 0)
        std::cout << "; ampacity violations on " << out.ampacity_violations << " ticks";
    std::cout << "\n";
    return 0;
}

int cmd_report(const std::string& run_path, const std::string& outdir,
               const std::string& baseline_path, const std::string& network_path,
               const std::string& timing_path) {
    const RunTable run = load_run_csv(run_path);
    std::optional<RunTable> baseline;
    if (!baseline_path.empty()) baseline = load_run_csv(baseline_path);
    std::optional<NetworkModel> network;
    if (!network_path.empty()) network = load_network(network_path);
    write_report(run, outdir, baseline ? &*baseline : nullptr, network ? &*network : nullptr,
                 timing_path);
    std::cout << "report tables written to " << outdir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybridgrid: hybrid AC/DC microgrid load flow, sensitivities, OPF and "
                 "islanding simulation"};
    app.require_subcommand(1);

    std::string network, setpoints, state, out, config, op_state = "grid_connected";
    std::string scenario, summary, timing, timing_summary, baseline, outdir = "report";
    bool check_fd = false, no_control = false;
    double tol = 1e-8, fd_tol = 1e-4;
    int max_iter = 50;
    std::uint64_t seed_value = 0;
    bool seed_set = false;

    CLI::App* validate_cmd = app.add_subcommand("validate", "Check a network description file");
    validate_cmd->add_option("network", network, "network JSON file")->required();

    CLI::App* loadflow_cmd = app.add_subcommand("loadflow", "One-shot hybrid AC/DC load flow");
    loadflow_cmd->add_option("network", network)->required();
    loadflow_cmd->add_option("--setpoints", setpoints, "setpoint JSON file")->required();
    loadflow_cmd->add_option("--out", out, "state output file (default stdout)");
    loadflow_cmd->add_option("--tol", tol, "residual tolerance in p.u.");
    loadflow_cmd->add_option("--max-iter", max_iter, "Newton iteration cap");

    CLI::App* sc_cmd = app.add_subcommand("sc", "Sensitivity coefficients at an operating point");
    sc_cmd->add_option("network", network)->required();
    sc_cmd->add_option("--state", state, "state JSON file");
    sc_cmd->add_option("--setpoints", setpoints, "setpoints (solves the load flow first)");
    sc_cmd->add_option("--out", out, "SC matrices output file");
    sc_cmd->add_flag("--check-fd", check_fd, "verify against finite differences of the load flow");
    sc_cmd->add_option("--fd-tol", fd_tol, "relative tolerance for --check-fd");

    CLI::App* opf_cmd = app.add_subcommand("opf", "One-shot sensitivity-coefficient OPF");
    opf_cmd->add_option("network", network)->required();
    opf_cmd->add_option("--setpoints", setpoints)->required();
    opf_cmd->add_option("--config", config, "OPF device/weight config JSON")->required();
    opf_cmd->add_option("--op-state", op_state,
                        "grid_connected|prepare_for_island|island|resynchronisation");
    opf_cmd->add_option("--out", out);

    CLI::App* sim_cmd = app.add_subcommand("simulate", "Closed-loop scenario simulation");
    sim_cmd->add_option("scenario", scenario, "scenario JSON file")->required();
    sim_cmd->add_option("--out", out, "run CSV path")->required();
    sim_cmd->add_option("--summary", summary, "summary JSON path");
    sim_cmd->add_option("--timing", timing, "timing CSV path (wall clock, non-deterministic)");
    sim_cmd->add_option("--timing-summary", timing_summary, "timing percentile JSON path");
    sim_cmd->add_flag("--no-control", no_control, "counterfactual run without the OPF");
    sim_cmd->add_option("--seed", seed_value, "override the scenario RNG seed")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* report_cmd = app.add_subcommand("report", "Emit per-figure plot data from a run");
    report_cmd->add_option("run", state, "run CSV file")->required();
    report_cmd->add_option("--outdir", outdir, "output directory");
    report_cmd->add_option("--baseline", baseline, "comparison run CSV (e.g. no-control)");
    report_cmd->add_option("--network", network, "network file for ampacity limit columns");
    report_cmd->add_option("--timing", timing, "timing CSV for the solve-time CDF");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(network);
        if (loadflow_cmd->parsed()) return cmd_loadflow(network, setpoints, out, tol, max_iter);
        if (sc_cmd->parsed()) return cmd_sc(network, state, setpoints, out, check_fd, fd_tol);
        if (opf_cmd->parsed()) return cmd_opf(network, setpoints, config, op_state, out);
        if (sim_cmd->parsed())
            return cmd_simulate(scenario, out, summary, timing, timing_summary, no_control,
                                seed_set ? std::optional<std::uint64_t>(seed_value) : std::nullopt);
        if (report_cmd->parsed())
            return cmd_report(state, outdir, baseline, network, timing);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
