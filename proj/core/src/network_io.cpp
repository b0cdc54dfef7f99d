#include "hybridgrid/network_io.hpp"

#include <json.hpp>

#include "hybridgrid/io_util.hpp"

namespace hybridgrid {

using nlohmann::json;

namespace {

BusRole role_from_string(const std::string& s) {
    if (s == "slack") return BusRole::AcSlack;
    if (s == "pq") return BusRole::AcPQ;
    if (s == "pv") return BusRole::AcPV;
    if (s == "ic_ac_power") return BusRole::IcAcPower;
    if (s == "ic_ac_voltage") return BusRole::IcAcVoltage;
    if (s == "ic_ac_forming") return BusRole::IcAcForming;
    if (s == "ic_dc_power") return BusRole::IcDcPower;
    if (s == "ic_dc_voltage") return BusRole::IcDcVoltage;
    if (s == "ic_dc_forming") return BusRole::IcDcForming;
    if (s == "dc_p") return BusRole::DcP;
    if (s == "dc_v") return BusRole::DcV;
    throw Error("unknown bus role: " + s);
}

FilterType filter_type_from_string(const std::string& s) {
    if (s == "none") return FilterType::None;
    if (s == "l") return FilterType::L;
    if (s == "lc") return FilterType::LC;
    if (s == "lcl") return FilterType::LCL;
    throw Error("unknown filter type: " + s);
}

std::string filter_type_to_string(FilterType t) {
    switch (t) {
        case FilterType::None: return "none";
        case FilterType::L: return "l";
        case FilterType::LC: return "lc";
        case FilterType::LCL: return "lcl";
    }
    return "none";
}

IcMode mode_from_string(const std::string& s) {
    if (s == "pq") return IcMode::FollowingPQ;
    if (s == "vdcq") return IcMode::FollowingVdcQ;
    if (s == "forming") return IcMode::Forming;
    throw Error("unknown IC mode: " + s);
}

std::string mode_to_string(IcMode m) {
    switch (m) {
        case IcMode::FollowingPQ: return "pq";
        case IcMode::FollowingVdcQ: return "vdcq";
        case IcMode::Forming: return "forming";
    }
    return "pq";
}

double require_number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw Error(where + ": missing field '" + key + "'");
    if (!obj[key].is_number()) throw Error(where + ": field '" + key + "' must be a number");
    return obj[key].get<double>();
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error("invalid JSON in " + what);
    return j;
}

} // namespace

NetworkModel parse_network(const std::string& json_text) {
    const json j = parse_json(json_text, "network file");

    NetworkModel model;
    if (!j.contains("base")) throw Error("network: missing 'base' section");
    const json& jb = j["base"];
    model.base.power_w = require_number(jb, "power_w", "base");
    model.base.voltage_ac_v = require_number(jb, "voltage_ac_v", "base");
    model.base.voltage_dc_v = require_number(jb, "voltage_dc_v", "base");
    if (jb.contains("frequency_hz")) model.base.frequency_hz = jb["frequency_hz"].get<double>();
    model.base.validate();

    if (!j.contains("buses") || !j["buses"].is_array()) throw Error("network: missing 'buses' array");
    for (const json& jn : j["buses"]) {
        Bus b;
        b.id = static_cast<int>(require_number(jn, "id", "bus"));
        b.name = jn.value("name", "bus" + std::to_string(b.id));
        const std::string kind = jn.value("kind", "ac");
        if (kind != "ac" && kind != "dc") throw Error("bus " + b.name + ": kind must be ac|dc");
        b.kind = kind == "ac" ? BusKind::Ac : BusKind::Dc;
        b.role = role_from_string(jn.value("role", "pq"));
        b.vmin_v = require_number(jn, "vmin", "bus " + b.name);
        b.vmax_v = require_number(jn, "vmax", "bus " + b.name);
        model.buses.push_back(b);
    }

    if (j.contains("branches")) {
        for (const json& jn : j["branches"]) {
            Branch br;
            br.from = static_cast<int>(require_number(jn, "from", "branch"));
            br.to = static_cast<int>(require_number(jn, "to", "branch"));
            br.name = jn.value("name", "br" + std::to_string(br.from) + "_" + std::to_string(br.to));
            br.r_ohm = require_number(jn, "r", "branch " + br.name);
            br.x_ohm = jn.value("x", 0.0);
            const double b_total = jn.value("b_shunt", 0.0);
            br.b_shunt_from_s = b_total / 2.0;
            br.b_shunt_to_s = b_total / 2.0;
            br.ampacity_a = require_number(jn, "ampacity", "branch " + br.name);
            model.branches.push_back(br);
        }
    }

    if (j.contains("ic_links")) {
        for (const json& jn : j["ic_links"]) {
            IcLink link;
            link.ac_bus = static_cast<int>(require_number(jn, "ac_bus", "ic_link"));
            link.dc_bus = static_cast<int>(require_number(jn, "dc_bus", "ic_link"));
            link.name = jn.value("name", "ic" + std::to_string(model.ic_links.size() + 1));
            link.rating_w = require_number(jn, "rating", "ic_link " + link.name);
            link.mode = mode_from_string(jn.value("mode", "pq"));
            if (jn.contains("loss_params")) {
                const json& jl = jn["loss_params"];
                link.loss.v0 = jl.value("v0", 0.0);
                link.loss.r0 = jl.value("r0", 0.0);
                link.loss.u = jl.value("u", 0.0);
                link.loss.v = jl.value("v", 0.0);
                link.loss.w = jl.value("w", 0.0);
                link.loss.e_nom = jl.value("e_nom", 1.0);
                link.loss.f_sw = jl.value("f_sw", 1.0);
                link.loss.validate();
            }
            if (jn.contains("filter")) {
                const json& jf = jn["filter"];
                link.filter.type = filter_type_from_string(jf.value("type", "none"));
                link.filter.l1_h = jf.value("l1", 0.0);
                link.filter.c_f = jf.value("c", 0.0);
                link.filter.l2_h = jf.value("l2", 0.0);
            }
            model.ic_links.push_back(link);
        }
    }

    if (j.value("allow_parallel_branches", false)) model.allow_parallel_branches = true;

    // Embed any filters present so downstream code always sees the
    // pi-equivalent branch form.
    for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx)
        model = embed_filter(model, idx);
    return model;
}

NetworkModel load_network(const std::string& path) { return parse_network(read_file(path)); }

std::string network_to_json(const NetworkModel& model) {
    json j;
    j["base"] = {{"power_w", model.base.power_w},
                 {"voltage_ac_v", model.base.voltage_ac_v},
                 {"voltage_dc_v", model.base.voltage_dc_v},
                 {"frequency_hz", model.base.frequency_hz}};
    j["buses"] = json::array();
    for (const Bus& b : model.buses) {
        j["buses"].push_back({{"id", b.id},
                              {"name", b.name},
                              {"kind", b.kind == BusKind::Ac ? "ac" : "dc"},
                              {"role", to_string(b.role)},
                              {"vmin", b.vmin_v},
                              {"vmax", b.vmax_v}});
    }
    j["branches"] = json::array();
    for (const Branch& br : model.branches) {
        j["branches"].push_back({{"from", br.from},
                                 {"to", br.to},
                                 {"name", br.name},
                                 {"r", br.r_ohm},
                                 {"x", br.x_ohm},
                                 {"b_shunt", br.b_shunt_from_s + br.b_shunt_to_s},
                                 {"ampacity", br.ampacity_a}});
    }
    j["ic_links"] = json::array();
    for (const IcLink& link : model.ic_links) {
        j["ic_links"].push_back({{"ac_bus", link.ac_bus},
                                 {"dc_bus", link.dc_bus},
                                 {"name", link.name},
                                 {"rating", link.rating_w},
                                 {"mode", mode_to_string(link.mode)},
                                 {"loss_params",
                                  {{"v0", link.loss.v0},
                                   {"r0", link.loss.r0},
                                   {"u", link.loss.u},
                                   {"v", link.loss.v},
                                   {"w", link.loss.w},
                                   {"e_nom", link.loss.e_nom},
                                   {"f_sw", link.loss.f_sw}}},
                                 {"filter", {{"type", filter_type_to_string(link.filter.type)}}}});
    }
    return j.dump(2) + "\n";
}

SetpointSet parse_setpoints(const std::string& json_text, const NetworkModel& model) {
    const json j = parse_json(json_text, "setpoint file");
    SetpointSet sp = SetpointSet::zeros(model.buses.size());

    // Voltage-entry defaults: nominal magnitude everywhere.
    for (const Bus& b : model.buses)
        sp.v_mag[b.id] = 1.0;

    auto find_bus = [&](const json& jn) -> int {
        if (jn.contains("bus")) {
            if (jn["bus"].is_number()) return jn["bus"].get<int>();
            const std::string name = jn["bus"].get<std::string>();
            for (const Bus& b : model.buses)
                if (b.name == name) return b.id;
            throw Error("setpoints: unknown bus '" + name + "'");
        }
        throw Error("setpoints: entry missing 'bus'");
    };

    if (!j.contains("setpoints") || !j["setpoints"].is_array())
        throw Error("setpoints: missing 'setpoints' array");
    for (const json& jn : j["setpoints"]) {
        const int id = find_bus(jn);
        const Bus& b = model.bus(id);
        const double vb = b.kind == BusKind::Ac ? model.base.voltage_ac_v : model.base.voltage_dc_v;
        if (jn.contains("p_w")) sp.p[id] = jn["p_w"].get<double>() / model.base.power_w;
        if (jn.contains("q_var")) sp.q[id] = jn["q_var"].get<double>() / model.base.power_w;
        if (jn.contains("v")) sp.v_mag[id] = jn["v"].get<double>() / vb;
        if (jn.contains("angle_deg")) sp.v_ang_deg[id] = jn["angle_deg"].get<double>();
    }
    validate_setpoints(model, sp);
    return sp;
}

SetpointSet load_setpoints(const std::string& path, const NetworkModel& model) {
    return parse_setpoints(read_file(path), model);
}

std::string state_to_json(const NetworkModel& model, const GridState& state,
                          const LoadflowResult* result) {
    json j;
    j["ac"] = json::array();
    for (const Bus& b : model.buses) {
        if (b.kind != BusKind::Ac) continue;
        const Complex e = state.e_ac[b.id];
        j["ac"].push_back({{"bus", b.id},
                           {"name", b.name},
                           {"mag_v", std::abs(e) * model.base.voltage_ac_v},
                           {"angle_deg", rad_to_deg(std::arg(e))},
                           {"re_pu", e.real()},
                           {"im_pu", e.imag()}});
    }
    j["dc"] = json::array();
    for (const Bus& b : model.buses) {
        if (b.kind != BusKind::Dc) continue;
        const double e = state.e_dc[model.dc_local(b.id)];
        j["dc"].push_back({{"bus", b.id}, {"name", b.name}, {"v", e * model.base.voltage_dc_v}, {"pu", e}});
    }
    if (result) {
        j["converged"] = result->converged;
        j["iterations"] = result->iterations;
        j["residual_norm_pu"] = result->residual_norm;
    }
    return j.dump(2) + "\n";
}

GridState parse_state(const std::string& json_text, const NetworkModel& model) {
    const json j = parse_json(json_text, "state file");
    GridState state = GridState::flat(model.n_ac(), model.n_dc());
    if (!j.contains("ac") || !j.contains("dc")) throw Error("state: missing 'ac'/'dc' arrays");
    for (const json& jn : j["ac"]) {
        const int id = jn.at("bus").get<int>();
        state.e_ac.at(id) = Complex(jn.at("re_pu").get<double>(), jn.at("im_pu").get<double>());
    }
    for (const json& jn : j["dc"]) {
        const int id = jn.at("bus").get<int>();
        state.e_dc.at(model.dc_local(id)) = jn.at("pu").get<double>();
    }
    return state;
}

GridState load_state(const std::string& path, const NetworkModel& model) {
    return parse_state(read_file(path), model);
}

} // namespace hybridgrid
