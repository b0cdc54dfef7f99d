#include "hybridgrid/scenario.hpp"

#include <filesystem>

#include <json.hpp>

#include "hybridgrid/io_util.hpp"
#include "hybridgrid/network_io.hpp"

namespace hybridgrid {

using nlohmann::json;

double Scenario::profile_value(const std::string& name, std::size_t tick) const {
    const auto it = profiles.find(name);
    if (it == profiles.end()) throw Error("scenario: unknown profile '" + name + "'");
    if (tick >= it->second.size()) throw Error("scenario: profile underrun for '" + name + "'");
    return it->second[tick];
}

int Scenario::link_index(const std::string& name) const {
    for (std::size_t i = 0; i < network.ic_links.size(); ++i)
        if (network.ic_links[i].name == name) return static_cast<int>(i);
    throw Error("scenario: unknown IC link '" + name + "'");
}

namespace {

int resolve_bus(const NetworkModel& model, const json& j, const std::string& where) {
    if (!j.contains("bus")) throw Error(where + ": missing 'bus'");
    if (j["bus"].is_number()) return j["bus"].get<int>();
    const std::string name = j["bus"].get<std::string>();
    for (const Bus& b : model.buses)
        if (b.name == name) return b.id;
    throw Error(where + ": unknown bus '" + name + "'");
}

std::vector<double> resolve_profile(const json& points, double tick_s, std::size_t ticks,
                                    const std::string& name) {
    if (!points.is_array() || points.empty())
        throw Error("scenario: profile '" + name + "' needs a points array");
    std::vector<std::pair<double, double>> pts;
    for (const json& p : points) {
        if (!p.is_array() || p.size() != 2)
            throw Error("scenario: profile '" + name + "' points must be [t, value] pairs");
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].first < pts[i - 1].first)
            throw Error("scenario: profile '" + name + "' times must be nondecreasing");

    const double duration = ticks > 0 ? (ticks - 1) * tick_s : 0.0;
    if (!pts.empty() && pts.back().first < duration)
        throw Error("profile underrun: '" + name + "' ends at " +
                    std::to_string(pts.back().first) + " s but the scenario runs to " +
                    std::to_string(duration) + " s");

    std::vector<double> out(ticks);
    std::size_t seg = 0;
    for (std::size_t k = 0; k < ticks; ++k) {
        const double t = k * tick_s;
        while (seg + 1 < pts.size() && pts[seg + 1].first <= t) ++seg;
        if (seg + 1 >= pts.size()) {
            out[k] = pts.back().second;
        } else {
            const auto [t0, v0] = pts[seg];
            const auto [t1, v1] = pts[seg + 1];
            out[k] = t1 > t0 ? v0 + (v1 - v0) * (t - t0) / (t1 - t0) : v1;
        }
    }
    return out;
}

} // namespace

Scenario parse_scenario(const std::string& json_text, const std::string& base_dir) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw Error("invalid JSON in scenario file");

    Scenario sc;
    sc.name = j.value("name", "scenario");
    if (!j.contains("network")) throw Error("scenario: missing 'network'");
    if (j["network"].is_string()) {
        namespace fs = std::filesystem;
        fs::path p(j["network"].get<std::string>());
        if (p.is_relative()) p = fs::path(base_dir) / p;
        sc.network = load_network(p.string());
    } else {
        sc.network = parse_network(j["network"].dump());
    }

    sc.duration_s = j.value("duration_s", 0.0);
    sc.tick_s = j.value("tick_s", 0.1);
    sc.control_period_s = j.value("control_period_s", 1.0);
    if (sc.tick_s <= 0.0) throw Error("scenario: tick_s must be positive");
    const double ratio = sc.control_period_s / sc.tick_s;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw Error("scenario: control_period_s must be a multiple of tick_s");
    sc.seed = j.value("seed", 1ull);

    if (j.contains("upstream")) sc.upstream_offset_hz = j["upstream"].value("frequency_offset_hz", 0.0);

    if (j.contains("transition")) {
        const json& jt = j["transition"];
        if (jt.contains("forming_link")) {
            if (jt["forming_link"].is_string())
                sc.forming_link = -1; // resolved after links load below
            else
                sc.forming_link = jt["forming_link"].get<int>();
        }
        sc.criteria.epsilon_w = jt.value("epsilon_w", 500.0);
        sc.criteria.epsilon_var = jt.value("epsilon_var", 500.0);
        sc.criteria.breaker_open_delay_s = jt.value("breaker_open_delay_s", 2.0);
        if (jt.contains("island_slack_bus")) {
            if (jt["island_slack_bus"].is_string()) {
                const std::string name = jt["island_slack_bus"].get<std::string>();
                sc.island_slack_bus = -1;
                for (const Bus& b : sc.network.buses)
                    if (b.name == name) sc.island_slack_bus = b.id;
                if (sc.island_slack_bus < 0)
                    throw Error("scenario: unknown island_slack_bus '" + name + "'");
            } else {
                sc.island_slack_bus = jt["island_slack_bus"].get<int>();
            }
        }
        sc.island_slack_voltage_pu =
            jt.value("island_slack_voltage_v", 720.0) / sc.network.base.voltage_dc_v;
        if (jt.contains("forming_link") && jt["forming_link"].is_string()) {
            const std::string name = jt["forming_link"].get<std::string>();
            bool found = false;
            for (std::size_t i = 0; i < sc.network.ic_links.size(); ++i)
                if (sc.network.ic_links[i].name == name) {
                    sc.forming_link = static_cast<int>(i);
                    found = true;
                }
            if (!found) throw Error("scenario: unknown forming_link '" + name + "'");
        }
    }

    if (j.contains("synchro_check")) {
        const json& js = j["synchro_check"];
        sc.criteria.synchro.magnitude_v = js.value("magnitude_v", 5.0);
        sc.criteria.synchro.angle_deg = js.value("angle_deg", 2.0);
        sc.criteria.synchro.frequency_hz = js.value("frequency_hz", 0.02);
    }

    if (j.contains("pi")) {
        const json& jp = j["pi"];
        sc.pi.kp_hz_per_deg = jp.value("kp_hz_per_deg", 0.002);
        sc.pi.ki_hz_per_deg_s = jp.value("ki_hz_per_deg_s", 0.0004);
        sc.pi.output_limit_hz = jp.value("output_limit_hz", 0.1);
        sc.pi.update_period_s = jp.value("update_period_s", 0.1);
    }

    if (j.contains("weights")) {
        const json& jw = j["weights"];
        sc.weights.w1_q_gcp = jw.value("w1", 1.0);
        sc.weights.w2_losses = jw.value("w2", 1.0);
        sc.weights.w3_ic_p = jw.value("w3", 1.0);
        sc.weights.w4_ic_q = jw.value("w4", 1.0);
        sc.weights.w5_dc_voltage = jw.value("w5", 1.0);
        sc.weights.w6_soc = jw.value("w6", 1.0);
        sc.weights.w7_forming_p = jw.value("w7", 1.0);
        sc.weights.w8_forming_q = jw.value("w8", 1.0);
        sc.weights.w9_slack_p = jw.value("w9", 1.0);
        sc.weights.regularization = jw.value("regularization", 1e-4);
    }
    if (j.contains("opf")) {
        sc.current_margin = j["opf"].value("current_margin", 0.97);
        sc.e_dc_ref_pu = j["opf"].value("e_dc_ref_v", 720.0) / sc.network.base.voltage_dc_v;
        sc.control_forming_vmag = j["opf"].value("control_forming_vmag", false);
    }

    const std::size_t ticks = sc.tick_count();
    if (j.contains("profiles")) {
        for (const auto& [name, pts] : j["profiles"].items())
            sc.profiles[name] = resolve_profile(pts.contains("points") ? pts["points"] : pts,
                                                sc.tick_s, ticks, name);
    }

    if (j.contains("devices")) {
        for (const json& jd : j["devices"]) {
            ScenarioDevice d;
            d.name = jd.value("name", "dev" + std::to_string(sc.devices.size()));
            d.bus = resolve_bus(sc.network, jd, "device " + d.name);
            const std::string kind = jd.value("kind", "load");
            if (kind == "load")
                d.kind = DeviceKind::Load;
            else if (kind == "pv")
                d.kind = DeviceKind::Pv;
            else if (kind == "storage")
                d.kind = DeviceKind::Storage;
            else
                throw Error("device " + d.name + ": unknown kind '" + kind + "'");
            d.controllable = jd.value("controllable", false);
            d.profile_p = jd.value("profile_p", "");
            d.profile_q = jd.value("profile_q", "");
            d.p_max_w = jd.value("p_max_w", 0.0);
            d.q_max_var = jd.value("q_max_var", 0.0);
            d.p0_w = jd.value("p0_w", 0.0);
            d.energy_wh = jd.value("energy_wh", 0.0);
            d.soc0 = jd.value("soc0", 0.5);
            d.soc_min = jd.value("soc_min", 0.1);
            d.soc_max = jd.value("soc_max", 0.9);
            d.soc_ref = jd.value("soc_ref", 0.5);
            d.eta = jd.value("eta", 1.0);
            d.island_slack = jd.value("island_slack", false);
            for (const std::string& p : {d.profile_p, d.profile_q})
                if (!p.empty() && !sc.profiles.count(p))
                    throw Error("device " + d.name + ": missing profile column '" + p + "'");
            if (d.kind == DeviceKind::Storage && d.controllable && d.energy_wh <= 0.0)
                throw Error("device " + d.name + ": storage needs energy_wh");
            sc.devices.push_back(d);
        }
    }

    if (j.contains("ic")) {
        for (const json& ji : j["ic"]) {
            ScenarioIc ic;
            ic.link_name = ji.value("link", "");
            sc.link_index(ic.link_name); // validates
            ic.p0_w = ji.value("p0_w", 0.0);
            ic.q0_var = ji.value("q0_var", 0.0);
            ic.e_dc0_v = ji.value("e_dc0_v", 720.0);
            ic.q_max_var = ji.value("q_max_var", 45000.0);
            ic.ramp_w_per_step = ji.value("ramp_w_per_step", 4500.0);
            sc.ic.push_back(ic);
        }
    }

    if (j.contains("events")) {
        for (const json& je : j["events"]) {
            ScenarioEvent e;
            e.t_s = je.at("t").get<double>();
            const std::string type = je.at("type").get<std::string>();
            if (type == "island_trigger")
                e.type = EventType::IslandTrigger;
            else if (type == "restore_trigger")
                e.type = EventType::RestoreTrigger;
            else if (type == "cancel")
                e.type = EventType::Cancel;
            else
                throw Error("scenario: unknown event type '" + type + "'");
            sc.events.push_back(e);
        }
    }

    if (j.contains("noise")) {
        sc.noise.enabled = j["noise"].value("enabled", false);
        sc.noise.sigma_p_w = j["noise"].value("sigma_p_w", 0.0);
        sc.noise.sigma_v_v = j["noise"].value("sigma_v_v", 0.0);
    }

    // Structural checks against the network.
    if (sc.island_slack_bus >= 0 && sc.network.bus(sc.island_slack_bus).role != BusRole::DcP)
        throw Error("scenario: island_slack_bus must be a DC P-node in the base topology");
    if (sc.forming_link < 0 || sc.forming_link >= static_cast<int>(sc.network.ic_links.size()))
        throw Error("scenario: forming_link out of range");

    const auto violations = validate(sc.network);
    if (!violations.empty())
        throw Error("scenario network invalid: " + violations.front().message);
    return sc;
}

Scenario load_scenario(const std::string& path) {
    namespace fs = std::filesystem;
    return parse_scenario(read_file(path), fs::path(path).parent_path().string());
}

} // namespace hybridgrid
