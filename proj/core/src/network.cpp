#include "hybridgrid/network.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

namespace hybridgrid {

bool is_ac_role(BusRole role) {
    switch (role) {
        case BusRole::AcSlack:
        case BusRole::AcPQ:
        case BusRole::AcPV:
        case BusRole::IcAcPower:
        case BusRole::IcAcVoltage:
        case BusRole::IcAcForming:
            return true;
        default:
            return false;
    }
}

bool is_ic_ac_role(BusRole role) {
    return role == BusRole::IcAcPower || role == BusRole::IcAcVoltage ||
           role == BusRole::IcAcForming;
}

bool is_ic_dc_role(BusRole role) {
    return role == BusRole::IcDcPower || role == BusRole::IcDcVoltage ||
           role == BusRole::IcDcForming;
}

std::string to_string(BusRole role) {
    switch (role) {
        case BusRole::AcSlack: return "slack";
        case BusRole::AcPQ: return "pq";
        case BusRole::AcPV: return "pv";
        case BusRole::IcAcPower: return "ic_ac_power";
        case BusRole::IcAcVoltage: return "ic_ac_voltage";
        case BusRole::IcAcForming: return "ic_ac_forming";
        case BusRole::IcDcPower: return "ic_dc_power";
        case BusRole::IcDcVoltage: return "ic_dc_voltage";
        case BusRole::IcDcForming: return "ic_dc_forming";
        case BusRole::DcP: return "dc_p";
        case BusRole::DcV: return "dc_v";
    }
    return "?";
}

int NetworkModel::n_ac() const {
    return static_cast<int>(
        std::count_if(buses.begin(), buses.end(), [](const Bus& b) { return b.kind == BusKind::Ac; }));
}

int NetworkModel::n_dc() const { return static_cast<int>(buses.size()) - n_ac(); }

const Bus& NetworkModel::bus(int id) const {
    if (id < 0 || id >= static_cast<int>(buses.size()) || buses[id].id != id)
        throw Error("bus id out of range or ids not dense: " + std::to_string(id));
    return buses[id];
}

BusKind NetworkModel::branch_kind(const Branch& br) const {
    const BusKind kf = bus(br.from).kind;
    const BusKind kt = bus(br.to).kind;
    if (kf != kt) throw Error("branch " + br.name + " spans AC and DC buses");
    return kf;
}

Complex NetworkModel::branch_series_admittance_pu(const Branch& br) const {
    const double zb = z_base(branch_kind(br));
    const Complex z(br.r_ohm / zb, br.x_ohm / zb);
    if (std::abs(z) == 0.0) throw Error("branch " + br.name + " has zero series impedance");
    return 1.0 / z;
}

Complex NetworkModel::branch_shunt_from_pu(const Branch& br) const {
    return Complex(0.0, br.b_shunt_from_s * z_base(branch_kind(br)));
}

Complex NetworkModel::branch_shunt_to_pu(const Branch& br) const {
    return Complex(0.0, br.b_shunt_to_s * z_base(branch_kind(br)));
}

double NetworkModel::ampacity_pu(const Branch& br) const {
    const double ib = branch_kind(br) == BusKind::Ac ? base.current_ac_a() : base.current_dc_a();
    return br.ampacity_a / ib;
}

double NetworkModel::vmin_pu(const Bus& b) const {
    return b.vmin_v / (b.kind == BusKind::Ac ? base.voltage_ac_v : base.voltage_dc_v);
}

double NetworkModel::vmax_pu(const Bus& b) const {
    return b.vmax_v / (b.kind == BusKind::Ac ? base.voltage_ac_v : base.voltage_dc_v);
}

std::vector<int> NetworkModel::neighbors(int bus_id) const {
    std::vector<int> out;
    for (const Branch& br : branches) {
        if (br.from == bus_id) out.push_back(br.to);
        if (br.to == bus_id) out.push_back(br.from);
    }
    return out;
}

IcNeighbors ic_neighbors(const NetworkModel& model, const IcLink& link) {
    const auto ac_nb = model.neighbors(link.ac_bus);
    if (ac_nb.size() != 1)
        throw Error("IC link " + link.name + ": AC bus must have exactly one neighbor, has " +
                    std::to_string(ac_nb.size()));
    const auto dc_nb = model.neighbors(link.dc_bus);
    if (dc_nb.size() != 1)
        throw Error("IC link " + link.name + ": DC bus must have exactly one neighbor, has " +
                    std::to_string(dc_nb.size()));
    return IcNeighbors{link.ac_bus, ac_nb[0], link.dc_bus, dc_nb[0]};
}

namespace {

void check_connected(const NetworkModel& model, BusKind kind) {
    std::vector<int> ids;
    for (const Bus& b : model.buses)
        if (b.kind == kind) ids.push_back(b.id);
    if (ids.size() <= 1) return;

    std::set<int> seen;
    std::queue<int> queue;
    queue.push(ids.front());
    seen.insert(ids.front());
    while (!queue.empty()) {
        const int cur = queue.front();
        queue.pop();
        for (int nb : model.neighbors(cur)) {
            if (model.bus(nb).kind == kind && seen.insert(nb).second) queue.push(nb);
        }
    }
    if (seen.size() != ids.size())
        throw Error(std::string(kind == BusKind::Ac ? "AC" : "DC") + " subgraph is disconnected");
}

} // namespace

AdmittanceMatrices build_admittance(const NetworkModel& model) {
    const int n_ac = model.n_ac();
    const int n_dc = model.n_dc();

    AdmittanceMatrices out;
    out.yac = Eigen::MatrixXcd::Zero(n_ac, n_ac);
    out.ydc = Eigen::MatrixXd::Zero(n_dc, n_dc);

    std::set<std::pair<int, int>> pairs;
    for (const Branch& br : model.branches) {
        const auto key = std::minmax(br.from, br.to);
        if (!pairs.insert({key.first, key.second}).second && !model.allow_parallel_branches)
            throw Error("duplicate branch between buses " + std::to_string(br.from) + " and " +
                        std::to_string(br.to));

        const BusKind kind = model.branch_kind(br);
        const Complex y = model.branch_series_admittance_pu(br);
        const Complex ysf = model.branch_shunt_from_pu(br);
        const Complex yst = model.branch_shunt_to_pu(br);
        if (kind == BusKind::Ac) {
            out.yac(br.from, br.from) += y + ysf;
            out.yac(br.to, br.to) += y + yst;
            out.yac(br.from, br.to) -= y;
            out.yac(br.to, br.from) -= y;
        } else {
            if (br.x_ohm != 0.0 || br.b_shunt_from_s != 0.0 || br.b_shunt_to_s != 0.0)
                throw Error("DC branch " + br.name + " must be purely resistive");
            const double g = y.real();
            const int f = model.dc_local(br.from);
            const int t = model.dc_local(br.to);
            out.ydc(f, f) += g;
            out.ydc(t, t) += g;
            out.ydc(f, t) -= g;
            out.ydc(t, f) -= g;
        }
    }

    check_connected(model, BusKind::Ac);
    check_connected(model, BusKind::Dc);
    return out;
}

PiParams filter_pi_params(const FilterSpec& filter, const NetworkModel& model) {
    if (filter.l1_h < 0.0 || filter.c_f < 0.0 || filter.l2_h < 0.0)
        throw Error("filter parameters must be nonnegative (passive two-port)");

    const double omega = 2.0 * kPi * model.base.frequency_hz;
    const Complex one(1.0, 0.0);

    // Chain of two-port transmission (ABCD) matrices, converter side first.
    Eigen::Matrix2cd abcd = Eigen::Matrix2cd::Identity();
    auto series = [&](double l_h) {
        Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
        m(0, 1) = Complex(0.0, omega * l_h);
        return m;
    };
    auto shunt = [&](double c_f) {
        Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
        m(1, 0) = Complex(0.0, omega * c_f);
        return m;
    };

    switch (filter.type) {
        case FilterType::None:
            throw Error("filter_pi_params: no filter present");
        case FilterType::L:
            abcd = series(filter.l1_h);
            break;
        case FilterType::LC:
            abcd = series(filter.l1_h) * shunt(filter.c_f);
            break;
        case FilterType::LCL:
            abcd = series(filter.l1_h) * shunt(filter.c_f) * series(filter.l2_h);
            break;
    }

    const Complex a = abcd(0, 0);
    const Complex b = abcd(0, 1);
    const Complex d = abcd(1, 1);
    if (std::abs(b) == 0.0) throw Error("filter has zero series impedance");

    const double zb = model.base.impedance_ac_ohm();
    PiParams pi;
    pi.y_series = zb / b;
    pi.y_shunt_from = (d - one) / b * zb;
    pi.y_shunt_to = (a - one) / b * zb;
    return pi;
}

NetworkModel embed_filter(const NetworkModel& model, std::size_t link_index) {
    if (link_index >= model.ic_links.size()) throw Error("embed_filter: link index out of range");
    const FilterSpec& f = model.ic_links[link_index].filter;
    if (f.type == FilterType::None) return model;
    if (f.type == FilterType::L && f.l1_h == 0.0) return model; // identity two-port

    const PiParams pi = filter_pi_params(f, model);
    const int n_ac = model.n_ac();
    const int old_terminal = model.ic_links[link_index].ac_bus;

    NetworkModel out = model;
    auto shift = [n_ac](int id) { return id >= n_ac ? id + 1 : id; };

    // New converter-terminal bus is appended to the AC block; every DC id
    // shifts up by one to keep ids dense with the AC block first.
    for (Bus& b : out.buses) b.id = shift(b.id);
    for (Branch& br : out.branches) {
        br.from = shift(br.from);
        br.to = shift(br.to);
    }
    for (IcLink& l : out.ic_links) {
        l.ac_bus = shift(l.ac_bus);
        l.dc_bus = shift(l.dc_bus);
    }

    Bus term;
    term.id = n_ac;
    term.name = model.ic_links[link_index].name + "_term";
    term.kind = BusKind::Ac;
    term.role = model.bus(old_terminal).role;
    term.vmin_v = model.bus(old_terminal).vmin_v;
    term.vmax_v = model.bus(old_terminal).vmax_v;
    out.buses.insert(out.buses.begin() + n_ac, term);
    std::sort(out.buses.begin(), out.buses.end(),
              [](const Bus& a, const Bus& b) { return a.id < b.id; });

    // The previous terminal becomes the filter's grid-side node.
    out.buses[old_terminal].role = BusRole::AcPQ;
    out.ic_links[link_index].ac_bus = term.id;
    out.ic_links[link_index].filter = FilterSpec{};

    const double zb = model.base.impedance_ac_ohm();
    Branch fb;
    fb.name = model.ic_links[link_index].name + "_filter";
    fb.from = term.id;
    fb.to = old_terminal;
    const Complex z_pu = 1.0 / pi.y_series;
    fb.r_ohm = z_pu.real() * zb;
    fb.x_ohm = z_pu.imag() * zb;
    fb.b_shunt_from_s = pi.y_shunt_from.imag() / zb;
    fb.b_shunt_to_s = pi.y_shunt_to.imag() / zb;
    fb.ampacity_a = model.ic_links[link_index].rating_w / model.base.voltage_ac_v;
    out.branches.push_back(fb);
    return out;
}

namespace {

void check_ic_role_pair(const NetworkModel& model, const IcLink& link,
                        std::vector<Violation>& out) {
    const BusRole ar = model.bus(link.ac_bus).role;
    const BusRole dr = model.bus(link.dc_bus).role;
    const bool ok = (link.mode == IcMode::FollowingPQ && ar == BusRole::IcAcPower &&
                     dr == BusRole::IcDcPower) ||
                    (link.mode == IcMode::FollowingVdcQ && ar == BusRole::IcAcVoltage &&
                     dr == BusRole::IcDcVoltage) ||
                    (link.mode == IcMode::Forming && ar == BusRole::IcAcForming &&
                     dr == BusRole::IcDcForming);
    if (!ok)
        out.push_back({"ic_role_pairing", "link " + link.name + " roles (" + to_string(ar) + ", " +
                                              to_string(dr) + ") do not match its mode"});
}

} // namespace

std::vector<Violation> validate(const NetworkModel& model) {
    std::vector<Violation> out;

    try {
        model.base.validate();
    } catch (const Error& e) {
        out.push_back({"base", e.what()});
    }

    // Dense ids, AC block first.
    bool seen_dc = false;
    for (std::size_t idx = 0; idx < model.buses.size(); ++idx) {
        const Bus& b = model.buses[idx];
        if (b.id != static_cast<int>(idx)) {
            out.push_back({"bus_ids", "bus ids must be dense 0..n-1 in order"});
            return out;
        }
        if (b.kind == BusKind::Dc) seen_dc = true;
        if (b.kind == BusKind::Ac && seen_dc)
            out.push_back({"bus_order", "AC bus " + b.name + " appears after the DC block"});
        if (is_ac_role(b.role) != (b.kind == BusKind::Ac))
            out.push_back({"role_kind", "bus " + b.name + " role " + to_string(b.role) +
                                            " does not match its kind"});
        if (!(b.vmin_v < b.vmax_v))
            out.push_back({"voltage_limits", "bus " + b.name + " requires vmin < vmax"});
    }

    std::set<std::pair<int, int>> pairs;
    for (const Branch& br : model.branches) {
        if (br.from < 0 || br.to < 0 || br.from >= static_cast<int>(model.buses.size()) ||
            br.to >= static_cast<int>(model.buses.size()) || br.from == br.to) {
            out.push_back({"branch_endpoints", "branch " + br.name + " has invalid endpoints"});
            continue;
        }
        const Bus& bf = model.buses[br.from];
        const Bus& bt = model.buses[br.to];
        if (bf.kind != bt.kind) {
            out.push_back({"branch_mixed_kind", "branch " + br.name + " spans AC and DC buses"});
            continue;
        }
        if (br.r_ohm == 0.0 && br.x_ohm == 0.0)
            out.push_back({"branch_zero_impedance", "branch " + br.name + " has zero impedance"});
        if (bf.kind == BusKind::Dc &&
            (br.x_ohm != 0.0 || br.b_shunt_from_s != 0.0 || br.b_shunt_to_s != 0.0))
            out.push_back({"dc_branch_not_real", "DC branch " + br.name + " must be purely resistive"});
        const auto key = std::minmax(br.from, br.to);
        if (!pairs.insert({key.first, key.second}).second && !model.allow_parallel_branches)
            out.push_back({"duplicate_branch", "duplicate branch between " + bf.name + " and " +
                                                   bt.name + " (no aggregation flag)"});
    }

    try {
        check_connected(model, BusKind::Ac);
        check_connected(model, BusKind::Dc);
    } catch (const Error& e) {
        out.push_back({"disconnected", e.what()});
    }

    // IC links and role bookkeeping.
    std::set<int> ic_buses;
    for (const IcLink& link : model.ic_links) {
        if (link.rating_w <= 0.0)
            out.push_back({"ic_rating", "link " + link.name + " must have positive rating"});
        if (model.bus(link.ac_bus).kind != BusKind::Ac || !is_ic_ac_role(model.bus(link.ac_bus).role))
            out.push_back({"ic_ac_bus", "link " + link.name + " ac_bus is not an IC AC bus"});
        if (model.bus(link.dc_bus).kind != BusKind::Dc || !is_ic_dc_role(model.bus(link.dc_bus).role))
            out.push_back({"ic_dc_bus", "link " + link.name + " dc_bus is not an IC DC bus"});
        if (!ic_buses.insert(link.ac_bus).second || !ic_buses.insert(link.dc_bus).second)
            out.push_back({"ic_bus_shared", "link " + link.name + " shares a bus with another link"});
        check_ic_role_pair(model, link, out);
        try {
            link.loss.validate();
        } catch (const Error& e) {
            out.push_back({"loss_params", std::string("link ") + link.name + ": " + e.what()});
        }
    }
    for (const Bus& b : model.buses) {
        if ((is_ic_ac_role(b.role) || is_ic_dc_role(b.role)) && !ic_buses.count(b.id))
            out.push_back({"ic_bus_unlinked", "bus " + b.name + " has an IC role but no link"});
    }

    // Power references.
    int n_slack = 0, n_dcv = 0;
    for (const Bus& b : model.buses) {
        if (b.role == BusRole::AcSlack) ++n_slack;
        if (b.role == BusRole::DcV) ++n_dcv;
    }
    if (n_slack > 1) out.push_back({"multiple_slack", "more than one AC slack bus"});
    if (n_slack + n_dcv == 0) out.push_back({"no_slack", "no active-power slack in topology"});

    return out;
}

NetworkModel make_islanded(const NetworkModel& model, std::size_t forming_link,
                           int island_slack_bus) {
    if (forming_link >= model.ic_links.size())
        throw Error("make_islanded: forming link index out of range");
    NetworkModel out = model;

    bool had_slack = false;
    for (Bus& b : out.buses) {
        if (b.role == BusRole::AcSlack) {
            b.role = BusRole::AcPQ;
            had_slack = true;
        }
    }
    if (!had_slack) throw Error("make_islanded: model has no AC slack");

    IcLink& link = out.ic_links[forming_link];
    link.mode = IcMode::Forming;
    out.buses[link.ac_bus].role = BusRole::IcAcForming;
    out.buses[link.dc_bus].role = BusRole::IcDcForming;

    Bus& ess = out.buses[island_slack_bus];
    if (ess.role != BusRole::DcP)
        throw Error("make_islanded: island slack bus must be a DC P-node");
    ess.role = BusRole::DcV;
    return out;
}

} // namespace hybridgrid
