#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridgrid/converter.hpp"
#include "hybridgrid/types.hpp"

namespace hybridgrid {

enum class BusKind { Ac, Dc };

/// Node typing of the hybrid grid. IC roles come in AC/DC pairs that must be
/// consistent on a link: Power (P,Q | P), Voltage (Q | E_dc) and Forming
/// (|E|,angle | free).
enum class BusRole {
    AcSlack,
    AcPQ,
    AcPV,
    IcAcPower,
    IcAcVoltage,
    IcAcForming,
    IcDcPower,
    IcDcVoltage,
    IcDcForming,
    DcP,
    DcV,
};

bool is_ac_role(BusRole role);
bool is_ic_ac_role(BusRole role);
bool is_ic_dc_role(BusRole role);
std::string to_string(BusRole role);

struct Bus {
    int id = -1;
    std::string name;
    BusKind kind = BusKind::Ac;
    BusRole role = BusRole::AcPQ;
    double vmin_v = 0.0;
    double vmax_v = 0.0;
};

/// A series/shunt branch. Values are stored in physical units exactly as
/// they appear in the network file and converted to per-unit on demand.
/// Shunt susceptance is held per end so that asymmetric pi-equivalents
/// (embedded converter filters) fit the same struct.
struct Branch {
    int from = -1;
    int to = -1;
    double r_ohm = 0.0;
    double x_ohm = 0.0;
    double b_shunt_from_s = 0.0;
    double b_shunt_to_s = 0.0;
    double ampacity_a = 0.0;
    std::string name;
};

enum class FilterType { None, L, LC, LCL };

/// Converter output filter, embedded into the admittance matrix as a
/// pi-equivalent branch when present.
struct FilterSpec {
    FilterType type = FilterType::None;
    double l1_h = 0.0;
    double c_f = 0.0;
    double l2_h = 0.0;
};

enum class IcMode { FollowingPQ, FollowingVdcQ, Forming };

/// An AC/DC interfacing converter tying bus pair (ac_bus, dc_bus).
struct IcLink {
    int ac_bus = -1;
    int dc_bus = -1;
    double rating_w = 0.0;
    IcMode mode = IcMode::FollowingPQ;
    LossParams loss;
    FilterSpec filter;
    std::string name;
};

/// Pi-model of a two-port filter in per-unit admittances.
struct PiParams {
    Complex y_series{0.0, 0.0};
    Complex y_shunt_from{0.0, 0.0};
    Complex y_shunt_to{0.0, 0.0};
};

struct AdmittanceMatrices {
    Eigen::MatrixXcd yac; // n_ac x n_ac
    Eigen::MatrixXd ydc;  // n_dc x n_dc
};

struct Violation {
    std::string code;
    std::string message;
};

/// Immutable hybrid AC/DC grid model. Bus ids are dense 0..n-1 with the AC
/// block first, then the DC block; IC links reference ids.
struct NetworkModel {
    PerUnitBase base;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<IcLink> ic_links;
    bool allow_parallel_branches = false;

    int n_ac() const;
    int n_dc() const;
    const Bus& bus(int id) const;
    /// Local index of a DC bus within the DC block.
    int dc_local(int bus_id) const { return bus_id - n_ac(); }

    double z_base(BusKind kind) const {
        return kind == BusKind::Ac ? base.impedance_ac_ohm() : base.impedance_dc_ohm();
    }
    BusKind branch_kind(const Branch& br) const;
    Complex branch_series_admittance_pu(const Branch& br) const;
    Complex branch_shunt_from_pu(const Branch& br) const;
    Complex branch_shunt_to_pu(const Branch& br) const;
    double ampacity_pu(const Branch& br) const;
    double vmin_pu(const Bus& b) const;
    double vmax_pu(const Bus& b) const;

    /// AC-side branch neighbours of a bus.
    std::vector<int> neighbors(int bus_id) const;
};

/// Node-pair environment of an IC link: AC neighbour i of the converter AC
/// bus l and DC neighbour j of the converter DC bus k. Errors if either bus
/// has more than one neighbour (loss model and forming closure assume a
/// single connection).
struct IcNeighbors {
    int l = -1;
    int i = -1;
    int k = -1; // global id
    int j = -1; // global id
};
IcNeighbors ic_neighbors(const NetworkModel& model, const IcLink& link);

/// Builds the block-diagonal compound admittance matrices by stamping every
/// branch. Throws on duplicate branches (unless the model allows parallels)
/// and on disconnected subgraphs.
AdmittanceMatrices build_admittance(const NetworkModel& model);

/// Pi-parameters of a converter filter at the model's base frequency.
PiParams filter_pi_params(const FilterSpec& filter, const NetworkModel& model);

/// Embeds the converter filter of `model.ic_links[link_index]` as an AC
/// branch: a new converter-terminal bus is inserted, the filter becomes the
/// branch between it and the previous terminal (now the grid-side node), and
/// the link is re-pointed at the new bus. Filters of type None leave the
/// model unchanged.
NetworkModel embed_filter(const NetworkModel& model, std::size_t link_index);

/// Structural diagnostics; empty result means the model is well formed.
std::vector<Violation> validate(const NetworkModel& model);

/// Topology switch: the AC slack becomes a zero-injection PQ bus, the link
/// `forming_link` switches to grid-forming and `island_slack_bus` (a DC
/// P-node) becomes the DC voltage slack.
NetworkModel make_islanded(const NetworkModel& model, std::size_t forming_link,
                           int island_slack_bus);

} // namespace hybridgrid
