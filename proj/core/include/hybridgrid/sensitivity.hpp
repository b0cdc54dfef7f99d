#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridgrid/loadflow.hpp"

namespace hybridgrid {

/// One controllable variable x of the grid. BusP/BusQ are power injections
/// (PQ buses, IC AC setpoints, DC P-nodes), the voltage kinds are the
/// controlled magnitudes of PV buses, DC V-nodes, VdcQ DC terminals and the
/// forming IC. Angles are in radians.
enum class ControlKind {
    BusP,
    BusQ,
    PvVoltage,
    DcVoltage,
    FormingVoltageMag,
    FormingVoltageAng,
};

struct ControlVariable {
    ControlKind kind = ControlKind::BusP;
    int bus = -1;

    bool operator==(const ControlVariable&) const = default;
};

std::string to_string(const ControlVariable& x);

/// Every controllable variable admitted by the model's roles, in
/// deterministic bus order.
std::vector<ControlVariable> control_set(const NetworkModel& model);

/// Throws unless the bus role admits the control.
void require_in_scope(const NetworkModel& model, const ControlVariable& x);

/// Unknown ordering of the sensitivity system u(x): (E', E'') for every AC
/// bus (pinned ones included), then E for every DC bus.
struct ScLayout {
    int n_ac = 0;
    int n_dc = 0;
    int size() const { return 2 * n_ac + n_dc; }
    int ac_re(int bus) const { return 2 * bus; }
    int ac_im(int bus) const { return 2 * bus + 1; }
    int dc(int local) const { return 2 * n_ac + local; }
};

/// Voltage, current and loss sensitivities of a converged state with
/// respect to every control variable (columns ordered as `controls`).
struct SensitivityMatrices {
    std::vector<ControlVariable> controls;
    /// Rectangular voltage partials, one solved u(x) per column.
    Eigen::MatrixXd u;
    /// d|E|/dx over all buses (AC magnitudes then DC), rows by bus id.
    Eigen::MatrixXd de_dx;
    /// d|I|/dx over all branches, rows in model branch order.
    Eigen::MatrixXd di_dx;
    /// Total active-loss row (grid + converters) and grid reactive-loss row.
    Eigen::RowVectorXd dploss_dx;
    Eigen::RowVectorXd dqloss_dx;
    /// Split blocks used by the OPF balance constraints.
    Eigen::RowVectorXd dploss_ac_dx;
    Eigen::RowVectorXd dploss_dc_dx;
    Eigen::MatrixXd dploss_ic_dx; // one row per IC link

    int index_of(const ControlVariable& x) const;
};

/// The linear-system matrix A of A u(x) = b(x): the differentiated load
/// flow equations over every voltage unknown, with identity rows for the
/// controlled voltages. Independent of x.
Eigen::MatrixXd build_system_matrix(const NetworkModel& model, const AdmittanceMatrices& adm,
                                    const GridState& state,
                                    LossDerivativeMode mode = LossDerivativeMode::Full);

/// Right-hand side for one control variable.
Eigen::VectorXd rhs(const NetworkModel& model, const AdmittanceMatrices& adm,
                    const GridState& state, const ControlVariable& x);

SensitivityMatrices compute_sensitivities(const NetworkModel& model,
                                          const AdmittanceMatrices& adm, const GridState& state,
                                          LossDerivativeMode mode = LossDerivativeMode::Full);

/// Maximum relative finite-difference error per block, comparing every
/// analytical SC against central differences of the full nonlinear load
/// flow re-solved at perturbed setpoints. Entries whose FD value falls
/// below `rel_floor` are compared at the corresponding absolute tolerance
/// (the FD itself is only reliable to solver-noise/step). Branches carrying
/// less than `current_floor` p.u. are excluded: the current magnitude is
/// conical near zero and central differences pick up its curvature there.
struct FdCheckResult {
    double voltage = 0.0;
    double current = 0.0;
    double ploss = 0.0;
    double qloss = 0.0;

    double max() const { return std::max(std::max(voltage, current), std::max(ploss, qloss)); }
};

FdCheckResult fd_check(const NetworkModel& model, const SetpointSet& sp, double step = 1e-5,
                       double current_floor = 1e-3, double rel_floor = 1e-3);

} // namespace hybridgrid
