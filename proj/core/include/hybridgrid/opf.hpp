#pragma once

#include <string>
#include <vector>

#include "hybridgrid/control.hpp"
#include "hybridgrid/qp.hpp"
#include "hybridgrid/sensitivity.hpp"
#include "hybridgrid/setpoints.hpp"

namespace hybridgrid {

/// Objective weights, one per term of the operating-state objectives.
/// Terms are normalised by nominal magnitudes before weighting.
struct OpfWeights {
    double w1_q_gcp = 1.0;
    double w2_losses = 1.0;
    double w3_ic_p = 1.0;
    double w4_ic_q = 1.0;
    double w5_dc_voltage = 1.0;
    double w6_soc = 1.0;
    double w7_forming_p = 1.0;
    double w8_forming_q = 1.0;
    double w9_slack_p = 1.0;
    /// Setpoint-change damping on the decision deltas; keeps the optimum
    /// unique when a decision appears in no other term.
    double regularization = 1e-4;
};

/// One controllable DER. Bounds are absolute, in per-unit.
struct OpfDevice {
    std::string name;
    int bus = -1;
    bool control_p = true;
    bool control_q = false;
    double p_min_pu = 0.0;
    double p_max_pu = 0.0;
    double q_min_pu = 0.0;
    double q_max_pu = 0.0;
    bool is_storage = false;
    double soc = 0.5;
    double soc_min = 0.1;
    double soc_max = 0.9;
    double soc_ref = 0.5;
    double eta = 1.0;
    double e_tot_pu_h = 0.0; // usable energy in per-unit hours
};

/// Per-link converter limits aligned with model.ic_links.
struct OpfIcLimits {
    double p_max_pu = 0.45;
    double q_max_pu = 0.45;
    double ramp_pu = 0.045; // per control step
};

struct OpfConfig {
    OpfWeights weights;
    std::vector<OpfDevice> devices;
    std::vector<OpfIcLimits> ic_limits;
    double t_s = 1.0;
    double e_dc_ref_pu = 0.9;
    double current_margin = 0.97; // ampacity utilisation in the constraint
    int transition_link = 0;      // IC that transitions to forming
    int island_slack_bus = -1;    // DC ESS bus when islanded
    bool control_forming_vmag = true;
    bool control_vdcq_edc = true;
    bool control_island_slack_voltage = false;
    /// Normalisation scales.
    double power_scale_pu = 0.45;
    double voltage_scale_pu = 0.9;
    double soc_scale = 1.0;
};

enum class OpfVarKind {
    DeviceP,
    DeviceQ,
    IcP,
    IcQ,
    IcEdc,
    FormingVmag,
    DcSlackVoltage,
    AuxSlackP,
    AuxSlackQ,
    AuxIcPac,
    AuxIcQac,
    AuxIcPdc,
    AuxLossAc,
    AuxLossDc,
    AuxQlossAc,
    AuxIcLoss,
    AuxSoc,
};

/// One optimisation variable: the delta of a quantity from its measured
/// baseline. Decisions map onto sensitivity control columns; aux variables
/// are defined by equality rows.
struct OpfVar {
    OpfVarKind kind;
    int bus = -1;
    int link = -1;
    int device = -1;
    std::string name;
    double baseline = 0.0;
    bool is_decision = false;
    int sc_column = -1; // column in SensitivityMatrices, decisions only
};

struct OpfObjectiveTerm {
    std::string name;
    Eigen::VectorXd combo; // linear map from z to the penalised quantity
    double baseline = 0.0;
    double weight = 0.0;
    double scale = 1.0;
};

struct OpfProblem {
    QpProblem qp;
    std::vector<OpfVar> vars;
    std::vector<OpfObjectiveTerm> terms;
    OperatingState op_state = OperatingState::GridConnected;
    int slack_bus = -1;

    int var_index(OpfVarKind kind, int bus, int link = -1, int device = -1) const;
};

struct OpfActiveConstraint {
    int row = -1;
    std::string tag;
    double value = 0.0;
    double bound = 0.0;
};

struct OpfSolution {
    QpResult qp;
    Eigen::VectorXd z;
    double objective = 0.0;
    std::vector<OpfActiveConstraint> active;
    std::vector<std::pair<std::string, double>> objective_breakdown;
};

/// Assembles the SC-linearised QP for the given operating state. The row
/// set follows the operating state: grid-connected slack balances and the
/// DC balance of the voltage-controlled IC, or the island variants with the
/// forming IC as reactive slack and the ESS as active slack.
OpfProblem build_opf(const NetworkModel& model, const GridState& state,
                     const SensitivityMatrices& scs, OperatingState op_state,
                     const OpfConfig& config, const SetpointSet& prev);

OpfSolution solve_opf(const OpfProblem& problem, const QpSettings& settings = {});

/// New absolute setpoints: previous + solved deltas on decision variables
/// only. Throws if any extracted setpoint leaves its device bounds (a
/// builder bug, never clamped silently).
SetpointSet extract_setpoints(const OpfProblem& problem, const OpfSolution& solution,
                              const NetworkModel& model, const OpfConfig& config,
                              const SetpointSet& prev);

} // namespace hybridgrid
