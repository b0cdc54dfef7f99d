#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hybridgrid/network.hpp"
#include "hybridgrid/setpoints.hpp"
#include "hybridgrid/state.hpp"

namespace hybridgrid {

/// Coefficients of the grid-forming power-balance quadratic
/// a*El'^2 + b*El' + c = 0.
struct QuadraticCoefficients {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    double discriminant() const { return b * b - 4.0 * a * c; }
};

/// Larger root (-b + sqrt(b^2-4ac)) / (2a): the technically feasible
/// operating voltage near 1 p.u. Throws when the discriminant is negative.
double forming_voltage_root(const QuadraticCoefficients& q);

enum class RowKind {
    AcP,             // active power mismatch
    AcQ,             // reactive power mismatch
    PvMag,           // PV voltage magnitude
    FormingPinRe,    // forming bus real part pinned to setpoint
    FormingPinIm,    // forming bus imaginary part pinned to setpoint
    DcPower,         // DC nodal power mismatch
    IcDcDerivedPower, // DC side of a following PQ link, power tied to the AC setpoint
    VdcqCoupling,    // AC/DC power balance of a DC-voltage-controlled link
    FormingClosure,  // root-form grid-forming closure
};

struct RowDesc {
    RowKind kind;
    int bus = -1;
    int link = -1;
};

/// Unknown ordering of the Newton system: (E', E'') per unpinned AC bus in
/// id order, then E per unpinned DC bus. Slack, DC V-nodes and the DC bus of
/// VdcQ links are pinned; the forming AC bus stays in the unknown vector and
/// is held by identity rows.
struct SystemLayout {
    std::vector<RowDesc> rows;
    std::vector<int> ac_col; // per AC bus id: column of E' (E'' is +1), -1 if pinned
    std::vector<int> dc_col; // per DC bus id (global): column of E, -1 if pinned
    int size = 0;
};

SystemLayout build_layout(const NetworkModel& model);

/// Writes every pinned voltage (slack, DC V-nodes, VdcQ DC buses) from the
/// setpoints into the state.
void apply_pinned(const NetworkModel& model, const SetpointSet& sp, GridState& state);

/// Closure coefficients of a forming link at the given state, converter
/// losses included.
QuadraticCoefficients closure_coefficients(const NetworkModel& model,
                                           const AdmittanceMatrices& adm, const GridState& state,
                                           const IcLink& link);

Eigen::VectorXd assemble_residuals(const NetworkModel& model, const AdmittanceMatrices& adm,
                                   const SystemLayout& layout, const SetpointSet& sp,
                                   const GridState& state);

Eigen::MatrixXd jacobian(const NetworkModel& model, const AdmittanceMatrices& adm,
                         const SystemLayout& layout, const SetpointSet& sp,
                         const GridState& state,
                         LossDerivativeMode mode = LossDerivativeMode::Simplified);

struct SolveOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
    int max_halvings = 6;
    LossDerivativeMode jacobian_mode = LossDerivativeMode::Simplified;
};

struct LoadflowResult {
    GridState state;
    bool converged = false;
    int iterations = 0;
    double residual_norm = 0.0;       // infinity norm at exit
    std::vector<double> trace;        // residual norm per iteration
};

/// Full-Newton solve with step halving. Starts from `initial` when given,
/// otherwise from a flat start (AC 1+j0, DC at the voltage setpoint level).
LoadflowResult solve(const NetworkModel& model, const SetpointSet& sp,
                     const SolveOptions& options = {},
                     const GridState* initial = nullptr);

struct IcBalance {
    int link = -1;
    double p_ac = 0.0;       // AC-side injection P_l
    double p_loss = 0.0;     // converter loss
    double p_dc_drawn = 0.0; // power drawn from the DC grid at bus k
    double mismatch = 0.0;   // |P_l + P_loss - P_k_drawn|
};

/// Converter active-power balance report for every link.
std::vector<IcBalance> check_balance(const NetworkModel& model, const AdmittanceMatrices& adm,
                                     const GridState& state);

/// Power bookkeeping of a solved state: nodal injections versus branch
/// losses and converter losses.
struct PowerSummary {
    double p_injection_total = 0.0; // device injections, AC + DC
    double branch_loss_total = 0.0; // series + shunt real losses from flows
    double ic_loss_total = 0.0;
    double imbalance() const { return p_injection_total - branch_loss_total - ic_loss_total; }
};

PowerSummary power_summary(const NetworkModel& model, const AdmittanceMatrices& adm,
                           const GridState& state);

/// Complex AC or real DC injection at a bus, from the state.
Complex bus_injection(const NetworkModel& model, const AdmittanceMatrices& adm,
                      const GridState& state, int bus_id);

/// Current phasor at the `from` end of a branch (series + from-side shunt),
/// in per-unit. For DC branches the imaginary part is zero.
Complex branch_current_from(const NetworkModel& model, const GridState& state,
                            const Branch& branch);

} // namespace hybridgrid
