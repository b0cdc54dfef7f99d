#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridgrid/types.hpp"

namespace hybridgrid {

/// Convex quadratic program
///     min 0.5 x'Hx + g'x   s.t.   lb <= A x <= ub
/// Equality rows carry lb == ub. Every row has a provenance tag used in
/// diagnostics and infeasibility certificates.
struct QpProblem {
    Eigen::MatrixXd h;
    Eigen::VectorXd g;
    Eigen::MatrixXd a;
    Eigen::VectorXd lb;
    Eigen::VectorXd ub;
    std::vector<std::string> row_tags;

    int num_vars() const { return static_cast<int>(g.size()); }
    int num_rows() const { return static_cast<int>(lb.size()); }
};

struct QpSettings {
    double rho = 0.1;
    double rho_eq_scale = 1e3;
    double sigma = 1e-6;
    double alpha = 1.6;
    double eps = 1e-9;          // ADMM residual target
    double kkt_tolerance = 1e-6;
    int max_iterations = 200000;
    int check_interval = 25;
    bool polish = true;
};

enum class QpStatus { Optimal, PrimalInfeasible, Unbounded, MaxIterations };

struct QpKktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;

    double max() const { return std::max(stationarity, std::max(primal, complementarity)); }
};

struct QpResult {
    QpStatus status = QpStatus::MaxIterations;
    Eigen::VectorXd x;
    Eigen::VectorXd y; // row multipliers: >0 pushes at ub, <0 at lb
    double objective = 0.0;
    int iterations = 0;
    bool polished = false;
    QpKktResiduals kkt;
    /// On infeasibility: index and tag of the most violated row.
    int certificate_row = -1;
    std::string certificate_tag;
};

/// Deterministic dense operator-splitting solve with an exact active-set
/// polish step. Throws on malformed input (dimension mismatch, lb > ub).
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {});

/// KKT residuals of a candidate point, evaluated independently of the
/// solver internals.
QpKktResiduals kkt_residuals(const QpProblem& problem, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y);

} // namespace hybridgrid
