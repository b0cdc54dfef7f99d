#include "hybridgrid/qp.hpp"

#include <cmath>

namespace hybridgrid {

namespace {

void check_problem(const QpProblem& p) {
    const int n = p.num_vars();
    const int m = p.num_rows();
    if (p.h.rows() != n || p.h.cols() != n) throw Error("qp: H dimension mismatch");
    if (p.a.rows() != m || (m > 0 && p.a.cols() != n)) throw Error("qp: A dimension mismatch");
    if (p.ub.size() != m) throw Error("qp: bound dimension mismatch");
    if (!p.row_tags.empty() && static_cast<int>(p.row_tags.size()) != m)
        throw Error("qp: row tag count mismatch");
    for (int i = 0; i < m; ++i) {
        if (p.lb[i] > p.ub[i]) {
            const std::string tag =
                p.row_tags.empty() ? ("row " + std::to_string(i)) : p.row_tags[i];
            throw Error("qp: contradictory bounds lb > ub in " + tag);
        }
    }
}

std::string tag_of(const QpProblem& p, int row) {
    if (row < 0) return "";
    return p.row_tags.empty() ? ("row " + std::to_string(row)) : p.row_tags[row];
}

} // namespace

QpKktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& y) {
    QpKktResiduals r;
    const Eigen::VectorXd grad = p.h * x + p.g + p.a.transpose() * y;
    r.stationarity = grad.size() > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
    const Eigen::VectorXd ax = p.a * x;
    for (int i = 0; i < p.num_rows(); ++i) {
        r.primal = std::max(r.primal, std::max(p.lb[i] - ax[i], ax[i] - p.ub[i]));
        const double y_up = std::max(y[i], 0.0);
        const double y_lo = std::min(y[i], 0.0);
        r.complementarity =
            std::max(r.complementarity, std::abs(y_up * (ax[i] - p.ub[i])));
        r.complementarity =
            std::max(r.complementarity, std::abs(y_lo * (ax[i] - p.lb[i])));
    }
    r.primal = std::max(r.primal, 0.0);
    return r;
}

namespace {

/// Exact equality-constrained solve on the detected active set. Returns
/// false when the polished point fails the KKT check.
bool polish(const QpProblem& p, const QpSettings& settings, const Eigen::VectorXd& ax,
            QpResult& result) {
    const int n = p.num_vars();
    const int m = p.num_rows();
    const double tol = 1e-7;

    std::vector<int> active;
    std::vector<int> side; // -1 lower, +1 upper, 0 equality
    for (int i = 0; i < m; ++i) {
        const bool eq = p.ub[i] - p.lb[i] < 1e-12;
        if (eq) {
            active.push_back(i);
            side.push_back(0);
        } else if (ax[i] - p.lb[i] < tol || result.y[i] < -tol) {
            active.push_back(i);
            side.push_back(-1);
        } else if (p.ub[i] - ax[i] < tol || result.y[i] > tol) {
            active.push_back(i);
            side.push_back(1);
        }
    }

    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = p.h + 1e-10 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -p.g;
    for (int a_idx = 0; a_idx < k; ++a_idx) {
        const int row = active[a_idx];
        kkt.block(n + a_idx, 0, 1, n) = p.a.row(row);
        kkt.block(0, n + a_idx, n, 1) = p.a.row(row).transpose();
        kkt(n + a_idx, n + a_idx) = -1e-10;
        rhs[n + a_idx] = side[a_idx] >= 0 ? p.ub[row] : p.lb[row];
        if (side[a_idx] == 0) rhs[n + a_idx] = p.lb[row];
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    Eigen::VectorXd sol = lu.solve(rhs);
    // One round of iterative refinement.
    sol += lu.solve(rhs - kkt * sol);
    if (!sol.allFinite()) return false;

    Eigen::VectorXd x = sol.head(n);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    for (int a_idx = 0; a_idx < k; ++a_idx) y[active[a_idx]] = sol[n + a_idx];

    // Reject multipliers with the wrong sign on one-sided active rows.
    for (int a_idx = 0; a_idx < k; ++a_idx) {
        if (side[a_idx] == 1 && y[active[a_idx]] < -settings.kkt_tolerance) return false;
        if (side[a_idx] == -1 && y[active[a_idx]] > settings.kkt_tolerance) return false;
    }

    const QpKktResiduals kr = kkt_residuals(p, x, y);
    if (kr.max() > settings.kkt_tolerance) return false;

    result.x = x;
    result.y = y;
    result.kkt = kr;
    result.polished = true;
    return true;
}

} // namespace

QpResult solve_qp(const QpProblem& p, const QpSettings& settings) {
    check_problem(p);
    const int n = p.num_vars();
    const int m = p.num_rows();

    QpResult result;
    result.x = Eigen::VectorXd::Zero(n);
    result.y = Eigen::VectorXd::Zero(m);

    if (n == 0) {
        result.status = QpStatus::Optimal;
        return result;
    }

    Eigen::VectorXd rho(m);
    for (int i = 0; i < m; ++i)
        rho[i] = (p.ub[i] - p.lb[i] < 1e-12) ? settings.rho * settings.rho_eq_scale : settings.rho;

    Eigen::MatrixXd k_mat = p.h + settings.sigma * Eigen::MatrixXd::Identity(n, n);
    if (m > 0) k_mat += p.a.transpose() * rho.asDiagonal() * p.a;
    Eigen::LLT<Eigen::MatrixXd> llt(k_mat);
    if (llt.info() != Eigen::Success) throw Error("qp: KKT factorization failed (H not PSD?)");

    Eigen::VectorXd x = result.x;
    Eigen::VectorXd z = m > 0 ? Eigen::VectorXd(p.a * x) : Eigen::VectorXd();
    for (int i = 0; i < m; ++i) z[i] = std::clamp(z[i], p.lb[i], p.ub[i]);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

    const double eps_pinf = 1e-9;
    int iter = 0;
    for (; iter < settings.max_iterations; ++iter) {
        Eigen::VectorXd rhs = settings.sigma * x - p.g;
        if (m > 0) rhs += p.a.transpose() * (rho.cwiseProduct(z) - y);
        const Eigen::VectorXd x_tilde = llt.solve(rhs);
        const Eigen::VectorXd x_next = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;

        Eigen::VectorXd z_next;
        Eigen::VectorXd y_next;
        if (m > 0) {
            const Eigen::VectorXd az_tilde = p.a * x_tilde;
            const Eigen::VectorXd z_relaxed =
                settings.alpha * az_tilde + (1.0 - settings.alpha) * z;
            z_next = z_relaxed + y.cwiseQuotient(rho);
            for (int i = 0; i < m; ++i) z_next[i] = std::clamp(z_next[i], p.lb[i], p.ub[i]);
            y_next = y + rho.cwiseProduct(z_relaxed - z_next);
        } else {
            z_next = z;
            y_next = y;
        }

        if ((iter + 1) % settings.check_interval == 0 || iter + 1 == settings.max_iterations) {
            const Eigen::VectorXd ax = p.a * x_next;
            const double r_prim = m > 0 ? (ax - z_next).lpNorm<Eigen::Infinity>() : 0.0;
            const Eigen::VectorXd dual_vec = p.h * x_next + p.g + p.a.transpose() * y_next;
            const double r_dual = dual_vec.lpNorm<Eigen::Infinity>();
            if (r_prim < settings.eps && r_dual < settings.eps) {
                x = x_next;
                z = z_next;
                y = y_next;
                ++iter;
                break;
            }

            // Primal infeasibility certificate via the dual update direction.
            if (m > 0) {
                const Eigen::VectorXd dy = y_next - y;
                const double dy_norm = dy.lpNorm<Eigen::Infinity>();
                if (dy_norm > eps_pinf) {
                    const Eigen::VectorXd atdy = p.a.transpose() * dy;
                    double support = 0.0;
                    bool certifiable = true;
                    for (int i = 0; i < m; ++i) {
                        // A certificate cannot push against an infinite bound.
                        const double up = std::max(dy[i], 0.0);
                        const double lo = std::min(dy[i], 0.0);
                        if ((up > 1e-10 * dy_norm && p.ub[i] >= 1e19) ||
                            (lo < -1e-10 * dy_norm && p.lb[i] <= -1e19)) {
                            certifiable = false;
                            break;
                        }
                        if (up > 0.0 && p.ub[i] < 1e19) support += p.ub[i] * up;
                        if (lo < 0.0 && p.lb[i] > -1e19) support += p.lb[i] * lo;
                    }
                    if (certifiable && atdy.lpNorm<Eigen::Infinity>() <= 1e-6 * dy_norm &&
                        support <= -1e-6 * dy_norm) {
                        result.status = QpStatus::PrimalInfeasible;
                        int worst = 0;
                        dy.cwiseAbs().maxCoeff(&worst);
                        result.certificate_row = worst;
                        result.certificate_tag = tag_of(p, worst);
                        result.iterations = iter + 1;
                        return result;
                    }
                }
            }
        }

        x = x_next;
        z = z_next;
        y = y_next;
    }

    result.x = x;
    result.y = y;
    result.iterations = iter;
    result.kkt = kkt_residuals(p, x, y);

    if (settings.polish && m > 0) polish(p, settings, p.a * x, result);

    result.objective = 0.5 * result.x.dot(p.h * result.x) + p.g.dot(result.x);
    result.kkt = kkt_residuals(p, result.x, result.y);

    if (result.kkt.max() <= settings.kkt_tolerance) {
        result.status = QpStatus::Optimal;
    } else {
        result.status = QpStatus::MaxIterations;
        // Surface the most violated row for diagnostics.
        const Eigen::VectorXd ax = p.a * result.x;
        double worst_violation = 0.0;
        for (int i = 0; i < m; ++i) {
            const double v = std::max(p.lb[i] - ax[i], ax[i] - p.ub[i]);
            if (v > worst_violation) {
                worst_violation = v;
                result.certificate_row = i;
                result.certificate_tag = tag_of(p, i);
            }
        }
    }
    return result;
}

} // namespace hybridgrid
