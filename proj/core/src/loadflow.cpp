#include "hybridgrid/loadflow.hpp"

#include <cmath>

#include "hybridgrid/log.hpp"

namespace hybridgrid {

double forming_voltage_root(const QuadraticCoefficients& q) {
    if (q.a <= 0.0) throw Error("forming_voltage_root: quadratic coefficient a must be positive");
    const double disc = q.discriminant();
    if (disc < 0.0) throw Error("grid-forming operating point infeasible (negative discriminant)");
    return (-q.b + std::sqrt(disc)) / (2.0 * q.a);
}

SystemLayout build_layout(const NetworkModel& model) {
    SystemLayout layout;
    const int n_ac = model.n_ac();
    const int n_bus = static_cast<int>(model.buses.size());
    layout.ac_col.assign(n_ac, -1);
    layout.dc_col.assign(n_bus, -1);

    int col = 0;
    for (const Bus& b : model.buses) {
        if (b.kind != BusKind::Ac) continue;
        if (b.role == BusRole::AcSlack) continue;
        layout.ac_col[b.id] = col;
        col += 2;
    }
    for (const Bus& b : model.buses) {
        if (b.kind != BusKind::Dc) continue;
        if (b.role == BusRole::DcV || b.role == BusRole::IcDcVoltage) continue;
        layout.dc_col[b.id] = col;
        col += 1;
    }
    layout.size = col;

    auto link_of_ac = [&](int bus_id) {
        for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx)
            if (model.ic_links[idx].ac_bus == bus_id) return static_cast<int>(idx);
        throw Error("IC AC bus " + std::to_string(bus_id) + " has no link");
    };
    auto link_of_dc = [&](int bus_id) {
        for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx)
            if (model.ic_links[idx].dc_bus == bus_id) return static_cast<int>(idx);
        throw Error("IC DC bus " + std::to_string(bus_id) + " has no link");
    };

    for (const Bus& b : model.buses) {
        switch (b.role) {
            case BusRole::AcSlack:
                break;
            case BusRole::AcPQ:
                layout.rows.push_back({RowKind::AcP, b.id, -1});
                layout.rows.push_back({RowKind::AcQ, b.id, -1});
                break;
            case BusRole::AcPV:
                layout.rows.push_back({RowKind::AcP, b.id, -1});
                layout.rows.push_back({RowKind::PvMag, b.id, -1});
                break;
            case BusRole::IcAcPower:
                layout.rows.push_back({RowKind::AcP, b.id, link_of_ac(b.id)});
                layout.rows.push_back({RowKind::AcQ, b.id, link_of_ac(b.id)});
                break;
            case BusRole::IcAcVoltage:
                layout.rows.push_back({RowKind::VdcqCoupling, b.id, link_of_ac(b.id)});
                layout.rows.push_back({RowKind::AcQ, b.id, link_of_ac(b.id)});
                break;
            case BusRole::IcAcForming:
                layout.rows.push_back({RowKind::FormingPinRe, b.id, link_of_ac(b.id)});
                layout.rows.push_back({RowKind::FormingPinIm, b.id, link_of_ac(b.id)});
                break;
            case BusRole::DcP:
                layout.rows.push_back({RowKind::DcPower, b.id, -1});
                break;
            case BusRole::IcDcPower:
                layout.rows.push_back({RowKind::IcDcDerivedPower, b.id, link_of_dc(b.id)});
                break;
            case BusRole::IcDcForming:
                layout.rows.push_back({RowKind::FormingClosure, b.id, link_of_dc(b.id)});
                break;
            case BusRole::DcV:
            case BusRole::IcDcVoltage:
                break;
        }
    }

    if (static_cast<int>(layout.rows.size()) != layout.size)
        throw Error("load flow system is not square: " + std::to_string(layout.rows.size()) +
                    " rows vs " + std::to_string(layout.size) + " unknowns");
    return layout;
}

void apply_pinned(const NetworkModel& model, const SetpointSet& sp, GridState& state) {
    for (const Bus& b : model.buses) {
        if (b.role == BusRole::AcSlack) {
            const double ang = deg_to_rad(sp.v_ang_deg[b.id]);
            state.e_ac[b.id] = std::polar(sp.v_mag[b.id], ang);
        } else if (b.role == BusRole::DcV || b.role == BusRole::IcDcVoltage) {
            state.e_dc[model.dc_local(b.id)] = sp.v_mag[b.id];
        }
    }
}

namespace {

struct LinkContext {
    IcNeighbors nb;
    int k_local = -1;
    int j_local = -1;
};

std::vector<LinkContext> link_contexts(const NetworkModel& model) {
    std::vector<LinkContext> out;
    out.reserve(model.ic_links.size());
    for (const IcLink& link : model.ic_links) {
        LinkContext ctx;
        ctx.nb = ic_neighbors(model, link);
        ctx.k_local = model.dc_local(ctx.nb.k);
        ctx.j_local = model.dc_local(ctx.nb.j);
        out.push_back(ctx);
    }
    return out;
}

double link_loss(const NetworkModel& model, const AdmittanceMatrices& adm, const GridState& state,
                 std::size_t link_idx, const LinkContext& ctx) {
    const IcLink& link = model.ic_links[link_idx];
    return loss_from_state(state, adm.yac, ctx.nb.l, ctx.nb.i, ctx.k_local, link.loss);
}

} // namespace

QuadraticCoefficients closure_coefficients(const NetworkModel& model,
                                           const AdmittanceMatrices& adm, const GridState& state,
                                           const IcLink& link) {
    const IcNeighbors nb = ic_neighbors(model, link);
    const int k_local = model.dc_local(nb.k);
    const int j_local = model.dc_local(nb.j);

    const double g_ll = adm.yac(nb.l, nb.l).real();
    const double g_li = adm.yac(nb.l, nb.i).real();
    const double b_li = adm.yac(nb.l, nb.i).imag();
    const Complex e_l = state.e_ac[nb.l];
    const Complex e_i = state.e_ac[nb.i];
    const double e_k = state.e_dc[k_local];
    const double e_j = state.e_dc[j_local];
    const double g_kk = adm.ydc(k_local, k_local);
    const double g_kj = adm.ydc(k_local, j_local);

    const double p_loss = loss_from_state(state, adm.yac, nb.l, nb.i, k_local, link.loss);

    QuadraticCoefficients q;
    q.a = g_ll;
    q.b = g_li * e_i.real() - b_li * e_i.imag();
    // DC terms enter as the injection E_k (G_kk E_k + G_kj E_j) so that the
    // balance P_l + P_loss + P_k_inj = 0 conserves energy across the link.
    q.c = p_loss + g_ll * e_l.imag() * e_l.imag() + g_li * e_i.imag() * e_l.imag() +
          b_li * e_i.real() * e_l.imag() + g_kk * e_k * e_k + g_kj * e_k * e_j;
    return q;
}

Eigen::VectorXd assemble_residuals(const NetworkModel& model, const AdmittanceMatrices& adm,
                                   const SystemLayout& layout, const SetpointSet& sp,
                                   const GridState& state) {
    const int n_ac = model.n_ac();
    const Eigen::Map<const Eigen::VectorXcd> e_ac(state.e_ac.data(), n_ac);
    const Eigen::Map<const Eigen::VectorXd> e_dc(state.e_dc.data(), model.n_dc());
    const Eigen::VectorXcd i_ac = adm.yac * e_ac;
    const Eigen::VectorXd i_dc = adm.ydc * e_dc;

    const auto contexts = link_contexts(model);

    Eigen::VectorXd r(layout.size);
    for (std::size_t idx = 0; idx < layout.rows.size(); ++idx) {
        const RowDesc& row = layout.rows[idx];
        const int b = row.bus;
        switch (row.kind) {
            case RowKind::AcP: {
                const Complex s = state.e_ac[b] * std::conj(i_ac[b]);
                r[idx] = s.real() - sp.p[b];
                break;
            }
            case RowKind::AcQ: {
                const Complex s = state.e_ac[b] * std::conj(i_ac[b]);
                r[idx] = s.imag() - sp.q[b];
                break;
            }
            case RowKind::PvMag:
                r[idx] = std::norm(state.e_ac[b]) - sp.v_mag[b] * sp.v_mag[b];
                break;
            case RowKind::FormingPinRe:
                r[idx] = state.e_ac[b].real() - sp.v_mag[b] * std::cos(deg_to_rad(sp.v_ang_deg[b]));
                break;
            case RowKind::FormingPinIm:
                r[idx] = state.e_ac[b].imag() - sp.v_mag[b] * std::sin(deg_to_rad(sp.v_ang_deg[b]));
                break;
            case RowKind::DcPower: {
                const int local = model.dc_local(b);
                r[idx] = state.e_dc[local] * i_dc[local] - sp.p[b];
                break;
            }
            case RowKind::IcDcDerivedPower: {
                const LinkContext& ctx = contexts[row.link];
                const int local = model.dc_local(b);
                const double p_loss = link_loss(model, adm, state, row.link, ctx);
                r[idx] = state.e_dc[local] * i_dc[local] + sp.p[ctx.nb.l] + p_loss;
                break;
            }
            case RowKind::VdcqCoupling: {
                const LinkContext& ctx = contexts[row.link];
                const Complex s_l = state.e_ac[ctx.nb.l] * std::conj(i_ac[ctx.nb.l]);
                const double p_loss = link_loss(model, adm, state, row.link, ctx);
                r[idx] = s_l.real() + p_loss + state.e_dc[ctx.k_local] * i_dc[ctx.k_local];
                break;
            }
            case RowKind::FormingClosure: {
                const LinkContext& ctx = contexts[row.link];
                const QuadraticCoefficients q =
                    closure_coefficients(model, adm, state, model.ic_links[row.link]);
                r[idx] = state.e_ac[ctx.nb.l].real() - forming_voltage_root(q);
                break;
            }
        }
    }
    return r;
}

namespace {

// d(P_b)/d(E_n', E_n'') and d(Q_b)/d(...) of S_b = E_b * conj((Y E)_b).
struct PqDerivs {
    double dp_re, dp_im, dq_re, dq_im;
};

PqDerivs pq_derivs(const Complex& e_b, const Complex& i_b, const Complex& y_bn, bool self) {
    const double g = y_bn.real();
    const double bb = y_bn.imag();
    PqDerivs d;
    d.dp_re = e_b.real() * g + e_b.imag() * bb + (self ? i_b.real() : 0.0);
    d.dp_im = -e_b.real() * bb + e_b.imag() * g + (self ? i_b.imag() : 0.0);
    d.dq_re = e_b.imag() * g - e_b.real() * bb + (self ? -i_b.imag() : 0.0);
    d.dq_im = -e_b.imag() * bb - e_b.real() * g + (self ? i_b.real() : 0.0);
    return d;
}

} // namespace

Eigen::MatrixXd jacobian(const NetworkModel& model, const AdmittanceMatrices& adm,
                         const SystemLayout& layout, const SetpointSet& sp,
                         const GridState& state, LossDerivativeMode mode) {
    (void)sp;
    const int n_ac = model.n_ac();
    const Eigen::Map<const Eigen::VectorXcd> e_ac(state.e_ac.data(), n_ac);
    const Eigen::Map<const Eigen::VectorXd> e_dc(state.e_dc.data(), model.n_dc());
    const Eigen::VectorXcd i_ac = adm.yac * e_ac;
    const Eigen::VectorXd i_dc = adm.ydc * e_dc;

    const auto contexts = link_contexts(model);

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(layout.size, layout.size);

    auto add_ac_power_row = [&](std::size_t row_idx, int b, bool reactive) {
        for (int n = 0; n < n_ac; ++n) {
            const int col = layout.ac_col[n];
            if (col < 0) continue;
            const Complex y = adm.yac(b, n);
            if (y == Complex(0.0, 0.0) && n != b) continue;
            const PqDerivs d = pq_derivs(state.e_ac[b], i_ac[b], y, n == b);
            jac(row_idx, col) += reactive ? d.dq_re : d.dp_re;
            jac(row_idx, col + 1) += reactive ? d.dq_im : d.dp_im;
        }
    };

    auto add_dc_power_row = [&](std::size_t row_idx, int bus_id) {
        const int k = model.dc_local(bus_id);
        for (const Bus& bm : model.buses) {
            if (bm.kind != BusKind::Dc) continue;
            const int m = model.dc_local(bm.id);
            const int col = layout.dc_col[bm.id];
            if (col < 0) continue;
            const double y = adm.ydc(k, m);
            if (y == 0.0 && m != k) continue;
            jac(row_idx, col) += state.e_dc[k] * y + (m == k ? i_dc[k] : 0.0);
        }
    };

    auto add_loss_partials = [&](std::size_t row_idx, const LinkContext& ctx,
                                 const LossPartials& lp, double scale) {
        const int col_l = layout.ac_col[ctx.nb.l];
        if (col_l >= 0) {
            jac(row_idx, col_l) += scale * lp.d_el_re;
            jac(row_idx, col_l + 1) += scale * lp.d_el_im;
        }
        const int col_i = layout.ac_col[ctx.nb.i];
        if (col_i >= 0) {
            jac(row_idx, col_i) += scale * lp.d_ei_re;
            jac(row_idx, col_i + 1) += scale * lp.d_ei_im;
        }
        const int col_k = layout.dc_col[ctx.nb.k];
        if (col_k >= 0) jac(row_idx, col_k) += scale * lp.d_ek;
        const int col_j = layout.dc_col[ctx.nb.j];
        if (col_j >= 0) jac(row_idx, col_j) += scale * lp.d_ej;
    };

    for (std::size_t idx = 0; idx < layout.rows.size(); ++idx) {
        const RowDesc& row = layout.rows[idx];
        const int b = row.bus;
        switch (row.kind) {
            case RowKind::AcP:
                add_ac_power_row(idx, b, false);
                break;
            case RowKind::AcQ:
                add_ac_power_row(idx, b, true);
                break;
            case RowKind::PvMag: {
                const int col = layout.ac_col[b];
                jac(idx, col) = 2.0 * state.e_ac[b].real();
                jac(idx, col + 1) = 2.0 * state.e_ac[b].imag();
                break;
            }
            case RowKind::FormingPinRe:
                jac(idx, layout.ac_col[b]) = 1.0;
                break;
            case RowKind::FormingPinIm:
                jac(idx, layout.ac_col[b] + 1) = 1.0;
                break;
            case RowKind::DcPower:
                add_dc_power_row(idx, b);
                break;
            case RowKind::IcDcDerivedPower: {
                const LinkContext& ctx = contexts[row.link];
                add_dc_power_row(idx, b);
                const LossPartials lp =
                    loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i, ctx.k_local,
                                  ctx.j_local, model.ic_links[row.link].loss, mode);
                add_loss_partials(idx, ctx, lp, 1.0);
                break;
            }
            case RowKind::VdcqCoupling: {
                const LinkContext& ctx = contexts[row.link];
                add_ac_power_row(idx, ctx.nb.l, false);
                add_dc_power_row(idx, ctx.nb.k); // E_k pinned: only E_j columns contribute
                const LossPartials lp =
                    loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i, ctx.k_local,
                                  ctx.j_local, model.ic_links[row.link].loss, mode);
                add_loss_partials(idx, ctx, lp, 1.0);
                break;
            }
            case RowKind::FormingClosure: {
                const LinkContext& ctx = contexts[row.link];
                const IcLink& link = model.ic_links[row.link];
                const QuadraticCoefficients q = closure_coefficients(model, adm, state, link);
                const double disc = q.discriminant();
                if (disc < 0.0)
                    throw Error("grid-forming operating point infeasible (negative discriminant)");
                const double sq = std::sqrt(disc);

                const double g_ll = adm.yac(ctx.nb.l, ctx.nb.l).real();
                const double g_li = adm.yac(ctx.nb.l, ctx.nb.i).real();
                const double b_li = adm.yac(ctx.nb.l, ctx.nb.i).imag();
                const Complex e_l = state.e_ac[ctx.nb.l];
                const Complex e_i = state.e_ac[ctx.nb.i];
                const double e_k = state.e_dc[ctx.k_local];
                const double e_j = state.e_dc[ctx.j_local];
                const double g_kk = adm.ydc(ctx.k_local, ctx.k_local);
                const double g_kj = adm.ydc(ctx.k_local, ctx.j_local);

                const LossPartials lp = loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i,
                                                      ctx.k_local, ctx.j_local, link.loss, mode);

                // d(root)/d(theta) = (-1 + b/sq)/(2a) * db/dtheta - (1/sq) * dc/dtheta
                const double droot_db = (-1.0 + q.b / sq) / (2.0 * q.a);
                const double droot_dc = -1.0 / sq;

                const double dc_el_re = mode == LossDerivativeMode::Full ? lp.d_el_re : 0.0;
                const double dc_el_im = 2.0 * g_ll * e_l.imag() + g_li * e_i.imag() +
                                        b_li * e_i.real() + lp.d_el_im;
                const double dc_ei_re = b_li * e_l.imag() + lp.d_ei_re;
                const double dc_ei_im = g_li * e_l.imag() + lp.d_ei_im;
                const double dc_ek = 2.0 * g_kk * e_k + g_kj * e_j + lp.d_ek;
                const double dc_ej = g_kj * e_k + lp.d_ej;

                const int col_l = layout.ac_col[ctx.nb.l];
                jac(idx, col_l) = 1.0 - droot_dc * dc_el_re;
                jac(idx, col_l + 1) = -droot_dc * dc_el_im;
                const int col_i = layout.ac_col[ctx.nb.i];
                if (col_i >= 0) {
                    jac(idx, col_i) = -(droot_db * g_li + droot_dc * dc_ei_re);
                    jac(idx, col_i + 1) = -(droot_db * (-b_li) + droot_dc * dc_ei_im);
                }
                const int col_k = layout.dc_col[ctx.nb.k];
                jac(idx, col_k) = -droot_dc * dc_ek;
                const int col_j = layout.dc_col[ctx.nb.j];
                if (col_j >= 0) jac(idx, col_j) = -droot_dc * dc_ej;
                break;
            }
        }
    }
    return jac;
}

namespace {

void add_step(const NetworkModel& model, const SystemLayout& layout, const Eigen::VectorXd& dx,
              double alpha, GridState& state) {
    for (const Bus& b : model.buses) {
        if (b.kind == BusKind::Ac) {
            const int col = layout.ac_col[b.id];
            if (col < 0) continue;
            state.e_ac[b.id] += alpha * Complex(dx[col], dx[col + 1]);
        } else {
            const int col = layout.dc_col[b.id];
            if (col < 0) continue;
            state.e_dc[model.dc_local(b.id)] += alpha * dx[col];
        }
    }
}

int count_power_references(const NetworkModel& model) {
    int n_slack = 0, n_ref = 0;
    for (const Bus& b : model.buses) {
        if (b.role == BusRole::AcSlack) {
            ++n_slack;
            ++n_ref;
        }
        if (b.role == BusRole::DcV) ++n_ref;
    }
    if (n_slack > 1) throw Error("multiple AC slack buses");
    return n_ref;
}

} // namespace

LoadflowResult solve(const NetworkModel& model, const SetpointSet& sp, const SolveOptions& options,
                     const GridState* initial) {
    if (count_power_references(model) == 0) throw Error("no active-power slack in topology");
    validate_setpoints(model, sp);

    const AdmittanceMatrices adm = build_admittance(model);
    const SystemLayout layout = build_layout(model);

    GridState state;
    if (initial) {
        state = *initial;
        if (static_cast<int>(state.e_ac.size()) != model.n_ac() ||
            static_cast<int>(state.e_dc.size()) != model.n_dc())
            throw Error("initial state dimension mismatch");
    } else {
        // Flat start: AC 1+j0, DC at the mean voltage setpoint level.
        double dc_level = 0.0;
        int n_set = 0;
        for (const Bus& b : model.buses) {
            if (b.role == BusRole::DcV || b.role == BusRole::IcDcVoltage) {
                dc_level += sp.v_mag[b.id];
                ++n_set;
            }
        }
        dc_level = n_set > 0 ? dc_level / n_set : 1.0;
        state = GridState::flat(model.n_ac(), model.n_dc(), dc_level);
        for (const Bus& b : model.buses) {
            if (b.role == BusRole::IcAcForming)
                state.e_ac[b.id] = std::polar(sp.v_mag[b.id], deg_to_rad(sp.v_ang_deg[b.id]));
        }
    }
    apply_pinned(model, sp, state);

    LoadflowResult result;
    Eigen::VectorXd r = assemble_residuals(model, adm, layout, sp, state);
    double norm = r.lpNorm<Eigen::Infinity>();
    result.trace.push_back(norm);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (norm < options.tolerance) {
            result.converged = true;
            break;
        }
        const Eigen::MatrixXd jac = jacobian(model, adm, layout, sp, state, options.jacobian_mode);
        const Eigen::VectorXd dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite()) break;

        // Step halving: accept the first trial that reduces the 2-norm, else
        // keep the best trial seen.
        const double ref = r.norm();
        double alpha = 1.0;
        GridState best_state = state;
        Eigen::VectorXd best_r = r;
        double best_norm2 = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            GridState trial = state;
            add_step(model, layout, dx, alpha, trial);
            try {
                Eigen::VectorXd rt = assemble_residuals(model, adm, layout, sp, trial);
                const double n2 = rt.norm();
                if (n2 < best_norm2) {
                    best_norm2 = n2;
                    best_state = trial;
                    best_r = rt;
                }
                if (n2 < ref) {
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                // Trial left the feasible region of the forming closure.
            }
            alpha *= 0.5;
        }
        if (!std::isfinite(best_norm2)) break; // every trial failed
        if (!accepted)
            log_debug("loadflow: residual norm did not decrease, taking best trial step");
        state = best_state;
        r = best_r;
        norm = r.lpNorm<Eigen::Infinity>();
        result.trace.push_back(norm);
        result.iterations = iter + 1;
    }

    if (!result.converged && norm < options.tolerance) result.converged = true;
    result.state = state;
    result.residual_norm = norm;
    return result;
}

Complex bus_injection(const NetworkModel& model, const AdmittanceMatrices& adm,
                      const GridState& state, int bus_id) {
    const Bus& b = model.bus(bus_id);
    if (b.kind == BusKind::Ac) {
        Complex i(0.0, 0.0);
        for (int n = 0; n < model.n_ac(); ++n) i += adm.yac(bus_id, n) * state.e_ac[n];
        return state.e_ac[bus_id] * std::conj(i);
    }
    const int k = model.dc_local(bus_id);
    double i = 0.0;
    for (int m = 0; m < model.n_dc(); ++m) i += adm.ydc(k, m) * state.e_dc[m];
    return Complex(state.e_dc[k] * i, 0.0);
}

std::vector<IcBalance> check_balance(const NetworkModel& model, const AdmittanceMatrices& adm,
                                     const GridState& state) {
    std::vector<IcBalance> out;
    for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx) {
        const IcLink& link = model.ic_links[idx];
        const IcNeighbors nb = ic_neighbors(model, link);
        IcBalance bal;
        bal.link = static_cast<int>(idx);
        bal.p_ac = bus_injection(model, adm, state, nb.l).real();
        bal.p_loss = loss_from_state(state, adm.yac, nb.l, nb.i, model.dc_local(nb.k), link.loss);
        bal.p_dc_drawn = -bus_injection(model, adm, state, nb.k).real();
        bal.mismatch = std::abs(bal.p_ac + bal.p_loss - bal.p_dc_drawn);
        out.push_back(bal);
    }
    return out;
}

Complex branch_current_from(const NetworkModel& model, const GridState& state,
                            const Branch& branch) {
    const Complex y = model.branch_series_admittance_pu(branch);
    if (model.branch_kind(branch) == BusKind::Ac) {
        const Complex ef = state.e_ac[branch.from];
        const Complex et = state.e_ac[branch.to];
        return y * (ef - et) + model.branch_shunt_from_pu(branch) * ef;
    }
    const double ef = state.e_dc[model.dc_local(branch.from)];
    const double et = state.e_dc[model.dc_local(branch.to)];
    return Complex(y.real() * (ef - et), 0.0);
}

PowerSummary power_summary(const NetworkModel& model, const AdmittanceMatrices& adm,
                           const GridState& state) {
    PowerSummary s;
    // Injections of external devices only; the converter pair contributes
    // through ic_loss_total (P_l + P_k_inj = -P_loss at a valid solution).
    for (const Bus& b : model.buses) {
        if (is_ic_ac_role(b.role) || is_ic_dc_role(b.role)) continue;
        s.p_injection_total += bus_injection(model, adm, state, b.id).real();
    }

    for (const Branch& br : model.branches) {
        if (model.branch_kind(br) == BusKind::Ac) {
            const Complex ef = state.e_ac[br.from];
            const Complex et = state.e_ac[br.to];
            s.branch_loss_total += (std::norm(ef - et)) * model.branch_series_admittance_pu(br).real();
            s.branch_loss_total += std::norm(ef) * model.branch_shunt_from_pu(br).real();
            s.branch_loss_total += std::norm(et) * model.branch_shunt_to_pu(br).real();
        } else {
            const double ef = state.e_dc[model.dc_local(br.from)];
            const double et = state.e_dc[model.dc_local(br.to)];
            const double g = model.branch_series_admittance_pu(br).real();
            s.branch_loss_total += g * (ef - et) * (ef - et);
        }
    }

    for (const IcLink& link : model.ic_links) {
        const IcNeighbors nb = ic_neighbors(model, link);
        s.ic_loss_total +=
            loss_from_state(state, adm.yac, nb.l, nb.i, model.dc_local(nb.k), link.loss);
    }
    return s;
}

} // namespace hybridgrid
