#include "hybridgrid/sensitivity.hpp"

#include <cmath>

namespace hybridgrid {

std::string to_string(const ControlVariable& x) {
    switch (x.kind) {
        case ControlKind::BusP: return "P[" + std::to_string(x.bus) + "]";
        case ControlKind::BusQ: return "Q[" + std::to_string(x.bus) + "]";
        case ControlKind::PvVoltage: return "Vpv[" + std::to_string(x.bus) + "]";
        case ControlKind::DcVoltage: return "Edc[" + std::to_string(x.bus) + "]";
        case ControlKind::FormingVoltageMag: return "Vform[" + std::to_string(x.bus) + "]";
        case ControlKind::FormingVoltageAng: return "Aform[" + std::to_string(x.bus) + "]";
    }
    return "?";
}

std::vector<ControlVariable> control_set(const NetworkModel& model) {
    std::vector<ControlVariable> xs;
    for (const Bus& b : model.buses) {
        switch (b.role) {
            case BusRole::AcPQ:
            case BusRole::IcAcPower:
                xs.push_back({ControlKind::BusP, b.id});
                xs.push_back({ControlKind::BusQ, b.id});
                break;
            case BusRole::AcPV:
                xs.push_back({ControlKind::BusP, b.id});
                xs.push_back({ControlKind::PvVoltage, b.id});
                break;
            case BusRole::IcAcVoltage:
                xs.push_back({ControlKind::BusQ, b.id});
                break;
            case BusRole::IcAcForming:
                xs.push_back({ControlKind::FormingVoltageMag, b.id});
                xs.push_back({ControlKind::FormingVoltageAng, b.id});
                break;
            case BusRole::DcP:
                xs.push_back({ControlKind::BusP, b.id});
                break;
            case BusRole::DcV:
            case BusRole::IcDcVoltage:
                xs.push_back({ControlKind::DcVoltage, b.id});
                break;
            default:
                break;
        }
    }
    return xs;
}

void require_in_scope(const NetworkModel& model, const ControlVariable& x) {
    const BusRole role = model.bus(x.bus).role;
    bool ok = false;
    switch (x.kind) {
        case ControlKind::BusP:
            ok = role == BusRole::AcPQ || role == BusRole::IcAcPower || role == BusRole::AcPV ||
                 role == BusRole::DcP;
            break;
        case ControlKind::BusQ:
            ok = role == BusRole::AcPQ || role == BusRole::IcAcPower || role == BusRole::IcAcVoltage;
            break;
        case ControlKind::PvVoltage:
            ok = role == BusRole::AcPV;
            break;
        case ControlKind::DcVoltage:
            ok = role == BusRole::DcV || role == BusRole::IcDcVoltage;
            break;
        case ControlKind::FormingVoltageMag:
        case ControlKind::FormingVoltageAng:
            ok = role == BusRole::IcAcForming;
            break;
    }
    if (!ok)
        throw Error("control " + to_string(x) + " is not admitted by bus role " + to_string(role));
}

int SensitivityMatrices::index_of(const ControlVariable& x) const {
    for (std::size_t idx = 0; idx < controls.size(); ++idx)
        if (controls[idx] == x) return static_cast<int>(idx);
    throw Error("control variable " + to_string(x) + " not in the computed set");
}

namespace {

struct LinkContext {
    IcNeighbors nb;
    int k_local = -1;
    int j_local = -1;
};

std::vector<LinkContext> link_contexts(const NetworkModel& model) {
    std::vector<LinkContext> out;
    for (const IcLink& link : model.ic_links) {
        LinkContext ctx;
        ctx.nb = ic_neighbors(model, link);
        ctx.k_local = model.dc_local(ctx.nb.k);
        ctx.j_local = model.dc_local(ctx.nb.j);
        out.push_back(ctx);
    }
    return out;
}

int link_of_ac_bus(const NetworkModel& model, int bus_id) {
    for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx)
        if (model.ic_links[idx].ac_bus == bus_id) return static_cast<int>(idx);
    throw Error("IC AC bus has no link");
}

int link_of_dc_bus(const NetworkModel& model, int bus_id) {
    for (std::size_t idx = 0; idx < model.ic_links.size(); ++idx)
        if (model.ic_links[idx].dc_bus == bus_id) return static_cast<int>(idx);
    throw Error("IC DC bus has no link");
}

// Row index of each bus equation in A: AC buses own rows (2b, 2b+1), DC
// buses row 2*n_ac + local. This mirrors the column layout so controlled
// voltages sit on identity rows at the diagonal.
struct RowMap {
    ScLayout layout;
    int p_row(int ac_bus) const { return layout.ac_re(ac_bus); }
    int q_row(int ac_bus) const { return layout.ac_im(ac_bus); }
    int dc_row(int local) const { return layout.dc(local); }
};

void add_ac_power_rows(const NetworkModel& model, const AdmittanceMatrices& adm,
                       const GridState& state, const Eigen::VectorXcd& i_ac, int b,
                       const RowMap& rm, bool p_row, bool q_row, Eigen::MatrixXd& a) {
    const int n_ac = model.n_ac();
    for (int n = 0; n < n_ac; ++n) {
        const Complex y = adm.yac(b, n);
        if (y == Complex(0.0, 0.0) && n != b) continue;
        const bool self = n == b;
        const Complex e_b = state.e_ac[b];
        const double g = y.real();
        const double bb = y.imag();
        const double dp_re = e_b.real() * g + e_b.imag() * bb + (self ? i_ac[b].real() : 0.0);
        const double dp_im = -e_b.real() * bb + e_b.imag() * g + (self ? i_ac[b].imag() : 0.0);
        const double dq_re = e_b.imag() * g - e_b.real() * bb + (self ? -i_ac[b].imag() : 0.0);
        const double dq_im = -e_b.imag() * bb - e_b.real() * g + (self ? i_ac[b].real() : 0.0);
        if (p_row) {
            a(rm.p_row(b), rm.layout.ac_re(n)) += dp_re;
            a(rm.p_row(b), rm.layout.ac_im(n)) += dp_im;
        }
        if (q_row) {
            a(rm.q_row(b), rm.layout.ac_re(n)) += dq_re;
            a(rm.q_row(b), rm.layout.ac_im(n)) += dq_im;
        }
    }
}

void add_dc_power_row(const NetworkModel& model, const AdmittanceMatrices& adm,
                      const GridState& state, const Eigen::VectorXd& i_dc, int bus_id, int row,
                      const RowMap& rm, Eigen::MatrixXd& a) {
    const int k = model.dc_local(bus_id);
    for (int m = 0; m < model.n_dc(); ++m) {
        const double y = adm.ydc(k, m);
        if (y == 0.0 && m != k) continue;
        a(row, rm.layout.dc(m)) += state.e_dc[k] * y + (m == k ? i_dc[k] : 0.0);
    }
}

void add_loss_partial_cols(const LinkContext& ctx, const LossPartials& lp, int row,
                           const RowMap& rm, const NetworkModel& model, Eigen::MatrixXd& a) {
    a(row, rm.layout.ac_re(ctx.nb.l)) += lp.d_el_re;
    a(row, rm.layout.ac_im(ctx.nb.l)) += lp.d_el_im;
    a(row, rm.layout.ac_re(ctx.nb.i)) += lp.d_ei_re;
    a(row, rm.layout.ac_im(ctx.nb.i)) += lp.d_ei_im;
    a(row, rm.layout.dc(model.dc_local(ctx.nb.k))) += lp.d_ek;
    a(row, rm.layout.dc(model.dc_local(ctx.nb.j))) += lp.d_ej;
}

} // namespace

Eigen::MatrixXd build_system_matrix(const NetworkModel& model, const AdmittanceMatrices& adm,
                                    const GridState& state, LossDerivativeMode mode) {
    const int n_ac = model.n_ac();
    const int n_dc = model.n_dc();
    RowMap rm{ScLayout{n_ac, n_dc}};
    const int n = rm.layout.size();

    const Eigen::Map<const Eigen::VectorXcd> e_ac(state.e_ac.data(), n_ac);
    const Eigen::Map<const Eigen::VectorXd> e_dc(state.e_dc.data(), n_dc);
    const Eigen::VectorXcd i_ac = adm.yac * e_ac;
    const Eigen::VectorXd i_dc = adm.ydc * e_dc;
    const auto contexts = link_contexts(model);

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);

    for (const Bus& bus : model.buses) {
        const int b = bus.id;
        switch (bus.role) {
            case BusRole::AcSlack:
                a(rm.p_row(b), rm.layout.ac_re(b)) = 1.0;
                a(rm.q_row(b), rm.layout.ac_im(b)) = 1.0;
                break;
            case BusRole::AcPQ:
            case BusRole::IcAcPower:
                add_ac_power_rows(model, adm, state, i_ac, b, rm, true, true, a);
                break;
            case BusRole::AcPV:
                add_ac_power_rows(model, adm, state, i_ac, b, rm, true, false, a);
                a(rm.q_row(b), rm.layout.ac_re(b)) = 2.0 * state.e_ac[b].real();
                a(rm.q_row(b), rm.layout.ac_im(b)) = 2.0 * state.e_ac[b].imag();
                break;
            case BusRole::IcAcVoltage: {
                const int li = link_of_ac_bus(model, b);
                const LinkContext& ctx = contexts[li];
                // Coupling row P_l + P_loss + P_k_inj differentiated.
                add_ac_power_rows(model, adm, state, i_ac, b, rm, true, false, a);
                add_dc_power_row(model, adm, state, i_dc, ctx.nb.k, rm.p_row(b), rm, a);
                const LossPartials lp =
                    loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i, ctx.k_local,
                                  ctx.j_local, model.ic_links[li].loss, mode);
                add_loss_partial_cols(ctx, lp, rm.p_row(b), rm, model, a);
                // Q row.
                add_ac_power_rows(model, adm, state, i_ac, b, rm, false, true, a);
                break;
            }
            case BusRole::IcAcForming:
                // Controlled magnitude and angle: identity rows, the right
                // hand side carries the polar-to-rectangular identities.
                a(rm.p_row(b), rm.layout.ac_re(b)) = 1.0;
                a(rm.q_row(b), rm.layout.ac_im(b)) = 1.0;
                break;
            case BusRole::DcP: {
                const int row = rm.dc_row(model.dc_local(b));
                add_dc_power_row(model, adm, state, i_dc, b, row, rm, a);
                break;
            }
            case BusRole::DcV:
            case BusRole::IcDcVoltage: {
                const int row = rm.dc_row(model.dc_local(b));
                a(row, rm.layout.dc(model.dc_local(b))) = 1.0;
                break;
            }
            case BusRole::IcDcPower: {
                const int li = link_of_dc_bus(model, b);
                const LinkContext& ctx = contexts[li];
                const int row = rm.dc_row(model.dc_local(b));
                add_dc_power_row(model, adm, state, i_dc, b, row, rm, a);
                const LossPartials lp =
                    loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i, ctx.k_local,
                                  ctx.j_local, model.ic_links[li].loss, mode);
                add_loss_partial_cols(ctx, lp, row, rm, model, a);
                break;
            }
            case BusRole::IcDcForming: {
                const int li = link_of_dc_bus(model, b);
                const LinkContext& ctx = contexts[li];
                const IcLink& link = model.ic_links[li];
                const int row = rm.dc_row(model.dc_local(b));

                const double g_ll = adm.yac(ctx.nb.l, ctx.nb.l).real();
                const double g_li = adm.yac(ctx.nb.l, ctx.nb.i).real();
                const double b_li = adm.yac(ctx.nb.l, ctx.nb.i).imag();
                const Complex e_l = state.e_ac[ctx.nb.l];
                const Complex e_i = state.e_ac[ctx.nb.i];
                const double e_k = state.e_dc[ctx.k_local];
                const double e_j = state.e_dc[ctx.j_local];
                const double g_kk = adm.ydc(ctx.k_local, ctx.k_local);
                const double g_kj = adm.ydc(ctx.k_local, ctx.j_local);
                const QuadraticCoefficients q = closure_coefficients(model, adm, state, link);

                const LossPartials lp = loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i,
                                                      ctx.k_local, ctx.j_local, link.loss, mode);

                a(row, rm.layout.ac_re(ctx.nb.l)) = 2.0 * q.a * e_l.real() + q.b + lp.d_el_re;
                a(row, rm.layout.ac_im(ctx.nb.l)) = 2.0 * g_ll * e_l.imag() + g_li * e_i.imag() +
                                                    b_li * e_i.real() + lp.d_el_im;
                a(row, rm.layout.ac_re(ctx.nb.i)) = g_li * e_l.real() + b_li * e_l.imag() + lp.d_ei_re;
                a(row, rm.layout.ac_im(ctx.nb.i)) = -b_li * e_l.real() + g_li * e_l.imag() + lp.d_ei_im;
                a(row, rm.layout.dc(ctx.k_local)) = 2.0 * g_kk * e_k + g_kj * e_j + lp.d_ek;
                a(row, rm.layout.dc(ctx.j_local)) = g_kj * e_k + lp.d_ej;
                break;
            }
        }
    }
    return a;
}

Eigen::VectorXd rhs(const NetworkModel& model, const AdmittanceMatrices& adm,
                    const GridState& state, const ControlVariable& x) {
    (void)adm;
    require_in_scope(model, x);
    const ScLayout layout{model.n_ac(), model.n_dc()};
    RowMap rm{layout};
    Eigen::VectorXd b = Eigen::VectorXd::Zero(layout.size());

    const Bus& bus = model.bus(x.bus);
    switch (x.kind) {
        case ControlKind::BusP:
            if (bus.kind == BusKind::Ac) {
                b[rm.p_row(x.bus)] = 1.0;
            } else if (bus.role == BusRole::DcP) {
                b[rm.dc_row(model.dc_local(x.bus))] = 1.0;
            }
            // The AC setpoint of a following PQ link also appears in the
            // link's derived DC equation.
            if (bus.role == BusRole::IcAcPower) {
                const int li = link_of_ac_bus(model, x.bus);
                b[rm.dc_row(model.dc_local(model.ic_links[li].dc_bus))] = -1.0;
            }
            break;
        case ControlKind::BusQ:
            b[rm.q_row(x.bus)] = 1.0;
            break;
        case ControlKind::PvVoltage:
            // Magnitude row is |E|^2 - |E*|^2.
            b[rm.q_row(x.bus)] = 2.0 * std::abs(state.e_ac[x.bus]);
            break;
        case ControlKind::DcVoltage:
            b[rm.dc_row(model.dc_local(x.bus))] = 1.0;
            break;
        case ControlKind::FormingVoltageMag: {
            const Complex e = state.e_ac[x.bus];
            const double mag = std::abs(e);
            if (mag < 1e-9) throw Error("forming voltage magnitude near zero");
            b[rm.p_row(x.bus)] = e.real() / mag;
            b[rm.q_row(x.bus)] = e.imag() / mag;
            break;
        }
        case ControlKind::FormingVoltageAng: {
            const Complex e = state.e_ac[x.bus];
            b[rm.p_row(x.bus)] = -e.imag();
            b[rm.q_row(x.bus)] = e.real();
            break;
        }
    }
    return b;
}

SensitivityMatrices compute_sensitivities(const NetworkModel& model,
                                          const AdmittanceMatrices& adm, const GridState& state,
                                          LossDerivativeMode mode) {
    const ScLayout layout{model.n_ac(), model.n_dc()};
    SensitivityMatrices out;
    out.controls = control_set(model);
    const int nx = static_cast<int>(out.controls.size());
    const int nu = layout.size();

    const Eigen::MatrixXd a = build_system_matrix(model, adm, state, mode);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    {
        // Cheap conditioning check: a numerically singular A means the
        // state is not a regular load flow solution.
        const double diag_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
        const double diag_max = lu.matrixLU().diagonal().cwiseAbs().maxCoeff();
        if (diag_min <= 0.0 || diag_max / diag_min > 1e14)
            throw Error("sensitivity system matrix is singular or near-singular (cond ~ " +
                        std::to_string(diag_max / std::max(diag_min, 1e-300)) + ")");
    }

    out.u.resize(nu, nx);
    for (int c = 0; c < nx; ++c)
        out.u.col(c) = lu.solve(rhs(model, adm, state, out.controls[c]));

    const int n_bus = static_cast<int>(model.buses.size());
    out.de_dx = Eigen::MatrixXd::Zero(n_bus, nx);
    for (const Bus& bus : model.buses) {
        for (int c = 0; c < nx; ++c) {
            if (bus.kind == BusKind::Ac) {
                const Complex e = state.e_ac[bus.id];
                const double mag = std::abs(e);
                if (mag < 1e-9) continue;
                out.de_dx(bus.id, c) = (e.real() * out.u(layout.ac_re(bus.id), c) +
                                        e.imag() * out.u(layout.ac_im(bus.id), c)) /
                                       mag;
            } else {
                out.de_dx(bus.id, c) = out.u(layout.dc(model.dc_local(bus.id)), c);
            }
        }
    }

    const int n_br = static_cast<int>(model.branches.size());
    out.di_dx = Eigen::MatrixXd::Zero(n_br, nx);
    for (int br_idx = 0; br_idx < n_br; ++br_idx) {
        const Branch& br = model.branches[br_idx];
        if (model.branch_kind(br) == BusKind::Ac) {
            const Complex y = model.branch_series_admittance_pu(br);
            const Complex ysh = model.branch_shunt_from_pu(br);
            const Complex i = branch_current_from(model, state, br);
            const double mag = std::abs(i);
            if (mag < kLossCurrentClamp) continue;
            for (int c = 0; c < nx; ++c) {
                const Complex du_f(out.u(layout.ac_re(br.from), c), out.u(layout.ac_im(br.from), c));
                const Complex du_t(out.u(layout.ac_re(br.to), c), out.u(layout.ac_im(br.to), c));
                const Complex di = y * (du_f - du_t) + ysh * du_f;
                out.di_dx(br_idx, c) = (i.real() * di.real() + i.imag() * di.imag()) / mag;
            }
        } else {
            const double g = model.branch_series_admittance_pu(br).real();
            const double i = branch_current_from(model, state, br).real();
            if (std::abs(i) < kLossCurrentClamp) continue;
            const double sign = i >= 0.0 ? 1.0 : -1.0;
            for (int c = 0; c < nx; ++c) {
                const double du = out.u(layout.dc(model.dc_local(br.from)), c) -
                                  out.u(layout.dc(model.dc_local(br.to)), c);
                out.di_dx(br_idx, c) = sign * g * du;
            }
        }
    }

    out.dploss_ac_dx = Eigen::RowVectorXd::Zero(nx);
    out.dploss_dc_dx = Eigen::RowVectorXd::Zero(nx);
    out.dqloss_dx = Eigen::RowVectorXd::Zero(nx);
    for (const Branch& br : model.branches) {
        if (model.branch_kind(br) == BusKind::Ac) {
            const Complex y = model.branch_series_admittance_pu(br);
            const Complex yf = model.branch_shunt_from_pu(br);
            const Complex yt = model.branch_shunt_to_pu(br);
            const Complex d = state.e_ac[br.from] - state.e_ac[br.to];
            const Complex ef = state.e_ac[br.from];
            const Complex et = state.e_ac[br.to];
            for (int c = 0; c < nx; ++c) {
                const Complex du_f(out.u(layout.ac_re(br.from), c), out.u(layout.ac_im(br.from), c));
                const Complex du_t(out.u(layout.ac_re(br.to), c), out.u(layout.ac_im(br.to), c));
                const Complex dd = du_f - du_t;
                const double d_norm2 = 2.0 * (d.real() * dd.real() + d.imag() * dd.imag());
                const double d_ef2 = 2.0 * (ef.real() * du_f.real() + ef.imag() * du_f.imag());
                const double d_et2 = 2.0 * (et.real() * du_t.real() + et.imag() * du_t.imag());
                out.dploss_ac_dx(c) += y.real() * d_norm2 + yf.real() * d_ef2 + yt.real() * d_et2;
                out.dqloss_dx(c) += -y.imag() * d_norm2 - yf.imag() * d_ef2 - yt.imag() * d_et2;
            }
        } else {
            const double g = model.branch_series_admittance_pu(br).real();
            const double d = state.e_dc[model.dc_local(br.from)] - state.e_dc[model.dc_local(br.to)];
            for (int c = 0; c < nx; ++c) {
                const double dd = out.u(layout.dc(model.dc_local(br.from)), c) -
                                  out.u(layout.dc(model.dc_local(br.to)), c);
                out.dploss_dc_dx(c) += 2.0 * g * d * dd;
            }
        }
    }

    const auto contexts = link_contexts(model);
    out.dploss_ic_dx = Eigen::MatrixXd::Zero(static_cast<int>(model.ic_links.size()), nx);
    for (std::size_t li = 0; li < model.ic_links.size(); ++li) {
        const LinkContext& ctx = contexts[li];
        const LossPartials lp = loss_partials(state, adm.yac, adm.ydc, ctx.nb.l, ctx.nb.i,
                                              ctx.k_local, ctx.j_local, model.ic_links[li].loss,
                                              LossDerivativeMode::Full);
        for (int c = 0; c < nx; ++c) {
            out.dploss_ic_dx(static_cast<int>(li), c) =
                lp.d_el_re * out.u(layout.ac_re(ctx.nb.l), c) +
                lp.d_el_im * out.u(layout.ac_im(ctx.nb.l), c) +
                lp.d_ei_re * out.u(layout.ac_re(ctx.nb.i), c) +
                lp.d_ei_im * out.u(layout.ac_im(ctx.nb.i), c) +
                lp.d_ek * out.u(layout.dc(ctx.k_local), c) +
                lp.d_ej * out.u(layout.dc(ctx.j_local), c);
        }
    }

    out.dploss_dx = out.dploss_ac_dx + out.dploss_dc_dx;
    for (int li = 0; li < out.dploss_ic_dx.rows(); ++li) out.dploss_dx += out.dploss_ic_dx.row(li);
    return out;
}

namespace {

void perturb_setpoints(const NetworkModel& model, SetpointSet& sp, const ControlVariable& x,
                       double h) {
    switch (x.kind) {
        case ControlKind::BusP: sp.p[x.bus] += h; break;
        case ControlKind::BusQ: sp.q[x.bus] += h; break;
        case ControlKind::PvVoltage:
        case ControlKind::DcVoltage:
        case ControlKind::FormingVoltageMag: sp.v_mag[x.bus] += h; break;
        case ControlKind::FormingVoltageAng: sp.v_ang_deg[x.bus] += rad_to_deg(h); break;
    }
    (void)model;
}

} // namespace

FdCheckResult fd_check(const NetworkModel& model, const SetpointSet& sp, double step,
                       double current_floor, double rel_floor) {
    SolveOptions tight;
    tight.tolerance = 1e-12;
    tight.max_iterations = 80;
    tight.jacobian_mode = LossDerivativeMode::Full;

    const LoadflowResult base = solve(model, sp, tight);
    if (!base.converged) throw Error("fd_check: base load flow did not converge");
    const AdmittanceMatrices adm = build_admittance(model);
    const SensitivityMatrices sc = compute_sensitivities(model, adm, base.state, LossDerivativeMode::Full);

    const int n_bus = static_cast<int>(model.buses.size());
    const int n_br = static_cast<int>(model.branches.size());

    auto grid_quantities = [&](const GridState& st, Eigen::VectorXd& volt, Eigen::VectorXd& cur,
                               double& ploss, double& qloss) {
        volt.resize(n_bus);
        for (const Bus& b : model.buses)
            volt[b.id] = b.kind == BusKind::Ac ? std::abs(st.e_ac[b.id])
                                               : st.e_dc[model.dc_local(b.id)];
        cur.resize(n_br);
        for (int idx = 0; idx < n_br; ++idx)
            cur[idx] = std::abs(branch_current_from(model, st, model.branches[idx]));
        const PowerSummary ps = power_summary(model, adm, st);
        ploss = ps.branch_loss_total + ps.ic_loss_total;
        // Reactive series+shunt absorption of the AC grid.
        qloss = 0.0;
        for (const Branch& br : model.branches) {
            if (model.branch_kind(br) != BusKind::Ac) continue;
            const Complex d = st.e_ac[br.from] - st.e_ac[br.to];
            qloss += -model.branch_series_admittance_pu(br).imag() * std::norm(d);
            qloss += -model.branch_shunt_from_pu(br).imag() * std::norm(st.e_ac[br.from]);
            qloss += -model.branch_shunt_to_pu(br).imag() * std::norm(st.e_ac[br.to]);
        }
    };

    FdCheckResult res;
    for (std::size_t c = 0; c < sc.controls.size(); ++c) {
        const ControlVariable& x = sc.controls[c];
        SetpointSet sp_plus = sp;
        SetpointSet sp_minus = sp;
        perturb_setpoints(model, sp_plus, x, step);
        perturb_setpoints(model, sp_minus, x, -step);

        const LoadflowResult plus = solve(model, sp_plus, tight, &base.state);
        const LoadflowResult minus = solve(model, sp_minus, tight, &base.state);
        if (!plus.converged || !minus.converged)
            throw Error("fd_check: perturbed load flow did not converge for " + to_string(x));

        Eigen::VectorXd vp, vm, cp, cm;
        double plp, plm, qlp, qlm;
        grid_quantities(plus.state, vp, cp, plp, qlp);
        grid_quantities(minus.state, vm, cm, plm, qlm);

        const Eigen::VectorXd fd_v = (vp - vm) / (2.0 * step);
        const Eigen::VectorXd fd_i = (cp - cm) / (2.0 * step);
        const double fd_pl = (plp - plm) / (2.0 * step);
        const double fd_ql = (qlp - qlm) / (2.0 * step);

        for (int r = 0; r < n_bus; ++r) {
            const double err = std::abs(sc.de_dx(r, static_cast<int>(c)) - fd_v[r]) /
                               std::max(std::abs(fd_v[r]), rel_floor);
            res.voltage = std::max(res.voltage, err);
        }
        for (int r = 0; r < n_br; ++r) {
            // Currents near the clamp threshold are excluded: their
            // magnitude derivative is deliberately zeroed there.
            const double i_base =
                std::abs(branch_current_from(model, base.state, model.branches[r]));
            if (i_base < current_floor) continue;
            const double err = std::abs(sc.di_dx(r, static_cast<int>(c)) - fd_i[r]) /
                               std::max(std::abs(fd_i[r]), rel_floor);
            res.current = std::max(res.current, err);
        }
        res.ploss = std::max(res.ploss, std::abs(sc.dploss_dx(static_cast<int>(c)) - fd_pl) /
                                            std::max(std::abs(fd_pl), rel_floor));
        res.qloss = std::max(res.qloss, std::abs(sc.dqloss_dx(static_cast<int>(c)) - fd_ql) /
                                            std::max(std::abs(fd_ql), rel_floor));
    }
    return res;
}

} // namespace hybridgrid
