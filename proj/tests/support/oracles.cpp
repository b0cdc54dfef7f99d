#include "oracles.hpp"

#include <cmath>

namespace hgtest {

AdmittanceMatrices stamp_oracle(const NetworkModel& model) {
    const int n_ac = model.n_ac();
    const int n_dc = model.n_dc();
    AdmittanceMatrices out;
    out.yac = Eigen::MatrixXcd::Zero(n_ac, n_ac);
    out.ydc = Eigen::MatrixXd::Zero(n_dc, n_dc);

    for (const Branch& br : model.branches) {
        if (model.bus(br.from).kind == BusKind::Ac) {
            const double zb = model.base.impedance_ac_ohm();
            const Complex z(br.r_ohm / zb, br.x_ohm / zb);
            const Complex y = 1.0 / z;
            Eigen::MatrixXcd stamp = Eigen::MatrixXcd::Zero(n_ac, n_ac);
            stamp(br.from, br.from) = y + Complex(0.0, br.b_shunt_from_s * zb);
            stamp(br.to, br.to) = y + Complex(0.0, br.b_shunt_to_s * zb);
            stamp(br.from, br.to) = -y;
            stamp(br.to, br.from) = -y;
            out.yac += stamp;
        } else {
            const double zb = model.base.impedance_dc_ohm();
            const double g = 1.0 / (br.r_ohm / zb);
            Eigen::MatrixXd stamp = Eigen::MatrixXd::Zero(n_dc, n_dc);
            const int f = model.dc_local(br.from);
            const int t = model.dc_local(br.to);
            stamp(f, f) = g;
            stamp(t, t) = g;
            stamp(f, t) = -g;
            stamp(t, f) = -g;
            out.ydc += stamp;
        }
    }
    return out;
}

GridState gauss_seidel_ac(const NetworkModel& model, const SetpointSet& sp, double tol,
                          int max_iter) {
    const AdmittanceMatrices adm = build_admittance(model);
    const int n = model.n_ac();
    GridState st = GridState::flat(n, model.n_dc());
    for (const Bus& b : model.buses)
        if (b.role == BusRole::AcSlack)
            st.e_ac[b.id] = std::polar(sp.v_mag[b.id], deg_to_rad(sp.v_ang_deg[b.id]));

    for (int it = 0; it < max_iter; ++it) {
        double delta = 0.0;
        for (const Bus& b : model.buses) {
            if (b.role != BusRole::AcPQ) continue;
            const Complex s(sp.p[b.id], sp.q[b.id]);
            Complex sum(0.0, 0.0);
            for (int m = 0; m < n; ++m)
                if (m != b.id) sum += adm.yac(b.id, m) * st.e_ac[m];
            const Complex e_new = (std::conj(s / st.e_ac[b.id]) - sum) / adm.yac(b.id, b.id);
            delta = std::max(delta, std::abs(e_new - st.e_ac[b.id]));
            st.e_ac[b.id] = e_new;
        }
        if (delta < tol) break;
    }
    return st;
}

GridState toy4_fixed_point(const NetworkModel& model, const SetpointSet& sp, double tol) {
    // Bus map: 0 slack, 1 IC-ac (VdcQ: Q* given, P derived), 2 IC-dc with
    // pinned voltage E*, 3 DC P-node.
    const AdmittanceMatrices adm = build_admittance(model);
    const LossParams& lp = model.ic_links[0].loss;

    const double g = -adm.ydc(0, 1); // line conductance, local ids: 2->0, 3->1
    const double e2 = sp.v_mag[2];
    const double p3 = sp.p[3];
    // E3 from its power equation g*E3^2 - g*E3*E2 = p3 (larger root).
    const double e3 = (g * e2 + std::sqrt(g * g * e2 * e2 + 4.0 * g * p3)) / (2.0 * g);
    const double p2_inj = g * e2 * (e2 - e3);

    // AC half: the link's active power follows from the DC draw minus the
    // converter loss, which itself depends on the AC current. Outer fixed
    // point over the loss, inner Gauss-Seidel for the AC state.
    GridState st = GridState::flat(model.n_ac(), model.n_dc());
    double p_l = -p2_inj;
    for (int it = 0; it < 10000; ++it) {
        SetpointSet sp_ac = sp;
        sp_ac.p[1] = p_l;
        // Treat bus 1 as a PQ bus for the Gauss-Seidel sweep.
        NetworkModel ac = model;
        ac.buses[1].role = BusRole::AcPQ;
        ac.ic_links.clear();
        st = gauss_seidel_ac(ac, sp_ac, tol);

        const Complex i_ac = adm.yac(1, 0) * st.e_ac[0] + adm.yac(1, 1) * st.e_ac[1];
        const double i_mag = std::abs(i_ac);
        const double loss = 2.0 * std::numbers::sqrt2 / kPi * lp.v0 * i_mag +
                            lp.r0 * i_mag * i_mag +
                            lp.f_sw * (e2 / lp.e_nom) * (lp.u + lp.v * i_mag + lp.w * i_mag * i_mag);
        const double p_l_new = -p2_inj - loss;
        const double delta = std::abs(p_l_new - p_l);
        p_l = p_l_new;
        if (delta < tol) break;
    }
    st.e_dc[0] = e2;
    st.e_dc[1] = e3;
    return st;
}

Eigen::MatrixXd fd_jacobian(const NetworkModel& model, const AdmittanceMatrices& adm,
                            const SystemLayout& layout, const SetpointSet& sp,
                            const GridState& state, double h) {
    Eigen::MatrixXd jac(layout.size, layout.size);

    auto perturbed = [&](int col, double delta) {
        GridState st = state;
        for (const Bus& b : model.buses) {
            if (b.kind == BusKind::Ac) {
                const int c = layout.ac_col[b.id];
                if (c == col) st.e_ac[b.id] += Complex(delta, 0.0);
                if (c >= 0 && c + 1 == col) st.e_ac[b.id] += Complex(0.0, delta);
            } else {
                if (layout.dc_col[b.id] == col) st.e_dc[model.dc_local(b.id)] += delta;
            }
        }
        return assemble_residuals(model, adm, layout, sp, st);
    };

    for (int c = 0; c < layout.size; ++c) {
        const Eigen::VectorXd plus = perturbed(c, h);
        const Eigen::VectorXd minus = perturbed(c, -h);
        jac.col(c) = (plus - minus) / (2.0 * h);
    }
    return jac;
}

std::optional<Eigen::VectorXd> qp_brute_force(const QpProblem& p) {
    const int n = p.num_vars();
    const int m = p.num_rows();
    if (m > 10) throw Error("qp_brute_force: too many rows");

    double best_obj = std::numeric_limits<double>::infinity();
    std::optional<Eigen::VectorXd> best;

    std::vector<int> choice(m, 0); // 0 inactive, 1 at lb, 2 at ub
    const long total = static_cast<long>(std::pow(3.0, m));
    for (long code = 0; code < total; ++code) {
        long rem = code;
        bool skip = false;
        for (int i = 0; i < m; ++i) {
            choice[i] = static_cast<int>(rem % 3);
            rem /= 3;
            const bool eq = p.ub[i] - p.lb[i] < 1e-12;
            if (eq && choice[i] == 0) skip = true; // equality rows always active
            if (eq && choice[i] == 2) skip = true; // avoid double counting
        }
        if (skip) continue;

        std::vector<int> act;
        for (int i = 0; i < m; ++i)
            if (choice[i] != 0) act.push_back(i);
        const int k = static_cast<int>(act.size());

        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
        kkt.topLeftCorner(n, n) = p.h;
        Eigen::VectorXd rhs(n + k);
        rhs.head(n) = -p.g;
        for (int a = 0; a < k; ++a) {
            kkt.block(n + a, 0, 1, n) = p.a.row(act[a]);
            kkt.block(0, n + a, n, 1) = p.a.row(act[a]).transpose();
            rhs[n + a] = choice[act[a]] == 1 ? p.lb[act[a]] : p.ub[act[a]];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible()) continue;
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd x = sol.head(n);

        // Primal feasibility.
        const Eigen::VectorXd ax = p.a * x;
        bool ok = true;
        for (int i = 0; i < m && ok; ++i)
            if (ax[i] < p.lb[i] - 1e-8 || ax[i] > p.ub[i] + 1e-8) ok = false;
        // Multiplier signs (lb active -> y <= 0, ub active -> y >= 0).
        for (int a = 0; a < k && ok; ++a) {
            const double y = sol[n + a];
            const bool eq = p.ub[act[a]] - p.lb[act[a]] < 1e-12;
            if (eq) continue;
            if (choice[act[a]] == 1 && y > 1e-8) ok = false;
            if (choice[act[a]] == 2 && y < -1e-8) ok = false;
        }
        if (!ok) continue;

        const double obj = 0.5 * x.dot(p.h * x) + p.g.dot(x);
        if (obj < best_obj - 1e-12) {
            best_obj = obj;
            best = x;
        }
    }
    return best;
}

} // namespace hgtest
