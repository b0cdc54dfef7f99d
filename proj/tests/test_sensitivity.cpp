#include <doctest.h>

#include <hybridgrid/network_io.hpp>
#include <hybridgrid/sensitivity.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace hybridgrid;
using namespace hgtest;

namespace {

std::string data_path(const std::string& name) {
    return std::string(HYBRIDGRID_DATA_DIR) + "/" + name;
}

struct Solved {
    NetworkModel model;
    SetpointSet sp;
    GridState state;
    AdmittanceMatrices adm;
};

Solved solved(const NetworkModel& m, const SetpointSet& sp) {
    SolveOptions opt;
    opt.tolerance = 1e-12;
    opt.max_iterations = 80;
    const LoadflowResult lf = solve(m, sp, opt);
    REQUIRE(lf.converged);
    return {m, sp, lf.state, build_admittance(m)};
}

} // namespace

TEST_CASE("A equals the load-flow Jacobian up to row scaling and sign") {
    const Solved s = solved(grid8_island(), grid8_island_setpoints());
    const SystemLayout layout = build_layout(s.model);
    const Eigen::MatrixXd jac =
        jacobian(s.model, s.adm, layout, s.sp, s.state, LossDerivativeMode::Full);
    const Eigen::MatrixXd a = build_system_matrix(s.model, s.adm, s.state);
    const ScLayout sc{s.model.n_ac(), s.model.n_dc()};

    // Map every Jacobian row into A's row space: restricted to the unknown
    // columns, each A-row must be a scalar multiple of the matching J-row.
    for (std::size_t jrow = 0; jrow < layout.rows.size(); ++jrow) {
        const RowDesc& rd = layout.rows[jrow];
        int arow = -1;
        switch (rd.kind) {
            case RowKind::AcP:
            case RowKind::VdcqCoupling:
            case RowKind::FormingPinRe: arow = sc.ac_re(rd.bus); break;
            case RowKind::AcQ:
            case RowKind::PvMag:
            case RowKind::FormingPinIm: arow = sc.ac_im(rd.bus); break;
            case RowKind::DcPower:
            case RowKind::IcDcDerivedPower:
            case RowKind::FormingClosure: arow = sc.dc(s.model.dc_local(rd.bus)); break;
        }
        REQUIRE(arow >= 0);

        // Find the scale on the largest J entry, then compare all columns.
        double scale = 0.0;
        double best = 0.0;
        for (const Bus& b : s.model.buses) {
            if (b.kind != BusKind::Ac) continue;
            const int jc = layout.ac_col[b.id];
            if (jc < 0) continue;
            if (std::abs(jac(jrow, jc)) > best) {
                best = std::abs(jac(jrow, jc));
                scale = a(arow, sc.ac_re(b.id)) / jac(jrow, jc);
            }
            if (std::abs(jac(jrow, jc + 1)) > best) {
                best = std::abs(jac(jrow, jc + 1));
                scale = a(arow, sc.ac_im(b.id)) / jac(jrow, jc + 1);
            }
        }
        for (const Bus& b : s.model.buses) {
            if (b.kind != BusKind::Dc) continue;
            const int jc = layout.dc_col[b.id];
            if (jc < 0) continue;
            if (std::abs(jac(jrow, jc)) > best) {
                best = std::abs(jac(jrow, jc));
                scale = a(arow, sc.dc(s.model.dc_local(b.id))) / jac(jrow, jc);
            }
        }
        REQUIRE(best > 0.0);
        CHECK(std::abs(scale) > 1e-12);

        for (const Bus& b : s.model.buses) {
            if (b.kind == BusKind::Ac) {
                const int jc = layout.ac_col[b.id];
                if (jc < 0) continue;
                CHECK(std::abs(a(arow, sc.ac_re(b.id)) - scale * jac(jrow, jc)) <
                      1e-8 * std::max(1.0, std::abs(scale)));
                CHECK(std::abs(a(arow, sc.ac_im(b.id)) - scale * jac(jrow, jc + 1)) <
                      1e-8 * std::max(1.0, std::abs(scale)));
            } else {
                const int jc = layout.dc_col[b.id];
                if (jc < 0) continue;
                CHECK(std::abs(a(arow, sc.dc(s.model.dc_local(b.id))) - scale * jac(jrow, jc)) <
                      1e-8 * std::max(1.0, std::abs(scale)));
            }
        }
    }
}

TEST_CASE("rows for fixed-voltage buses are unit rows") {
    const Solved s = solved(grid8(), grid8_setpoints());
    const Eigen::MatrixXd a = build_system_matrix(s.model, s.adm, s.state);
    const ScLayout sc{s.model.n_ac(), s.model.n_dc()};

    // Slack rows.
    CHECK(a.row(sc.ac_re(0)).cwiseAbs().sum() == 1.0);
    CHECK(a(sc.ac_re(0), sc.ac_re(0)) == 1.0);
    CHECK(a(sc.ac_im(0), sc.ac_im(0)) == 1.0);
    // VdcQ DC terminal row.
    const int k_local = s.model.dc_local(5);
    CHECK(a(sc.dc(k_local), sc.dc(k_local)) == 1.0);
    CHECK(a.row(sc.dc(k_local)).cwiseAbs().sum() == 1.0);
}

TEST_CASE("rhs structure") {
    const Solved s = solved(grid8(), grid8_setpoints());
    SUBCASE("x = P_i has a single unit entry in the bus P row") {
        const Eigen::VectorXd b = rhs(s.model, s.adm, s.state, {ControlKind::BusP, 1});
        const ScLayout sc{s.model.n_ac(), s.model.n_dc()};
        CHECK(b[sc.ac_re(1)] == 1.0);
        CHECK(b.cwiseAbs().sum() == 1.0);
    }
    SUBCASE("x = P_l of a following link also drives the derived DC row") {
        const Eigen::VectorXd b = rhs(s.model, s.adm, s.state, {ControlKind::BusP, 4});
        const ScLayout sc{s.model.n_ac(), s.model.n_dc()};
        CHECK(b[sc.ac_re(4)] == 1.0);
        CHECK(b[sc.dc(s.model.dc_local(6))] == -1.0);
        CHECK(b.cwiseAbs().sum() == 2.0);
    }
    SUBCASE("out-of-scope control is rejected") {
        CHECK_THROWS_AS(rhs(s.model, s.adm, s.state, {ControlKind::BusQ, 7}), Error);
        CHECK_THROWS_AS(rhs(s.model, s.adm, s.state, {ControlKind::DcVoltage, 7}), Error);
    }
}

TEST_CASE("forming magnitude and angle rhs follow the polar identities") {
    const Solved s = solved(grid8_island(), grid8_island_setpoints());
    const ScLayout sc{s.model.n_ac(), s.model.n_dc()};
    const Eigen::VectorXd bmag = rhs(s.model, s.adm, s.state, {ControlKind::FormingVoltageMag, 3});
    CHECK(bmag[sc.ac_re(3)] == doctest::Approx(1.0).epsilon(1e-12)); // cos(0)
    CHECK(bmag[sc.ac_im(3)] == doctest::Approx(0.0));
    const Eigen::VectorXd bang = rhs(s.model, s.adm, s.state, {ControlKind::FormingVoltageAng, 3});
    CHECK(bang[sc.ac_re(3)] == doctest::Approx(0.0));
    CHECK(bang[sc.ac_im(3)] == doctest::Approx(std::abs(s.state.e_ac[3])).epsilon(1e-12));
}

TEST_CASE("self-columns of controlled voltages are unit vectors") {
    const Solved s = solved(grid8(), grid8_setpoints());
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);

    const int col_edc = sc.index_of({ControlKind::DcVoltage, 5});
    CHECK(sc.de_dx(5, col_edc) == doctest::Approx(1.0).epsilon(1e-12));
    // Other fixed-voltage buses do not react.
    CHECK(std::abs(sc.de_dx(0, col_edc)) < 1e-12);

    const int col_pv = sc.index_of({ControlKind::PvVoltage, 2});
    CHECK(sc.de_dx(2, col_pv) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(sc.de_dx(0, col_pv)) < 1e-12);
    CHECK(std::abs(sc.de_dx(5, col_pv)) < 1e-12);
}

TEST_CASE("two-bus voltage SC matches the closed-form derivative") {
    // Purely resistive two-bus system: E2 = (1 + sqrt(1 + 4P/g)) / 2,
    // dE2/dP = 1 / sqrt(g^2 + 4 g P).
    NetworkModel m = two_bus_ac(0.16, 0.0); // g = 10 p.u.
    SetpointSet sp = SetpointSet::zeros(2);
    sp.p[1] = 0.05;
    const Solved s = solved(m, sp);
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);
    const double g = 10.0;
    const double expected = 1.0 / std::sqrt(g * g + 4.0 * g * sp.p[1]);
    CHECK(sc.de_dx(1, sc.index_of({ControlKind::BusP, 1})) ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("voltage, current and loss SCs match finite differences of the load flow") {
    SUBCASE("grid connected") {
        const FdCheckResult r = fd_check(grid8(), grid8_setpoints());
        CHECK(r.voltage < 1e-4);
        CHECK(r.current < 1e-4);
        CHECK(r.ploss < 1e-4);
        CHECK(r.qloss < 1e-4);
    }
    SUBCASE("islanded") {
        const FdCheckResult r = fd_check(grid8_island(), grid8_island_setpoints());
        CHECK(r.voltage < 1e-4);
        CHECK(r.current < 1e-4);
        CHECK(r.ploss < 1e-4);
        CHECK(r.qloss < 1e-4);
    }
}

TEST_CASE("high-impedance branch current row is clamped to zero") {
    NetworkModel m = grid8();
    // A stub branch whose current is below the clamp threshold.
    Branch stub = make_branch(0, 2, 5.0e4, 0.0, 1.0);
    m.branches.push_back(stub);
    const Solved s = solved(m, grid8_setpoints());
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);
    const int row = static_cast<int>(m.branches.size()) - 1;
    CHECK(sc.di_dx.row(row).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lossless network has zero loss-SC rows at no load") {
    NetworkModel m = grid8(LossParams{});
    SetpointSet sp = SetpointSet::zeros(8);
    sp.v_mag[2] = 1.0;
    sp.v_mag[5] = 1.0;
    const Solved s = solved(m, sp);
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);
    // At the flat no-load point every flow is zero: loss gradients vanish.
    CHECK(sc.dploss_dx.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sc.dqloss_dx.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("self-consistency: SC prediction error is second order in the step") {
    const Solved s = solved(grid8(), grid8_setpoints());
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);
    const ControlVariable x{ControlKind::BusP, 1};
    const int col = sc.index_of(x);

    auto resolve = [&](double dp) {
        SetpointSet sp = s.sp;
        sp.p[1] += dp;
        SolveOptions opt;
        opt.tolerance = 1e-12;
        const LoadflowResult lf = solve(s.model, sp, opt, &s.state);
        REQUIRE(lf.converged);
        return lf.state;
    };

    double prev_err = 0.0;
    for (const double dp : {1e-2, 1e-3}) {
        const GridState st = resolve(dp);
        double err = 0.0;
        for (const Bus& b : s.model.buses) {
            const double actual = b.kind == BusKind::Ac ? std::abs(st.e_ac[b.id])
                                                        : st.e_dc[s.model.dc_local(b.id)];
            const double base = b.kind == BusKind::Ac ? std::abs(s.state.e_ac[b.id])
                                                      : s.state.e_dc[s.model.dc_local(b.id)];
            err = std::max(err, std::abs(base + sc.de_dx(b.id, col) * dp - actual));
        }
        if (prev_err > 0.0) {
            // One decade smaller step, roughly two decades smaller error.
            CHECK(err < prev_err / 30.0);
        }
        prev_err = err;
    }
}

TEST_CASE("congested line current falls when the relieving IC absorbs more") {
    const NetworkModel m = load_network(data_path("cigre27_network.json"));
    SetpointSet sp = SetpointSet::zeros(m.buses.size());
    sp.v_mag[0] = 1.0;
    sp.p[10] = 0.12;   // B11 PV exporting hard
    sp.p[4] = -0.06;
    sp.q[18] = 0.0;
    sp.v_mag[21] = 0.9;
    sp.p[19] = -0.02;  // IC2 at B20 absorbing lightly
    sp.p[26] = -0.04;
    const Solved s = solved(m, sp);
    const SensitivityMatrices sc = compute_sensitivities(s.model, s.adm, s.state);

    int b10_b11 = -1;
    for (std::size_t i = 0; i < m.branches.size(); ++i)
        if (m.branches[i].name == "B10-B11") b10_b11 = static_cast<int>(i);
    REQUIRE(b10_b11 >= 0);

    // More injection at B20 (the IC behind the congested line) means more
    // export through B10-B11; absorbing there relieves the line. The sign is
    // confirmed against a perturbed load flow.
    const double sens = sc.di_dx(b10_b11, sc.index_of({ControlKind::BusP, 19}));
    CHECK(sens > 0.0);

    SetpointSet sp2 = sp;
    sp2.p[19] -= 0.02; // absorb 2 kW more
    SolveOptions opt;
    opt.tolerance = 1e-12;
    const LoadflowResult lf2 = solve(m, sp2, opt, &s.state);
    REQUIRE(lf2.converged);
    const double i_before = std::abs(branch_current_from(m, s.state, m.branches[b10_b11]));
    const double i_after = std::abs(branch_current_from(m, lf2.state, m.branches[b10_b11]));
    CHECK(i_after < i_before);
}

TEST_CASE("27-bus sensitivities pass the finite-difference check in both topologies") {
    const NetworkModel m = load_network(data_path("cigre27_network.json"));
    SetpointSet sp = SetpointSet::zeros(m.buses.size());
    sp.v_mag[0] = 1.0;
    sp.p[4] = -0.08;
    sp.q[4] = -0.02;
    sp.p[10] = 0.10;
    sp.v_mag[21] = 0.9;
    sp.p[19] = -0.05;
    sp.p[25] = 0.06;
    sp.p[26] = -0.02;
    const FdCheckResult r = fd_check(m, sp);
    CHECK(r.max() < 1e-4);

    NetworkModel island = make_islanded(m, 0, 24);
    SetpointSet spi = sp;
    spi.p[0] = 0.0;
    spi.q[0] = 0.0;
    spi.v_mag[18] = 1.0;
    spi.v_mag[24] = 0.9;
    const FdCheckResult ri = fd_check(island, spi);
    CHECK(ri.max() < 1e-4);
}
