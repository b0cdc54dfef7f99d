#include "hybridgrid/converter.hpp"

namespace hybridgrid {

namespace {
constexpr double kConductionPrefactor = 2.0 * std::numbers::sqrt2 / kPi;
}

double loss_power(double i_ac_mag, double e_k, const LossParams& p) {
    if (i_ac_mag < 0.0) throw Error("loss_power: negative current magnitude");
    if (e_k <= 0.0) throw Error("loss_power: DC voltage must be positive");
    const double conduction = kConductionPrefactor * p.v0 * i_ac_mag + p.r0 * i_ac_mag * i_ac_mag;
    const double switching =
        p.f_sw * (e_k / p.e_nom) * (p.u + p.v * i_ac_mag + p.w * i_ac_mag * i_ac_mag);
    return conduction + switching;
}

AlphaBeta alpha_beta(const GridState& state, const Eigen::MatrixXcd& yac, int l, int i) {
    const Complex current = yac(l, l) * state.e_ac[l] + yac(l, i) * state.e_ac[i];
    return AlphaBeta{current.real(), current.imag()};
}

double loss_from_state(const GridState& state, const Eigen::MatrixXcd& yac, int l, int i,
                       int k_local, const LossParams& p) {
    const AlphaBeta ab = alpha_beta(state, yac, l, i);
    return loss_power(ab.current_mag(), state.e_dc[k_local], p);
}

LossPartials loss_partials(const GridState& state, const Eigen::MatrixXcd& yac,
                           const Eigen::MatrixXd& ydc, int l, int i, int k_local, int j_local,
                           const LossParams& p, LossDerivativeMode mode) {
    const AlphaBeta ab = alpha_beta(state, yac, l, i);
    const double alpha = ab.alpha;
    const double beta = ab.beta;
    const double i_mag = ab.current_mag();
    const bool clamped = i_mag < kLossCurrentClamp;

    const double g_ll = yac(l, l).real();
    const double b_ll = yac(l, l).imag();
    const double g_li = yac(l, i).real();
    const double b_li = yac(l, i).imag();

    // Factor multiplying d(|I|^2)/dE. The 1/(2|I|) pieces are subgradients
    // of the |I| kink and are clamped to zero near zero loading.
    double factor = p.r0;
    if (!clamped) factor += kConductionPrefactor * p.v0 / (2.0 * i_mag);

    const double e_k = state.e_dc[k_local];
    if (mode == LossDerivativeMode::Full) {
        double sw = p.f_sw * (e_k / p.e_nom) * p.w;
        if (!clamped) sw += p.f_sw * (e_k / p.e_nom) * p.v / (2.0 * i_mag);
        factor += sw;
    }

    LossPartials out;
    out.d_ei_re = factor * (2.0 * alpha * g_li + 2.0 * beta * b_li);
    out.d_ei_im = factor * (-2.0 * alpha * b_li + 2.0 * beta * g_li);
    out.d_el_re = factor * (2.0 * alpha * g_ll + 2.0 * beta * b_ll);
    out.d_el_im = factor * (-2.0 * alpha * b_ll + 2.0 * beta * g_ll);

    if (mode == LossDerivativeMode::Full) {
        // Exact gradient of loss_from_state: the switching term depends on
        // the DC state only through e_k / E_nom.
        out.d_ek = p.f_sw / p.e_nom * (p.u + p.v * i_mag + p.w * i_mag * i_mag);
        out.d_ej = 0.0;
    } else {
        // Published form: switching polynomial in the DC-side current
        // I_dc = G_kk E_k + G_kj E_j.
        const double g_kk = ydc(k_local, k_local);
        const double g_kj = ydc(k_local, j_local);
        const double i_dc = g_kk * e_k + g_kj * state.e_dc[j_local];
        out.d_ek = p.f_sw * (p.v * g_kk + 2.0 * p.w * g_kk * i_dc);
        out.d_ej = p.f_sw * (p.v * g_kj + 2.0 * p.w * g_kj * i_dc);
    }
    return out;
}

} // namespace hybridgrid
