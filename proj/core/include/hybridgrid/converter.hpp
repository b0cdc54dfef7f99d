#pragma once

#include <Eigen/Dense>

#include "hybridgrid/state.hpp"
#include "hybridgrid/types.hpp"

namespace hybridgrid {

/// Interfacing-converter loss parameters, all in per-unit.
/// V0 and R0 describe the conduction drop, (u, v, w) the switching-energy
/// polynomial, E_nom the DC voltage the switching energies were identified
/// at, f_sw a dimensionless switching-frequency multiplier.
struct LossParams {
    double v0 = 0.0;
    double r0 = 0.0;
    double u = 0.0;
    double v = 0.0;
    double w = 0.0;
    double e_nom = 1.0;
    double f_sw = 1.0;

    void validate() const {
        if (v0 < 0 || r0 < 0 || u < 0 || v < 0 || w < 0 || f_sw < 0)
            throw Error("LossParams: coefficients must be nonnegative");
        if (e_nom <= 0) throw Error("LossParams: e_nom must be positive");
    }
};

/// Real and imaginary parts of the converter AC-side current phasor.
struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;

    double current_mag() const { return std::hypot(alpha, beta); }
};

/// Which derivative set the loss partials (and everything built on them)
/// use. `Simplified` keeps conduction terms only on the AC side and the
/// DC-current polynomial terms on the DC side. `Full` is the exact
/// gradient of loss_from_state and is what the finite-difference checks
/// and the sensitivity system require.
enum class LossDerivativeMode { Simplified, Full };

/// Partial derivatives of the converter loss with respect to the six grid
/// states it touches: the AC neighbour i, the converter AC bus l and the
/// DC pair (k, j).
struct LossPartials {
    double d_ei_re = 0.0;
    double d_ei_im = 0.0;
    double d_el_re = 0.0;
    double d_el_im = 0.0;
    double d_ek = 0.0;
    double d_ej = 0.0;
};

/// Total converter loss for a given AC current magnitude and DC voltage:
/// conduction (2*sqrt(2)*V0/pi)|I| + R0|I|^2 plus switching
/// f_sw*(e_k/E_nom)*(u + v|I| + w|I|^2).
double loss_power(double i_ac_mag, double e_k, const LossParams& p);

/// Converter AC current in rectangular parts, from the admittance row of the
/// converter bus l and its single AC neighbour i.
AlphaBeta alpha_beta(const GridState& state, const Eigen::MatrixXcd& yac, int l, int i);

/// Loss evaluated purely from the grid state (current magnitude via
/// alpha_beta, DC voltage taken from the state).
double loss_from_state(const GridState& state, const Eigen::MatrixXcd& yac, int l, int i,
                       int k_local, const LossParams& p);

/// The six loss partials at the given state. Below |I| = 1e-6 p.u. the
/// conduction kink is handled by clamping the V0 term's derivative to zero.
LossPartials loss_partials(const GridState& state, const Eigen::MatrixXcd& yac,
                           const Eigen::MatrixXd& ydc, int l, int i, int k_local, int j_local,
                           const LossParams& p, LossDerivativeMode mode);

/// Current magnitude below which the conduction derivative is clamped.
inline constexpr double kLossCurrentClamp = 1e-6;

} // namespace hybridgrid
