#pragma once

#include <vector>

#include "hybridgrid/types.hpp"

namespace hybridgrid {

/// Rectangular-coordinate electrical state of the hybrid grid: one complex
/// phasor per AC bus plus one real voltage per DC bus, all in per-unit.
/// AC entries are indexed by AC bus id, DC entries by (bus id - n_ac).
struct GridState {
    std::vector<Complex> e_ac;
    std::vector<double> e_dc;

    static GridState flat(std::size_t n_ac, std::size_t n_dc, double dc_voltage = 1.0) {
        GridState s;
        s.e_ac.assign(n_ac, Complex(1.0, 0.0));
        s.e_dc.assign(n_dc, dc_voltage);
        return s;
    }

    double ac_mag(std::size_t i) const { return std::abs(e_ac[i]); }
    double ac_angle_deg(std::size_t i) const { return rad_to_deg(std::arg(e_ac[i])); }
};

} // namespace hybridgrid
