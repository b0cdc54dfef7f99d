#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hybridgrid {

using Complex = std::complex<double>;

/// Domain error raised by validation, file parsing and solver preconditions.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Per-unit normalisation bases. Derived quantities are always computed,
/// never stored, so the set cannot drift out of sync.
struct PerUnitBase {
    double power_w = 100e3;
    double voltage_ac_v = 400.0;
    double voltage_dc_v = 800.0;
    double frequency_hz = 50.0;

    double current_ac_a() const { return power_w / voltage_ac_v; }
    double current_dc_a() const { return power_w / voltage_dc_v; }
    double impedance_ac_ohm() const { return voltage_ac_v * voltage_ac_v / power_w; }
    double impedance_dc_ohm() const { return voltage_dc_v * voltage_dc_v / power_w; }

    void validate() const {
        if (power_w <= 0.0 || voltage_ac_v <= 0.0 || voltage_dc_v <= 0.0 || frequency_hz <= 0.0)
            throw Error("PerUnitBase: all base quantities must be strictly positive");
    }
};

constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle in degrees to (-180, 180].
inline double wrap_angle_deg(double deg) {
    double a = std::fmod(deg, 360.0);
    if (a <= -180.0) a += 360.0;
    if (a > 180.0) a -= 360.0;
    return a;
}

} // namespace hybridgrid
