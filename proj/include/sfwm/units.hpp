#pragma once

#include <numbers>

namespace sfwm::units {

inline constexpr double speed_of_light = 299792458.0;  // m/s

/// Angular frequency (rad/s) of a vacuum wavelength (m).
inline double omega_from_wavelength(double wavelength) {
    return 2.0 * std::numbers::pi * speed_of_light / wavelength;
}

inline double wavelength_from_omega(double omega) {
    return 2.0 * std::numbers::pi * speed_of_light / omega;
}

/// Converts a wavelength width (m) at a carrier wavelength (m) into an
/// angular-frequency width (rad/s).
inline double omega_width_from_wavelength_width(double d_lambda, double wavelength) {
    return 2.0 * std::numbers::pi * speed_of_light * d_lambda / (wavelength * wavelength);
}

/// Propagation constant (1/m) of a mode with effective index n_eff at ω.
inline double wavenumber(double n_eff, double omega) {
    return n_eff * omega / speed_of_light;
}

}  // namespace sfwm::units
