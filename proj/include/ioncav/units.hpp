#pragma once

// Unit conventions used throughout the library:
//   - every rate and angular frequency is stored in rad/s,
//   - every time is stored in seconds,
//   - mirror transmissions/losses are dimensionless fractions (ppm at the
//     config boundary), efficiencies are dimensionless probabilities.
// Configs and the CLI quote rates as "2pi MHz" (field suffix _2pi_mhz);
// conversion happens once, at the boundary.

namespace ioncav {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double speed_of_light = 2.99792458e8; // m/s

// 2pi*f[MHz] -> rad/s
inline constexpr double rad_from_2pi_mhz(double f_mhz) { return two_pi * f_mhz * 1e6; }
inline constexpr double to_2pi_mhz(double rad_per_s) { return rad_per_s / (two_pi * 1e6); }

inline constexpr double seconds_from_ns(double ns) { return ns * 1e-9; }
inline constexpr double seconds_from_us(double us) { return us * 1e-6; }
inline constexpr double ns_from_seconds(double s) { return s * 1e9; }

inline constexpr double fraction_from_ppm(double ppm) { return ppm * 1e-6; }

} // namespace ioncav
