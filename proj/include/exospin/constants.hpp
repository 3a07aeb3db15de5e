// Physical reference constants (SI units).
#pragma once

#include <numbers>

namespace exospin::constants {

/// Reduced Planck constant [J s]
inline constexpr double hbar = 1.054571817e-34;
/// Nuclear magneton [J/T]
inline constexpr double mu_N = 5.0507837e-27;
/// Bohr magneton [J/T]
inline constexpr double mu_B = 9.2740100e-24;
/// Boltzmann constant [J/K]
inline constexpr double k_B = 1.380649e-23;
/// Geocentric gravitational constant [m^3/s^2]
inline constexpr double GM_earth = 3.986004418e14;
/// Earth sidereal rotation rate [rad/s]
inline constexpr double omega_earth = 7.2921159e-5;
/// Sidereal day [s]
inline constexpr double sidereal_day = 86164.1;
/// Solar day [s]
inline constexpr double solar_day = 86400.0;

/// Geomagnetic reference radius (Earth mean radius) [m]
inline constexpr double earth_reference_radius = 6371200.0;
/// Mean Earth radius used as the outer bound of the spin source [m]
inline constexpr double earth_surface_radius = 6371000.0;
/// Core-mantle boundary; harmonic field expansion is invalid below it [m]
inline constexpr double core_mantle_boundary = 3.48e6;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double deg2rad = std::numbers::pi / 180.0;
inline constexpr double rad2deg = 180.0 / std::numbers::pi;

} // namespace exospin::constants
