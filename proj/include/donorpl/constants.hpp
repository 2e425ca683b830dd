#pragma once

// Unit system: energies in micro-electronvolts, fields in tesla,
// temperatures in kelvin, rates in 1/s.

namespace donorpl::constants {

inline constexpr double bohr_magneton = 57.883818;      // µeV / T
inline constexpr double nuclear_magneton = 0.031524512; // µeV / T
inline constexpr double boltzmann = 86.173333;          // µeV / K
inline constexpr double planck = 4.1356677e-3;          // µeV / MHz

inline constexpr double mhz_to_uev(double mhz) { return mhz * planck; }
inline constexpr double uev_to_mhz(double uev) { return uev / planck; }

inline constexpr double mev_to_uev = 1.0e3;

}  // namespace donorpl::constants
