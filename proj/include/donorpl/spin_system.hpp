#pragma once

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "donorpl/constants.hpp"
#include "donorpl/half_int.hpp"

namespace donorpl {

/// Neutral donor: electron spin 1/2 coupled to a nuclear spin I.
struct SpinSystem {
  std::string label;
  HalfInt nuclear_spin;       // I
  double hyperfine = 0.0;     // A, µeV
  double electron_g = 2.0;    // g_e
  double nuclear_g = 0.0;     // g_n, nuclear Zeeman term off by default

  int nuclear_multiplicity() const { return nuclear_spin.twice() + 1; }
  int level_count() const { return 2 * nuclear_multiplicity(); }
};

/// Parameters for a user-defined donor.
struct DonorSpec {
  std::string label = "custom";
  double nuclear_spin = 0.5;
  double hyperfine_uev = 0.0;
  double electron_g = 2.0;
  double nuclear_g = 0.0;
};

inline constexpr double bi_hyperfine_mhz = 1475.4;
inline constexpr double p_hyperfine_mhz = 117.53;

inline SpinSystem make_system(const DonorSpec& spec) {
  const double twice = 2.0 * spec.nuclear_spin;
  const long rounded = std::lround(twice);
  if (!std::isfinite(twice) || std::abs(twice - static_cast<double>(rounded)) > 1e-9 || rounded < 1)
    throw std::invalid_argument("nuclear spin must be a positive half-integer, got " +
                                std::to_string(spec.nuclear_spin));
  if (!(spec.hyperfine_uev > 0.0) || !std::isfinite(spec.hyperfine_uev))
    throw std::invalid_argument("hyperfine constant must be positive, got " +
                                std::to_string(spec.hyperfine_uev));
  if (!std::isfinite(spec.electron_g) || !std::isfinite(spec.nuclear_g))
    throw std::invalid_argument("g-factors must be finite");
  return SpinSystem{spec.label, HalfInt::from_twice(static_cast<int>(rounded)), spec.hyperfine_uev,
                    spec.electron_g, spec.nuclear_g};
}

/// Presets "Bi" (209Bi, I = 9/2) and "P" (31P, I = 1/2). Matching is
/// case-insensitive.
inline SpinSystem make_system(std::string_view preset, double electron_g = 2.0) {
  std::string key(preset);
  for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "bi")
    return make_system(DonorSpec{"Bi", 4.5, constants::mhz_to_uev(bi_hyperfine_mhz), electron_g, 0.0});
  if (key == "p")
    return make_system(DonorSpec{"P", 0.5, constants::mhz_to_uev(p_hyperfine_mhz), electron_g, 0.0});
  throw std::invalid_argument("unknown donor preset '" + std::string(preset) +
                              "' (expected Bi or P)");
}

}  // namespace donorpl
