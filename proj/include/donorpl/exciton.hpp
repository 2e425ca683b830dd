#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "donorpl/constants.hpp"
#include "donorpl/half_int.hpp"
#include "donorpl/hyperfine.hpp"
#include "donorpl/spin_system.hpp"

namespace donorpl {

/// D0X hole Zeeman ladder and per-spectrum energy offset. The two bound
/// electrons form a singlet, so only the hole projection J_z splits D0X.
struct HoleParams {
  double g1 = 0.85;      // linear hole g-factor
  double g2 = 0.0;       // cubic correction, multiplies J_z^3
  double c_dia = 0.0;    // diamagnetic shift, µeV / T^2
  double e_offset = 0.0; // µeV, absorbs gap and localization energies
};

struct ExcitonLevel {
  HalfInt j_z;
  double energy = 0.0;  // µeV, excludes e_offset
};

/// Recombination channel D0X(j_z) -> D0(s_z) + photon.
struct TransitionChannel {
  int line_index = 0;  // 1..6, ascending photon energy
  HalfInt j_z;
  HalfInt s_z;
};

inline constexpr std::array<HalfInt, 4> hole_projections{
    HalfInt::from_twice(-3), HalfInt::from_twice(-1), HalfInt::from_twice(1),
    HalfInt::from_twice(3)};

inline std::array<ExcitonLevel, 4> exciton_levels(const HoleParams& h, double field) {
  if (!(field >= 0.0)) throw std::invalid_argument("magnetic field must be >= 0");
  std::array<ExcitonLevel, 4> out{};
  for (std::size_t k = 0; k < 4; ++k) {
    const double j = hole_projections[k].value();
    out[k] = {hole_projections[k],
              constants::bohr_magneton * field * (h.g1 * j + h.g2 * j * j * j) +
                  h.c_dia * field * field};
  }
  return out;
}

/// Boltzmann occupation of the four D0X levels, indexed as hole_projections.
inline std::array<double, 4> exciton_thermal_populations(const std::array<ExcitonLevel, 4>& levels,
                                                         double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const double kt = constants::boltzmann * temperature;
  double e_min = levels[0].energy;
  for (const auto& l : levels) e_min = std::min(e_min, l.energy);
  std::array<double, 4> p{};
  double z = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    p[k] = std::exp(-(levels[k].energy - e_min) / kt);
    z += p[k];
  }
  for (auto& x : p) x /= z;
  return p;
}

inline std::size_t hole_index(HalfInt j_z) { return static_cast<std::size_t>((j_z.twice() + 3) / 2); }

/// The six (j_z, s_z) pairs with |j_z - s_z| <= 1, in the canonical order
/// used when energies tie (B = 0).
inline std::array<TransitionChannel, 6> canonical_channels() {
  const HalfInt down = -half;
  const HalfInt up = half;
  return {TransitionChannel{1, HalfInt::from_twice(-3), down},
          TransitionChannel{2, HalfInt::from_twice(-1), down},
          TransitionChannel{3, HalfInt::from_twice(1), down},
          TransitionChannel{4, HalfInt::from_twice(-1), up},
          TransitionChannel{5, HalfInt::from_twice(1), up},
          TransitionChannel{6, HalfInt::from_twice(3), up}};
}

/// Mean photon energy of a channel over its 2I+1 nuclear components,
/// relative to e_offset.
inline double channel_mean_energy(const SpinSystem& sys, const HoleParams& h, double field,
                                  const TransitionChannel& ch,
                                  const std::vector<HyperfineLevel>& levels) {
  const auto xl = exciton_levels(h, field);
  const double e_x = xl[hole_index(ch.j_z)].energy;
  double sum = 0.0;
  int n = 0;
  for (HalfInt iz = -sys.nuclear_spin; iz <= sys.nuclear_spin; iz = iz + HalfInt::from_int(1)) {
    const auto* lvl = find_level(levels, ch.s_z, iz);
    if (lvl == nullptr) throw std::logic_error("missing hyperfine level for channel");
    sum += e_x - lvl->energy;
    ++n;
  }
  return sum / n;
}

/// Six dipole-allowed channels, line_index assigned by ascending mean
/// photon energy. At B = 0 the canonical order is kept.
inline std::array<TransitionChannel, 6> allowed_channels(const SpinSystem& sys, const HoleParams& h,
                                                         double field) {
  auto ch = canonical_channels();
  if (field <= 0.0) return ch;
  const auto levels = hyperfine_levels(sys, field);
  std::array<double, 6> mean{};
  for (std::size_t k = 0; k < 6; ++k) mean[k] = channel_mean_energy(sys, h, field, ch[k], levels);
  std::array<std::size_t, 6> order{0, 1, 2, 3, 4, 5};
  std::stable_sort(order.begin(), order.end(),
                   [&mean](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
  std::array<TransitionChannel, 6> out{};
  for (std::size_t r = 0; r < 6; ++r) {
    out[r] = ch[order[r]];
    out[r].line_index = static_cast<int>(r) + 1;
  }
  return out;
}

}  // namespace donorpl
