#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "donorpl/constants.hpp"
#include "donorpl/half_int.hpp"
#include "donorpl/spin_system.hpp"

namespace donorpl {

/// One eigenstate of H = A I.S + g_e muB B S_z - g_n muN B I_z.
///
/// Within the F_z block the state is
///   alpha |S_z=-1/2, I_z=f_z+1/2> + beta |S_z=+1/2, I_z=f_z-1/2>.
struct HyperfineLevel {
  int label = 0;        // 1-based rank in ascending energy
  double energy = 0.0;  // µeV
  HalfInt f_z;
  double alpha = 0.0;
  double beta = 0.0;
  HalfInt branch;       // dominant S_z
  HalfInt dominant_iz;  // I_z of the dominant product state
};

namespace detail {

struct Block {
  double diag_down = 0.0;  // <alpha|H|alpha>
  double diag_up = 0.0;    // <beta|H|beta>
  double coupling = 0.0;
  bool has_down = false;
  bool has_up = false;
};

inline Block fz_block(const SpinSystem& sys, HalfInt f_z, double field) {
  const double a = sys.hyperfine;
  const double zeeman_e = sys.electron_g * constants::bohr_magneton * field;
  const double zeeman_n = sys.nuclear_g * constants::nuclear_magneton * field;
  const HalfInt iz_down = f_z + half;
  const HalfInt iz_up = f_z - half;
  const HalfInt spin = sys.nuclear_spin;

  Block b;
  b.has_down = iz_down <= spin && iz_down >= -spin;
  b.has_up = iz_up <= spin && iz_up >= -spin;
  b.diag_down = -0.5 * a * iz_down.value() - 0.5 * zeeman_e - zeeman_n * iz_down.value();
  b.diag_up = 0.5 * a * iz_up.value() + 0.5 * zeeman_e - zeeman_n * iz_up.value();
  if (b.has_down && b.has_up) {
    const double j = spin.value() + 0.5;
    const double m = f_z.value();
    b.coupling = 0.5 * a * std::sqrt(std::max(0.0, j * j - m * m));
  }
  return b;
}

// Assigns branch and dominant I_z from the amplitudes. Exact ties (B = 0,
// f_z = 0) send the lower eigenvalue of the pair to the S_z = -1/2 branch.
inline void assign_branch(HyperfineLevel& lvl, bool is_lower_of_pair) {
  const double da = std::abs(lvl.alpha);
  const double db = std::abs(lvl.beta);
  bool down = da > db;
  if (std::abs(da - db) <= 1e-14) down = is_lower_of_pair;
  lvl.branch = down ? -half : half;
  lvl.dominant_iz = down ? lvl.f_z + half : lvl.f_z - half;
}

}  // namespace detail

/// Closed-form (Breit-Rabi) eigenstructure, solved block by block in F_z.
/// Levels are returned in ascending energy with labels 1..2(2I+1).
inline std::vector<HyperfineLevel> hyperfine_levels(const SpinSystem& sys, double field) {
  if (!(field >= 0.0)) throw std::invalid_argument("magnetic field must be >= 0");
  std::vector<HyperfineLevel> out;
  out.reserve(static_cast<std::size_t>(sys.level_count()));

  const HalfInt f_max = sys.nuclear_spin + half;
  for (HalfInt f = -f_max; f <= f_max; f = f + HalfInt::from_int(1)) {
    const auto b = detail::fz_block(sys, f, field);
    if (!b.has_up) {
      out.push_back({0, b.diag_down, f, 1.0, 0.0, -half, f + half});
      continue;
    }
    if (!b.has_down) {
      out.push_back({0, b.diag_up, f, 0.0, 1.0, half, f - half});
      continue;
    }
    const double mean = 0.5 * (b.diag_down + b.diag_up);
    const double half_diff = 0.5 * (b.diag_down - b.diag_up);
    const double radius = std::hypot(half_diff, b.coupling);
    const double det = b.diag_down * b.diag_up - b.coupling * b.coupling;
    double upper = mean + radius;
    double lower = mean - radius;
    // Recover the smaller-magnitude root from the determinant.
    if (mean >= 0.0 && upper != 0.0) lower = det / upper;
    if (mean < 0.0 && lower != 0.0) upper = det / lower;

    const double theta = 0.5 * std::atan2(b.coupling, half_diff);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    HyperfineLevel hi{0, upper, f, c, s, {}, {}};
    HyperfineLevel lo{0, lower, f, -s, c, {}, {}};
    detail::assign_branch(hi, false);
    detail::assign_branch(lo, true);
    out.push_back(lo);
    out.push_back(hi);
  }

  std::stable_sort(out.begin(), out.end(), [](const HyperfineLevel& x, const HyperfineLevel& y) {
    if (x.energy != y.energy) return x.energy < y.energy;
    if (x.f_z != y.f_z) return x.f_z < y.f_z;
    return x.branch < y.branch;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].label = static_cast<int>(i) + 1;
  return out;
}

/// Energy gap between the F = I + 1/2 and F = I - 1/2 manifolds at B = 0.
inline double zero_field_splitting(const SpinSystem& sys) {
  return sys.hyperfine * (sys.nuclear_spin.value() + 0.5);
}

/// Level whose dominant product state is |S_z = branch, I_z = iz>.
inline const HyperfineLevel* find_level(const std::vector<HyperfineLevel>& levels, HalfInt branch,
                                        HalfInt iz) {
  for (const auto& lvl : levels)
    if (lvl.branch == branch && lvl.dominant_iz == iz) return &lvl;
  return nullptr;
}

/// True while the two unmixed states sit at the top of their branches,
/// i.e. carry labels 2I+1 and 2(2I+1) (10 and 20 for Bi).
inline bool pure_state_ordering_nominal(const SpinSystem& sys,
                                        const std::vector<HyperfineLevel>& levels) {
  const HalfInt f_max = sys.nuclear_spin + half;
  const int n = sys.nuclear_multiplicity();
  bool ok = true;
  for (const auto& lvl : levels) {
    if (lvl.f_z == -f_max) ok = ok && lvl.label == n;
    if (lvl.f_z == f_max) ok = ok && lvl.label == 2 * n;
  }
  return ok;
}

}  // namespace donorpl
