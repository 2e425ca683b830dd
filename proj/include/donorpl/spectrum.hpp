#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "donorpl/exciton.hpp"
#include "donorpl/hyperfine.hpp"
#include "donorpl/lineshape.hpp"
#include "donorpl/polarization.hpp"
#include "donorpl/spin_system.hpp"

namespace donorpl {

/// One hyperfine component of a D0X -> D0 recombination line.
struct TransitionLine {
  int line_index = 0;   // 1..6
  HalfInt i_z;          // nuclear projection, unchanged by the transition
  HalfInt j_z;          // initial hole projection
  HalfInt s_z;          // final electron projection
  double photon_energy = 0.0;  // µeV, includes e_offset
  double intensity = 0.0;
  int final_level_label = 0;
};

/// How a product final state |s_z, I_z> is matched to D0 eigenstates.
enum class FinalStateMode {
  dominant,   // one line per component, to the level with that dominant character
  admixture,  // split over both levels of the F_z block by squared amplitude
};

struct SpectrumGrid {
  std::vector<double> energies;     // µeV, strictly ascending
  std::vector<double> intensities;

  std::size_t size() const { return energies.size(); }

  void validate() const {
    if (energies.size() != intensities.size())
      throw std::invalid_argument("spectrum grid: energy and intensity lengths differ");
    for (std::size_t i = 1; i < energies.size(); ++i)
      if (!(energies[i] > energies[i - 1]))
        throw std::invalid_argument("spectrum grid: energies must be strictly ascending (index " +
                                    std::to_string(i) + ")");
  }
};

using ChannelStrengths = std::array<double, 6>;
inline constexpr ChannelStrengths unit_strengths{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

/// All 6 x (2I+1) components with energies and relative intensities
/// (channel strength x D0X thermal occupation x nuclear population).
inline std::vector<TransitionLine> enumerate_lines(const SpinSystem& sys, const HoleParams& hole,
                                                   double field, double temperature,
                                                   const NuclearDistribution& dist,
                                                   const ChannelStrengths& strengths = unit_strengths,
                                                   FinalStateMode mode = FinalStateMode::dominant) {
  if (dist.spin != sys.nuclear_spin)
    throw std::invalid_argument("nuclear distribution spin does not match the donor");
  for (double s : strengths)
    if (!(s >= 0.0)) throw std::invalid_argument("channel strengths must be >= 0");

  const auto levels = hyperfine_levels(sys, field);
  const auto xl = exciton_levels(hole, field);
  const auto occupation = exciton_thermal_populations(xl, temperature);
  const auto channels = allowed_channels(sys, hole, field);

  std::vector<TransitionLine> out;
  out.reserve(static_cast<std::size_t>(6 * sys.nuclear_multiplicity()) *
              (mode == FinalStateMode::admixture ? 2 : 1));
  for (const auto& ch : channels) {
    const std::size_t hx = hole_index(ch.j_z);
    const double base = strengths[static_cast<std::size_t>(ch.line_index - 1)] * occupation[hx];
    for (HalfInt iz = -sys.nuclear_spin; iz <= sys.nuclear_spin; iz = iz + HalfInt::from_int(1)) {
      const double weight = base * dist.at(iz);
      if (mode == FinalStateMode::dominant) {
        const auto* lvl = find_level(levels, ch.s_z, iz);
        out.push_back({ch.line_index, iz, ch.j_z, ch.s_z,
                       xl[hx].energy - lvl->energy + hole.e_offset, weight, lvl->label});
        continue;
      }
      const HalfInt f_z = ch.s_z + iz;
      for (const auto& lvl : levels) {
        if (lvl.f_z != f_z) continue;
        const double amp = ch.s_z < HalfInt{} ? lvl.alpha : lvl.beta;
        if (amp == 0.0) continue;
        out.push_back({ch.line_index, iz, ch.j_z, ch.s_z,
                       xl[hx].energy - lvl.energy + hole.e_offset, weight * amp * amp,
                       lvl.label});
      }
    }
  }
  return out;
}

/// Uniform grid spanning the line energies +/- margin effective FWHMs.
inline std::vector<double> default_grid(std::span<const TransitionLine> lines,
                                        const LineshapeSpec& shape, std::size_t n = 2048,
                                        double margin = 15.0) {
  if (lines.empty()) throw std::invalid_argument("default_grid: no lines");
  if (n < 2) throw std::invalid_argument("default_grid: need at least 2 samples");
  auto [lo, hi] = std::minmax_element(lines.begin(), lines.end(), [](const auto& a, const auto& b) {
    return a.photon_energy < b.photon_energy;
  });
  const double pad = margin * shape.effective_fwhm();
  const double e0 = lo->photon_energy - pad;
  const double e1 = hi->photon_energy + pad;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = e0 + (e1 - e0) * static_cast<double>(i) / static_cast<double>(n - 1);
  return grid;
}

/// Adds scale x sum_lines intensity x profile(E - E_line) onto out. No
/// coverage check; lines are visited in the given order.
inline void accumulate_profile(std::span<const TransitionLine> lines, const PseudoVoigt& profile,
                               std::span<const double> energies, std::span<double> out,
                               double scale = 1.0) {
  const double w = profile.support();
  for (const auto& line : lines) {
    if (line.intensity == 0.0) continue;
    auto first = std::lower_bound(energies.begin(), energies.end(), line.photon_energy - w);
    auto last = std::upper_bound(first, energies.end(), line.photon_energy + w);
    const double a = scale * line.intensity;
    for (auto it = first; it != last; ++it) {
      const auto i = static_cast<std::size_t>(it - energies.begin());
      out[i] += a * profile(*it - line.photon_energy);
    }
  }
}

/// Renders lines on the given grid. The grid must cover every line energy
/// by +/- 10 effective FWHM.
inline SpectrumGrid synthesize(std::span<const TransitionLine> lines, const LineshapeSpec& shape,
                               std::vector<double> energies) {
  SpectrumGrid g{std::move(energies), {}};
  g.intensities.assign(g.energies.size(), 0.0);
  g.validate();
  if (g.energies.size() < 2) throw std::invalid_argument("synthesize: grid needs >= 2 points");
  const double need = 10.0 * shape.effective_fwhm();
  for (const auto& line : lines) {
    if (line.photon_energy - need < g.energies.front() ||
        line.photon_energy + need > g.energies.back())
      throw std::invalid_argument("synthesize: grid does not cover line at " +
                                  std::to_string(line.photon_energy) + " ueV +/- 10 FWHM");
  }
  const PseudoVoigt profile(shape);
  accumulate_profile(lines, profile, g.energies, g.intensities);
  return g;
}

inline SpectrumGrid synthesize(std::span<const TransitionLine> lines, const LineshapeSpec& shape) {
  return synthesize(lines, shape, default_grid(lines, shape));
}

/// Trapezoidal area of a sampled spectrum.
inline double integrate(const SpectrumGrid& g) {
  double s = 0.0;
  for (std::size_t i = 1; i < g.size(); ++i)
    s += 0.5 * (g.intensities[i] + g.intensities[i - 1]) * (g.energies[i] - g.energies[i - 1]);
  return s;
}

struct Envelope {
  int line_index = 0;
  double min_energy = 0.0;
  double max_energy = 0.0;
};

struct LineGapReport {
  std::vector<Envelope> envelopes;  // sorted by min_energy
  std::vector<double> gaps;         // next.min - current.max, adjacent pairs
  bool non_overlapping = false;
};

/// Extents of the six hyperfine envelopes and the gaps between neighbours.
inline LineGapReport line_gap_report(std::span<const TransitionLine> lines) {
  LineGapReport r;
  for (int idx = 1; idx <= 6; ++idx) {
    Envelope e{idx, 0.0, 0.0};
    bool any = false;
    for (const auto& l : lines) {
      if (l.line_index != idx) continue;
      if (!any) { e.min_energy = e.max_energy = l.photon_energy; any = true; }
      e.min_energy = std::min(e.min_energy, l.photon_energy);
      e.max_energy = std::max(e.max_energy, l.photon_energy);
    }
    if (any) r.envelopes.push_back(e);
  }
  std::sort(r.envelopes.begin(), r.envelopes.end(),
            [](const Envelope& a, const Envelope& b) { return a.min_energy < b.min_energy; });
  for (std::size_t i = 1; i < r.envelopes.size(); ++i)
    r.gaps.push_back(r.envelopes[i].min_energy - r.envelopes[i - 1].max_energy);
  r.non_overlapping = r.envelopes.size() == 6 &&
                      std::all_of(r.gaps.begin(), r.gaps.end(), [](double g) { return g > 0.0; });
  return r;
}

}  // namespace donorpl
