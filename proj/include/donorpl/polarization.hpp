#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "donorpl/constants.hpp"
#include "donorpl/half_int.hpp"

namespace donorpl {

/// Populations over I_z = -I, ..., +I (index 0 is I_z = -I).
struct NuclearDistribution {
  HalfInt spin;
  std::vector<double> populations;

  double at(HalfInt iz) const {
    return populations.at(static_cast<std::size_t>((iz + spin).twice() / 2));
  }
  static NuclearDistribution uniform(HalfInt spin) {
    const auto n = static_cast<std::size_t>(spin.twice() + 1);
    return {spin, std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }
};

namespace detail {
inline void check_step_polarization(double p) {
  if (!(std::abs(p) < 1.0)) throw std::invalid_argument("step polarization must satisfy |P| < 1");
}
}  // namespace detail

/// Geometric ladder with constant per-step polarization
/// P = [N(m+1) - N(m)] / [N(m+1) + N(m)]. P < 0 piles population toward
/// I_z = -I.
inline NuclearDistribution distribution_from_step(double p, HalfInt spin) {
  detail::check_step_polarization(p);
  const auto n = static_cast<std::size_t>(spin.twice() + 1);
  // Build from the heavy end so large |P| never overflows.
  const double ratio = (1.0 + p) / (1.0 - p);
  std::vector<double> pop(n);
  double total = 0.0;
  if (ratio <= 1.0) {
    double w = 1.0;
    for (std::size_t k = 0; k < n; ++k, w *= ratio) { pop[k] = w; total += w; }
  } else {
    double w = 1.0;
    for (std::size_t k = n; k-- > 0; w /= ratio) { pop[k] = w; total += w; }
  }
  for (auto& x : pop) x /= total;
  return {spin, std::move(pop)};
}

/// Fraction in I_z = -I: (1 - r) / (1 - r^(2I+1)), r = (1+P)/(1-P).
inline double fraction_at_min(double p, HalfInt spin) {
  detail::check_step_polarization(p);
  const int n = spin.twice() + 1;
  if (p == 0.0) return 1.0 / n;
  const double r = (1.0 + p) / (1.0 - p);
  return -std::expm1(std::log(r)) / -std::expm1(n * std::log(r));
}

/// d fraction_at_min / dP, analytic.
inline double fraction_at_min_derivative(double p, HalfInt spin) {
  detail::check_step_polarization(p);
  const int n = spin.twice() + 1;
  const double r = (1.0 + p) / (1.0 - p);
  const double dr_dp = 2.0 / ((1.0 - p) * (1.0 - p));
  double df_dr;
  if (std::abs(r - 1.0) < 1e-6) {
    // Series of (1-r)/(1-r^n) about r = 1.
    df_dr = -(n - 1.0) / (2.0 * n);
  } else {
    const double rn = std::pow(r, n);
    const double den = 1.0 - rn;
    df_dr = (-(den) + (1.0 - r) * n * std::pow(r, n - 1)) / (den * den);
  }
  return df_dr * dr_dp;
}

/// Thermal D0 electron polarization; negative when S_z = -1/2 dominates.
inline double equilibrium_electron_polarization(double field, double temperature,
                                                double electron_g = 2.0) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  return -std::tanh(electron_g * constants::bohr_magneton * field /
                    (2.0 * constants::boltzmann * temperature));
}

}  // namespace donorpl
