#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "donorpl/kinetics.hpp"

namespace donorpl {

struct StochasticResult {
  std::vector<double> times;
  std::size_t walkers = 0;
  // occupancy[t][state]: number of walkers in the state at grid time t
  std::vector<std::vector<std::uint64_t>> occupancy;
  std::uint64_t flip_flops = 0;  // total flip-flop jumps up to the last grid time
  std::uint64_t jumps = 0;

  double fraction(std::size_t t, std::size_t state) const {
    return static_cast<double>(occupancy[t][state]) / static_cast<double>(walkers);
  }
  std::vector<double> marginal(const RateModel& m, std::size_t t) const {
    Eigen::VectorXd p(m.size());
    for (Eigen::Index k = 0; k < m.size(); ++k) p[k] = fraction(t, static_cast<std::size_t>(k));
    return m.marginal(p);
  }
  double mean_flip_flops() const { return static_cast<double>(flip_flops) / static_cast<double>(walkers); }
};

namespace detail {

struct WalkerTally {
  std::vector<std::vector<std::uint64_t>> occupancy;
  std::uint64_t flip_flops = 0;
  std::uint64_t jumps = 0;
};

// Each walker draws from its own engine seeded by (seed, walker index), so
// results do not depend on how walkers are split across threads.
inline void run_walkers(const RateModel& m, const std::vector<double>& initial_cdf,
                        const std::vector<double>& times, std::uint64_t seed, std::size_t first,
                        std::size_t last, WalkerTally& tally) {
  const auto n = static_cast<std::size_t>(m.size());
  tally.occupancy.assign(times.size(), std::vector<std::uint64_t>(n, 0));
  std::vector<double> out_rate(n);
  for (std::size_t i = 0; i < n; ++i) out_rate[i] = -m.generator(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));

  for (std::size_t w = first; w < last; ++w) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(static_cast<std::uint64_t>(w) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::size_t state = static_cast<std::size_t>(
        std::upper_bound(initial_cdf.begin(), initial_cdf.end(), unit(rng)) - initial_cdf.begin());
    state = std::min(state, n - 1);
    double t = 0.0;
    std::size_t next_grid = 0;
    while (next_grid < times.size()) {
      const double rate = out_rate[state];
      const double dwell = rate > 0.0 ? -std::log1p(-unit(rng)) / rate : std::numeric_limits<double>::infinity();
      const double t_jump = t + dwell;
      while (next_grid < times.size() && times[next_grid] < t_jump) ++tally.occupancy[next_grid++][state];
      if (next_grid >= times.size()) break;
      // choose the destination proportional to its rate
      double u = unit(rng) * rate;
      std::size_t dest = state;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == state) continue;
        const double r = m.generator(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(state));
        if (r <= 0.0) continue;
        dest = j;
        if (u < r) break;
        u -= r;
      }
      const double ff = m.flip_flop(static_cast<Eigen::Index>(dest), static_cast<Eigen::Index>(state));
      if (ff > 0.0) {
        const double total = m.generator(static_cast<Eigen::Index>(dest), static_cast<Eigen::Index>(state));
        if (ff >= total || unit(rng) * total < ff) ++tally.flip_flops;
      }
      ++tally.jumps;
      state = dest;
      t = t_jump;
    }
  }
}

}  // namespace detail

/// Continuous-time Markov jump simulation of independent walkers. Output
/// is bitwise reproducible for a given seed, independent of `threads`.
inline StochasticResult stochastic_oracle(const RateModel& m, const Eigen::VectorXd& initial,
                                          const std::vector<double>& times, std::size_t n_walkers,
                                          std::uint64_t seed, unsigned threads = 0) {
  validate_distribution(m, initial);
  if (n_walkers == 0) throw std::invalid_argument("stochastic_oracle: n_walkers must be >= 1");
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
      throw std::invalid_argument("stochastic_oracle: time grid must be ascending from 0");

  std::vector<double> cdf(static_cast<std::size_t>(m.size()));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < m.size(); ++k) cdf[static_cast<std::size_t>(k)] = acc += initial[k];
  for (double& c : cdf) c /= acc;

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_walkers));
  std::vector<detail::WalkerTally> tallies(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n_walkers + threads - 1) / threads;
  for (unsigned k = 0; k < threads; ++k) {
    const std::size_t first = k * chunk;
    const std::size_t last = std::min(n_walkers, first + chunk);
    pool.emplace_back([&, k, first, last] { detail::run_walkers(m, cdf, times, seed, first, last, tallies[k]); });
  }
  for (auto& t : pool) t.join();

  StochasticResult res;
  res.times = times;
  res.walkers = n_walkers;
  res.occupancy.assign(times.size(), std::vector<std::uint64_t>(static_cast<std::size_t>(m.size()), 0));
  for (const auto& tally : tallies) {
    for (std::size_t t = 0; t < times.size(); ++t)
      for (std::size_t s = 0; s < res.occupancy[t].size(); ++s) res.occupancy[t][s] += tally.occupancy[t][s];
    res.flip_flops += tally.flip_flops;
    res.jumps += tally.jumps;
  }
  return res;
}

}  // namespace donorpl
