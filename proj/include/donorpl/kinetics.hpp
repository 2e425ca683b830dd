#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "donorpl/hyperfine.hpp"
#include "donorpl/polarization.hpp"

namespace donorpl {

enum class KineticsModel { flip_flop, overhauser };

struct KineticsParams {
  KineticsModel model = KineticsModel::flip_flop;
  double capture_rate = 1e5;    // 1/s
  double eta_so = 0.0;          // spin-orbit direct-capture weight
  std::optional<double> fe_polarization;  // defaults to P_e(B, T)
  double w_rate = 1e3;          // 1/s
  double r_rate = 0.0;          // 1/s, Overhauser model
  double r_temperature = 1e4;   // K, Overhauser model
  double field = 6.0;           // T
  double temperature = 1.5;     // K

  double fe_pol(double electron_g) const {
    return fe_polarization ? *fe_polarization
                           : equilibrium_electron_polarization(field, temperature, electron_g);
  }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("kinetics: ") + what);
    };
    need(capture_rate >= 0 && std::isfinite(capture_rate), "capture_rate must be >= 0");
    need(eta_so >= 0 && std::isfinite(eta_so), "eta_so must be >= 0");
    need(w_rate >= 0 && std::isfinite(w_rate), "w_rate must be >= 0");
    need(r_rate >= 0 && std::isfinite(r_rate), "r_rate must be >= 0");
    need(r_temperature > 0, "r_temperature must be > 0");
    need(field >= 0, "field must be >= 0");
    need(temperature > 0, "temperature must be > 0");
    need(!fe_polarization || std::abs(*fe_polarization) <= 1.0, "|fe_polarization| must be <= 1");
  }
};

/// Master-equation generator over the hyperfine states, indexed by
/// label - 1. generator(j, i) is the rate i -> j; columns sum to zero.
struct RateModel {
  std::vector<HyperfineLevel> levels;
  HalfInt nuclear_spin;
  Eigen::MatrixXd generator;
  Eigen::MatrixXd flip_flop;      // flip-flop part of the off-diagonal rates
  Eigen::VectorXd capture_flux;   // total capture rate out of each state, incl. flux-only channels

  Eigen::Index size() const { return generator.rows(); }

  /// Index of I_z within a marginal vector (I_z = -I at 0).
  std::size_t iz_index(HalfInt iz) const {
    return static_cast<std::size_t>((iz + nuclear_spin).twice() / 2);
  }
  std::size_t nuclear_multiplicity() const {
    return static_cast<std::size_t>(nuclear_spin.twice() + 1);
  }

  std::vector<double> marginal(const Eigen::VectorXd& populations) const {
    std::vector<double> out(nuclear_multiplicity(), 0.0);
    for (std::size_t k = 0; k < levels.size(); ++k)
      out[iz_index(levels[k].dominant_iz)] += populations[static_cast<Eigen::Index>(k)];
    return out;
  }

  std::optional<std::size_t> find(HalfInt branch, HalfInt iz) const {
    for (std::size_t k = 0; k < levels.size(); ++k)
      if (levels[k].branch == branch && levels[k].dominant_iz == iz) return k;
    return std::nullopt;
  }
};

namespace detail {

// Forward/backward rates between a lower and a higher state so that the
// total is `rate` and the ratio obeys detailed balance at T.
inline std::pair<double, double> detailed_balance(double rate, double gap, double temperature) {
  const double x = std::exp(-std::abs(gap) / (constants::boltzmann * temperature));
  return {rate * x / (1.0 + x), rate / (1.0 + x)};  // {up, down}
}

inline void add_rate(Eigen::MatrixXd& g, std::size_t from, std::size_t to, double rate) {
  if (rate <= 0.0 || from == to) return;
  g(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from)) += rate;
}

inline void fill_diagonal(Eigen::MatrixXd& g) {
  for (Eigen::Index i = 0; i < g.cols(); ++i) {
    g(i, i) = 0.0;
    g(i, i) = -g.col(i).sum();
  }
}

inline void add_pair_relaxation(Eigen::MatrixXd& g, const std::vector<HyperfineLevel>& levels, std::size_t a,
                                std::size_t b, double rate, double temperature) {
  if (rate <= 0.0) return;
  const std::size_t lo = levels[a].energy <= levels[b].energy ? a : b;
  const std::size_t hi = lo == a ? b : a;
  const auto [up, down] = detailed_balance(rate, levels[hi].energy - levels[lo].energy, temperature);
  add_rate(g, lo, hi, up);
  add_rate(g, hi, lo, down);
}

}  // namespace detail

/// Builds the generator from levels computed at p.field.
///
/// Flip-flop model, per lower-branch state k (dominant S_z = -1/2):
///   k -> lower state of I_z - 1 at capture_rate * f_down * b / (b + eta_so),
///   b = beta_k^2; zero for the pure state.
///   Minority capture (capture_rate * f_up * alpha_k^2) and the spin-orbit
///   channel (capture_rate * eta_so, every state) change no population and
///   only enter capture_flux.
/// Both models: W between the two branch states of equal dominant I_z, with
/// detailed balance at the lattice temperature.
/// Overhauser model: R between the two states of each F_z block, detailed
/// balance at r_temperature; no capture terms.
inline RateModel build_rate_model(const SpinSystem& sys, const std::vector<HyperfineLevel>& levels,
                                  const KineticsParams& p) {
  p.validate();
  const auto expected = hyperfine_levels(sys, p.field);
  if (levels.size() != expected.size())
    throw std::invalid_argument("build_rate_model: level count does not match the spin system");
  const double tol = 1e-9 * std::max(1.0, std::abs(expected.back().energy));
  for (std::size_t k = 0; k < levels.size(); ++k)
    if (std::abs(levels[k].energy - expected[k].energy) > tol || levels[k].label != expected[k].label)
      throw std::invalid_argument("build_rate_model: levels were not computed at B = " +
                                  std::to_string(p.field) + " T");

  RateModel m;
  m.levels = levels;
  m.nuclear_spin = sys.nuclear_spin;
  const auto n = static_cast<Eigen::Index>(levels.size());
  m.generator = Eigen::MatrixXd::Zero(n, n);
  m.flip_flop = Eigen::MatrixXd::Zero(n, n);
  m.capture_flux = Eigen::VectorXd::Zero(n);

  const HalfInt lower = -half;
  const HalfInt upper = half;

  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& l = levels[k];
    if (l.branch != lower) continue;
    if (auto partner = m.find(upper, l.dominant_iz))
      detail::add_pair_relaxation(m.generator, levels, k, *partner, p.w_rate, p.temperature);
  }

  if (p.model == KineticsModel::flip_flop) {
    const double pol = p.fe_pol(sys.electron_g);
    if (std::abs(pol) > 1.0) throw std::invalid_argument("kinetics: |fe_polarization| must be <= 1");
    const double f_down = 0.5 * (1.0 - pol);
    const double f_up = 0.5 * (1.0 + pol);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const auto& l = levels[k];
      double flux = p.capture_rate * p.eta_so;
      if (l.branch == lower) {
        const double b = l.beta * l.beta;
        const double ff = b > 0.0 ? p.capture_rate * f_down * b / (b + p.eta_so) : 0.0;
        if (ff > 0.0) {
          const auto target = m.find(lower, l.dominant_iz - HalfInt::from_int(1));
          if (!target) throw std::logic_error("build_rate_model: flip-flop target missing");
          detail::add_rate(m.generator, k, *target, ff);
          detail::add_rate(m.flip_flop, k, *target, ff);
        }
        flux += ff + p.capture_rate * f_up * l.alpha * l.alpha;
      }
      m.capture_flux[static_cast<Eigen::Index>(k)] = flux;
    }
  } else {
    for (std::size_t a = 0; a < levels.size(); ++a)
      for (std::size_t b = a + 1; b < levels.size(); ++b)
        if (levels[a].f_z == levels[b].f_z)
          detail::add_pair_relaxation(m.generator, levels, a, b, p.r_rate, p.r_temperature);
  }
  detail::fill_diagonal(m.generator);
  return m;
}

inline RateModel build_rate_model(const SpinSystem& sys, const KineticsParams& p) {
  return build_rate_model(sys, hyperfine_levels(sys, p.field), p);
}

// ---------------------------------------------------------------------------

struct KineticsState {
  double time = 0.0;  // s
  Eigen::VectorXd populations;
  std::vector<double> marginal;  // over I_z, ascending from -I
};

/// Uniform over I_z; within each I_z the two branch states are Boltzmann
/// populated at `temperature` (electron thermalized).
inline Eigen::VectorXd branch_thermalized_uniform(const RateModel& m, double temperature) {
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be > 0");
  const auto n = m.size();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  const double per_iz = 1.0 / static_cast<double>(m.nuclear_multiplicity());
  for (std::size_t k = 0; k < m.levels.size(); ++k) {
    const auto& l = m.levels[k];
    if (l.branch != -half) continue;
    const auto partner = m.find(half, l.dominant_iz);
    if (!partner) {
      p[static_cast<Eigen::Index>(k)] += per_iz;
      continue;
    }
    const double gap = m.levels[*partner].energy - l.energy;
    const double x = std::exp(-gap / (constants::boltzmann * temperature));
    p[static_cast<Eigen::Index>(k)] += per_iz / (1.0 + x);
    p[static_cast<Eigen::Index>(*partner)] += per_iz * x / (1.0 + x);
  }
  return p;
}

/// Uniform over the lower-branch states only.
inline Eigen::VectorXd uniform_lower_branch(const RateModel& m) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(m.size());
  double count = 0;
  for (std::size_t k = 0; k < m.levels.size(); ++k)
    if (m.levels[k].branch == -half) {
      p[static_cast<Eigen::Index>(k)] = 1.0;
      ++count;
    }
  return p / count;
}

inline void validate_distribution(const RateModel& m, const Eigen::VectorXd& p) {
  if (p.size() != m.size()) throw std::invalid_argument("distribution size does not match the model");
  if ((p.array() < 0.0).any() || !p.allFinite()) throw std::invalid_argument("distribution has negative entries");
  if (std::abs(p.sum() - 1.0) > 1e-9) throw std::invalid_argument("distribution does not sum to 1");
}

/// N(t) = exp(G t) N(0) at each grid time.
inline std::vector<KineticsState> evolve(const RateModel& m, const Eigen::VectorXd& initial,
                                         const std::vector<double>& t_grid) {
  validate_distribution(m, initial);
  std::vector<KineticsState> out;
  out.reserve(t_grid.size());
  double previous = 0.0;
  for (double t : t_grid) {
    if (!(t >= previous)) throw std::invalid_argument("evolve: time grid must be ascending from 0");
    previous = t;
    const Eigen::MatrixXd prop = (m.generator * t).exp();
    KineticsState s;
    s.time = t;
    s.populations = prop * initial;
    s.marginal = m.marginal(s.populations);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class structure of the jump graph (edge i -> j when generator(j, i) > 0).

struct ClassStructure {
  std::vector<std::vector<std::size_t>> classes;  // strongly connected components
  std::vector<bool> closed;                        // no rate leaves the class
  std::vector<std::size_t> class_of;               // state -> class index
};

inline ClassStructure communicating_classes(const RateModel& m) {
  const auto n = static_cast<std::size_t>(m.size());
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && m.generator(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) > 0.0)
        adj[i].push_back(j);

  // Tarjan's algorithm
  ClassStructure cs;
  cs.class_of.assign(n, n);
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : adj[v]) {
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        cs.class_of[w] = cs.classes.size();
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      cs.classes.push_back(std::move(comp));
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) visit(v);

  // deterministic order: by smallest member
  std::vector<std::size_t> order(cs.classes.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cs.classes[a].front() < cs.classes[b].front(); });
  std::vector<std::vector<std::size_t>> sorted;
  for (auto k : order) sorted.push_back(cs.classes[k]);
  cs.classes = std::move(sorted);
  for (std::size_t c = 0; c < cs.classes.size(); ++c)
    for (auto s : cs.classes[c]) cs.class_of[s] = c;

  cs.closed.assign(cs.classes.size(), true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : adj[i])
      if (cs.class_of[j] != cs.class_of[i]) cs.closed[cs.class_of[i]] = false;
  return cs;
}

struct SteadyState {
  bool unique = false;
  Eigen::VectorXd distribution;                    // set when unique
  std::vector<std::vector<std::size_t>> recurrent_classes;
  std::vector<Eigen::VectorXd> class_distributions;  // full-length, one per recurrent class
  std::vector<std::size_t> transient;
  std::string report;                              // reachability summary
};

namespace detail {

inline Eigen::VectorXd class_stationary(const RateModel& m, const std::vector<std::size_t>& cls) {
  const auto k = static_cast<Eigen::Index>(cls.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      sub(a, b) = m.generator(static_cast<Eigen::Index>(cls[static_cast<std::size_t>(a)]),
                              static_cast<Eigen::Index>(cls[static_cast<std::size_t>(b)]));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
  lu.setThreshold(1e-12);
  if (k > 1 && lu.rank() != k - 1)
    throw std::runtime_error("steady_state: class generator rank " + std::to_string(lu.rank()) +
                             " (expected " + std::to_string(k - 1) + ")");
  // replace one balance equation by normalization
  Eigen::MatrixXd a = sub;
  a.row(k - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  rhs[k - 1] = 1.0;
  const Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(m.size());
  for (Eigen::Index a2 = 0; a2 < k; ++a2) full[static_cast<Eigen::Index>(cls[static_cast<std::size_t>(a2)])] = pi[a2];
  return full;
}

}  // namespace detail

/// Null-space solution per recurrent class; unique when there is one.
inline SteadyState steady_state(const RateModel& m) {
  const auto cs = communicating_classes(m);
  SteadyState ss;
  std::ostringstream os;
  for (std::size_t c = 0; c < cs.classes.size(); ++c) {
    if (cs.closed[c]) {
      ss.recurrent_classes.push_back(cs.classes[c]);
      ss.class_distributions.push_back(detail::class_stationary(m, cs.classes[c]));
    } else {
      ss.transient.insert(ss.transient.end(), cs.classes[c].begin(), cs.classes[c].end());
    }
  }
  std::sort(ss.transient.begin(), ss.transient.end());
  ss.unique = ss.recurrent_classes.size() == 1;
  if (ss.unique) ss.distribution = ss.class_distributions.front();
  os << ss.recurrent_classes.size() << " recurrent class(es)";
  for (const auto& cls : ss.recurrent_classes) {
    os << "; {";
    for (std::size_t k = 0; k < cls.size(); ++k) os << (k ? "," : "") << m.levels[cls[k]].label;
    os << '}';
  }
  os << "; " << ss.transient.size() << " transient state(s)";
  ss.report = os.str();
  return ss;
}

/// Probability of ending in each recurrent class from each state.
inline Eigen::MatrixXd absorption_probabilities(const RateModel& m, const SteadyState& ss) {
  const auto n = m.size();
  const auto nc = static_cast<Eigen::Index>(ss.recurrent_classes.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, nc);
  for (Eigen::Index c = 0; c < nc; ++c)
    for (auto s : ss.recurrent_classes[static_cast<std::size_t>(c)]) h(static_cast<Eigen::Index>(s), c) = 1.0;
  if (ss.transient.empty()) return h;
  // sum_j G(j, i) h(j) = 0 for transient i
  const auto nt = static_cast<Eigen::Index>(ss.transient.size());
  Eigen::MatrixXd a(nt, nt);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nt, nc);
  std::vector<bool> is_transient(static_cast<std::size_t>(n), false);
  for (auto s : ss.transient) is_transient[s] = true;
  for (Eigen::Index r = 0; r < nt; ++r) {
    const auto i = static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(r)]);
    for (Eigen::Index q = 0; q < nt; ++q)
      a(r, q) = m.generator(static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(q)]), i);
    for (Eigen::Index j = 0; j < n; ++j)
      if (!is_transient[static_cast<std::size_t>(j)]) rhs.row(r) -= m.generator(j, i) * h.row(j);
  }
  const Eigen::MatrixXd sol = a.fullPivLu().solve(rhs);
  for (Eigen::Index r = 0; r < nt; ++r) h.row(static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(r)])) = sol.row(r);
  return h;
}

/// lim_{t -> inf} exp(G t) initial.
inline Eigen::VectorXd limit_distribution(const RateModel& m, const Eigen::VectorXd& initial) {
  validate_distribution(m, initial);
  const auto ss = steady_state(m);
  const Eigen::MatrixXd h = absorption_probabilities(m, ss);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m.size());
  for (std::size_t c = 0; c < ss.recurrent_classes.size(); ++c)
    out += initial.dot(h.col(static_cast<Eigen::Index>(c))) * ss.class_distributions[c];
  return out;
}

/// Expected number of flip-flop jumps before the walk settles in a
/// recurrent class (transient states only contribute).
inline double expected_flip_flops(const RateModel& m, const Eigen::VectorXd& initial) {
  validate_distribution(m, initial);
  const auto ss = steady_state(m);
  for (const auto& cls : ss.recurrent_classes)
    for (auto a : cls)
      for (auto b : cls)
        if (m.flip_flop(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) > 0.0)
          throw std::runtime_error("expected_flip_flops: flip-flops recur indefinitely");
  if (ss.transient.empty()) return 0.0;
  // c(i) = sum_j ff(j,i)/out_i + sum_j G(j,i)/out_i c(j)  =>  -sum_j G(j,i) c(j) = sum_j ff(j,i)
  const auto nt = static_cast<Eigen::Index>(ss.transient.size());
  Eigen::MatrixXd a(nt, nt);
  Eigen::VectorXd rhs(nt);
  for (Eigen::Index r = 0; r < nt; ++r) {
    const auto i = static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(r)]);
    for (Eigen::Index q = 0; q < nt; ++q)
      a(r, q) = -m.generator(static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(q)]), i);
    rhs[r] = m.flip_flop.col(i).sum();
  }
  const Eigen::VectorXd c = a.fullPivLu().solve(rhs);
  double total = 0.0;
  for (Eigen::Index r = 0; r < nt; ++r) total += initial[static_cast<Eigen::Index>(ss.transient[static_cast<std::size_t>(r)])] * c[r];
  return total;
}

/// Capture flux weighted by the distribution, relative to the uniform
/// distribution over all states.
inline double pl_flux(const RateModel& m, const Eigen::VectorXd& distribution) {
  if (distribution.size() != m.size()) throw std::invalid_argument("pl_flux: distribution size mismatch");
  const double reference = m.capture_flux.mean();
  if (!(reference > 0.0)) return 0.0;
  return m.capture_flux.dot(distribution) / reference;
}

/// First time the I_z = -I marginal reaches threshold times its limiting
/// value, by geometric bracketing and bisection on exp(G t).
inline double polarization_time(const RateModel& m, double threshold, const Eigen::VectorXd& initial,
                                double rel_tol = 1e-9) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("polarization_time: threshold must be in (0, 1]");
  const auto limit = limit_distribution(m, initial);
  const double target = threshold * m.marginal(limit).front();
  auto n_min = [&](double t) {
    return m.marginal((m.generator * t).exp() * initial).front();
  };
  if (!(target > 0.0)) throw std::runtime_error("polarization_time: the limiting N(-I) is zero; threshold unreachable");
  if (n_min(0.0) >= target) return 0.0;
  if (threshold >= 1.0 && limit.isApprox(initial)) return 0.0;
  const double max_rate = std::max(m.generator.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double hi = 1.0 / max_rate;
  double lo = 0.0;
  int doublings = 0;
  while (n_min(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 200)
      throw std::runtime_error("polarization_time: threshold " + std::to_string(threshold) + " not reached");
  }
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (n_min(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace donorpl
