#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "donorpl/levenberg_marquardt.hpp"
#include "donorpl/polarization.hpp"
#include "donorpl/spectrum.hpp"

namespace donorpl {

enum class Param : std::size_t {
  e_offset,
  amplitude,
  t_fit,
  p_fit,
  g1,
  g2,
  c_dia,
  fwhm,
  eta,
  strength1,
  strength2,
  strength3,
  strength4,
  strength5,
  strength6,
};

inline constexpr std::size_t param_count = 15;

inline constexpr std::array<std::string_view, param_count> param_names{
    "e_offset", "amplitude", "t_fit", "p_fit",     "g1",        "g2",        "c_dia",    "fwhm",
    "eta",      "strength1", "strength2", "strength3", "strength4", "strength5", "strength6"};

inline constexpr std::array<std::string_view, param_count> param_units{
    "ueV", "arb", "K", "1", "1", "1", "ueV/T^2", "ueV", "1", "1", "1", "1", "1", "1", "1"};

inline std::optional<Param> param_from_name(std::string_view name) {
  for (std::size_t k = 0; k < param_count; ++k)
    if (param_names[k] == name) return static_cast<Param>(k);
  return std::nullopt;
}

inline constexpr std::size_t idx(Param p) { return static_cast<std::size_t>(p); }

/// Parameter vector of the spectrum model with free/fixed flags.
struct FitModel {
  std::array<double, param_count> values{};
  std::array<bool, param_count> free{};

  double& operator[](Param p) { return values[idx(p)]; }
  double operator[](Param p) const { return values[idx(p)]; }
  bool is_free(Param p) const { return free[idx(p)]; }
  void set_free(Param p, bool f = true) { free[idx(p)] = f; }

  /// Shipped defaults: hole g1 = 0.85, effective width 7.9 µeV, shape
  /// parameters free, g2/c_dia/eta/strengths fixed.
  static FitModel defaults() {
    FitModel m;
    m[Param::e_offset] = 0.0;
    m[Param::amplitude] = 1.0;
    m[Param::t_fit] = 4.2;
    m[Param::p_fit] = 0.0;
    m[Param::g1] = 0.85;
    m[Param::g2] = 0.0;
    m[Param::c_dia] = 0.0;
    m[Param::fwhm] = std::sqrt(7.9 * 7.9 - 1.8 * 1.8);
    m[Param::eta] = 0.5;
    for (std::size_t k = idx(Param::strength1); k < param_count; ++k) m.values[k] = 1.0;
    for (Param p : {Param::e_offset, Param::amplitude, Param::t_fit, Param::p_fit, Param::g1,
                    Param::fwhm})
      m.set_free(p);
    return m;
  }

  HoleParams hole() const {
    return {(*this)[Param::g1], (*this)[Param::g2], (*this)[Param::c_dia], (*this)[Param::e_offset]};
  }
  ChannelStrengths strengths() const {
    ChannelStrengths s{};
    for (std::size_t k = 0; k < 6; ++k) s[k] = values[idx(Param::strength1) + k];
    return s;
  }

  /// Throws DomainError naming the first parameter outside its bounds.
  void validate() const {
    auto bad = [](Param p, double v) {
      throw DomainError("parameter " + std::string(param_names[idx(p)]) + " out of bounds: " +
                        std::to_string(v));
    };
    for (std::size_t k = 0; k < param_count; ++k)
      if (!std::isfinite(values[k])) bad(static_cast<Param>(k), values[k]);
    if (!((*this)[Param::t_fit] > 0.0)) bad(Param::t_fit, (*this)[Param::t_fit]);
    if (!(std::abs((*this)[Param::p_fit]) < 1.0)) bad(Param::p_fit, (*this)[Param::p_fit]);
    if (!((*this)[Param::fwhm] > 0.0)) bad(Param::fwhm, (*this)[Param::fwhm]);
    if (!((*this)[Param::eta] >= 0.0 && (*this)[Param::eta] <= 1.0)) bad(Param::eta, (*this)[Param::eta]);
    for (std::size_t k = idx(Param::strength1); k < param_count; ++k)
      if (!(values[k] >= 0.0)) bad(static_cast<Param>(k), values[k]);
  }
};

/// Fixed experimental context of one spectrum.
struct FitContext {
  SpinSystem system;
  double field = 0.0;               // T
  double instrument_fwhm = 1.8;     // µeV
  double lineshape_cutoff = 10.0;   // effective FWHMs
  FinalStateMode mode = FinalStateMode::dominant;
  std::vector<double> weights;      // optional per-point multipliers (1/sigma)
};

inline LineshapeSpec lineshape_of(const FitModel& m, const FitContext& ctx) {
  return {m[Param::eta], m[Param::fwhm], ctx.instrument_fwhm, ctx.lineshape_cutoff};
}

/// Hyperfine components for the model at its current parameters.
inline std::vector<TransitionLine> model_lines(const FitModel& m, const FitContext& ctx) {
  return enumerate_lines(ctx.system, m.hole(), ctx.field, m[Param::t_fit],
                         distribution_from_step(m[Param::p_fit], ctx.system.nuclear_spin),
                         m.strengths(), ctx.mode);
}

/// Model intensities on the given energies (no coverage requirement).
inline std::vector<double> model_spectrum(const FitModel& m, const FitContext& ctx,
                                          std::span<const double> energies) {
  m.validate();
  const auto lines = model_lines(m, ctx);
  std::vector<double> out(energies.size(), 0.0);
  accumulate_profile(lines, PseudoVoigt(lineshape_of(m, ctx)), energies, out, m[Param::amplitude]);
  return out;
}

/// (model - data), times the per-point weights when supplied.
inline Eigen::VectorXd residuals(const FitModel& m, const SpectrumGrid& data, const FitContext& ctx) {
  const auto model = model_spectrum(m, ctx, data.energies);
  if (!ctx.weights.empty() && ctx.weights.size() != data.size())
    throw std::invalid_argument("weights length does not match the data");
  Eigen::VectorXd r(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = ctx.weights.empty() ? 1.0 : ctx.weights[i];
    r[static_cast<Eigen::Index>(i)] = w * (model[i] - data.intensities[i]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Internal coordinates. Bounded quantities are mapped to the real line so the
// optimizer never steps across a bound: log for T, width and strengths,
// atanh for P, logit for eta. e_offset is measured from a reference value.

namespace detail {

enum class Transform { shift, identity, log, atanh, logit };

inline Transform transform_of(Param p) {
  switch (p) {
    case Param::e_offset: return Transform::shift;
    case Param::t_fit:
    case Param::fwhm: return Transform::log;
    case Param::p_fit: return Transform::atanh;
    case Param::eta: return Transform::logit;
    default: break;
  }
  if (idx(p) >= idx(Param::strength1)) return Transform::log;
  return Transform::identity;
}

inline double to_internal(Param p, double v, double ref) {
  switch (transform_of(p)) {
    case Transform::shift: return v - ref;
    case Transform::identity: return v;
    case Transform::log: return std::log(std::max(v, 1e-300));
    case Transform::atanh: return std::atanh(std::clamp(v, -1.0 + 1e-15, 1.0 - 1e-15));
    case Transform::logit: {
      const double e = std::clamp(v, 1e-9, 1.0 - 1e-9);
      return std::log(e / (1.0 - e));
    }
  }
  return v;
}

inline double from_internal(Param p, double u, double ref) {
  switch (transform_of(p)) {
    case Transform::shift: return u + ref;
    case Transform::identity: return u;
    case Transform::log: return std::exp(u);
    case Transform::atanh: return std::tanh(u);
    case Transform::logit: return 1.0 / (1.0 + std::exp(-u));
  }
  return u;
}

/// d(natural)/d(internal)
inline double natural_derivative(Param p, double v) {
  switch (transform_of(p)) {
    case Transform::shift:
    case Transform::identity: return 1.0;
    case Transform::log: return v;
    case Transform::atanh: return 1.0 - v * v;
    case Transform::logit: return v * (1.0 - v);
  }
  return 1.0;
}

inline double internal_scale(Param p, double v) {
  if (transform_of(p) == Transform::identity) return std::max(std::abs(v), 1e-3);
  return 1.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct FitResult {
  FitModel model;
  std::array<double, param_count> sigma{};  // NaN for fixed parameters
  Eigen::VectorXd residuals;
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string stop_reason;
  bool singular = false;
  std::string advice;            // parameter-fixing advice when singular
  std::vector<double> cost_history;
  double initial_cost = 0.0;
  double field = 0.0;
  double electron_g = 2.0;
  HalfInt nuclear_spin;

  double sigma_of(Param p) const { return sigma[idx(p)]; }
};

struct JointDataset {
  SpectrumGrid data;
  FitContext context;
  FitModel initial;
};

struct JointFitResult {
  std::vector<FitResult> spectra;
  std::set<Param> shared;
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  bool singular = false;
  std::string advice;
  std::vector<double> cost_history;
};

namespace detail {

struct Slot {
  std::size_t dataset;  // owner; shared parameters are owned by dataset 0
  Param param;
  double reference;
};

// Lists null-space directions of the scaled normal matrix in terms of
// parameter names.
inline std::string null_space_advice(const Eigen::MatrixXd& normal, const std::vector<Slot>& slots,
                                     std::size_t n_datasets, bool* singular) {
  const Eigen::Index n = normal.rows();
  Eigen::VectorXd d(n);
  for (Eigen::Index k = 0; k < n; ++k) d[k] = normal(k, k) > 0 ? 1.0 / std::sqrt(normal(k, k)) : 1.0;
  const Eigen::MatrixXd scaled = d.asDiagonal() * normal * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  const auto& ev = es.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 1e-300);
  std::ostringstream os;
  *singular = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (ev[k] > 1e-10 * top) continue;
    *singular = true;
    os << "null-space direction:";
    const Eigen::VectorXd v = es.eigenvectors().col(k);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(v[j]) < 0.2) continue;
      const auto& s = slots[static_cast<std::size_t>(j)];
      os << ' ' << (v[j] > 0 ? '+' : '-') << param_names[idx(s.param)];
      if (n_datasets > 1) os << '[' << s.dataset << ']';
    }
    os << "; fix one of these parameters.\n";
  }
  return os.str();
}

}  // namespace detail

/// Stacked least-squares fit of several spectra. Parameters in `shared`
/// take one common value (from dataset 0); all others are per spectrum.
inline JointFitResult joint_fit(const std::vector<JointDataset>& sets, const std::set<Param>& shared,
                                const LmOptions& options = {}) {
  if (sets.empty()) throw std::invalid_argument("joint_fit: no datasets");
  for (std::size_t d = 0; d < sets.size(); ++d) {
    const auto& s = sets[d];
    s.data.validate();
    s.initial.validate();
    if (s.data.size() < 8) throw std::invalid_argument("fit: a spectrum needs at least 8 points");
    for (Param p : shared) {
      if (s.initial[p] != sets[0].initial[p] || s.initial.is_free(p) != sets[0].initial.is_free(p))
        throw std::invalid_argument("joint_fit: shared parameter " + std::string(param_names[idx(p)]) +
                                    " differs between datasets 0 and " + std::to_string(d));
    }
  }

  std::vector<detail::Slot> slots;
  for (std::size_t d = 0; d < sets.size(); ++d)
    for (std::size_t k = 0; k < param_count; ++k) {
      const auto p = static_cast<Param>(k);
      if (!sets[d].initial.is_free(p)) continue;
      if (d > 0 && shared.count(p)) continue;
      slots.push_back({d, p, sets[d].initial[p]});
    }

  std::size_t n_points = 0;
  for (const auto& s : sets) n_points += s.data.size();
  if (n_points <= slots.size()) throw std::invalid_argument("fit: more free parameters than data points");

  auto unpack = [&](const Eigen::VectorXd& u) {
    std::vector<FitModel> models;
    for (const auto& s : sets) models.push_back(s.initial);
    for (std::size_t j = 0; j < slots.size(); ++j) {
      const auto& s = slots[j];
      const double v = detail::from_internal(s.param, u[static_cast<Eigen::Index>(j)], s.reference);
      if (s.dataset == 0 && shared.count(s.param)) {
        for (auto& m : models) m[s.param] = v;
      } else {
        models[s.dataset][s.param] = v;
      }
    }
    return models;
  };

  auto stacked = [&](const Eigen::VectorXd& u) {
    const auto models = unpack(u);
    Eigen::VectorXd r(static_cast<Eigen::Index>(n_points));
    Eigen::Index offset = 0;
    for (std::size_t d = 0; d < sets.size(); ++d) {
      const Eigen::VectorXd block = residuals(models[d], sets[d].data, sets[d].context);
      r.segment(offset, block.size()) = block;
      offset += block.size();
    }
    return r;
  };

  Eigen::VectorXd u0(static_cast<Eigen::Index>(slots.size()));
  Eigen::VectorXd scale(u0.size());
  for (std::size_t j = 0; j < slots.size(); ++j) {
    const auto& s = slots[j];
    const double v = sets[s.dataset].initial[s.param];
    u0[static_cast<Eigen::Index>(j)] = detail::to_internal(s.param, v, s.reference);
    scale[static_cast<Eigen::Index>(j)] = detail::internal_scale(s.param, v);
  }

  LmOptions opt = options;
  if (!std::isfinite(opt.max_step)) opt.max_step = 0.5;
  const LmResult lm = levenberg_marquardt(stacked, u0, scale, opt);
  const auto models = unpack(lm.x);

  JointFitResult out;
  out.shared = shared;
  out.chi_square = lm.cost;
  const double dof = static_cast<double>(n_points - slots.size());
  out.reduced_chi_square = lm.cost / dof;
  out.iterations = lm.iterations;
  out.converged = lm.converged;
  out.stop_reason = lm.stop_reason;
  out.cost_history = lm.cost_history;

  const Eigen::MatrixXd normal = lm.jacobian.transpose() * lm.jacobian;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(normal.rows(), normal.cols(),
                                                  std::numeric_limits<double>::quiet_NaN());
  if (!slots.empty()) {
    out.advice = detail::null_space_advice(normal, slots, sets.size(), &out.singular);
    if (!out.singular) cov = normal.inverse() * out.reduced_chi_square;
  }

  Eigen::Index offset = 0;
  for (std::size_t d = 0; d < sets.size(); ++d) {
    FitResult r;
    r.model = models[d];
    r.sigma.fill(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < slots.size(); ++j) {
      const auto& s = slots[j];
      if (s.dataset != d && !(s.dataset == 0 && shared.count(s.param))) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      r.sigma[idx(s.param)] =
          std::abs(detail::natural_derivative(s.param, r.model[s.param])) * std::sqrt(cov(jj, jj));
    }
    const auto n = static_cast<Eigen::Index>(sets[d].data.size());
    r.residuals = lm.residuals.segment(offset, n);
    offset += n;
    r.chi_square = r.residuals.squaredNorm();
    r.reduced_chi_square = out.reduced_chi_square;
    r.iterations = lm.iterations;
    r.evaluations = lm.evaluations;
    r.converged = lm.converged;
    r.stop_reason = lm.stop_reason;
    r.singular = out.singular;
    r.advice = out.advice;
    r.cost_history = lm.cost_history;
    r.initial_cost = lm.initial_cost;
    r.field = sets[d].context.field;
    r.electron_g = sets[d].context.system.electron_g;
    r.nuclear_spin = sets[d].context.system.nuclear_spin;
    out.spectra.push_back(std::move(r));
  }
  return out;
}

/// Single-spectrum fit; identical to a one-dataset joint fit.
inline FitResult fit(const SpectrumGrid& data, const FitModel& initial, const FitContext& ctx,
                     const LmOptions& options = {}) {
  auto joint = joint_fit({JointDataset{data, ctx, initial}}, {}, options);
  return std::move(joint.spectra.front());
}

/// Starting values from the data. Width from the narrowest resolved peak,
/// e_offset from the best cross-correlation shift, free T and P from a
/// coarse grid, amplitude by linear least squares. Other parameters keep
/// their values from `base`.
inline FitModel initial_guess(const SpectrumGrid& data, const FitContext& ctx,
                              FitModel base = FitModel::defaults()) {
  data.validate();
  double area = 0.0;
  for (std::size_t i = 1; i < data.size(); ++i) {
    const double de = data.energies[i] - data.energies[i - 1];
    const double y = 0.5 * (data.intensities[i] + data.intensities[i - 1]);
    area += y * de;
  }
  if (!(area > 0.0)) throw std::invalid_argument("initial_guess: spectrum has no positive area");

  // narrowest peak above 20 % of the maximum, by half-maximum crossings
  const double ymax = *std::max_element(data.intensities.begin(), data.intensities.end());
  double narrowest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < data.size(); ++i) {
    const double y = data.intensities[i];
    if (y < 0.2 * ymax || y < data.intensities[i - 1] || y < data.intensities[i + 1]) continue;
    std::size_t lo = i, hi = i;
    while (lo > 0 && data.intensities[lo] > 0.5 * y) --lo;
    while (hi + 1 < data.size() && data.intensities[hi] > 0.5 * y) ++hi;
    if (data.intensities[lo] > 0.5 * y || data.intensities[hi] > 0.5 * y) continue;
    narrowest = std::min(narrowest, data.energies[hi] - data.energies[lo]);
  }
  if (std::isfinite(narrowest)) {
    const double inst = ctx.instrument_fwhm;
    base[Param::fwhm] = std::sqrt(std::max(narrowest * narrowest - inst * inst, 0.25 * narrowest * narrowest));
  }

  const std::span<const double> y(data.intensities);
  auto dot = [](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  // model with unit amplitude evaluated at data energies shifted by -offset
  auto shifted = [&](const FitModel& m, double offset) {
    std::vector<double> e(data.energies);
    for (double& v : e) v -= offset;
    FitModel unit = m;
    unit[Param::e_offset] = 0.0;
    unit[Param::amplitude] = 1.0;
    return model_spectrum(unit, ctx, e);
  };
  auto best_offset = [&](const FitModel& m, double from, double to, double step) {
    double best = from, score = -std::numeric_limits<double>::infinity();
    for (double s = from; s <= to + 0.5 * step; s += step) {
      const auto mod = shifted(m, s);
      const double mm = dot(mod, mod);
      if (!(mm > 0.0)) continue;
      const double c = dot(mod, y) / std::sqrt(mm);
      if (c > score) score = c, best = s;
    }
    return best;
  };

  FitModel probe = base;
  probe[Param::e_offset] = 0.0;
  const double width = lineshape_of(probe, ctx).effective_fwhm();
  const double support = PseudoVoigt(lineshape_of(probe, ctx)).support();

  // Global search over offset x temperature x polarization. Each grid model
  // is tabulated once on a fine uniform grid and interpolated per shift;
  // the amplitude is solved in closed form.
  std::vector<double> temps{base[Param::t_fit]}, pols{base[Param::p_fit]};
  if (base.is_free(Param::t_fit)) temps = {1.0, 1.5, 2.5, 4.0, 6.5, 10.0, 16.0, 25.0};
  if (base.is_free(Param::p_fit)) pols = {-0.8, -0.5, -0.25, 0.0, 0.25, 0.5, 0.8};
  const double h = width / 8.0;
  const double yy = dot(y, y);
  double best_cost = std::numeric_limits<double>::infinity();
  FitModel chosen = base;
  std::vector<double> mod(data.size());
  for (double t : temps)
    for (double pv : pols) {
      FitModel m = probe;
      m[Param::t_fit] = t;
      m[Param::p_fit] = pv;
      m[Param::amplitude] = 1.0;
      const auto lines = model_lines(m, ctx);
      const auto [lo_line, hi_line] = std::minmax_element(
          lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.photon_energy < b.photon_energy; });
      const double u0 = lo_line->photon_energy - support;
      const auto nu = static_cast<std::size_t>(std::ceil((hi_line->photon_energy + support - u0) / h)) + 2;
      std::vector<double> u(nu);
      for (std::size_t k = 0; k < nu; ++k) u[k] = u0 + h * static_cast<double>(k);
      const auto table = model_spectrum(m, ctx, u);

      std::vector<double> offsets{base[Param::e_offset]};
      if (base.is_free(Param::e_offset)) {
        offsets.clear();
        const double from = data.energies.front() - hi_line->photon_energy;
        const double to = data.energies.back() - lo_line->photon_energy;
        for (double s = from; s <= to; s += 0.25 * width) offsets.push_back(s);
      }
      for (double off : offsets) {
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double x = (data.energies[i] - off - u0) / h;
          if (x <= 0.0 || x >= static_cast<double>(nu - 1)) {
            mod[i] = 0.0;
            continue;
          }
          const auto k = static_cast<std::size_t>(x);
          const double f = x - static_cast<double>(k);
          mod[i] = (1.0 - f) * table[k] + f * table[k + 1];
        }
        const double mm = dot(mod, mod), my = dot(mod, y);
        if (!(mm > 0.0) || !(my > 0.0)) continue;
        const double cost = yy - my * my / mm;
        if (cost < best_cost) {
          best_cost = cost;
          chosen = base;
          chosen[Param::t_fit] = t;
          chosen[Param::p_fit] = pv;
          chosen[Param::e_offset] = off;
        }
      }
    }
  base = chosen;
  if (base.is_free(Param::e_offset))
    base[Param::e_offset] = best_offset(base, base[Param::e_offset] - width, base[Param::e_offset] + width, 0.05 * width);
  const auto final_model = shifted(base, base[Param::e_offset]);
  const double mm = dot(final_model, final_model);
  base[Param::amplitude] = mm > 0.0 ? std::max(dot(final_model, y) / mm, 1e-12) : area;
  return base;
}

/// Fit summary with derived polarization quantities.
struct FitReport {
  FitModel model;
  std::array<double, param_count> sigma{};
  double field = 0.0;
  double electron_polarization = 0.0;  // P_e at T_fit
  double fraction_at_min = 0.0;        // N(-I)
  double fraction_at_min_sigma = 0.0;  // delta method from sigma(P_fit)
  double chi_square = 0.0;
  double reduced_chi_square = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  bool singular = false;
  std::string advice;
  HalfInt nuclear_spin;
};

inline FitReport report(const FitResult& r) {
  FitReport rep;
  rep.model = r.model;
  rep.sigma = r.sigma;
  rep.field = r.field;
  rep.nuclear_spin = r.nuclear_spin;
  rep.electron_polarization =
      equilibrium_electron_polarization(r.field, r.model[Param::t_fit], r.electron_g);
  const double p = r.model[Param::p_fit];
  rep.fraction_at_min = fraction_at_min(p, r.nuclear_spin);
  const double sp = r.sigma_of(Param::p_fit);
  rep.fraction_at_min_sigma =
      std::isfinite(sp) ? std::abs(fraction_at_min_derivative(p, r.nuclear_spin)) * sp : 0.0;
  rep.chi_square = r.chi_square;
  rep.reduced_chi_square = r.reduced_chi_square;
  rep.iterations = r.iterations;
  rep.converged = r.converged;
  rep.stop_reason = r.stop_reason;
  rep.singular = r.singular;
  rep.advice = r.advice;
  return rep;
}

}  // namespace donorpl
