#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "donorpl/io/config.hpp"
#include "donorpl/kinetics.hpp"
#include "donorpl/spectral_fit.hpp"
#include "donorpl/spectrum.hpp"

// Builders that turn a parsed Config into model inputs. Command-line
// overrides are applied by the caller afterwards.

namespace donorpl::io {

inline SpinSystem system_from_config(const Config& cfg, const std::optional<std::string>& preset_override = {}) {
  const double g_e = cfg.number("system", "electron_g").value_or(2.0);
  std::string preset = preset_override.value_or(cfg.get("system", "preset").value_or(""));
  const bool custom = cfg.has("system", "nuclear_spin") || cfg.has("system", "hyperfine_ueV") ||
                      cfg.has("system", "hyperfine_MHz");
  if (!preset.empty() && preset != "custom") {
    if (custom && !preset_override) throw std::invalid_argument("[system] preset and custom spin parameters are exclusive");
    auto sys = make_system(preset, g_e);
    if (auto gn = cfg.number("system", "nuclear_g")) sys.nuclear_g = *gn;
    return sys;
  }
  if (!custom) return make_system("Bi", g_e);
  if (cfg.has("system", "hyperfine_ueV") && cfg.has("system", "hyperfine_MHz"))
    throw std::invalid_argument("[system] give hyperfine_ueV or hyperfine_MHz, not both");
  DonorSpec spec;
  spec.label = cfg.get("system", "label").value_or("custom");
  spec.nuclear_spin = cfg.number("system", "nuclear_spin").value_or(0.5);
  if (auto a = cfg.number("system", "hyperfine_ueV")) spec.hyperfine_uev = *a;
  else if (auto m = cfg.number("system", "hyperfine_MHz")) spec.hyperfine_uev = constants::mhz_to_uev(*m);
  else throw std::invalid_argument("[system] custom system needs hyperfine_ueV or hyperfine_MHz");
  spec.electron_g = g_e;
  spec.nuclear_g = cfg.number("system", "nuclear_g").value_or(0.0);
  return make_system(spec);
}

inline HoleParams hole_from_config(const Config& cfg) {
  HoleParams h;
  h.g1 = cfg.number("exciton", "g1").value_or(h.g1);
  h.g2 = cfg.number("exciton", "g2").value_or(h.g2);
  h.c_dia = cfg.number("exciton", "c_dia").value_or(h.c_dia);
  h.e_offset = cfg.number("exciton", "e_offset").value_or(h.e_offset);
  return h;
}

inline FinalStateMode mode_from_string(const std::string& s) {
  if (s == "dominant") return FinalStateMode::dominant;
  if (s == "admixture") return FinalStateMode::admixture;
  throw std::invalid_argument("mode must be 'dominant' or 'admixture', got '" + s + "'");
}

inline std::size_t count_from(const Config& cfg, const std::string& section, const std::string& key, std::size_t fallback) {
  auto v = cfg.number(section, key);
  if (!v) return fallback;
  if (*v < 0 || std::floor(*v) != *v) throw std::invalid_argument("[" + section + "] " + key + " must be a non-negative integer");
  return static_cast<std::size_t>(*v);
}

struct SimulationSetup {
  SpinSystem system;
  HoleParams hole;
  double field = 2.0;
  double temperature = 9.0;
  double polarization = 0.0;
  LineshapeSpec shape;
  FinalStateMode mode = FinalStateMode::dominant;
  ChannelStrengths strengths = unit_strengths;
  double amplitude = 1.0;
  std::size_t points = 2048;
  double margin = 15.0;
  double noise = 0.0;  // additive Gaussian, fraction of the spectrum maximum
};

inline SimulationSetup simulation_from_config(const Config& cfg, const std::optional<std::string>& preset = {}) {
  SimulationSetup s;
  s.system = system_from_config(cfg, preset);
  s.hole = hole_from_config(cfg);
  s.field = cfg.number("spectrum", "field").value_or(s.field);
  s.temperature = cfg.number("spectrum", "temperature").value_or(s.temperature);
  s.polarization = cfg.number("spectrum", "polarization").value_or(s.polarization);
  s.shape.fwhm = cfg.number("spectrum", "fwhm").value_or(s.shape.fwhm);
  s.shape.eta = cfg.number("spectrum", "eta").value_or(s.shape.eta);
  s.shape.instrument_fwhm = cfg.number("spectrum", "instrument_fwhm").value_or(s.shape.instrument_fwhm);
  s.shape.cutoff = cfg.number("spectrum", "cutoff").value_or(s.shape.cutoff);
  if (auto m = cfg.get("spectrum", "mode")) s.mode = mode_from_string(*m);
  for (std::size_t k = 0; k < 6; ++k)
    s.strengths[k] = cfg.number("spectrum", "strength" + std::to_string(k + 1)).value_or(1.0);
  s.amplitude = cfg.number("spectrum", "amplitude").value_or(s.amplitude);
  s.points = count_from(cfg, "spectrum", "points", s.points);
  s.margin = cfg.number("spectrum", "margin").value_or(s.margin);
  s.noise = cfg.number("spectrum", "noise").value_or(s.noise);
  if (s.noise < 0) throw std::invalid_argument("[spectrum] noise must be >= 0");
  if (s.points < 8) throw std::invalid_argument("[spectrum] points must be >= 8");
  return s;
}

struct FitSetup {
  FitModel initial = FitModel::defaults();
  FitContext context;
  LmOptions options;
  std::set<Param> shared{Param::g1, Param::g2, Param::c_dia};
  bool auto_init = false;
  std::optional<std::string> weights_path;
};

inline Param param_or_throw(const std::string& name) {
  auto p = param_from_name(name);
  if (!p) {
    std::vector<std::string> names(param_names.begin(), param_names.end());
    std::string msg = "unknown fit parameter '" + name + "'";
    if (auto s = suggest(name, names)) msg += "; did you mean '" + *s + "'?";
    throw std::invalid_argument(msg);
  }
  return *p;
}

/// Initial model: built-in defaults, then [exciton], [spectrum] shape
/// keys, then [fit] keys.
inline FitSetup fit_from_config(const Config& cfg, const std::optional<std::string>& preset = {}) {
  FitSetup f;
  f.context.system = system_from_config(cfg, preset);
  auto& m = f.initial;
  const auto hole = hole_from_config(cfg);
  m[Param::g1] = hole.g1;
  m[Param::g2] = hole.g2;
  m[Param::c_dia] = hole.c_dia;
  m[Param::e_offset] = hole.e_offset;
  m[Param::fwhm] = cfg.number("spectrum", "fwhm").value_or(m[Param::fwhm]);
  m[Param::eta] = cfg.number("spectrum", "eta").value_or(m[Param::eta]);
  for (std::size_t k = 0; k < 6; ++k)
    if (auto v = cfg.number("spectrum", "strength" + std::to_string(k + 1))) m[static_cast<Param>(idx(Param::strength1) + k)] = *v;
  f.context.field = cfg.number("spectrum", "field").value_or(2.0);
  f.context.instrument_fwhm = cfg.number("spectrum", "instrument_fwhm").value_or(f.context.instrument_fwhm);
  f.context.lineshape_cutoff = cfg.number("spectrum", "cutoff").value_or(f.context.lineshape_cutoff);
  if (auto s = cfg.get("spectrum", "mode")) f.context.mode = mode_from_string(*s);

  for (std::size_t k = 0; k < param_count; ++k) {
    const std::string name(param_names[k]);
    if (auto v = cfg.number("fit", name)) m.values[k] = *v;
  }
  f.context.field = cfg.number("fit", "field").value_or(f.context.field);
  f.context.instrument_fwhm = cfg.number("fit", "instrument_fwhm").value_or(f.context.instrument_fwhm);
  f.context.lineshape_cutoff = cfg.number("fit", "cutoff").value_or(f.context.lineshape_cutoff);
  if (auto s = cfg.get("fit", "mode")) f.context.mode = mode_from_string(*s);
  if (cfg.has("fit", "free")) {
    m.free.fill(false);
    for (const auto& name : cfg.list("fit", "free")) m.set_free(param_or_throw(name));
  }
  if (cfg.has("fit", "shared")) {
    f.shared.clear();
    for (const auto& name : cfg.list("fit", "shared")) f.shared.insert(param_or_throw(name));
  }
  f.auto_init = cfg.boolean("fit", "auto_init").value_or(false);
  f.weights_path = cfg.get("fit", "weights");
  if (auto v = cfg.number("fit", "max_iterations")) {
    if (*v < 1 || std::floor(*v) != *v) throw std::invalid_argument("[fit] max_iterations must be a positive integer");
    f.options.max_iterations = static_cast<int>(*v);
  }
  f.options.cost_rtol = cfg.number("fit", "cost_rtol").value_or(f.options.cost_rtol);
  f.options.step_tol = cfg.number("fit", "step_tol").value_or(f.options.step_tol);
  f.options.initial_damping = cfg.number("fit", "initial_damping").value_or(f.options.initial_damping);
  return f;
}

enum class InitialState { thermalized, lower_uniform, uniform };

struct KineticsSetup {
  SpinSystem system;
  KineticsParams params;
  InitialState initial = InitialState::thermalized;
  double t_stop = 1e-2;  // s
  std::size_t points = 60;
  std::size_t walkers = 0;
  double threshold = 0.9;
};

inline KineticsSetup kinetics_from_config(const Config& cfg, const std::optional<std::string>& preset = {}) {
  KineticsSetup k;
  k.system = system_from_config(cfg, preset);
  auto& p = k.params;
  if (auto m = cfg.get("kinetics", "model")) {
    if (*m == "flip_flop" || *m == "flip-flop") p.model = KineticsModel::flip_flop;
    else if (*m == "overhauser") p.model = KineticsModel::overhauser;
    else throw std::invalid_argument("[kinetics] model must be flip_flop or overhauser, got '" + *m + "'");
  }
  if (cfg.has("kinetics", "capture_rate") && cfg.has("kinetics", "capture_time_us"))
    throw std::invalid_argument("[kinetics] give capture_rate or capture_time_us, not both");
  if (auto r = cfg.number("kinetics", "capture_rate")) p.capture_rate = *r;
  if (auto t = cfg.number("kinetics", "capture_time_us")) {
    if (!(*t > 0)) throw std::invalid_argument("[kinetics] capture_time_us must be > 0");
    p.capture_rate = 1e6 / *t;
  }
  p.eta_so = cfg.number("kinetics", "eta_so").value_or(p.eta_so);
  if (auto fe = cfg.get("kinetics", "fe_polarization"); fe && *fe != "equilibrium")
    p.fe_polarization = cfg.number("kinetics", "fe_polarization");
  p.w_rate = cfg.number("kinetics", "w_rate").value_or(p.w_rate);
  p.r_rate = cfg.number("kinetics", "r_rate").value_or(p.r_rate);
  p.r_temperature = cfg.number("kinetics", "r_temperature").value_or(p.r_temperature);
  p.field = cfg.number("kinetics", "field").value_or(p.field);
  p.temperature = cfg.number("kinetics", "temperature").value_or(p.temperature);
  if (auto s = cfg.get("kinetics", "initial")) {
    if (*s == "thermalized") k.initial = InitialState::thermalized;
    else if (*s == "lower_uniform") k.initial = InitialState::lower_uniform;
    else if (*s == "uniform") k.initial = InitialState::uniform;
    else throw std::invalid_argument("[kinetics] initial must be thermalized, lower_uniform or uniform");
  }
  k.t_stop = cfg.number("kinetics", "t_stop").value_or(k.t_stop);
  if (!(k.t_stop > 0)) throw std::invalid_argument("[kinetics] t_stop must be > 0");
  k.points = count_from(cfg, "kinetics", "points", k.points);
  if (k.points < 2) throw std::invalid_argument("[kinetics] points must be >= 2");
  k.walkers = count_from(cfg, "kinetics", "walkers", k.walkers);
  k.threshold = cfg.number("kinetics", "threshold").value_or(k.threshold);
  return k;
}

inline Eigen::VectorXd initial_distribution(const RateModel& m, InitialState s, double temperature) {
  switch (s) {
    case InitialState::thermalized: return branch_thermalized_uniform(m, temperature);
    case InitialState::lower_uniform: return uniform_lower_branch(m);
    case InitialState::uniform: break;
  }
  return Eigen::VectorXd::Constant(m.size(), 1.0 / static_cast<double>(m.size()));
}

/// 0 followed by points - 1 log-spaced times ending at t_stop, five decades wide.
inline std::vector<double> kinetics_time_grid(double t_stop, std::size_t points) {
  std::vector<double> t{0.0};
  const double t0 = t_stop * 1e-5;
  for (std::size_t k = 0; k + 1 < points; ++k)
    t.push_back(points == 2 ? t_stop : t0 * std::pow(t_stop / t0, static_cast<double>(k) / static_cast<double>(points - 2)));
  return t;
}

}  // namespace donorpl::io
