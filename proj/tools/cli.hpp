#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "donorpl/dense_oracle.hpp"
#include "donorpl/io/config.hpp"
#include "donorpl/io/report.hpp"
#include "donorpl/io/scenario.hpp"
#include "donorpl/io/spectrum_file.hpp"
#include "donorpl/io/svg_plot.hpp"
#include "donorpl/io/units.hpp"
#include "donorpl/kinetics.hpp"
#include "donorpl/spectral_fit.hpp"
#include "donorpl/stochastic.hpp"

namespace donorpl::cli {

/// Bad command-line input; reported with the flag and the grammar.
class UsageError : public std::runtime_error {
 public:
  UsageError(std::string flag, const std::string& what)
      : std::runtime_error(flag + ": " + what), flag_(std::move(flag)) {}
  const std::string& flag() const { return flag_; }

 private:
  std::string flag_;
};

inline constexpr const char* field_grammar = "<tesla> | <start>:<stop>:<step>";

/// "2" or "start:stop:step" (stop included when it lies on the grid).
inline std::vector<double> parse_field_spec(const std::string& text) {
  auto bad = [&](const std::string& why) {
    return UsageError("--b", "invalid value '" + text + "' (" + why + "); expected " + field_grammar);
  };
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (!text.empty() && text.back() == ':') parts.push_back("");
  std::vector<double> v;
  for (const auto& p : parts) {
    auto x = io::parse_double(p);
    if (!x) throw bad("'" + p + "' is not a number");
    v.push_back(*x);
  }
  if (v.size() == 1) {
    if (v[0] < 0) throw bad("field must be >= 0");
    return v;
  }
  if (v.size() != 3) throw bad("wrong number of fields");
  const double start = v[0], stop = v[1], step = v[2];
  if (start < 0 || stop < start) throw bad("need 0 <= start <= stop");
  if (!(step > 0)) throw bad("step must be > 0");
  const double n = std::floor((stop - start) / step + 1e-9);
  if (n > 1e6) throw bad("too many field points");
  std::vector<double> out;
  for (int k = 0; k <= static_cast<int>(n); ++k) out.push_back(start + k * step);
  return out;
}

struct Options {
  std::string system;
  std::vector<std::string> b;
  std::optional<double> t;
  std::optional<double> p;
  std::vector<std::string> data;
  std::string config;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  std::string unit;
};

namespace detail {

inline io::Config load_config(const Options& o) {
  return o.config.empty() ? io::Config{} : io::Config::load(o.config);
}

inline std::optional<std::string> preset(const Options& o) {
  if (o.system.empty()) return std::nullopt;
  return o.system;
}

inline std::vector<double> fields(const Options& o) {
  std::vector<double> out;
  for (const auto& s : o.b) {
    auto v = parse_field_spec(s);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline double single_field(const Options& o, double fallback) {
  const auto f = fields(o);
  if (f.empty()) return fallback;
  if (f.size() != 1) throw UsageError("--b", "this subcommand takes a single field value, not a sweep");
  return f.front();
}

inline io::EnergyUnit unit_or(const Options& o, io::EnergyUnit fallback) {
  if (o.unit.empty()) return fallback;
  try {
    return io::parse_unit(o.unit);
  } catch (const std::invalid_argument& e) {
    throw UsageError("--unit", e.what());
  }
}

inline void check_temperature(const Options& o) {
  if (o.t && !(*o.t > 0)) throw UsageError("--t", "temperature must be > 0 K");
}

inline void check_polarization(const Options& o) {
  if (o.p && !(std::abs(*o.p) < 1)) throw UsageError("--p", "polarization must satisfy |p| < 1");
}

inline std::string out_path(const Options& o, const std::string& name) {
  std::filesystem::create_directories(o.out_dir);
  return (std::filesystem::path(o.out_dir) / name).string();
}

inline std::string num(double v) { return io::CsvTable::num(v); }

inline std::vector<std::string> stick_header(io::EnergyUnit u) {
  return {"line_index", "i_z", "j_z", "s_z", "final_level", "photon_energy_" + io::unit_name(u), "intensity_arb"};
}

inline io::CsvTable stick_table(const std::vector<TransitionLine>& lines, io::EnergyUnit u, double scale) {
  io::CsvTable t(stick_header(u));
  for (const auto& l : lines)
    t.row({std::to_string(l.line_index), l.i_z.str(), l.j_z.str(), l.s_z.str(), std::to_string(l.final_level_label),
           num(io::from_uev(l.photon_energy, u)), num(scale * l.intensity)});
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_levels(const Options& o, std::ostream& out) {
  detail::check_temperature(o);
  const auto cfg = detail::load_config(o);
  const auto sys = io::system_from_config(cfg, detail::preset(o));
  auto fields = detail::fields(o);
  if (fields.empty()) fields = {cfg.number("spectrum", "field").value_or(0.0)};
  const auto u = detail::unit_or(o, io::EnergyUnit::ueV);
  io::CsvTable t({"field_T", "label", "energy_" + io::unit_name(u), "f_z", "alpha", "beta", "branch_s_z", "dominant_i_z"});
  for (double b : fields)
    for (const auto& l : hyperfine_levels(sys, b))
      t.row({detail::num(b), std::to_string(l.label), detail::num(io::from_uev(l.energy, u)), l.f_z.str(),
             detail::num(l.alpha), detail::num(l.beta), l.branch.str(), l.dominant_iz.str()});
  const auto path = detail::out_path(o, "levels.csv");
  io::write_text(path, t.text());
  out << "system = " << sys.label << "\nfield_points = " << fields.size() << "\nlevels_per_field = " << hyperfine_levels(sys, 0.0).size()
      << "\nzero_field_splitting_ueV = " << zero_field_splitting(sys) << "\nwrote = " << path << '\n';
  return 0;
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  detail::check_temperature(o);
  detail::check_polarization(o);
  const auto cfg = detail::load_config(o);
  auto s = io::simulation_from_config(cfg, detail::preset(o));
  s.field = detail::single_field(o, s.field);
  if (o.t) s.temperature = *o.t;
  if (o.p) s.polarization = *o.p;
  const auto u = detail::unit_or(o, io::EnergyUnit::ueV);

  const auto dist = distribution_from_step(s.polarization, s.system.nuclear_spin);
  const auto lines = enumerate_lines(s.system, s.hole, s.field, s.temperature, dist, s.strengths, s.mode);
  auto grid = synthesize(lines, s.shape, default_grid(lines, s.shape, s.points, s.margin));
  for (double& y : grid.intensities) y *= s.amplitude;
  if (s.noise > 0) {
    const double peak = *std::max_element(grid.intensities.begin(), grid.intensities.end());
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> n(0.0, s.noise * peak);
    for (double& y : grid.intensities) y += n(rng);
  }
  std::ostringstream head;
  head << "system " << s.system.label << ", B = " << s.field << " T, T = " << s.temperature
       << " K, P = " << s.polarization;
  const auto spectrum_path = detail::out_path(o, "spectrum.txt");
  io::write_text(spectrum_path, io::format_spectrum(grid, u, {head.str(), "columns: photon energy, intensity (arb)"}));
  const auto stick_path = detail::out_path(o, "sticks.csv");
  io::write_text(stick_path, detail::stick_table(lines, u, s.amplitude).text());

  const auto gaps = line_gap_report(lines);
  io::Report r;
  r.add("system", s.system.label);
  r.add("field_T", s.field);
  r.add("temperature_K", s.temperature);
  r.add("polarization", s.polarization);
  r.add("components", lines.size());
  r.add("grid_points", grid.size());
  r.add("effective_fwhm_ueV", s.shape.effective_fwhm());
  r.add("envelopes_non_overlapping", gaps.non_overlapping);
  for (std::size_t k = 0; k < gaps.envelopes.size(); ++k) {
    const auto& e = gaps.envelopes[k];
    const std::string key = "envelope" + std::to_string(k + 1);
    r.add(key + "_line", e.line_index);
    r.add(key + "_min_ueV", e.min_energy);
    r.add(key + "_max_ueV", e.max_energy);
  }
  for (std::size_t k = 0; k < gaps.gaps.size(); ++k) r.add("gap" + std::to_string(k + 1) + "_ueV", gaps.gaps[k]);
  r.add("spectrum_file", "spectrum.txt");
  r.add("stick_file", "sticks.csv");
  io::write_text(detail::out_path(o, "simulate_summary.txt"), r.text());
  out << r.text();
  return 0;
}

namespace detail {

inline void add_fit_report(io::Report& r, const FitReport& rep, const std::string& prefix = "") {
  for (std::size_t k = 0; k < param_count; ++k) {
    std::string name(param_names[k]);
    if (param_units[k] != "1") name += "_" + std::string(param_units[k]);
    r.add(prefix + name, rep.model.values[k]);
    r.add(prefix + name + "_sigma", rep.sigma[k]);
    r.add(prefix + name + "_free", rep.model.free[k]);
  }
  r.add(prefix + "field_T", rep.field);
  r.add(prefix + "T_fit_K", rep.model[Param::t_fit]);
  r.add(prefix + "P_fit", rep.model[Param::p_fit]);
  r.add(prefix + "P_e", rep.electron_polarization);
  const std::string n_key = "N(" + (-rep.nuclear_spin).str() + ")";
  r.add(prefix + n_key, rep.fraction_at_min);
  r.add(prefix + n_key + "_sigma", rep.fraction_at_min_sigma);
}

}  // namespace detail

inline int cmd_fit(const Options& o, std::ostream& out) {
  detail::check_temperature(o);
  detail::check_polarization(o);
  if (o.data.empty()) throw UsageError("--data", "the fit subcommand needs at least one spectrum file");
  const auto cfg = detail::load_config(o);
  auto setup = io::fit_from_config(cfg, detail::preset(o));
  if (o.t) setup.initial[Param::t_fit] = *o.t;
  if (o.p) setup.initial[Param::p_fit] = *o.p;
  const auto file_unit = detail::unit_or(o, io::EnergyUnit::meV);

  auto field_list = detail::fields(o);
  if (field_list.size() > 1 && field_list.size() != o.data.size())
    throw UsageError("--b", "give one field, or one per --data file");

  std::vector<JointDataset> sets;
  for (std::size_t d = 0; d < o.data.size(); ++d) {
    auto grid = io::parse_spectrum(o.data[d], file_unit, 8);
    auto ctx = setup.context;
    if (!field_list.empty()) ctx.field = field_list.size() == 1 ? field_list[0] : field_list[d];
    if (setup.weights_path) {
      auto w = io::parse_spectrum(*setup.weights_path, io::EnergyUnit::ueV, 8);
      if (w.size() != grid.size()) throw std::runtime_error("weights file length does not match the data");
      ctx.weights = w.intensities;
    }
    auto initial = setup.initial;
    if (setup.auto_init) {
      initial = initial_guess(grid, ctx, initial);
      if (d > 0)
        for (Param p : setup.shared) initial[p] = sets.front().initial[p];
    }
    sets.push_back({std::move(grid), ctx, initial});
  }
  const auto joint = joint_fit(sets, sets.size() > 1 ? setup.shared : std::set<Param>{}, setup.options);

  const auto u = detail::unit_or(o, io::EnergyUnit::ueV);
  io::Report r;
  r.add("system", setup.context.system.label);
  r.add("spectra", sets.size());
  r.add("converged", joint.converged);
  r.add("stop_reason", joint.stop_reason);
  r.add("iterations", joint.iterations);
  r.add("chi_square", joint.chi_square);
  r.add("reduced_chi_square", joint.reduced_chi_square);
  r.add("singular", joint.singular);
  if (joint.singular) r.add("advice", joint.advice);
  for (std::size_t d = 0; d < sets.size(); ++d) {
    const auto& res = joint.spectra[d];
    const std::string suffix = sets.size() > 1 ? "_" + std::to_string(d + 1) : "";
    const std::string prefix = sets.size() > 1 ? "spectrum" + std::to_string(d + 1) + "." : "";
    r.add(prefix + "data_file", o.data[d]);
    detail::add_fit_report(r, report(res), prefix);

    io::CsvTable resid({"energy_" + io::unit_name(u), "residual_arb"});
    std::ostringstream rs;
    rs << "# residual = model - data\n# unit: " << io::unit_name(u) << '\n' << std::setprecision(10);
    for (std::size_t i = 0; i < sets[d].data.size(); ++i)
      rs << io::from_uev(sets[d].data.energies[i], u) << ' ' << res.residuals[static_cast<Eigen::Index>(i)] << '\n';
    io::write_text(detail::out_path(o, "residuals" + suffix + ".txt"), rs.str());
    const auto lines = model_lines(res.model, sets[d].context);
    io::write_text(detail::out_path(o, "sticks" + suffix + ".csv"),
                   detail::stick_table(lines, u, res.model[Param::amplitude]).text());
  }
  io::write_text(detail::out_path(o, "report.txt"), r.text());
  io::write_text(detail::out_path(o, "report.json"), r.json().dump(2) + "\n");
  out << r.text();
  return 0;
}

inline int cmd_kinetics(const Options& o, std::ostream& out) {
  detail::check_temperature(o);
  const auto cfg = detail::load_config(o);
  auto k = io::kinetics_from_config(cfg, detail::preset(o));
  k.params.field = detail::single_field(o, k.params.field);
  if (o.t) k.params.temperature = *o.t;
  const auto model = build_rate_model(k.system, k.params);
  const auto init = io::initial_distribution(model, k.initial, k.params.temperature);
  const auto grid = io::kinetics_time_grid(k.t_stop, k.points);
  const auto traj = evolve(model, init, grid);

  std::vector<std::string> header{"time_s"};
  for (std::size_t j = 0; j < model.nuclear_multiplicity(); ++j)
    header.push_back("N(" + HalfInt::from_twice(2 * static_cast<int>(j) - model.nuclear_spin.twice()).str() + ")_fraction");
  header.push_back("pl_flux_rel");
  io::CsvTable t(header);
  for (const auto& s : traj) {
    std::vector<std::string> row{detail::num(s.time)};
    for (double x : s.marginal) row.push_back(detail::num(x));
    row.push_back(detail::num(pl_flux(model, s.populations)));
    t.row(row);
  }
  io::write_text(detail::out_path(o, "trajectory.csv"), t.text());

  io::Report r;
  r.add("system", k.system.label);
  r.add("model", k.params.model == KineticsModel::flip_flop ? "flip_flop" : "overhauser");
  r.add("field_T", k.params.field);
  r.add("temperature_K", k.params.temperature);
  r.add("capture_rate_per_s", k.params.capture_rate);
  r.add("fe_polarization", k.params.fe_pol(k.system.electron_g));
  const auto ss = steady_state(model);
  r.add("recurrent_classes", ss.recurrent_classes.size());
  r.add("class_report", ss.report);
  const auto limit = limit_distribution(model, init);
  const auto lim_marg = model.marginal(limit);
  r.add("limit_N_min", lim_marg.front());
  r.add("limit_N_max", lim_marg.back());
  r.add("initial_pl_flux_rel", pl_flux(model, init));
  r.add("limit_pl_flux_rel", pl_flux(model, limit));
  try {
    r.add("polarization_time_s", polarization_time(model, k.threshold, init));
  } catch (const std::runtime_error& e) {
    r.add("polarization_time_s", std::numeric_limits<double>::quiet_NaN());
    r.add("polarization_time_note", e.what());
  }
  r.add("polarization_threshold", k.threshold);
  r.add("final_probability_drift", std::abs(traj.back().populations.sum() - 1.0));
  if (k.walkers > 0) {
    const auto sim = stochastic_oracle(model, init, grid, k.walkers, o.seed);
    io::CsvTable st({"time_s", "N_min_evolve", "N_min_stochastic", "binomial_sigma"});
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double exact = traj[i].marginal.front();
      const double emp = sim.marginal(model, i).front();
      const double sigma = std::sqrt(std::max(exact * (1 - exact), 1.0 / k.walkers) / k.walkers);
      worst = std::max(worst, std::abs(emp - exact) / sigma);
      st.row({detail::num(grid[i]), detail::num(exact), detail::num(emp), detail::num(sigma)});
    }
    io::write_text(detail::out_path(o, "stochastic.csv"), st.text());
    r.add("walkers", k.walkers);
    r.add("seed", static_cast<long long>(o.seed));
    r.add("max_deviation_sigma", worst);
    r.add("mean_flip_flops", sim.mean_flip_flops());
  }
  io::write_text(detail::out_path(o, "summary.txt"), r.text());
  io::write_text(detail::out_path(o, "summary.json"), r.json().dump(2) + "\n");
  out << r.text();
  return 0;
}

inline int cmd_plot(const Options& o, std::ostream& out) {
  if (o.data.size() != 1) throw UsageError("--data", "plot takes exactly one two-column file");
  std::ifstream f(o.data.front());
  if (!f) throw std::runtime_error("cannot open '" + o.data.front() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const auto xy = io::parse_xy_text(ss.str(), o.data.front());
  const auto stem = std::filesystem::path(o.data.front()).stem().string();
  const auto path = detail::out_path(o, stem + ".svg");
  io::write_text(path, io::svg_line_chart(xy, stem));
  out << "points = " << xy.x.size() << "\nwrote = " << path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

/// Entry point. Exit codes: 0 success, 1 runtime error, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Donor bound-exciton hyperfine spectra, fits and polarization kinetics", "donorpl"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool data, bool seed) {
    sub->add_option("--system", o.system, "donor preset: Bi or P");
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--out-dir", o.out_dir, "directory for output files")->capture_default_str();
    sub->add_option("--unit", o.unit, "energy unit: ueV, meV or MHz");
    if (data) sub->add_option("--data", o.data, "input two-column file (repeatable for joint fits)");
    if (seed) sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
  };

  auto* levels = app.add_subcommand("levels", "hyperfine levels over a field sweep");
  add_common(levels, false, false);
  levels->add_option("--b", o.b, std::string("field in tesla: ") + field_grammar);

  auto* simulate = app.add_subcommand("simulate", "synthesize a spectrum and stick list");
  add_common(simulate, false, true);
  simulate->add_option("--b", o.b, "field in tesla");
  simulate->add_option("--t", o.t, "temperature in kelvin");
  simulate->add_option("--p", o.p, "per-step nuclear polarization");

  auto* fit = app.add_subcommand("fit", "fit one or more measured spectra");
  add_common(fit, true, false);
  fit->add_option("--b", o.b, "field in tesla (one, or one per --data)");
  fit->add_option("--t", o.t, "initial temperature in kelvin");
  fit->add_option("--p", o.p, "initial per-step polarization");

  auto* kinetics = app.add_subcommand("kinetics", "nuclear polarization kinetics");
  add_common(kinetics, false, true);
  kinetics->add_option("--b", o.b, "field in tesla");
  kinetics->add_option("--t", o.t, "lattice temperature in kelvin");

  auto* plot = app.add_subcommand("plot", "render a two-column file as SVG");
  add_common(plot, true, false);

  auto grammar = [&]() -> std::string {
    for (auto* sub : app.get_subcommands()) return sub->help();
    return app.help();
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << grammar();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << grammar();
    return 2;
  }

  try {
    if (*levels) return cmd_levels(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*fit) return cmd_fit(o, out);
    if (*kinetics) return cmd_kinetics(o, out);
    if (*plot) return cmd_plot(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n\n" << grammar();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace donorpl::cli
