#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "donorpl/spectral_fit.hpp"

using namespace donorpl;

namespace {

const HalfInt nine_halves = HalfInt::from_twice(9);

FitContext bi_context(double field) {
  FitContext ctx;
  ctx.system = make_system("Bi");
  ctx.field = field;
  return ctx;
}

FitModel truth_model(double t, double p, double offset = 0.0) {
  FitModel m = FitModel::defaults();
  m[Param::t_fit] = t;
  m[Param::p_fit] = p;
  m[Param::e_offset] = offset;
  m[Param::amplitude] = 100.0;
  return m;
}

// Noise sigma is a fraction of the spectrum maximum.
SpectrumGrid synthetic(const FitModel& m, const FitContext& ctx, double noise, unsigned seed,
                       std::size_t points = 1024) {
  const auto lines = model_lines(m, ctx);
  SpectrumGrid g;
  g.energies = default_grid(lines, lineshape_of(m, ctx), points, 12.0);
  g.intensities = model_spectrum(m, ctx, g.energies);
  if (noise > 0.0) {
    const double peak = *std::max_element(g.intensities.begin(), g.intensities.end());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise * peak);
    for (double& y : g.intensities) y += n(rng);
  }
  return g;
}

FitModel perturbed(FitModel m, double factor) {
  m[Param::t_fit] *= factor;
  m[Param::p_fit] *= factor;
  m[Param::amplitude] *= factor;
  m[Param::fwhm] *= factor;
  m[Param::g1] *= 1.0 + 0.1 * (factor - 1.0);
  m[Param::e_offset] += 3.0;
  return m;
}

}  // namespace

TEST(Residuals, ExactModelGivesZeros) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.0, 0);
  EXPECT_EQ(residuals(m, data, ctx).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Residuals, OffsetDataWithZeroAmplitude) {
  const auto ctx = bi_context(2.0);
  auto m = truth_model(1.7, -0.54);
  auto data = synthetic(m, ctx, 0.0, 0);
  for (double& y : data.intensities) y = 1.0;
  m[Param::amplitude] = 0.0;
  const auto r = residuals(m, data, ctx);
  ASSERT_EQ(static_cast<std::size_t>(r.size()), data.size());
  for (double v : r) EXPECT_DOUBLE_EQ(v, -1.0);
}

TEST(Residuals, PerturbedPolarizationIsZeroSum) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.0, 0, 4096);
  auto p = m;
  p[Param::p_fit] += 0.1;
  const auto r = residuals(p, data, ctx);
  EXPECT_GT(r.cwiseAbs().maxCoeff(), 1e-2 * *std::max_element(data.intensities.begin(), data.intensities.end()));
  // zero sum as an integral over the grid, relative to total intensity
  const double de = data.energies[1] - data.energies[0];
  double total = 0.0;
  for (double y : data.intensities) total += y * de;
  EXPECT_LE(std::abs(r.sum() * de), 1e-3 * total);
  // skew: lower-I_z side loses weight when P moves up
  EXPECT_GT(r.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Residuals, WeightsMultiply) {
  auto ctx = bi_context(2.0);
  auto m = truth_model(1.7, -0.54);
  auto data = synthetic(m, ctx, 0.0, 0, 64);
  for (double& y : data.intensities) y += 1.0;
  ctx.weights.assign(data.size(), 2.0);
  for (double v : residuals(m, data, ctx)) EXPECT_NEAR(v, -2.0, 1e-12);
  ctx.weights.resize(3);
  EXPECT_THROW(residuals(m, data, ctx), std::invalid_argument);
}

TEST(Residuals, RejectsOutOfBounds) {
  const auto ctx = bi_context(2.0);
  const auto data = synthetic(truth_model(1.7, -0.54), ctx, 0.0, 0, 64);
  auto m = truth_model(1.7, -0.54);
  m[Param::p_fit] = 1.0;
  EXPECT_THROW(residuals(m, data, ctx), DomainError);
  m = truth_model(-1.0, 0.0);
  EXPECT_THROW(residuals(m, data, ctx), DomainError);
  m = truth_model(1.7, 0.0);
  m[Param::eta] = 1.2;
  EXPECT_THROW(residuals(m, data, ctx), DomainError);
  m = truth_model(1.7, 0.0);
  m[Param::fwhm] = 0.0;
  EXPECT_THROW(residuals(m, data, ctx), DomainError);
}

TEST(Fit, ExactModelConvergesImmediately) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.0, 0);
  const auto r = fit(data, m, ctx);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 3);
  EXPECT_LE(r.chi_square, 1e-20 * std::max(r.initial_cost, 1.0));
}

TEST(Fit, NoiselessRecoveryFromNearbyStart) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.0, 0);
  const auto r = fit(data, perturbed(m, 1.05), ctx);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.model[Param::t_fit], 1.7, 1e-4);
  EXPECT_NEAR(r.model[Param::p_fit], -0.54, 1e-5);
  EXPECT_NEAR(r.model[Param::e_offset], 0.0, 1e-4);
  EXPECT_LE(r.chi_square, 1e-12 * r.initial_cost);
}

TEST(Fit, BismuthTwoTeslaRoundTrip) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 7);
  for (double factor : {0.7, 1.3}) {
    const auto r = fit(data, perturbed(m, factor), ctx);
    EXPECT_TRUE(r.converged) << r.stop_reason;
    EXPECT_LT(r.iterations, 200);
    EXPECT_NEAR(r.model[Param::t_fit], 1.7, 0.2) << factor;
    EXPECT_NEAR(r.model[Param::p_fit], -0.54, 0.05) << factor;
    EXPECT_NEAR(r.model[Param::e_offset], 0.0, 0.5) << factor;
    EXPECT_TRUE(std::isfinite(r.sigma_of(Param::p_fit)));
    EXPECT_TRUE(std::isnan(r.sigma_of(Param::g2)));
    EXPECT_EQ(static_cast<std::size_t>(r.residuals.size()), data.size());
  }
}

TEST(Fit, CostNonIncreasing) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(4.7, -0.10);
  const auto data = synthetic(m, ctx, 0.01, 11);
  const auto r = fit(data, perturbed(m, 1.3), ctx);
  ASSERT_GE(r.cost_history.size(), 2u);
  for (std::size_t k = 1; k < r.cost_history.size(); ++k)
    EXPECT_LE(r.cost_history[k], r.cost_history[k - 1]);
}

TEST(Fit, IntensityScalingInvariance) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 3);
  auto scaled = data;
  const double c = 7.5;
  for (double& y : scaled.intensities) y *= c;
  const auto start = perturbed(m, 1.1);
  auto start_scaled = start;
  start_scaled[Param::amplitude] *= c;
  const auto a = fit(data, start, ctx);
  const auto b = fit(scaled, start_scaled, ctx);
  EXPECT_NEAR(b.model[Param::amplitude], c * a.model[Param::amplitude], 1e-5 * c * a.model[Param::amplitude]);
  for (Param p : {Param::t_fit, Param::p_fit, Param::g1, Param::fwhm, Param::e_offset})
    EXPECT_NEAR(b.model[p], a.model[p], 1e-5 * std::max(1.0, std::abs(a.model[p]))) << param_names[idx(p)];
}

TEST(Fit, EnergyShiftInvariance) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 3);
  auto shifted = data;
  const double shift = 12.25;
  for (double& e : shifted.energies) e += shift;
  const auto start = perturbed(m, 1.1);
  auto start_shifted = start;
  start_shifted[Param::e_offset] += shift;
  const auto a = fit(data, start, ctx);
  const auto b = fit(shifted, start_shifted, ctx);
  EXPECT_NEAR(b.model[Param::e_offset] - a.model[Param::e_offset], shift, 1e-6);
  for (Param p : {Param::t_fit, Param::p_fit, Param::g1, Param::fwhm, Param::amplitude})
    EXPECT_NEAR(b.model[p], a.model[p], 1e-5 * std::max(1.0, std::abs(a.model[p]))) << param_names[idx(p)];
}

TEST(Fit, JacobianStepRefinement) {
  const auto ctx = bi_context(2.0);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FitModel m = truth_model(3.0 + u(rng), 0.4 * u(rng), 2.0 * u(rng));
  m[Param::g1] = 0.85 + 0.1 * u(rng);
  m[Param::fwhm] = 6.0 + u(rng);
  const auto data = synthetic(m, ctx, 0.0, 0, 512);
  const std::vector<Param> params{Param::e_offset, Param::amplitude, Param::t_fit, Param::p_fit, Param::g1, Param::fwhm};
  auto f = [&](const Eigen::VectorXd& x) {
    FitModel probe = m;
    for (std::size_t k = 0; k < params.size(); ++k) probe[params[k]] = x[static_cast<Eigen::Index>(k)];
    return residuals(probe, data, ctx);
  };
  Eigen::VectorXd x(static_cast<Eigen::Index>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) x[static_cast<Eigen::Index>(k)] = m[params[k]];
  const Eigen::VectorXd scale = Eigen::VectorXd::Ones(x.size());
  const auto coarse = central_jacobian(f, x, scale, 1e-5, 1e-8, static_cast<Eigen::Index>(data.size()));
  const auto fine = central_jacobian(f, x, scale, 1e-6, 1e-8, static_cast<Eigen::Index>(data.size()));
  for (Eigen::Index k = 0; k < x.size(); ++k)
    EXPECT_LE((coarse.col(k) - fine.col(k)).norm(), 1e-3 * fine.col(k).norm()) << param_names[idx(params[static_cast<std::size_t>(k)])];
}

TEST(Fit, UncertaintyScalesWithNoise) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(4.7, -0.10);
  const auto clean = synthetic(m, ctx, 0.0, 0);
  const auto noisy = synthetic(m, ctx, 0.02, 5);
  // same noise realization with n-fold reduced variance
  const double n = 4.0;
  auto quieter = noisy;
  for (std::size_t i = 0; i < clean.size(); ++i)
    quieter.intensities[i] = clean.intensities[i] + (noisy.intensities[i] - clean.intensities[i]) / std::sqrt(n);
  const auto a = fit(noisy, m, ctx);
  const auto b = fit(quieter, m, ctx);
  for (Param p : {Param::t_fit, Param::p_fit, Param::e_offset})
    EXPECT_NEAR(b.sigma_of(p) / a.sigma_of(p), 1.0 / std::sqrt(n), 0.05) << param_names[idx(p)];
}

TEST(Fit, SingularNormalMatrixGivesAdvice) {
  const auto ctx = bi_context(2.0);
  auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 2);
  // at a single field the diamagnetic shift is a pure offset
  m.set_free(Param::c_dia);
  const auto r = fit(data, m, ctx);
  EXPECT_TRUE(r.singular);
  EXPECT_NE(r.advice.find("c_dia"), std::string::npos) << r.advice;
  EXPECT_NE(r.advice.find("e_offset"), std::string::npos) << r.advice;
  EXPECT_TRUE(std::isnan(r.sigma_of(Param::t_fit)));
}

TEST(Fit, RejectsBadInput) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto tiny = synthetic(m, ctx, 0.0, 0, 5);
  EXPECT_THROW(fit(tiny, m, ctx), std::invalid_argument);
  auto bad = m;
  bad[Param::t_fit] = 0.0;
  EXPECT_THROW(fit(synthetic(m, ctx, 0.0, 0, 64), bad, ctx), DomainError);
}

TEST(Fit, MaxIterationsFlagsBestSoFar) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 4);
  LmOptions opt;
  opt.max_iterations = 1;
  const auto start = perturbed(m, 1.3);
  const auto r = fit(data, start, ctx, opt);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.stop_reason, "maximum iterations reached");
  EXPECT_LT(r.chi_square, r.initial_cost);
}

TEST(Fit, ZeroFieldDoubletRatio) {
  const auto bi = make_system("Bi");
  const LineshapeSpec shape{0.5, std::sqrt(7.9 * 7.9 - 1.8 * 1.8), 1.8, 10.0};
  const auto lines = enumerate_lines(bi, HoleParams{}, 0.0, 4.2, NuclearDistribution::uniform(nine_halves));
  auto data = synthesize(lines, shape);
  const double peak = *std::max_element(data.intensities.begin(), data.intensities.end());
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 0.01 * peak);
  for (double& y : data.intensities) y += noise(rng);

  // two pseudo-Voigt peaks: areas, centers and a common width are free
  auto model = [&](const Eigen::VectorXd& x) {
    if (!(x[4] > 0.0)) throw DomainError("width");
    const PseudoVoigt pv(LineshapeSpec{0.5, x[4], 1.8, 10.0});
    Eigen::VectorXd r(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double e = data.energies[i];
      r[static_cast<Eigen::Index>(i)] = x[0] * pv(e - x[2]) + x[1] * pv(e - x[3]) - data.intensities[i];
    }
    return r;
  };
  double lo = 1e300, hi = -1e300;
  for (const auto& l : lines) {
    lo = std::min(lo, l.photon_energy);
    hi = std::max(hi, l.photon_energy);
  }
  Eigen::VectorXd x0(5);
  x0 << 0.5, 0.5, lo + 2.0, hi - 2.0, 5.0;
  const auto r = levenberg_marquardt(model, x0, Eigen::VectorXd::Ones(5));
  ASSERT_TRUE(r.converged);
  // the line at higher photon energy starts from the 11-fold upper D0 level
  const double ratio = r.x[0] / r.x[1];
  const Eigen::MatrixXd cov = (r.jacobian.transpose() * r.jacobian).inverse() * r.cost / (r.residuals.size() - 5.0);
  const double rel = std::sqrt(cov(0, 0)) / r.x[0] + std::sqrt(cov(1, 1)) / r.x[1];
  EXPECT_NEAR(ratio, 11.0 / 9.0, 3.0 * rel * ratio);
  EXPECT_NEAR(r.x[2] - r.x[3], -zero_field_splitting(bi), 0.05);
}

TEST(JointFit, SingleDatasetMatchesPlainFit) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.01, 8);
  const auto start = perturbed(m, 1.1);
  const auto a = fit(data, start, ctx);
  const auto b = joint_fit({JointDataset{data, ctx, start}}, {Param::g1});
  ASSERT_EQ(b.spectra.size(), 1u);
  for (std::size_t k = 0; k < param_count; ++k) EXPECT_EQ(a.model.values[k], b.spectra[0].model.values[k]);
  EXPECT_EQ(a.chi_square, b.chi_square);
}

// A 1-sigma interval covers the truth about 68 % of the time, so the check
// runs over several noise realizations.
TEST(JointFit, SharedHoleGFactor) {
  const double g1 = 0.91;
  int within_one = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<JointDataset> sets;
    unsigned seed = 30 + 2 * static_cast<unsigned>(trial);
    for (auto [b, t, p] : {std::tuple{2.0, 4.7, -0.10}, std::tuple{6.0, 1.5, -0.79}}) {
      auto m = truth_model(t, p, 1.0);
      m[Param::g1] = g1;
      const auto ctx = bi_context(b);
      auto start = m;
      start[Param::g1] = 0.90;
      start[Param::t_fit] *= 1.2;
      start[Param::p_fit] *= 0.8;
      sets.push_back({synthetic(m, ctx, 0.01, seed++), ctx, start});
    }
    const auto r = joint_fit(sets, {Param::g1});
    ASSERT_TRUE(r.converged) << r.stop_reason;
    ASSERT_EQ(r.spectra.size(), 2u);
    EXPECT_EQ(r.spectra[0].model[Param::g1], r.spectra[1].model[Param::g1]);
    const double sg = r.spectra[0].sigma_of(Param::g1);
    ASSERT_TRUE(std::isfinite(sg)) << r.advice;
    const double z = std::abs(r.spectra[0].model[Param::g1] - g1) / sg;
    EXPECT_LE(z, 3.0) << "trial " << trial;
    if (z <= 1.0) ++within_one;
  }
  // binomial(10, 0.68): fewer than 4 hits has probability ~1 %
  EXPECT_GE(within_one, 4);
}

TEST(JointFit, FourSpectrumRoundTrip) {
  struct Row {
    double b, t, p;
  };
  const std::vector<Row> rows{{2, 8.9, -0.03}, {2, 4.7, -0.10}, {2, 1.7, -0.54}, {6, 1.5, -0.79}};
  std::vector<JointDataset> sets;
  unsigned seed = 40;
  for (const auto& row : rows) {
    const auto ctx = bi_context(row.b);
    const auto m = truth_model(row.t, row.p);
    auto start = m;
    start[Param::t_fit] *= 1.15;
    start[Param::p_fit] *= 0.85;
    start[Param::e_offset] += 1.0;
    sets.push_back({synthetic(m, ctx, 0.01, seed++), ctx, start});
  }
  const auto r = joint_fit(sets, {Param::g1});
  ASSERT_TRUE(r.converged) << r.stop_reason;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& s = r.spectra[k];
    EXPECT_NEAR(s.model[Param::t_fit], rows[k].t, 3.0 * s.sigma_of(Param::t_fit)) << k;
    EXPECT_NEAR(s.model[Param::p_fit], rows[k].p, 3.0 * s.sigma_of(Param::p_fit)) << k;
  }
}

TEST(JointFit, RejectsInconsistentSharedParameters) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54);
  const auto data = synthetic(m, ctx, 0.0, 0, 64);
  auto other = m;
  other[Param::g1] = 0.9;
  EXPECT_THROW(joint_fit({{data, ctx, m}, {data, ctx, other}}, {Param::g1}), std::invalid_argument);
  EXPECT_THROW(joint_fit({}, {}), std::invalid_argument);
}

TEST(Report, DeltaMethodReferenceRows) {
  FitResult r;
  r.model = truth_model(4.7, -0.10);
  r.sigma.fill(std::numeric_limits<double>::quiet_NaN());
  r.sigma[idx(Param::p_fit)] = 0.02;
  r.field = 2.0;
  r.nuclear_spin = nine_halves;
  auto rep = report(r);
  EXPECT_NEAR(rep.fraction_at_min, 0.21, 0.005);
  EXPECT_NEAR(rep.fraction_at_min_sigma, 0.02, 0.01);
  EXPECT_NEAR(rep.electron_polarization, -0.27, 0.01);

  r.model = truth_model(1.5, -0.79);
  r.sigma[idx(Param::p_fit)] = 0.21;
  r.field = 6.0;
  rep = report(r);
  EXPECT_NEAR(rep.fraction_at_min, 0.88, 0.01);
  EXPECT_GT(rep.fraction_at_min_sigma, 0.07);
  EXPECT_LT(rep.fraction_at_min_sigma, 0.28);
  // oracle: numerical derivative of the closed form
  const double h = 1e-6;
  auto closed = [](double p) {
    const double q = (1 + p) / (1 - p);
    return (1 - q) / (1 - std::pow(q, 10));
  };
  EXPECT_NEAR(rep.fraction_at_min_sigma, 0.21 * std::abs(closed(-0.79 + h) - closed(-0.79 - h)) / (2 * h), 1e-6);
}

TEST(Report, ZeroPolarization) {
  FitResult r;
  r.model = truth_model(4.2, 0.0);
  r.field = 2.0;
  r.nuclear_spin = nine_halves;
  EXPECT_DOUBLE_EQ(report(r).fraction_at_min, 0.1);
}

TEST(InitialGuess, CloseEnoughToConverge) {
  const auto ctx = bi_context(2.0);
  const auto m = truth_model(1.7, -0.54, 4.0);
  const auto data = synthetic(m, ctx, 0.01, 21);
  auto base = FitModel::defaults();
  base[Param::t_fit] = 2.0;
  const auto guess = initial_guess(data, ctx, base);
  EXPECT_NEAR(guess[Param::e_offset], 4.0, 15.0);
  EXPECT_NEAR(guess[Param::amplitude], 100.0, 30.0);
  EXPECT_GT(guess[Param::fwhm], 2.0);
  EXPECT_LT(guess[Param::fwhm], 15.0);
  const auto r = fit(data, guess, ctx);
  EXPECT_NEAR(r.model[Param::t_fit], 1.7, 0.2);
  EXPECT_NEAR(r.model[Param::p_fit], -0.54, 0.05);
}
