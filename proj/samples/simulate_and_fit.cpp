// Simulate a noisy Bi spectrum at 2 T and recover T, P and N(-9/2).
#include <algorithm>
#include <cstdio>
#include <random>

#include "donorpl/spectral_fit.hpp"

using namespace donorpl;

int main() {
  FitContext ctx;
  ctx.system = make_system("Bi");
  ctx.field = 2.0;

  FitModel truth = FitModel::defaults();
  truth[Param::t_fit] = 1.7;
  truth[Param::p_fit] = -0.54;
  truth[Param::amplitude] = 100.0;

  const auto lines = model_lines(truth, ctx);
  SpectrumGrid data;
  data.energies = default_grid(lines, lineshape_of(truth, ctx), 1024, 12.0);
  data.intensities = model_spectrum(truth, ctx, data.energies);
  const double peak = *std::max_element(data.intensities.begin(), data.intensities.end());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.01 * peak);
  for (double& y : data.intensities) y += noise(rng);

  const auto result = fit(data, initial_guess(data, ctx), ctx);
  const auto rep = report(result);
  std::printf("converged: %s after %d iterations\n", rep.converged ? "yes" : "no", rep.iterations);
  std::printf("T_fit  = %.3f +/- %.3f K\n", rep.model[Param::t_fit], rep.sigma[idx(Param::t_fit)]);
  std::printf("P_fit  = %.4f +/- %.4f\n", rep.model[Param::p_fit], rep.sigma[idx(Param::p_fit)]);
  std::printf("N(-9/2) = %.3f +/- %.3f\n", rep.fraction_at_min, rep.fraction_at_min_sigma);
  std::printf("P_e    = %.3f\n", rep.electron_polarization);
}
