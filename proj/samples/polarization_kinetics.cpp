// Flip-flop pumping of Bi nuclei at 6 T: trajectory of N(-9/2) and the 90 % time.
#include <cstdio>

#include "donorpl/kinetics.hpp"

using namespace donorpl;

int main() {
  KineticsParams p;
  p.fe_polarization = -1.0;
  const auto model = build_rate_model(make_system("Bi"), p);
  const auto start = branch_thermalized_uniform(model, p.temperature);

  std::printf("%12s %10s %10s\n", "time_s", "N(-9/2)", "pl_flux");
  for (const auto& s : evolve(model, start, {0.0, 1e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3}))
    std::printf("%12.3g %10.5f %10.5f\n", s.time, s.marginal.front(), pl_flux(model, s.populations));

  std::printf("90%% polarization after %.3g s\n", polarization_time(model, 0.9, start));
  std::printf("expected flip-flop captures from a uniform start: %.3f\n",
              expected_flip_flops(model, uniform_lower_branch(model)));
}
