#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "beamunfold/solvers.hpp"
#include "support.hpp"

using namespace beamunfold;

// Direction norm relative to ||Lambda|| at the returned V, bounded by 10 tol
// on every seeded instance that converges before max_iters.
TEST_CASE("converged fastfp: projected direction within 10 tol") {
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto [cfg, ch] = testing::rayleigh_instance(1, 2, 3, 2, 1, 120 + s);
    SolveOptions o;
    o.max_iters = 20000;
    o.tol = 1e-6;
    const SolveTrace t = fastfp_solve(ch, cfg, initial_beamformers(cfg, s), o);
    if (!t.converged) continue;
    ++checked;
    INFO("seed " << s << " iterations " << t.iterations);
    CHECK(testing::projected_stationarity(ch, cfg, t.V) <= 10.0 * o.tol);
  }
  CHECK(checked > 0);
}
