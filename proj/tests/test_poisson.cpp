#include <doctest.h>

#include "empaste/poisson.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace empaste;

namespace {

PoissonProblem random_problem(Rng& rng, int w, int h, const BinaryMask& region) {
  PoissonProblem p;
  p.region = region;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  p.guidance_x.resize(n);
  p.guidance_y.resize(n);
  p.boundary.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.guidance_x[i] = rng.uniform(-20, 20);
    p.guidance_y[i] = rng.uniform(-20, 20);
    p.boundary[i] = rng.uniform(0, 255);
  }
  return p;
}

}  // namespace

TEST_CASE("poisson matches a dense least-squares solve") {
  Rng rng(51);
  for (int t = 0; t < 10; ++t) {
    const int w = 14, h = 12;
    BinaryMask region(w, h);
    for (int y = 2; y < 10; ++y)
      for (int x = 3 + (y % 3); x < 11; ++x) region.set(x, y);
    PoissonProblem p = random_problem(rng, w, h, region);
    PoissonOptions o;
    o.tolerance = 1e-12;
    const auto sol = poisson_solve(p, o);
    const auto want = testing::dense_poisson(p);
    double worst = 0;
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(sol.values[i] - want[i]));
    CHECK(worst < 1e-6);
    CHECK(sol.relative_residual <= 1e-12);
  }
}

TEST_CASE("poisson with zero guidance and constant boundary is constant") {
  const int w = 20, h = 20;
  BinaryMask region(w, h);
  for (int y = 1; y < 19; ++y)
    for (int x = 1; x < 19; ++x) region.set(x, y);
  PoissonProblem p;
  p.region = region;
  p.guidance_x.assign(w * h, 0.0);
  p.guidance_y.assign(w * h, 0.0);
  p.boundary.assign(w * h, 117.0);
  PoissonOptions o;
  o.tolerance = 1e-13;
  const auto sol = poisson_solve(p, o);
  for (double v : sol.values) CHECK(std::abs(v - 117.0) < 1e-10);
}

TEST_CASE("poisson region touching the raster edge uses only in-grid neighbours") {
  Rng rng(52);
  BinaryMask region(8, 8);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 4; ++x) region.set(x, y);
  PoissonProblem p = random_problem(rng, 8, 8, region);
  PoissonOptions o;
  o.tolerance = 1e-12;
  const auto sol = poisson_solve(p, o);
  const auto want = testing::dense_poisson(p);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(sol.values[i] == doctest::Approx(want[i]).epsilon(1e-7));
}

TEST_CASE("poisson failures") {
  Rng rng(53);
  BinaryMask region(30, 30);
  for (int y = 1; y < 29; ++y)
    for (int x = 1; x < 29; ++x) region.set(x, y);
  PoissonProblem p = random_problem(rng, 30, 30, region);
  PoissonOptions o;
  o.max_iterations = 2;
  o.tolerance = 1e-14;
  CHECK_THROWS_AS_CODE(poisson_solve(p, o), ErrorCode::NonConvergence);

  p.boundary.pop_back();
  CHECK_THROWS_AS_CODE(poisson_solve(p), ErrorCode::DimensionMismatch);
}

TEST_CASE("poisson initial guess does not change the solution") {
  Rng rng(54);
  BinaryMask region(10, 10);
  for (int y = 2; y < 8; ++y)
    for (int x = 2; x < 8; ++x) region.set(x, y);
  PoissonProblem p = random_problem(rng, 10, 10, region);
  PoissonOptions o;
  o.tolerance = 1e-12;
  const auto cold = poisson_solve(p, o);
  p.initial_guess = std::vector<double>(100, 50.0);
  const auto warm = poisson_solve(p, o);
  for (std::size_t i = 0; i < 100; ++i) CHECK(warm.values[i] == doctest::Approx(cold.values[i]).epsilon(1e-8));
}
