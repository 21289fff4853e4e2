#pragma once

#include <optional>
#include <vector>

#include "empaste/core.hpp"

namespace empaste {

// Discrete Poisson problem on a width x height grid. Unknowns are the pixels
// of `region`; every 4-neighbor outside the region (but inside the grid) acts
// as a Dirichlet value taken from `boundary`. Neighbors outside the grid are
// ignored.
//
// guidance_x(x, y) is the desired forward difference f(x+1, y) - f(x, y) and
// guidance_y(x, y) the desired f(x, y+1) - f(x, y). The solution minimizes
// the squared mismatch between ∇f and the guidance over all grid edges that
// touch the region.
struct PoissonProblem {
  BinaryMask region;
  std::vector<double> guidance_x;
  std::vector<double> guidance_y;
  std::vector<double> boundary;
  std::optional<std::vector<double>> initial_guess;  // full grid, region values used
};

struct PoissonOptions {
  double tolerance = 1e-6;          // on ||r|| / ||b||
  std::size_t max_iterations = 0;   // 0 selects 10 * sqrt(|region|)
};

struct PoissonSolution {
  std::vector<double> values;  // full grid; outside the region equals boundary
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradient on the 5-point Laplacian. Throws NonConvergence if the
// tolerance is not met within the iteration budget.
PoissonSolution poisson_solve(const PoissonProblem& problem, const PoissonOptions& options = {});

}  // namespace empaste
