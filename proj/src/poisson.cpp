#include "empaste/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace empaste {

namespace {

struct Neighbor {
  int dx;
  int dy;
};
constexpr Neighbor kNeighbors[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

}  // namespace

PoissonSolution poisson_solve(const PoissonProblem& problem, const PoissonOptions& options) {
  const BinaryMask& region = problem.region;
  const int w = region.width();
  const int h = region.height();
  const std::size_t grid = region.size();
  if (problem.guidance_x.size() != grid || problem.guidance_y.size() != grid || problem.boundary.size() != grid)
    throw Error(ErrorCode::DimensionMismatch, "poisson fields must match the region grid");
  if (problem.initial_guess && problem.initial_guess->size() != grid)
    throw Error(ErrorCode::DimensionMismatch, "poisson initial guess must match the region grid");

  // Compact numbering of the unknowns.
  std::vector<int> slot(grid, -1);
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < grid; ++i) {
    if (region.bits()[i]) {
      slot[i] = static_cast<int>(cells.size());
      cells.push_back(i);
    }
  }
  const std::size_t n = cells.size();
  PoissonSolution sol;
  sol.values = problem.boundary;
  if (n == 0) return sol;

  // Assemble b and the diagonal; the off-diagonal part stays implicit.
  std::vector<double> b(n, 0.0);
  std::vector<double> diag(n, 0.0);
  std::vector<int> nbr(4 * n, -1);
  double fringe_sum = 0.0;
  std::size_t fringe_count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const int x = static_cast<int>(cells[k] % static_cast<std::size_t>(w));
    const int y = static_cast<int>(cells[k] / static_cast<std::size_t>(w));
    for (int j = 0; j < 4; ++j) {
      const int qx = x + kNeighbors[j].dx;
      const int qy = y + kNeighbors[j].dy;
      if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
      const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
      const std::size_t p = cells[k];
      // v_pq = desired f_p - f_q.
      double v = 0.0;
      switch (j) {
        case 0: v = -problem.guidance_x[p]; break;
        case 1: v = problem.guidance_x[q]; break;
        case 2: v = -problem.guidance_y[p]; break;
        case 3: v = problem.guidance_y[q]; break;
      }
      diag[k] += 1.0;
      b[k] += v;
      if (slot[q] >= 0) nbr[4 * k + j] = slot[q];
      else {
        b[k] += problem.boundary[q];
        fringe_sum += problem.boundary[q];
        ++fringe_count;
      }
    }
  }

  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t k = 0; k < n; ++k) {
      double acc = diag[k] * in[k];
      for (int j = 0; j < 4; ++j) {
        const int s = nbr[4 * k + j];
        if (s >= 0) acc -= in[static_cast<std::size_t>(s)];
      }
      out[k] = acc;
    }
  };
  auto dot = [n](const std::vector<double>& a, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * c[i];
    return s;
  };

  // Without a caller-supplied guess, start from the mean Dirichlet value.
  std::vector<double> xk(n, 0.0);
  if (problem.initial_guess) {
    for (std::size_t k = 0; k < n; ++k) xk[k] = (*problem.initial_guess)[cells[k]];
  } else if (fringe_count > 0) {
    std::fill(xk.begin(), xk.end(), fringe_sum / static_cast<double>(fringe_count));
  }

  const double bnorm = std::sqrt(dot(b, b));
  std::vector<double> r(n), p(n), ap(n);
  apply(xk, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  double rr = dot(r, r);
  const double target = options.tolerance * (bnorm > 0 ? bnorm : 1.0);
  const std::size_t budget =
      options.max_iterations ? options.max_iterations
                             : static_cast<std::size_t>(std::ceil(10.0 * std::sqrt(static_cast<double>(n))));
  p = r;
  std::size_t it = 0;
  while (std::sqrt(rr) > target) {
    if (it >= budget)
      throw Error(ErrorCode::NonConvergence, "poisson CG did not converge in " + std::to_string(budget) + " iterations");
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw Error(ErrorCode::NonConvergence, "poisson system is singular on this region");
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      xk[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    ++it;
  }

  for (std::size_t k = 0; k < n; ++k) sol.values[cells[k]] = xk[k];
  sol.iterations = it;
  sol.relative_residual = bnorm > 0 ? std::sqrt(rr) / bnorm : std::sqrt(rr);
  return sol;
}

}  // namespace empaste
