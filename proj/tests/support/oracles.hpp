#pragma once

// Slow, direct reference implementations checked against the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "empaste/core.hpp"
#include "empaste/poisson.hpp"
#include "empaste/rng.hpp"

namespace empaste::testing {

// Exhaustive clearance: nearest false pixel center, raster border included.
// Ties keep the first pixel in row-major order.
inline Circle brute_inscribed(const BinaryMask& free) {
  const int w = free.width(), h = free.height();
  std::vector<std::pair<int, int>> blocked;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!free.at(x, y)) blocked.emplace_back(x, y);
  double best = -1;
  Point2 at{};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!free.at(x, y)) continue;
      double d2 = std::min({double(x + 1) * (x + 1), double(w - x) * (w - x), double(y + 1) * (y + 1),
                            double(h - y) * (h - y)});
      for (auto [u, v] : blocked) d2 = std::min(d2, double(u - x) * (u - x) + double(v - y) * (v - y));
      if (d2 > best) {
        best = d2;
        at = {double(x), double(y)};
      }
    }
  return {at, std::sqrt(best)};
}

// Smallest circle over every pair and triple candidate that covers all points.
inline Circle brute_enclosing(const std::vector<Point2>& p) {
  if (p.size() == 1) return {p[0], 0};
  auto covers = [&](const Circle& c) {
    for (const auto& q : p)
      if (distance(c.center, q) > c.radius * (1 + 1e-12) + 1e-9) return false;
    return true;
  };
  Circle best{{0, 0}, 1e300};
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      Circle c{{(p[i].x + p[j].x) / 2, (p[i].y + p[j].y) / 2}, distance(p[i], p[j]) / 2};
      if (c.radius < best.radius && covers(c)) best = c;
      for (std::size_t k = j + 1; k < p.size(); ++k) {
        const double ax = p[i].x, ay = p[i].y, bx = p[j].x, by = p[j].y, cx = p[k].x, cy = p[k].y;
        const double d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
        if (std::abs(d) < 1e-12) continue;
        const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
        const Point2 o{(a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d,
                       (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d};
        const Circle t{o, distance(o, p[i])};
        if (t.radius < best.radius && covers(t)) best = t;
      }
    }
  return best;
}

// Least squares over every grid edge touching the region, solved densely.
inline std::vector<double> dense_poisson(const PoissonProblem& p) {
  const int w = p.region.width(), h = p.region.height();
  std::vector<int> index(static_cast<std::size_t>(w) * h, -1);
  int n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (p.region.at(x, y)) index[y * w + x] = n++;
  struct Edge {
    int a, b;
    double g;  // desired f(b) - f(a)
  };
  std::vector<Edge> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (x + 1 < w && (index[i] >= 0 || index[i + 1] >= 0)) edges.push_back({i, i + 1, p.guidance_x[i]});
      if (y + 1 < h && (index[i] >= 0 || index[i + w] >= 0)) edges.push_back({i, i + w, p.guidance_y[i]});
    }
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(edges.size()), n);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t r = 0; r < edges.size(); ++r) {
    const auto& e = edges[r];
    double known = e.g;
    if (index[e.b] >= 0) D(r, index[e.b]) += 1; else known -= p.boundary[e.b];
    if (index[e.a] >= 0) D(r, index[e.a]) -= 1; else known += p.boundary[e.a];
    rhs(r) = known;
  }
  const Eigen::VectorXd f = D.colPivHouseholderQr().solve(rhs);
  std::vector<double> out = p.boundary;
  for (int i = 0; i < w * h; ++i)
    if (index[i] >= 0) out[i] = f(index[i]);
  return out;
}

inline Eigen::MatrixXd random_spd(Rng& rng, int d) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace empaste::testing
