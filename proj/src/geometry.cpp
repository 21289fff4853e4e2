#include "empaste/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "empaste/rng.hpp"

namespace empaste {

Circle max_inscribed_circle(const BinaryMask& free) {
  const std::vector<double> d2 = squared_distance_to_background(free);
  double best = 0.0;
  std::size_t best_index = 0;
  bool found = false;
  for (std::size_t i = 0; i < d2.size(); ++i) {
    if (d2[i] > best) {
      best = d2[i];
      best_index = i;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::EmptyMask, "no free pixel for an inscribed circle");
  const int w = free.width();
  return Circle{{static_cast<double>(best_index % static_cast<std::size_t>(w)),
                 static_cast<double>(best_index / static_cast<std::size_t>(w))},
                std::sqrt(best)};
}

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

namespace {

Circle from_two(const Point2& a, const Point2& b) {
  const Point2 c{(a.x + b.x) / 2, (a.y + b.y) / 2};
  return {c, distance(a, b) / 2};
}

// Circumcircle, or the widest two-point circle when (nearly) collinear.
Circle from_three(const Point2& a, const Point2& b, const Point2& c) {
  const double bx = b.x - a.x, by = b.y - a.y;
  const double cx = c.x - a.x, cy = c.y - a.y;
  const double d = 2 * (bx * cy - by * cx);
  const double scale = std::max({std::abs(bx), std::abs(by), std::abs(cx), std::abs(cy), 1.0});
  if (std::abs(d) <= 1e-12 * scale * scale) {
    Circle best = from_two(a, b);
    for (const Circle& cand : {from_two(a, c), from_two(b, c)})
      if (cand.radius > best.radius) best = cand;
    return best;
  }
  const double b2 = bx * bx + by * by;
  const double c2 = cx * cx + cy * cy;
  const double ux = (cy * b2 - by * c2) / d;
  const double uy = (bx * c2 - cx * b2) / d;
  return {{a.x + ux, a.y + uy}, std::hypot(ux, uy)};
}

bool contains(const Circle& c, const Point2& p) {
  return distance(c.center, p) <= c.radius * (1 + 1e-12) + 1e-9;
}

}  // namespace

Circle min_enclosing_circle(std::span<const Point2> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyMask, "enclosing circle of no points");
  std::vector<Point2> pts(points.begin(), points.end());
  if (pts.size() > 3) pts = convex_hull(std::move(pts));
  // Fixed-seed shuffle keeps the expected linear running time deterministic.
  Rng rng(0x5eed5eedULL);
  for (std::size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.below(i)]);

  Circle c{pts[0], 0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (contains(c, pts[i])) continue;
    c = Circle{pts[i], 0.0};
    for (std::size_t j = 0; j < i; ++j) {
      if (contains(c, pts[j])) continue;
      c = from_two(pts[i], pts[j]);
      for (std::size_t k = 0; k < j; ++k) {
        if (contains(c, pts[k])) continue;
        c = from_three(pts[i], pts[j], pts[k]);
      }
    }
  }
  return c;
}

Circle min_enclosing_circle(const BinaryMask& mask) {
  // Only the extreme pixels of each row can lie on the hull.
  std::vector<Point2> pts;
  for (int y = 0; y < mask.height(); ++y) {
    int first = -1;
    int last = -1;
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      if (first < 0) first = x;
      last = x;
    }
    if (first < 0) continue;
    pts.push_back({static_cast<double>(first), static_cast<double>(y)});
    if (last != first) pts.push_back({static_cast<double>(last), static_cast<double>(y)});
  }
  if (pts.empty()) throw Error(ErrorCode::EmptyMask, "enclosing circle of empty mask");
  return min_enclosing_circle(pts);
}

}  // namespace empaste
