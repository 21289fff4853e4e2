#pragma once

#include <span>
#include <vector>

#include "empaste/core.hpp"

namespace empaste {

// Largest clearance disc inside `free`: the pixel maximizing the Euclidean
// distance to the nearest non-free pixel (the raster border counts as
// non-free), with ties resolved in row-major order.
Circle max_inscribed_circle(const BinaryMask& free);

// Smallest circle containing every true pixel center.
Circle min_enclosing_circle(const BinaryMask& mask);

// Smallest circle containing every point (Welzl, expected linear time).
Circle min_enclosing_circle(std::span<const Point2> points);

// Convex hull in counter-clockwise order, collinear points removed.
std::vector<Point2> convex_hull(std::vector<Point2> points);

}  // namespace empaste
