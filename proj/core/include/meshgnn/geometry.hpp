#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace meshgnn {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
// Voigt form (xx, yy, xy).
using Stress = Eigen::Vector3d;

// Shoelace area; positive for counter-clockwise polygons. The polygon is
// implicitly closed; a repeated final vertex contributes nothing.
double signed_area(std::span<const Vec2> polygon);

// Twice the signed area of triangle (a, b, c).
double orient2d(const Vec2& a, const Vec2& b, const Vec2& c);

bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon);

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b);
double distance_to_polygon(const Vec2& p, std::span<const Vec2> polygon);

// True when closed segments [a,b] and [c,d] share a point.
bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

// Checks every pair of non-adjacent edges of a closed polygon for contact.
bool polygon_is_simple(std::span<const Vec2> polygon);

double polygon_perimeter(std::span<const Vec2> polygon);

}  // namespace meshgnn
