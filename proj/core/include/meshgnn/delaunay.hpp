#pragma once

#include <span>
#include <vector>

#include "meshgnn/geomesh.hpp"

namespace meshgnn {

// Bowyer-Watson Delaunay triangulation of a point set. Returned triangles are
// counter-clockwise and index into `points`.
std::vector<Triangle> delaunay_triangulate(std::span<const Vec2> points);

}  // namespace meshgnn
