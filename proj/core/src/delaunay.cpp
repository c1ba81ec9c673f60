#include "meshgnn/delaunay.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "meshgnn/error.hpp"

namespace meshgnn {
namespace {

// Positive when d lies strictly inside the circumcircle of CCW triangle abc.
// Extended precision reduces sign errors for nearly cocircular boundary samples.
long double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const long double adx = static_cast<long double>(a.x()) - d.x();
  const long double ady = static_cast<long double>(a.y()) - d.y();
  const long double bdx = static_cast<long double>(b.x()) - d.x();
  const long double bdy = static_cast<long double>(b.y()) - d.y();
  const long double cdx = static_cast<long double>(c.x()) - d.x();
  const long double cdy = static_cast<long double>(c.y()) - d.y();
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

struct Tri {
  std::array<int, 3> v;
  bool alive = true;
};

}  // namespace

std::vector<Triangle> delaunay_triangulate(std::span<const Vec2> input) {
  const int n = static_cast<int>(input.size());
  if (n < 3) throw MeshError("delaunay: need at least 3 points");

  Vec2 lo = input[0], hi = input[0];
  for (const Vec2& p : input) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 c = 0.5 * (lo + hi);
  const double d = std::max((hi - lo).maxCoeff(), 1e-12);

  std::vector<Vec2> pts(input.begin(), input.end());
  pts.emplace_back(c.x() - 20.0 * d, c.y() - 10.0 * d);
  pts.emplace_back(c.x() + 20.0 * d, c.y() - 10.0 * d);
  pts.emplace_back(c.x(), c.y() + 20.0 * d);

  std::vector<Tri> tris;
  tris.push_back({{n, n + 1, n + 2}});

  std::vector<int> bad;
  std::map<std::pair<int, int>, int> edge_count;
  for (int p = 0; p < n; ++p) {
    bad.clear();
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      if (!tris[t].alive) continue;
      const auto& v = tris[t].v;
      if (incircle(pts[v[0]], pts[v[1]], pts[v[2]], pts[p]) > 0.0L) bad.push_back(t);
    }
    if (bad.empty()) continue;  // duplicate of an existing vertex

    edge_count.clear();
    for (int t : bad) {
      const auto& v = tris[t].v;
      for (int k = 0; k < 3; ++k) {
        const int a = v[k], b = v[(k + 1) % 3];
        ++edge_count[{std::min(a, b), std::max(a, b)}];
      }
    }
    std::vector<std::array<int, 2>> rim;
    for (int t : bad) {
      const auto& v = tris[t].v;
      for (int k = 0; k < 3; ++k) {
        const int a = v[k], b = v[(k + 1) % 3];
        if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) rim.push_back({a, b});
      }
      tris[t].alive = false;
    }
    for (const auto& e : rim) tris.push_back({{e[0], e[1], p}});

    // Compact occasionally so scans stay proportional to live triangles.
    if (tris.size() > 4 * static_cast<std::size_t>(n) + 64) {
      std::erase_if(tris, [](const Tri& t) { return !t.alive; });
    }
  }

  std::vector<Triangle> out;
  for (const Tri& t : tris) {
    if (!t.alive) continue;
    if (t.v[0] >= n || t.v[1] >= n || t.v[2] >= n) continue;
    Triangle tri{t.v};
    if (orient2d(pts[tri.v[0]], pts[tri.v[1]], pts[tri.v[2]]) < 0.0) std::swap(tri.v[1], tri.v[2]);
    out.push_back(tri);
  }
  return out;
}

}  // namespace meshgnn
