#include "meshgnn/simcoords.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "meshgnn/error.hpp"

namespace meshgnn {

SimCoords to_simulation_coords(std::span<const Vec2> points) {
  const std::size_t n = points.size();
  if (n < 3) throw DegenerateGeometryError("simulation coordinates need at least 3 points");
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : points) centroid += p;
  centroid /= static_cast<double>(n);

  Mat2 cov = Mat2::Zero();
  for (const Vec2& p : points) {
    const Vec2 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  const double lmax = eig.eigenvalues()[1];
  if (!(eig.eigenvalues()[0] > 1e-12 * std::max(lmax, 1e-300)) || !(lmax > 0.0)) {
    throw DegenerateGeometryError("points are collinear: second principal variance is zero");
  }
  Vec2 axis = eig.eigenvectors().col(1).normalized();

  double skew = 0.0, scale = 0.0, extreme = 0.0;
  for (const Vec2& p : points) {
    const double s = axis.dot(p - centroid);
    skew += s * s * s;
    scale += s * s;
    if (std::abs(s) > std::abs(extreme)) extreme = s;
  }
  skew /= static_cast<double>(n);
  scale = std::pow(scale / static_cast<double>(n), 1.5);
  const double normalized_skew = skew / scale;
  if (std::abs(normalized_skew) >= 1e-9) {
    if (normalized_skew < 0.0) axis = -axis;
  } else if (extreme < 0.0) {
    axis = -axis;
  }

  SimCoords out;
  out.transform.translation = centroid;
  out.transform.rotation.col(0) = axis;
  out.transform.rotation.col(1) = Vec2(-axis.y(), axis.x());
  out.points.reserve(n);
  for (const Vec2& p : points) out.points.push_back(out.transform.to_local(p));
  return out;
}

Vec2 map_vector(const FrameTransform& t, const Vec2& v) { return t.rotation.transpose() * v; }

Vec2 map_vector_back(const FrameTransform& t, const Vec2& v) { return t.rotation * v; }

namespace {

Mat2 tensor(const Stress& s) {
  Mat2 m;
  m << s[0], s[2], s[2], s[1];
  return m;
}

Stress voigt(const Mat2& m) { return Stress(m(0, 0), m(1, 1), 0.5 * (m(0, 1) + m(1, 0))); }

}  // namespace

Stress map_stress(const FrameTransform& t, const Stress& physical) {
  return voigt(t.rotation.transpose() * tensor(physical) * t.rotation);
}

Stress map_stress_back(const FrameTransform& t, const Stress& local) {
  return voigt(t.rotation * tensor(local) * t.rotation.transpose());
}

FieldPair map_output_back(const FrameTransform& t, std::span<const Vec2> displacement,
                          std::span<const Stress> stress) {
  FieldPair out;
  out.displacement.reserve(displacement.size());
  for (const Vec2& u : displacement) out.displacement.push_back(map_vector_back(t, u));
  out.stress.reserve(stress.size());
  for (const Stress& s : stress) out.stress.push_back(map_stress_back(t, s));
  return out;
}

}  // namespace meshgnn
