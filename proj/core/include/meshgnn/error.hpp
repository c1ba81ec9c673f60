#pragma once

#include <stdexcept>
#include <string>

namespace meshgnn {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Random geometry generation ran out of rejection attempts.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Meshing failed or a mesh violates its structural invariants.
class MeshError : public Error {
 public:
  using Error::Error;
};

// Boundary-condition sampling could not be satisfied on the given mesh.
class BoundaryError : public Error {
 public:
  using Error::Error;
};

// Stiffness system is singular because rigid-body modes are unconstrained.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

// Iterative solver failed to reach the requested residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Point set has no well-defined principal axes.
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

// Tensor or graph shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, schema mismatch or incompatible inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace meshgnn
