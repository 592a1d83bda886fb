#pragma once

// Shared aliases, error types and small numeric helpers.

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace cps {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Cplx = std::complex<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad construction parameters (grid too coarse, Im tau <= 0, ...).
struct InvalidDomainError : Error {
  using Error::Error;
};

// Field data violating an operation's precondition (f <= 0, J^2 != -1, ...).
struct InvalidInputError : Error {
  using Error::Error;
};

// Point outside the mathematical domain of an operator (cone boundary, ...).
struct DomainError : Error {
  using Error::Error;
};

// Section fails the immersion condition at some vertex.
struct NotImmersedError : Error {
  int vertex = -1;
  NotImmersedError(const std::string& what, int v) : Error(what), vertex(v) {}
};

// Iterative solver gave up; carries the residual history for diagnosis.
struct SolveError : Error {
  std::vector<double> history;
  SolveError(const std::string& what, std::vector<double> hist)
      : Error(what), history(std::move(hist)) {}
};

inline Cplx to_cplx(const Vec2& v) { return {v.x(), v.y()}; }
inline Vec2 to_vec2(Cplx z) { return {z.real(), z.imag()}; }

// 2x2 matrix of multiplication by a complex number.
inline Mat2 cplx_mat(Cplx w) {
  Mat2 m;
  m << w.real(), -w.imag(), w.imag(), w.real();
  return m;
}

// Rotation by +pi/2 in an oriented conformal chart.
inline Mat2 conformal_rotation() {
  Mat2 j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

// Eigenvalues of a symmetric 2x2 matrix, ascending.
inline Vec2 sym_eigenvalues(const Mat2& s) {
  double tr = s(0, 0) + s(1, 1);
  double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  double d = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return {0.5 * tr - d, 0.5 * tr + d};
}

inline double sup_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace cps
