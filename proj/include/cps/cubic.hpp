#pragma once

// Cubic differentials, the induced endomorphism field and its norm, and the
// holomorphicity residual.
//
// With w the dz^3 coefficient and g = rho |dz|^2 the chart metric, the
// endomorphism field defined by Re(w(X,Y,Z)) = g(A(X)Y, Z) is
//   A(e1) = (1/rho) [[ a, -b], [-b, -a]],   A(e2) = (1/rho) [[-b, -a], [-a, b]]
// for w = a + i b, and the commutator identity
//   [A(X), A(Y)] Z = -G(w,w) (g(Y,Z) X - g(X,Z) Y)
// pins the norm to G(w,w) = 2 |w|^2 / rho^3.

#include "cps/calculus.hpp"

namespace cps {

inline CubicDifferential constant_cubic(const Surface& S, Cplx c) {
  CubicDifferential w(S.num_vertices(), c);
  S.sync(w);
  return w;
}

inline std::pair<Mat2, Mat2> a_matrices(Cplx w, double rho) {
  double a = w.real() / rho, b = w.imag() / rho;
  Mat2 a1, a2;
  a1 << a, -b, -b, -a;
  a2 << -b, -a, -a, b;
  return {a1, a2};
}

// Directional pair (A(e1), A(e2)).
inline std::array<EndomorphismField, 2> a_operator(
    const Surface& S, const ConformalMetric& g, const CubicDifferential& w) {
  require_positive(S, g, "a_operator");
  std::array<EndomorphismField, 2> out = {
      EndomorphismField(S.num_vertices()), EndomorphismField(S.num_vertices())};
  for (int v = 0; v < S.num_vertices(); ++v) {
    auto [a1, a2] = a_matrices(w.coeff[v], metric_factor(S, g, v));
    out[0].v[v] = a1;
    out[1].v[v] = a2;
  }
  return out;
}

// Pointwise norm G^g(w, w); scales by lambda^-3 under g -> lambda g.
inline ScalarField norm_G(const Surface& S, const ConformalMetric& g,
                          const CubicDifferential& w) {
  require_positive(S, g, "norm_G");
  ScalarField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    double rho = metric_factor(S, g, v);
    out[v] = 2.0 * std::norm(w.coeff[v]) / (rho * rho * rho);
  }
  return out;
}

// sup over vertices of |d^{nabla-bar} A| with nabla-bar the Levi-Civita
// connection of g; O(h) iff w is holomorphic for the conformal structure.
inline double holomorphicity_residual(const Surface& S,
                                      const ConformalMetric& g,
                                      const CubicDifferential& w) {
  auto A = a_operator(S, g, w);
  ConnectionField lc = levi_civita(S, g);
  double m = 0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    Mat2 r = dnabla_endo_pair(S, d, A[0], A[1], lc);
    m = std::max(m, r.cwiseAbs().maxCoeff());
  }
  return m;
}

// Reassemble the dz^3 coefficient from Omega(X,Y,Z) = g(A(X)Y, Z):
// w = Omega(e1,e1,e1) - i Omega(e1,e1,e2).
inline CubicDifferential cubic_from_a(const Surface& S,
                                      const ConformalMetric& g,
                                      const EndomorphismField& a1) {
  CubicDifferential w(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    double rho = metric_factor(S, g, v);
    Vec2 ae1 = a1.v[v].col(0);
    w.coeff[v] = Cplx(rho * ae1.x(), -rho * ae1.y());
  }
  S.sync(w);
  return w;
}

}  // namespace cps
