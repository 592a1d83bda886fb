#pragma once

// Closed-form reference data on the flat torus for a constant positive cubic
// coefficient: the constant conformal factor solving the k0 = 0 equation,
// the constant flat rank-3 connection, commuting holonomy exponentials and
// the immersion onto x1 x2 x3 = const in the common eigenbasis.

#include <unsupported/Eigen/MatrixFunctions>

#include "cps/connection.hpp"
#include "cps/wang.hpp"

namespace cps {

struct TiteicaReference {
  double c = 1.0;
  Cplx tau{0.0, 1.0};
  double mu = 0.0;      // (1/6) log(2 c^2)
  double q = 1.0;       // e^{2 mu}
  Mat3 M1, M2;          // constant connection coefficients
  Mat3 hol[2];          // exp(-M(1)), exp(-M(tau))
  Mat3 eigvecs;         // common eigenbasis (columns)
  Vec3 eig_exponents1;  // eigenvalues of M1 (sorted with eigvecs)
  Vec3 eig_exponents2;
  double product_const = 0.0;  // value of x1 x2 x3 in the eigenbasis

  Mat3 coefficient(const Vec2& dir) const {
    return dir.x() * M1 + dir.y() * M2;
  }
  // Developing map relative to a base chart point.
  Vec3 develop_at(const Vec2& p, const Vec2& base) const {
    Vec2 d = p - base;
    return (coefficient(d)).exp() * Vec3(0, 0, 1);
  }
  Vec3 holonomy_eigenvalues(int k) const {
    Vec3 ex = k == 0 ? eig_exponents1
                     : (tau.real() * eig_exponents1 + tau.imag() * eig_exponents2);
    return Vec3(std::exp(-ex[0]), std::exp(-ex[1]), std::exp(-ex[2]));
  }
};

inline TiteicaReference titeica_reference(double c, Cplx tau) {
  if (!(c > 0.0)) throw InvalidInputError("titeica_reference: c must be > 0");
  TiteicaReference t;
  t.c = c;
  t.tau = tau;
  t.mu = std::log(2.0 * c * c) / 6.0;
  t.q = std::exp(2.0 * t.mu);
  double ap = c / t.q;  // A-matrix entry in the chart
  t.M1 << ap, 0, 1, 0, -ap, 0, t.q, 0, 0;
  t.M2 << 0, -ap, 0, -ap, 0, 1, 0, t.q, 0;
  t.hol[0] = (-t.M1).exp();
  t.hol[1] = (-(tau.real() * t.M1 + tau.imag() * t.M2)).exp();
  // common eigenbasis from a generic combination (eigenvalues distinct)
  Mat3 N = t.M1 + 0.6180339887498949 * t.M2;
  Eigen::EigenSolver<Mat3> es(N);
  if (es.eigenvalues().imag().cwiseAbs().maxCoeff() > 1e-9 * c)
    throw Error("titeica_reference: unexpected complex eigenvalues");
  Mat3 V = es.eigenvectors().real();
  // deterministic order: by eigenvalue of N ascending
  std::array<int, 3> idx = {0, 1, 2};
  Vec3 ev = es.eigenvalues().real();
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ev[a] < ev[b]; });
  Mat3 Vs;
  for (int k = 0; k < 3; ++k) {
    Vec3 col = V.col(idx[k]);
    if (col[std::max_element(
            col.data(), col.data() + 3,
            [](double a, double b) { return std::abs(a) < std::abs(b); }) -
            col.data()] < 0)
      col = -col;
    Vs.col(k) = col;
  }
  t.eigvecs = Vs;
  Mat3 Vi = Vs.inverse();
  Mat3 D1 = Vi * t.M1 * Vs, D2 = Vi * t.M2 * Vs;
  if (D1.cwiseAbs().sum() - D1.diagonal().cwiseAbs().sum() > 1e-8 * (1 + c) ||
      D2.cwiseAbs().sum() - D2.diagonal().cwiseAbs().sum() > 1e-8 * (1 + c))
    throw Error("titeica_reference: simultaneous diagonalization failed");
  t.eig_exponents1 = D1.diagonal();
  t.eig_exponents2 = D2.diagonal();
  Vec3 base = Vi * Vec3(0, 0, 1);
  t.product_const = base.prod();
  return t;
}

// Field-level structure data for a given torus mesh.
struct TiteicaFields {
  ScalarField mu;
  ConformalMetric g;
  BilinearField h;
  CubicDifferential w;
  ConnectionField conn;
  std::array<EndomorphismField, 2> A;
  EConnection econn;
  EVectorField section;  // the canonical section (0,0,1)
};

inline TiteicaFields titeica_fields(const Surface& S,
                                    const TiteicaReference& t) {
  if (S.kind != SurfaceKind::Torus)
    throw InvalidInputError("titeica_fields: torus surface required");
  TiteicaFields f;
  int n = S.num_vertices();
  f.mu = ScalarField(n, t.mu);
  f.g = ConformalMetric(n, t.q);
  f.h = BilinearField(n);
  for (int v = 0; v < n; ++v) f.h.v[v] = t.q * Mat2::Identity();
  f.w = constant_cubic(S, t.c);
  f.A = a_operator(S, f.g, f.w);
  f.conn = ConnectionField(n);
  for (int v = 0; v < n; ++v) f.conn.v[v] = {f.A[0].v[v], f.A[1].v[v]};
  f.econn = build_nabla_h(S, f.conn, f.h);
  f.section = EVectorField(n);
  for (int v = 0; v < n; ++v) f.section.v[v] = Vec3(0, 0, 1);
  return f;
}

}  // namespace cps
