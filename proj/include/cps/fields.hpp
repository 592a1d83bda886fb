#pragma once

// Per-vertex field types and their behaviour under chart changes.  Every
// deck transformation is a Mobius map phi; "transport" answers: given the
// value of an object at z in the source chart, what is its value at phi(z)
// in the target chart?  Vertex identifications and cross-seam derivative
// stencils both reduce to this one operation.

#include <array>
#include <vector>

#include "cps/base.hpp"
#include "cps/mobius.hpp"

namespace cps {

struct ScalarField {
  std::vector<double> v;
  ScalarField() = default;
  explicit ScalarField(size_t n, double x = 0.0) : v(n, x) {}
  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }
  size_t size() const { return v.size(); }
};

struct VectorField {
  std::vector<Vec2> v;
  explicit VectorField(size_t n = 0) : v(n, Vec2::Zero()) {}
};

struct CovectorField {
  std::vector<Vec2> v;  // row convention: alpha(X) = v.dot(X)
  explicit CovectorField(size_t n = 0) : v(n, Vec2::Zero()) {}
};

struct EndomorphismField {
  std::vector<Mat2> v;
  explicit EndomorphismField(size_t n = 0) : v(n, Mat2::Zero()) {}
};

// Symmetric 2-tensor (metrics, h, S_u, ...).
struct BilinearField {
  std::vector<Mat2> v;
  explicit BilinearField(size_t n = 0) : v(n, Mat2::Zero()) {}
};

// Torsion-free connection on TM: per vertex the matrices Gamma(e1), Gamma(e2)
// with [Gamma(e_i)]^k_j = Gamma^k_{ij}.
struct ConnectionField {
  std::vector<std::array<Mat2, 2>> v;
  explicit ConnectionField(size_t n = 0)
      : v(n, {Mat2::Zero(), Mat2::Zero()}) {}
};

// Rank-3 connection on TM + L in the frame (e1, e2, s).
struct EConnection {
  std::vector<std::array<Mat3, 2>> v;
  explicit EConnection(size_t n = 0) : v(n, {Mat3::Zero(), Mat3::Zero()}) {}
};

// Section / 1-form values in TM + L.
struct EVectorField {
  std::vector<Vec3> v;
  explicit EVectorField(size_t n = 0) : v(n, Vec3::Zero()) {}
};

struct CubicDifferential {
  std::vector<Cplx> coeff;  // coefficient of dz^3 in the local chart
  explicit CubicDifferential(size_t n = 0, Cplx c = 0.0) : coeff(n, c) {}
};

// E-valued 1-form split per the TM + L decomposition.
struct ECohomologyForm {
  EndomorphismField B;
  CovectorField alpha;
  explicit ECohomologyForm(size_t n = 0) : B(n), alpha(n) {}
};

// ---- transport rules -------------------------------------------------

inline double transport_scalar(double x, const Mobius&, Cplx) { return x; }

inline Vec2 transport_vector(const Vec2& x, const Mobius& phi, Cplx z) {
  return cplx_mat(phi.deriv(z)) * x;
}

inline Vec2 transport_covector(const Vec2& x, const Mobius& phi, Cplx z) {
  return cplx_mat(phi.deriv(z)).inverse().transpose() * x;
}

inline Mat2 transport_endomorphism(const Mat2& e, const Mobius& phi, Cplx z) {
  Mat2 j = cplx_mat(phi.deriv(z));
  return j * e * j.inverse();
}

inline Mat2 transport_bilinear(const Mat2& h, const Mobius& phi, Cplx z) {
  Mat2 ji = cplx_mat(phi.deriv(z)).inverse();
  return ji.transpose() * h * ji;
}

// Volume-form coefficient (of dx^dy): transforms by 1/det(dphi).
using Vol1 = Eigen::Matrix<double, 1, 1>;
inline Vol1 transport_volume(const Vol1& w, const Mobius& phi, Cplx z) {
  double j = std::norm(phi.deriv(z));
  return w / j;
}

inline Cplx transport_cubic(Cplx w, const Mobius& phi, Cplx z) {
  Cplx dp = phi.deriv(z);
  return w / (dp * dp * dp);
}

// Connection coefficients pick up the usual inhomogeneous term.  With
// J = dphi(z) and psi = phi^{-1}:
//   Gamma'_a = sum_c (J^{-1})_{ca} [ J Gamma_c J^{-1} - (d_c J) J^{-1} ]
// where d_c J is the realified phi''(z) e_c.
inline std::array<Mat2, 2> transport_connection(const std::array<Mat2, 2>& g,
                                                const Mobius& phi, Cplx z) {
  Mat2 j = cplx_mat(phi.deriv(z));
  Mat2 ji = j.inverse();
  Cplx dd = phi.deriv2(z);
  std::array<Mat2, 2> dj = {cplx_mat(dd), cplx_mat(dd * Cplx(0.0, 1.0))};
  std::array<Mat2, 2> bracket;
  for (int c = 0; c < 2; ++c) bracket[c] = j * g[c] * ji - dj[c] * ji;
  std::array<Mat2, 2> out;
  for (int a = 0; a < 2; ++a) out[a] = ji(0, a) * bracket[0] + ji(1, a) * bracket[1];
  return out;
}

inline Vec3 transport_evector(const Vec3& x, const Mobius& phi, Cplx z) {
  Mat2 j = cplx_mat(phi.deriv(z));
  Vec3 y;
  y.head<2>() = j * x.head<2>();
  y.z() = x.z();
  return y;
}

// Packed forms so connection-valued quantities can run through the generic
// differentiation machinery (Eigen arithmetic on [G1 | G2]).
using ConnPack = Eigen::Matrix<double, 2, 4>;
using EConnPack = Eigen::Matrix<double, 3, 6>;

inline ConnPack pack(const std::array<Mat2, 2>& g) {
  ConnPack p;
  p.block<2, 2>(0, 0) = g[0];
  p.block<2, 2>(0, 2) = g[1];
  return p;
}
inline std::array<Mat2, 2> unpack_conn(const ConnPack& p) {
  return {p.block<2, 2>(0, 0), p.block<2, 2>(0, 2)};
}
inline ConnPack transport_conn_pack(const ConnPack& p, const Mobius& phi,
                                    Cplx z) {
  return pack(transport_connection(unpack_conn(p), phi, z));
}

inline std::array<Mat3, 2> transport_econnection(const std::array<Mat3, 2>& w,
                                                 const Mobius& phi, Cplx z) {
  Mat2 j = cplx_mat(phi.deriv(z));
  Mat2 ji = j.inverse();
  Cplx dd = phi.deriv2(z);
  Mat3 u = Mat3::Identity(), ui = Mat3::Identity();
  u.topLeftCorner<2, 2>() = j;
  ui.topLeftCorner<2, 2>() = ji;
  std::array<Mat3, 2> du = {Mat3::Zero(), Mat3::Zero()};
  du[0].topLeftCorner<2, 2>() = cplx_mat(dd);
  du[1].topLeftCorner<2, 2>() = cplx_mat(dd * Cplx(0.0, 1.0));
  std::array<Mat3, 2> bracket;
  for (int c = 0; c < 2; ++c) bracket[c] = u * w[c] * ui - du[c] * ui;
  std::array<Mat3, 2> out;
  for (int a = 0; a < 2; ++a) out[a] = ji(0, a) * bracket[0] + ji(1, a) * bracket[1];
  return out;
}

// E-valued 1-form packed as the 3x2 matrix [F(e1) F(e2)]; transforms with
// U = diag(J, 1) on values and J^{-1} on the form index.
using EFormPack = Eigen::Matrix<double, 3, 2>;

inline EFormPack transport_eform(const EFormPack& p, const Mobius& phi,
                                 Cplx z) {
  Mat2 j = cplx_mat(phi.deriv(z));
  EFormPack q;
  q.topRows<2>() = j * p.topRows<2>();
  q.row(2) = p.row(2);
  return q * j.inverse();
}

inline EConnPack pack(const std::array<Mat3, 2>& w) {
  EConnPack p;
  p.block<3, 3>(0, 0) = w[0];
  p.block<3, 3>(0, 3) = w[1];
  return p;
}
inline std::array<Mat3, 2> unpack_econn(const EConnPack& p) {
  return {p.block<3, 3>(0, 0), p.block<3, 3>(0, 3)};
}
inline EConnPack transport_econn_pack(const EConnPack& p, const Mobius& phi,
                                      Cplx z) {
  return pack(transport_econnection(unpack_econn(p), phi, z));
}

}  // namespace cps
