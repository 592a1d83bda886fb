#pragma once

// Connection-level algebra: the rank-3 connection on TM + L, the flatness
// residual systems, section decompositions with their rescaling laws, dual
// connections, the order-4 symmetry, convex 1-forms, and the Pick identity.

#include <map>

#include "cps/cubic.hpp"

namespace cps {

inline double torsion_residual(const ConnectionField& c, int v) {
  return (c.v[v][0].col(1) - c.v[v][1].col(0)).norm();
}

inline BilinearField bilinear_of_metric(const Surface& S,
                                        const ConformalMetric& g) {
  BilinearField h(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) h.v[v] = metric_at(S, g, v);
  return h;
}

// The solved pair (connection, metric) realizing a projective structure,
// with its rank-3 connection and the residuals attached by the pipeline.
struct StructureData {
  ConformalMetric g;
  ScalarField mu;
  BilinearField h;
  ConnectionField conn;
  EConnection econn;
  std::map<std::string, double> residuals;
};

// nabla^h on TM + L in the frame (e1, e2, s):
//   nabla^h_X (Z, l) = (nabla_X Z + l X, L_X l + h(Z, X)).
inline EConnection build_nabla_h(const Surface& S, const ConnectionField& conn,
                                 const BilinearField& h) {
  double scale = 0.0;
  for (int d = 0; d < S.num_dofs(); ++d)
    scale = std::max(scale, h.v[S.verts[d]].cwiseAbs().maxCoeff());
  for (int d = 0; d < S.num_dofs(); ++d) {
    const Mat2& m = h.v[S.verts[d]];
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, scale))
      throw InvalidInputError("build_nabla_h: h must be symmetric");
  }
  EConnection w(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    for (int i = 0; i < 2; ++i) {
      Mat3 m = Mat3::Zero();
      m.topLeftCorner<2, 2>() = conn.v[v][i];
      m(i, 2) = 1.0;                       // l -> Z coupling: + l e_i
      m.row(2).head<2>() = h.v[v].row(i);  // h(Z, e_i)
      w.v[v][i] = m;
    }
  }
  S.sync(w);
  return w;
}

// Dual variant used in the convex-1-form construction:
//   nabla^{h,*}_X (Z, l) = (nabla*_X Z + l H(X), g(Z, X) + L_X l),
// with H the g-raised h.
inline EConnection build_nabla_h_star(const Surface& S,
                                      const ConnectionField& conn_star,
                                      const EndomorphismField& H,
                                      const BilinearField& g) {
  EConnection w(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    for (int i = 0; i < 2; ++i) {
      Mat3 m = Mat3::Zero();
      m.topLeftCorner<2, 2>() = conn_star.v[v][i];
      m.block<2, 1>(0, 2) = H.v[v].col(i);
      m.row(2).head<2>() = g.v[v].row(i);
      w.v[v][i] = m;
    }
  }
  S.sync(w);
  return w;
}

struct CondEResiduals {
  double r_sym = 0.0;      // torsion of conn and asymmetry of h
  double r_codazzi = 0.0;  // d^nabla h
  double r_curv = 0.0;     // R(X,Y)Z - h(X,Z)Y + h(Y,Z)X
};

// All residuals are measured in background-metric units: each lower tensor
// slot contributes a factor lambda0^{-1/2}, each upper slot lambda0^{+1/2}.
inline CondEResiduals condition_E_residual(const Surface& S,
                                           const ConnectionField& conn,
                                           const BilinearField& h) {
  CondEResiduals r;
  EndomorphismField R = connection_curvature(S, conn);
  Mat2 J0 = conformal_rotation();
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double l0 = S.lambda0[v];
    r.r_sym = std::max(
        r.r_sym,
        torsion_residual(conn, v) / std::sqrt(l0) +
            (h.v[v] - h.v[v].transpose()).cwiseAbs().maxCoeff() / l0);
    auto nh = covariant_d_bilinear(S, d, h, conn);
    Vec2 cod = nh[0].row(1).transpose() - nh[1].row(0).transpose();
    r.r_codazzi = std::max(r.r_codazzi,
                           cod.cwiseAbs().maxCoeff() / std::pow(l0, 1.5));
    // column form of h(X,Z)Y - h(Y,Z)X for (X,Y)=(e1,e2) is J0 * h
    Mat2 curv = R.v[v] - J0 * h.v[v];
    r.r_curv = std::max(r.r_curv, curv.cwiseAbs().maxCoeff() / l0);
  }
  return r;
}

// ---- section decomposition -------------------------------------------

struct SuDecomposition {
  BilinearField S_u;
  ConnectionField conn_u;
  double sym_residual = 0.0;  // asymmetry of the (i,j) systems
};

// Solve nabla_i nabla_j u = S_u(e_i,e_j) u + Gamma^{u,k}_{ij} nabla_k u
// pointwise; the 3x3 system matrix [nabla_1 u, nabla_2 u, u] is invertible
// exactly when u is immersed.
inline SuDecomposition s_u_and_nabla_u(const Surface& S, const EConnection& w,
                                       const EVectorField& u) {
  auto du = econnection_d(S, w, u);
  SuDecomposition out;
  out.S_u = BilinearField(S.num_vertices());
  out.conn_u = ConnectionField(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Mat3 M;
    M.col(0) = du[0].v[v];
    M.col(1) = du[1].v[v];
    M.col(2) = u.v[v];
    double scale = du[0].v[v].norm() * du[1].v[v].norm() * u.v[v].norm();
    if (std::abs(M.determinant()) <= 1e-10 * std::max(scale, 1e-30))
      throw NotImmersedError("s_u_and_nabla_u: degenerate frame at vertex " +
                                 std::to_string(v),
                             v);
    Eigen::PartialPivLU<Mat3> lu(M);
    // second derivatives via the packed 1-form (nabla_1 u, nabla_2 u)
    EFormPack d1, d2;
    auto get = [&](int q) -> EFormPack {
      EFormPack p;
      p.col(0) = du[0].v[q];
      p.col(1) = du[1].v[q];
      return p;
    };
    S.tensor_d(d, get, transport_eform, d1, d2);
    Mat2 su;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        Vec3 dd = (i == 0 ? d1 : d2).col(j) + w.v[v][i] * du[j].v[v];
        Vec3 sol = lu.solve(dd);
        su(i, j) = sol[2];
        out.conn_u.v[v][i](0, j) = sol[0];
        out.conn_u.v[v][i](1, j) = sol[1];
      }
    out.sym_residual = std::max(
        out.sym_residual,
        std::abs(su(0, 1) - su(1, 0)) + torsion_residual(out.conn_u, v));
    out.S_u.v[v] = 0.5 * (su + su.transpose());
    Mat2 g1 = out.conn_u.v[v][0], g2 = out.conn_u.v[v][1];
    Vec2 mean = 0.5 * (g1.col(1) + g2.col(0));
    g1.col(1) = mean;
    g2.col(0) = mean;
    out.conn_u.v[v] = {g1, g2};
  }
  S.sync(out.S_u);
  S.sync(out.conn_u);
  return out;
}

struct RescaleResiduals {
  double r_S = 0.0;
  double r_conn = 0.0;
};

// Check S_{u/f} = S_u - (nabla^u)^2 f / f and the connection law
// nabla^{u/f}_X Y = nabla^u_X Y - (df(X)/f) Y - (df(Y)/f) X by computing
// both sides independently.
inline RescaleResiduals rescale_laws_check(const Surface& S,
                                           const EConnection& w,
                                           const EVectorField& u,
                                           const ScalarField& f) {
  for (int d = 0; d < S.num_dofs(); ++d)
    if (!(f[S.verts[d]] > 0.0))
      throw InvalidInputError("rescale_laws_check: f must be positive");
  SuDecomposition base = s_u_and_nabla_u(S, w, u);
  EVectorField uf(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) uf.v[v] = u.v[v] / f[v];
  SuDecomposition scaled = s_u_and_nabla_u(S, w, uf);
  BilinearField hess = covariant_hessian_bilinear(S, f, base.conn_u);
  RescaleResiduals r;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, f.v);
    Vec2 df(j.x, j.y);
    Mat2 s_rhs = base.S_u.v[v] - hess.v[v] / f[v];
    r.r_S = std::max(r.r_S,
                     (scaled.S_u.v[v] - s_rhs).cwiseAbs().maxCoeff());
    for (int i = 0; i < 2; ++i) {
      Mat2 g_rhs = base.conn_u.v[v][i] - (df[i] / f[v]) * Mat2::Identity() -
                   Vec2::Unit(i) * (df / f[v]).transpose();
      r.r_conn = std::max(
          r.r_conn, (scaled.conn_u.v[v][i] - g_rhs).cwiseAbs().maxCoeff());
    }
  }
  return r;
}

// ---- dualities ---------------------------------------------------------

inline void require_complex_structure(const Surface& S,
                                      const EndomorphismField& J,
                                      const char* who) {
  for (int d = 0; d < S.num_dofs(); ++d) {
    Mat2 j = J.v[S.verts[d]];
    if ((j * j + Mat2::Identity()).cwiseAbs().maxCoeff() > 1e-8)
      throw InvalidInputError(std::string(who) + ": J^2 != -1");
  }
}

// nabla* with nabla*_X Y = -J nabla_X (J Y).
inline ConnectionField dual_connection(const Surface& S,
                                       const ConnectionField& conn,
                                       const EndomorphismField& J) {
  require_complex_structure(S, J, "dual_connection");
  ConnectionField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Mat2 dj1, dj2;
    S.tensor_d(
        d, [&](int q) -> Mat2 { return J.v[q]; }, transport_endomorphism, dj1,
        dj2);
    Mat2 j = J.v[v];
    out.v[v][0] = -j * (dj1 + conn.v[v][0] * j);
    out.v[v][1] = -j * (dj2 + conn.v[v][1] * j);
  }
  S.sync(out);
  return out;
}

struct JTriple {
  ConnectionField conn;
  EndomorphismField J;
  std::array<EndomorphismField, 2> A;
};

// j: (nabla, J, A) -> (-J nabla J, J, J A); of order 4, with j^2 = -1 on A.
inline JTriple j_symmetry(const Surface& S, const ConnectionField& conn,
                          const EndomorphismField& J,
                          const std::array<EndomorphismField, 2>& A) {
  require_complex_structure(S, J, "j_symmetry");
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    for (int i = 0; i < 2; ++i) {
      Mat2 anti = A[i].v[v] * J.v[v] + J.v[v] * A[i].v[v];
      double scale = std::max(1.0, A[i].v[v].cwiseAbs().maxCoeff());
      if (anti.cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw InvalidInputError("j_symmetry: A J != -J A");
    }
  }
  JTriple out;
  out.conn = dual_connection(S, conn, J);
  out.J = J;
  out.A = {EndomorphismField(S.num_vertices()),
           EndomorphismField(S.num_vertices())};
  for (int v = 0; v < S.num_vertices(); ++v) {
    out.A[0].v[v] = J.v[v] * A[0].v[v];
    out.A[1].v[v] = J.v[v] * A[1].v[v];
  }
  return out;
}

// ---- conditions (H), (I), (J) ------------------------------------------

struct CondHResiduals {
  double r_torsion = 0.0;
  double r_vol = 0.0;
  double r_dJ = 0.0;
  double r_curv = 0.0;
  double r_dJJ1 = 0.0;  // condition (I) only
  double r_dA = 0.0;    // condition (J) only
  double r_AJ = 0.0;    // condition (J) only
};

// omega is the signed coefficient field of the volume form (omega = w dx^dy).
// The orientation is fixed so that constant-curvature pipeline data zeroes
// the curvature line: w = -(chart metric factor).
inline ScalarField condition_H_default_omega(const Surface& S,
                                             const ConformalMetric& g) {
  ScalarField w(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) w[v] = -metric_factor(S, g, v);
  return w;
}

inline CondHResiduals condition_H_residual(const Surface& S,
                                           const ConnectionField& conn,
                                           const ScalarField& omega,
                                           const EndomorphismField& J) {
  require_complex_structure(S, J, "condition_H_residual");
  CondHResiduals r;
  EndomorphismField R = connection_curvature(S, conn);
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double l0 = S.lambda0[v];
    r.r_torsion =
        std::max(r.r_torsion, torsion_residual(conn, v) / std::sqrt(l0));
    Vol1 dw1, dw2;
    S.tensor_d(
        d, [&](int q) -> Vol1 { return Vol1::Constant(omega[q]); },
        transport_volume, dw1, dw2);
    double dw[2] = {dw1(0, 0), dw2(0, 0)};
    for (int i = 0; i < 2; ++i)
      r.r_vol = std::max(r.r_vol,
                         std::abs(dw[i] - omega[v] * conn.v[v][i].trace()) /
                             std::pow(l0, 1.5));
    r.r_dJ = std::max(r.r_dJ,
                      dnabla_endo_oneform(S, d, J, conn).cwiseAbs().maxCoeff() /
                          std::sqrt(l0));
    Mat2 curv = R.v[v] * J.v[v] - omega[v] * Mat2::Identity();
    r.r_curv = std::max(r.r_curv, curv.cwiseAbs().maxCoeff() / l0);
  }
  return r;
}

inline CondHResiduals condition_I_residual(const Surface& S,
                                           const ConnectionField& conn,
                                           const ScalarField& omega,
                                           const EndomorphismField& J,
                                           const EndomorphismField& J1) {
  require_complex_structure(S, J1, "condition_I_residual");
  CondHResiduals r = condition_H_residual(S, conn, omega, J);
  EndomorphismField JJ1(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) JJ1.v[v] = J.v[v] * J1.v[v];
  for (int d = 0; d < S.num_dofs(); ++d)
    r.r_dJJ1 =
        std::max(r.r_dJJ1,
                 dnabla_endo_oneform(S, d, JJ1, conn).cwiseAbs().maxCoeff() /
                     std::sqrt(S.lambda0[S.verts[d]]));
  return r;
}

inline CondHResiduals condition_J_residual(
    const Surface& S, const ConnectionField& conn, const ScalarField& omega,
    const EndomorphismField& J, const std::array<EndomorphismField, 2>& A) {
  CondHResiduals r = condition_H_residual(S, conn, omega, J);
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double l0 = S.lambda0[v];
    r.r_dA = std::max(
        r.r_dA,
        dnabla_endo_pair(S, d, A[0], A[1], conn).cwiseAbs().maxCoeff() / l0);
    for (int i = 0; i < 2; ++i)
      r.r_AJ = std::max(r.r_AJ, (A[i].v[v] * J.v[v] + J.v[v] * A[i].v[v])
                                        .cwiseAbs()
                                        .maxCoeff() /
                                    std::sqrt(l0));
  }
  return r;
}

// ---- convex 1-forms ------------------------------------------------------

struct EForm {
  std::array<EVectorField, 2> a;
  explicit EForm(size_t n = 0) : a{EVectorField(n), EVectorField(n)} {}
};

struct ConvexFormResult {
  BilinearField h;
  bool is_convex = false;
  double margin = 0.0;  // min |eigenvalue| of h w.r.t. background metric
};

// h_alpha(X, Y) = pi(nabla_X (alpha(Y))) mod alpha(TS); the rank-1 quotient
// is realized by the unit cross-product functional.
inline ConvexFormResult convex_form(const Surface& S, const EConnection& w,
                                    const EForm& alpha,
                                    double theta = 1e-6) {
  ConvexFormResult out;
  out.h = BilinearField(S.num_vertices());
  double margin = 1e300;
  bool definite = true;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Vec3 a1 = alpha.a[0].v[v], a2 = alpha.a[1].v[v];
    Eigen::Matrix<double, 3, 2> M;
    M.col(0) = a1;
    M.col(1) = a2;
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(M);
    if (svd.singularValues()[1] <= 1e-10 * std::max(1.0, svd.singularValues()[0]))
      throw InvalidInputError("convex_form: non-injective alpha at vertex " +
                              std::to_string(v));
    Vec3 ell = a1.cross(a2);
    ell.normalize();
    EFormPack d1, d2;
    auto get = [&](int q) -> EFormPack {
      EFormPack p;
      p.col(0) = alpha.a[0].v[q];
      p.col(1) = alpha.a[1].v[q];
      return p;
    };
    S.tensor_d(d, get, transport_eform, d1, d2);
    Mat2 h;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        Vec3 nij = (i == 0 ? d1 : d2).col(j) + w.v[v][i] * M.col(j);
        h(i, j) = ell.dot(nij);
      }
    out.h.v[v] = h;
    Mat2 sym = 0.5 * (h + h.transpose()) / S.lambda0[v];
    Vec2 ev = sym_eigenvalues(sym);
    if (ev.x() * ev.y() <= 0.0) definite = false;
    margin = std::min(margin, std::min(std::abs(ev.x()), std::abs(ev.y())));
  }
  S.sync(out.h);
  out.margin = margin;
  out.is_convex = definite && margin > theta * S.h;
  return out;
}

// ---- Pick / Q3 identity --------------------------------------------------

// Checks 12 g(A(X)Y, Z) = Re Q3(X,Y,Z) pointwise via the block matrices
// Gamma(X) = [[A(X), X], [X^T, 0]] in a g-orthonormal frame.  Pure linear
// algebra, no differentiation.
inline double pick_q3_check(const Surface& S, const ConformalMetric& g,
                            const std::array<EndomorphismField, 2>& A) {
  Mat2 J0 = conformal_rotation();
  double res = 0.0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double rho = metric_factor(S, g, v);
    double s = std::sqrt(rho);
    Mat2 ah[2] = {s * A[0].v[v], s * A[1].v[v]};  // orthonormal frame
    double scale = std::max(1.0, ah[0].cwiseAbs().maxCoeff());
    for (int i = 0; i < 2; ++i) {
      if ((ah[i] - ah[i].transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw InvalidInputError("pick_q3_check: A not symmetric");
      if (std::abs(ah[i].trace()) > 1e-8 * scale)
        throw InvalidInputError("pick_q3_check: A not trace free");
      if ((ah[i] * J0 + J0 * ah[i]).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw InvalidInputError("pick_q3_check: A J != -J A");
    }
    if ((ah[0].col(1) - ah[1].col(0)).norm() > 1e-8 * scale)
      throw InvalidInputError("pick_q3_check: A(X)Y != A(Y)X");
    auto ahat = [&](const Vec2& x) -> Mat2 { return x.x() * ah[0] + x.y() * ah[1]; };
    auto gamma = [&](const Vec2& x) -> Mat3 {
      Mat3 m = Mat3::Zero();
      m.topLeftCorner<2, 2>() = ahat(x);
      m.block<2, 1>(0, 2) = x;
      m.block<1, 2>(2, 0) = x.transpose();
      return m;
    };
    Vec2 basis[2] = {Vec2(1, 0), Vec2(0, 1)};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          Vec2 X = basis[i], Y = basis[j], Z = basis[k];
          double lhs = 12.0 * (ahat(X) * Y).dot(Z);
          auto tr3 = [&](const Vec2& x, const Vec2& y, const Vec2& z) {
            return (gamma(x) * gamma(y) * gamma(z)).trace();
          };
          double rhs = tr3(X, Y, Z) - tr3(X, J0 * Y, J0 * Z) -
                       tr3(J0 * X, Y, J0 * Z) - tr3(J0 * X, J0 * Y, Z);
          res = std::max(res, std::abs(lhs - rhs));
        }
  }
  return res;
}

// ---- Blaschke system (condB) ---------------------------------------------

struct CondBResiduals {
  double r_torsion = 0.0;
  double r_vol = 0.0;
  double r_trBJ = 0.0;
  double r_dJ = 0.0;
  double r_dB = 0.0;
  double r_curv = 0.0;
};

// Residuals of the flatness system of D_X(Y,l) = (nabla_X Y + l B(X),
// g(X,Y) + dl(X)); curvature line R(X,Y)Z = -omega(X,Y) B J Z with the same
// orientation convention as condition (H).
inline CondBResiduals blaschke_residual(const Surface& S,
                                        const ConnectionField& conn,
                                        const ConformalMetric& g,
                                        const EndomorphismField& B) {
  CondBResiduals r;
  Mat2 J0 = conformal_rotation();
  EndomorphismField R = connection_curvature(S, conn);
  EndomorphismField Jf(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) Jf.v[v] = J0;
  ScalarField vol(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) vol[v] = metric_factor(S, g, v);
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double l0 = S.lambda0[v];
    r.r_torsion =
        std::max(r.r_torsion, torsion_residual(conn, v) / std::sqrt(l0));
    Vol1 dw1, dw2;
    S.tensor_d(
        d, [&](int q) -> Vol1 { return Vol1::Constant(vol[q]); },
        transport_volume, dw1, dw2);
    double dw[2] = {dw1(0, 0), dw2(0, 0)};
    for (int i = 0; i < 2; ++i)
      r.r_vol = std::max(r.r_vol,
                         std::abs(dw[i] - vol[v] * conn.v[v][i].trace()) /
                             std::pow(l0, 1.5));
    r.r_trBJ = std::max(r.r_trBJ, std::abs((B.v[v] * J0).trace()));
    r.r_dJ = std::max(r.r_dJ,
                      dnabla_endo_oneform(S, d, Jf, conn).cwiseAbs().maxCoeff() /
                          std::sqrt(l0));
    r.r_dB = std::max(r.r_dB,
                      dnabla_endo_oneform(S, d, B, conn).cwiseAbs().maxCoeff() /
                          std::sqrt(l0));
    Mat2 curv = R.v[v] - vol[v] * B.v[v] * J0;
    r.r_curv = std::max(r.r_curv, curv.cwiseAbs().maxCoeff() / l0);
  }
  return r;
}

}  // namespace cps
