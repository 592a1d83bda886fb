#pragma once

// Covariant differential operators built on the chart-derivative stencils:
// Levi-Civita connections of conformal metrics, covariant Hessians,
// d^nabla of tensor-valued 1-forms, and curvature of (E-)connections.

#include "cps/surface.hpp"

namespace cps {

// g = lambda * g0 with lambda > 0; the chart matrix is lambda*lambda0*Id.
struct ConformalMetric {
  ScalarField lambda;
  ConformalMetric() = default;
  explicit ConformalMetric(size_t n, double x = 1.0) : lambda(n, x) {}
  static ConformalMetric background(const Surface& S) {
    return ConformalMetric(S.num_vertices(), 1.0);
  }
};

inline double metric_factor(const Surface& S, const ConformalMetric& g,
                            int v) {
  return g.lambda[v] * S.lambda0[v];
}

inline Mat2 metric_at(const Surface& S, const ConformalMetric& g, int v) {
  return metric_factor(S, g, v) * Mat2::Identity();
}

inline void require_positive(const Surface& S, const ConformalMetric& g,
                             const char* who) {
  for (int d = 0; d < S.num_dofs(); ++d)
    if (!(g.lambda[S.verts[d]] > 0.0))
      throw InvalidInputError(std::string(who) +
                              ": conformal factor must be positive");
}

// Analytic chart gradient of phi0 = (1/2) log(lambda0).
inline Vec2 background_log_gradient(const Surface& S, int v) {
  if (S.kind == SurfaceKind::Torus) return Vec2::Zero();
  Vec2 p = S.pos[v];
  double w = 1.0 - p.squaredNorm();
  return 2.0 * p / w;
}

// Levi-Civita connection of a conformal metric.  The background part of
// log(conformal factor) is differentiated analytically, the lambda part by
// the discrete stencils.
inline ConnectionField levi_civita(const Surface& S,
                                   const ConformalMetric& g) {
  require_positive(S, g, "levi_civita");
  ScalarField loglam(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v)
    loglam[v] = 0.5 * std::log(g.lambda[v]);
  ConnectionField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, loglam.v);
    Vec2 dphi = Vec2(j.x, j.y) + background_log_gradient(S, v);
    double fx = dphi.x(), fy = dphi.y();
    Mat2 g1, g2;
    g1 << fx, fy, -fy, fx;
    g2 << fy, -fx, fx, fy;
    out.v[v] = {g1, g2};
  }
  S.sync(out);
  return out;
}

// Covariant Hessian as a bilinear form: (nabla^2 u)_{ij} = d_i d_j u -
// Gamma^k_{ij} d_k u.
inline BilinearField covariant_hessian_bilinear(const Surface& S,
                                                const ScalarField& u,
                                                const ConnectionField& conn) {
  BilinearField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, u.v);
    Vec2 du(j.x, j.y);
    Mat2 hh;
    hh << j.xx, j.xy, j.xy, j.yy;
    const auto& G = conn.v[v];
    Mat2 corr;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const Mat2& Ga = a == 0 ? G[0] : G[1];
        corr(a, b) = Ga(0, b) * du.x() + Ga(1, b) * du.y();
      }
    out.v[v] = hh - corr;
  }
  S.sync(out);
  return out;
}

// Metric-raised Hessian X -> nabla^2 u (X).
inline EndomorphismField hessian(const Surface& S, const ScalarField& u,
                                 const ConnectionField& conn,
                                 const ConformalMetric& g) {
  require_positive(S, g, "hessian");
  BilinearField hb = covariant_hessian_bilinear(S, u, conn);
  EndomorphismField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v)
    out.v[v] = hb.v[v] / metric_factor(S, g, v);
  S.sync(out);
  return out;
}

// Metric gradient as a vector field.
inline VectorField metric_gradient(const Surface& S, const ScalarField& u,
                                   const ConformalMetric& g) {
  VectorField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, u.v);
    out.v[v] = Vec2(j.x, j.y) / metric_factor(S, g, v);
  }
  S.sync(out);
  return out;
}

// nabla (grad_g f): endomorphism X -> nabla_X grad f.  Coincides with the
// metric-raised Hessian when conn is the Levi-Civita connection of g.
inline EndomorphismField dual_hessian(const Surface& S, const ScalarField& u,
                                      const ConnectionField& conn,
                                      const ConformalMetric& g) {
  VectorField grad = metric_gradient(S, u, g);
  EndomorphismField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Vec2 d1, d2;
    S.tensor_d(
        d, [&](int u2) -> Vec2 { return grad.v[u2]; }, transport_vector, d1,
        d2);
    Mat2 e;
    e.col(0) = d1 + conn.v[v][0] * grad.v[v];
    e.col(1) = d2 + conn.v[v][1] * grad.v[v];
    out.v[v] = e;
  }
  S.sync(out);
  return out;
}

// Covariant derivative of a symmetric bilinear field:
// (nabla_i h) = d_i h - Gamma_i^T h - h Gamma_i.
inline std::array<Mat2, 2> covariant_d_bilinear(const Surface& S, int d,
                                                const BilinearField& h,
                                                const ConnectionField& conn) {
  int v = S.verts[d];
  Mat2 d1, d2;
  S.tensor_d(
      d, [&](int u) -> Mat2 { return h.v[u]; }, transport_bilinear, d1, d2);
  const auto& G = conn.v[v];
  return {d1 - G[0].transpose() * h.v[v] - h.v[v] * G[0],
          d2 - G[1].transpose() * h.v[v] - h.v[v] * G[1]};
}

// Covariant derivative of an endomorphism field:
// nabla_i E = d_i E + [Gamma_i, E].
inline std::array<Mat2, 2> covariant_d_endo(const Surface& S, int d,
                                            const EndomorphismField& e,
                                            const ConnectionField& conn) {
  int v = S.verts[d];
  Mat2 d1, d2;
  S.tensor_d(
      d, [&](int u) -> Mat2 { return e.v[u]; }, transport_endomorphism, d1,
      d2);
  const auto& G = conn.v[v];
  return {d1 + G[0] * e.v[v] - e.v[v] * G[0],
          d2 + G[1] * e.v[v] - e.v[v] * G[1]};
}

// d^nabla of an endomorphism viewed as a TS-valued 1-form (vector-valued
// 2-form; one Vec2 per vertex since dim = 2).
inline Vec2 dnabla_endo_oneform(const Surface& S, int d,
                                const EndomorphismField& e,
                                const ConnectionField& conn) {
  auto de = covariant_d_endo(S, d, e, conn);
  int v = S.verts[d];
  const auto& G = conn.v[v];
  Vec2 torsion = G[0].col(1) - G[1].col(0);
  return de[0].col(1) - de[1].col(0) + e.v[v] * torsion;
}

// d^nabla of an End(TS)-valued 1-form given by its two direction matrices
// (matrix-valued 2-form).
inline Mat2 dnabla_endo_pair(const Surface& S, int d,
                             const EndomorphismField& a1,
                             const EndomorphismField& a2,
                             const ConnectionField& conn) {
  int v = S.verts[d];
  using Pack = Eigen::Matrix<double, 2, 4>;
  Pack d1, d2;
  auto get = [&](int u) -> Pack {
    Pack p;
    p.block<2, 2>(0, 0) = a1.v[u];
    p.block<2, 2>(0, 2) = a2.v[u];
    return p;
  };
  auto tr = [](const Pack& p, const Mobius& phi, Cplx z) -> Pack {
    Mat2 j = cplx_mat(phi.deriv(z));
    Mat2 ji = j.inverse();
    Mat2 b0 = j * p.block<2, 2>(0, 0) * ji;
    Mat2 b1 = j * p.block<2, 2>(0, 2) * ji;
    Pack out;
    out.block<2, 2>(0, 0) = ji(0, 0) * b0 + ji(1, 0) * b1;
    out.block<2, 2>(0, 2) = ji(0, 1) * b0 + ji(1, 1) * b1;
    return out;
  };
  S.tensor_d(d, get, tr, d1, d2);
  Mat2 d1a2 = d1.block<2, 2>(0, 2);
  Mat2 d2a1 = d2.block<2, 2>(0, 0);
  const auto& G = conn.v[v];
  Mat2 out = d1a2 - d2a1 + G[0] * a2.v[v] - a2.v[v] * G[0] -
             (G[1] * a1.v[v] - a1.v[v] * G[1]);
  // A(nabla_{e_i} e_j) terms cancel for torsion-free conn
  Vec2 tor = G[0].col(1) - G[1].col(0);
  out -= tor.x() * a1.v[v] + tor.y() * a2.v[v];
  return out;
}

// Curvature R(e1,e2) = d1 Gamma2 - d2 Gamma1 + [Gamma1, Gamma2].
inline EndomorphismField connection_curvature(const Surface& S,
                                              const ConnectionField& conn) {
  EndomorphismField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    ConnPack d1, d2;
    auto get = [&](int u) -> ConnPack { return pack(conn.v[u]); };
    S.tensor_d(d, get, transport_conn_pack, d1, d2);
    Mat2 d1g2 = d1.block<2, 2>(0, 2);
    Mat2 d2g1 = d2.block<2, 2>(0, 0);
    const auto& G = conn.v[v];
    out.v[v] = d1g2 - d2g1 + G[0] * G[1] - G[1] * G[0];
  }
  S.sync(out);
  return out;
}

// Curvature of a rank-3 connection on TM + L.
inline std::vector<Mat3> econnection_curvature(const Surface& S,
                                               const EConnection& w) {
  std::vector<Mat3> out(S.num_vertices(), Mat3::Zero());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    EConnPack d1, d2;
    auto get = [&](int u) -> EConnPack { return pack(w.v[u]); };
    S.tensor_d(d, get, transport_econn_pack, d1, d2);
    Mat3 d1w2 = d1.block<3, 3>(0, 3);
    Mat3 d2w1 = d2.block<3, 3>(0, 0);
    const auto& W = w.v[v];
    out[v] = d1w2 - d2w1 + W[0] * W[1] - W[1] * W[0];
  }
  return out;
}

// Sup of the curvature 2-form in background-metric units (the frame part is
// normalized by diag(sqrt(lambda0), sqrt(lambda0), 1), the form part by
// 1/lambda0).
inline double econnection_flatness_residual(const Surface& S,
                                            const EConnection& w) {
  auto R = econnection_curvature(S, w);
  double m = 0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    double s = std::sqrt(S.lambda0[v]);
    Mat3 U = Mat3::Identity(), Ui = Mat3::Identity();
    U(0, 0) = U(1, 1) = s;
    Ui(0, 0) = Ui(1, 1) = 1.0 / s;
    Mat3 nr = Ui * R[v] * U / S.lambda0[v];
    m = std::max(m, nr.cwiseAbs().maxCoeff());
  }
  return m;
}

// First covariant derivatives of a section of TM + L.
inline std::array<EVectorField, 2> econnection_d(const Surface& S,
                                                 const EConnection& w,
                                                 const EVectorField& u) {
  std::array<EVectorField, 2> out = {EVectorField(S.num_vertices()),
                                     EVectorField(S.num_vertices())};
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Vec3 d1, d2;
    S.tensor_d(
        d, [&](int q) -> Vec3 { return u.v[q]; }, transport_evector, d1, d2);
    out[0].v[v] = d1 + w.v[v][0] * u.v[v];
    out[1].v[v] = d2 + w.v[v][1] * u.v[v];
  }
  S.sync(out[0]);
  S.sync(out[1]);
  return out;
}

// Metric compatibility residual sup |nabla g| (uses discrete derivatives of
// the full chart metric).
inline double metric_compatibility_residual(const Surface& S,
                                            const ConformalMetric& g,
                                            const ConnectionField& conn) {
  BilinearField gm(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) gm.v[v] = metric_at(S, g, v);
  double m = 0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    auto n = covariant_d_bilinear(S, d, gm, conn);
    double scale = metric_factor(S, g, S.verts[d]);
    m = std::max(m, std::max(n[0].cwiseAbs().maxCoeff(),
                             n[1].cwiseAbs().maxCoeff()) /
                        scale);
  }
  return m;
}

}  // namespace cps
