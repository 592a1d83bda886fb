#pragma once

// Determinant-type operators, their linearizations and Newton solvers, the
// maximum-principle window checks, the cohomology-class normalizations, and
// the general jet-coefficient operators.

#include <Eigen/SparseLU>
#include <functional>

#include "cps/connection.hpp"
#include "cps/transport.hpp"

namespace cps {

// ---- sectioned structure for the operator D --------------------------

struct DContext {
  EConnection econn;
  EVectorField u;
  SuDecomposition dec;   // S_u and nabla^u of the section
  ScalarField d_one;     // D(1) = det[nabla_1 u, nabla_2 u, u] / sqrt(det S_u)
};

inline DContext make_d_context(const Surface& S, const EConnection& econn,
                               const EVectorField& u) {
  DContext c;
  c.econn = econn;
  c.u = u;
  c.dec = s_u_and_nabla_u(S, econn, u);
  auto du = econnection_d(S, econn, u);
  c.d_one = ScalarField(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    Mat3 M;
    M.col(0) = du[0].v[v];
    M.col(1) = du[1].v[v];
    M.col(2) = u.v[v];
    double ds = c.dec.S_u.v[v].determinant();
    if (!(ds > 0))
      throw DomainError("make_d_context: S_u not positive definite at vertex " +
                        std::to_string(v));
    c.d_one[v] = M.determinant() / std::sqrt(ds);
  }
  return c;
}

// A(f) = S_u^{-1} (nabla^u)^2 f.
inline EndomorphismField d_hessian_endo(const Surface& S, const DContext& c,
                                        const ScalarField& f) {
  BilinearField hb = covariant_hessian_bilinear(S, f, c.dec.conn_u);
  EndomorphismField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v)
    out.v[v] = c.dec.S_u.v[v].inverse() * hb.v[v];
  S.sync(out);
  return out;
}

// G(f) = f^{3/2} Id - f^{1/2} A(f); membership in the ellipticity set means
// G(f) is S_u-positive, equivalently f S_u - (nabla^u)^2 f > 0.
inline Mat2 d_gmatrix(const DContext& c, const EndomorphismField& af, int v,
                      double fv) {
  return std::pow(fv, 1.5) * Mat2::Identity() - std::sqrt(fv) * af.v[v];
}

inline double su_symmetric_min_eig(const Mat2& su, const Mat2& g) {
  // smallest eigenvalue of the su-symmetric operator g in the su inner
  // product: eigenvalues of su^{1/2} g su^{-1/2} = eig of (su g) pencil
  Mat2 m = su * g;  // symmetric when g is su-symmetric
  Mat2 sym = 0.5 * (m + m.transpose());
  // generalized problem sym x = l su x
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat2> es(sym, su);
  return es.eigenvalues().minCoeff();
}

inline ScalarField operator_D(const Surface& S, const DContext& c,
                              const ScalarField& f, bool check_domain = true) {
  ScalarField out(S.num_vertices());
  EndomorphismField af = d_hessian_endo(S, c, f);
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    if (!(f[v] > 0.0))
      throw DomainError("operator_D: f must be positive at vertex " +
                        std::to_string(v));
    Mat2 G = d_gmatrix(c, af, v, f[v]);
    if (check_domain && su_symmetric_min_eig(c.dec.S_u.v[v], G) <= 0.0)
      throw DomainError("operator_D: G(f) not positive definite at vertex " +
                        std::to_string(v));
    out[v] = G.determinant() * c.d_one[v];
  }
  S.sync(out);
  return out;
}

// ---- H_mu ------------------------------------------------------------

// H_mu(f) = det(B + f Id - nabla grad f), with the dual Hessian of the
// supplied connection and metric.
inline ScalarField operator_Hmu(const Surface& S, const EndomorphismField& B,
                                const ScalarField& f,
                                const ConnectionField& conn,
                                const ConformalMetric& g) {
  EndomorphismField hess = dual_hessian(S, f, conn, g);
  ScalarField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    Mat2 G = B.v[v] + f[v] * Mat2::Identity() - hess.v[v];
    out[v] = G.determinant();
  }
  S.sync(out);
  return out;
}

enum class MAKind { D, Hmu };

struct MAProblem {
  MAKind kind = MAKind::Hmu;
  // D data
  const DContext* dctx = nullptr;
  // Hmu data
  const EndomorphismField* B = nullptr;
  const ConnectionField* conn = nullptr;
  const ConformalMetric* g = nullptr;
};

inline ScalarField ma_operator(const Surface& S, const MAProblem& p,
                               const ScalarField& f, bool check_domain = true) {
  if (p.kind == MAKind::D) return operator_D(S, *p.dctx, f, check_domain);
  return operator_Hmu(S, *p.B, f, *p.conn, *p.g);
}

// G(f) for either operator, plus its minimal eigenvalue over the surface.
inline double ma_min_ellipticity(const Surface& S, const MAProblem& p,
                                 const ScalarField& f) {
  double lo = 1e300;
  if (p.kind == MAKind::D) {
    EndomorphismField af = d_hessian_endo(S, *p.dctx, f);
    for (int d = 0; d < S.num_dofs(); ++d) {
      int v = S.verts[d];
      if (!(f[v] > 0.0)) return -1.0;
      lo = std::min(lo, su_symmetric_min_eig(
                            p.dctx->dec.S_u.v[v],
                            d_gmatrix(*p.dctx, af, v, f[v])));
    }
    return lo;
  }
  EndomorphismField hess = dual_hessian(S, f, *p.conn, *p.g);
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Mat2 G = p.B->v[v] + f[v] * Mat2::Identity() - hess.v[v];
    Mat2 sym = 0.5 * (G + G.transpose());
    lo = std::min(lo, sym_eigenvalues(sym).x());
  }
  return lo;
}

// Gateaux derivative of the chosen operator at f in direction w.
inline ScalarField linearize_MA(const Surface& S, const MAProblem& p,
                                const ScalarField& f, const ScalarField& w) {
  if (ma_min_ellipticity(S, p, f) <= 0.0)
    throw DomainError("linearize_MA: state outside the ellipticity set");
  ScalarField out(S.num_vertices());
  if (p.kind == MAKind::D) {
    const DContext& c = *p.dctx;
    EndomorphismField af = d_hessian_endo(S, c, f);
    EndomorphismField aw = d_hessian_endo(S, c, w);
    ScalarField df = operator_D(S, c, f, false);
    for (int v = 0; v < S.num_vertices(); ++v) {
      Mat2 G = d_gmatrix(c, af, v, f[v]);
      Mat2 dG = 1.5 * std::sqrt(f[v]) * w[v] * Mat2::Identity() -
                0.5 / std::sqrt(f[v]) * w[v] * af.v[v] -
                std::sqrt(f[v]) * aw.v[v];
      out[v] = df[v] * (dG * G.inverse()).trace();
    }
  } else {
    EndomorphismField hf = dual_hessian(S, f, *p.conn, *p.g);
    EndomorphismField hw = dual_hessian(S, w, *p.conn, *p.g);
    ScalarField val = operator_Hmu(S, *p.B, f, *p.conn, *p.g);
    for (int v = 0; v < S.num_vertices(); ++v) {
      Mat2 G = p.B->v[v] + f[v] * Mat2::Identity() - hf.v[v];
      Mat2 dG = w[v] * Mat2::Identity() - hw.v[v];
      out[v] = val[v] * (dG * G.inverse()).trace();
    }
  }
  S.sync(out);
  return out;
}

namespace detail {

// Sparse first-partial matrices (dof x dof) from the jet weights.
inline std::array<Eigen::SparseMatrix<double>, 5> jet_matrices(
    const Surface& S) {
  int nd = S.num_dofs();
  std::array<std::vector<Eigen::Triplet<double>>, 5> trip;
  for (int d = 0; d < nd; ++d) {
    JetWeights jw = S.scalar_jet_weights(d);
    for (size_t s = 0; s < jw.cols.size(); ++s)
      for (int r = 0; r < 5; ++r)
        trip[r].emplace_back(d, jw.cols[s], jw.w(r, s));
  }
  std::array<Eigen::SparseMatrix<double>, 5> out;
  for (int r = 0; r < 5; ++r) {
    out[r].resize(nd, nd);
    out[r].setFromTriplets(trip[r].begin(), trip[r].end());
  }
  return out;
}

// Matrix of w -> entries of nabla_(e_i) (grad_g w) as four sparse operators
// E[i][j] (row-major over the endomorphism index (j,i) = (component, dir)).
struct DualHessOperator {
  std::array<std::array<Eigen::SparseMatrix<double>, 2>, 2> E;
};

inline DualHessOperator dual_hess_operator(const Surface& S,
                                           const ConnectionField& conn,
                                           const ConformalMetric& g) {
  auto J = jet_matrices(S);
  int nd = S.num_dofs();
  Eigen::VectorXd invrho(nd);
  for (int d = 0; d < nd; ++d)
    invrho[d] = 1.0 / metric_factor(S, g, S.verts[d]);
  Eigen::SparseMatrix<double> Gx = invrho.asDiagonal() * J[0];
  Eigen::SparseMatrix<double> Gy = invrho.asDiagonal() * J[1];
  DualHessOperator op;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      Eigen::SparseMatrix<double> M = J[i] * (j == 0 ? Gx : Gy);
      // Christoffel terms Gamma_i(j,0) gx + Gamma_i(j,1) gy
      Eigen::VectorXd c0(nd), c1(nd);
      for (int d = 0; d < nd; ++d) {
        c0[d] = conn.v[S.verts[d]][i](j, 0);
        c1[d] = conn.v[S.verts[d]][i](j, 1);
      }
      M += Eigen::SparseMatrix<double>(c0.asDiagonal() * Gx);
      M += Eigen::SparseMatrix<double>(c1.asDiagonal() * Gy);
      op.E[i][j] = M;
    }
  return op;
}

}  // namespace detail

struct MAReport {
  ScalarField f;
  double residual = 0.0;
  int iters = 0;
  std::vector<double> history;
  double min_ellipticity = 0.0;  // over all accepted iterates and vertices
};

inline MAReport solve_MA(const Surface& S, const MAProblem& p,
                         const ScalarField& target, double tol = 1e-10,
                         int max_iter = 60, double seed_hint = 0.0) {
  int nd = S.num_dofs();
  Eigen::VectorXd tv = dof_values(S, target);
  if (tv.minCoeff() <= 0.0)
    throw DomainError("solve_MA: target must be positive");

  // seed: a constant inside the ellipticity set
  double seed = seed_hint;
  if (seed == 0.0) {
    if (p.kind == MAKind::D) {
      double dmax = 0.0;
      for (int d = 0; d < nd; ++d)
        dmax = std::max(dmax, p.dctx->d_one[S.verts[d]]);
      seed = std::cbrt(tv.maxCoeff() / std::max(dmax, 1e-12)) + 0.1;
    } else {
      double bmin = 0.0;
      for (int d = 0; d < nd; ++d)
        bmin = std::min(bmin,
                        sym_eigenvalues(0.5 * (p.B->v[S.verts[d]] +
                                               p.B->v[S.verts[d]].transpose()))
                            .x());
      seed = std::sqrt(tv.maxCoeff()) - bmin + 0.5;
    }
  }
  ScalarField f(S.num_vertices(), seed);

  auto resid = [&](const ScalarField& x) -> Eigen::VectorXd {
    ScalarField val = ma_operator(S, p, x, false);
    return dof_values(S, val) - tv;
  };

  MAReport rep;
  rep.min_ellipticity = ma_min_ellipticity(S, p, f);
  if (rep.min_ellipticity <= 0.0)
    throw SolveError("solve_MA: seed outside the ellipticity set", {});
  Eigen::VectorXd r = resid(f);
  double rn = r.cwiseAbs().maxCoeff();
  rep.history.push_back(rn);

  detail::DualHessOperator dh;
  if (p.kind == MAKind::Hmu) dh = detail::dual_hess_operator(S, *p.conn, *p.g);

  int it = 0;
  for (; it < max_iter && rn > tol; ++it) {
    // assemble the linearization
    Eigen::SparseMatrix<double> L(nd, nd);
    if (p.kind == MAKind::Hmu) {
      ScalarField val = operator_Hmu(S, *p.B, f, *p.conn, *p.g);
      EndomorphismField hf = dual_hessian(S, f, *p.conn, *p.g);
      Eigen::VectorXd diag(nd);
      std::array<std::array<Eigen::VectorXd, 2>, 2> wgt;
      for (auto& row : wgt)
        for (auto& w : row) w.resize(nd);
      for (int d = 0; d < nd; ++d) {
        int v = S.verts[d];
        Mat2 G = p.B->v[v] + f[v] * Mat2::Identity() - hf.v[v];
        Mat2 M = val[v] * G.inverse();
        diag[d] = M.trace();
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) wgt[i][j][d] = M(i, j);
      }
      L = Eigen::SparseMatrix<double>(diag.asDiagonal());
      // subtract tr(Hess(w) G^{-1} val): entry (i,j) weights M(j,i)... the
      // trace pairs E[i][j] with M(j,i)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          L -= Eigen::SparseMatrix<double>(wgt[j][i].asDiagonal()) * dh.E[i][j];
    } else {
      const DContext& c = *p.dctx;
      ScalarField val = operator_D(S, c, f, false);
      EndomorphismField af = d_hessian_endo(S, c, f);
      Eigen::VectorXd diag(nd);
      std::array<std::array<Eigen::VectorXd, 2>, 2> wgt;
      for (auto& row : wgt)
        for (auto& w : row) w.resize(nd);
      for (int d = 0; d < nd; ++d) {
        int v = S.verts[d];
        Mat2 G = d_gmatrix(c, af, v, f[v]);
        Mat2 Gi = G.inverse();
        diag[d] = val[v] * ((1.5 * std::sqrt(f[v]) * Mat2::Identity() -
                             0.5 / std::sqrt(f[v]) * af.v[v]) *
                            Gi)
                              .trace();
        // -(sqrt f) tr(S_u^{-1} HessBil(w) Gi) = sum HessBil_ij W(j,i)
        Mat2 W = -std::sqrt(f[v]) * val[v] * Gi * c.dec.S_u.v[v].inverse();
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) wgt[i][j][d] = W(i, j);
      }
      // HessBil_ij(w) = J2[ij] w - Gamma^k_{ij} Jk w
      auto J = detail::jet_matrices(S);
      L = Eigen::SparseMatrix<double>(diag.asDiagonal());
      int hessrow[2][2] = {{2, 3}, {3, 4}};
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          Eigen::VectorXd w0(nd), w1(nd);
          for (int d = 0; d < nd; ++d) {
            int v = S.verts[d];
            w0[d] = c.dec.conn_u.v[v][i](0, j);
            w1[d] = c.dec.conn_u.v[v][i](1, j);
          }
          Eigen::SparseMatrix<double> H =
              J[hessrow[i][j]] -
              Eigen::SparseMatrix<double>(w0.asDiagonal()) * J[0] -
              Eigen::SparseMatrix<double>(w1.asDiagonal()) * J[1];
          L += Eigen::SparseMatrix<double>(wgt[j][i].asDiagonal()) * H;
        }
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(L);
    if (lu.info() != Eigen::Success)
      throw SolveError("solve_MA: linear factorization failed", rep.history);
    Eigen::VectorXd step = lu.solve(-r);

    double alpha = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 25; ++ls) {
      ScalarField trial = f;
      for (int d = 0; d < nd; ++d) trial[S.verts[d]] += alpha * step[d];
      S.sync(trial);
      bool positive = true;
      if (p.kind == MAKind::D)
        for (int d = 0; d < nd && positive; ++d)
          positive = trial[S.verts[d]] > 0.0;
      double ell = positive ? ma_min_ellipticity(S, p, trial) : -1.0;
      if (ell > 0.0) {
        Eigen::VectorXd rt = resid(trial);
        double rtn = rt.cwiseAbs().maxCoeff();
        if (rtn < rn * (1.0 - 1e-4 * alpha) || rtn < tol) {
          f = trial;
          r = rt;
          rn = rtn;
          rep.min_ellipticity = std::min(rep.min_ellipticity, ell);
          ok = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    rep.history.push_back(rn);
    if (!ok) throw SolveError("solve_MA: step rejected", rep.history);
  }
  if (rn > tol) throw SolveError("solve_MA: max iterations", rep.history);
  rep.f = f;
  rep.residual = rn;
  rep.iters = it;
  return rep;
}

// C0 windows from the maximum principle, derived directly from the
// operators: for D, inf f >= (inf t / sup D(1))^{1/3} and sup f <=
// (sup t / inf D(1))^{1/3}; for H_mu, inf f >= sqrt(inf t) - Lambda and
// sup f <= sqrt(sup t) - lambda with Lambda/lambda the extreme eigenvalues
// of B over the surface.
struct MAAprioriReport {
  bool pass = false;
  double lower_margin = 0.0;
  double upper_margin = 0.0;
  double tolerance = 0.0;
};

inline MAAprioriReport apriori_MA_check(const Surface& S, const MAProblem& p,
                                        const ScalarField& f,
                                        const ScalarField& target) {
  MAAprioriReport rep;
  double fmin = 1e300, fmax = -1e300, tmin = 1e300, tmax = -1e300;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    fmin = std::min(fmin, f[v]);
    fmax = std::max(fmax, f[v]);
    tmin = std::min(tmin, target[v]);
    tmax = std::max(tmax, target[v]);
  }
  double lo, hi;
  if (p.kind == MAKind::D) {
    double d1min = 1e300, d1max = -1e300;
    for (int d = 0; d < S.num_dofs(); ++d) {
      d1min = std::min(d1min, p.dctx->d_one[S.verts[d]]);
      d1max = std::max(d1max, p.dctx->d_one[S.verts[d]]);
    }
    lo = std::cbrt(tmin / d1max);
    hi = std::cbrt(tmax / d1min);
  } else {
    double lmin = 1e300, lmax = -1e300;
    for (int d = 0; d < S.num_dofs(); ++d) {
      Mat2 b = 0.5 * (p.B->v[S.verts[d]] + p.B->v[S.verts[d]].transpose());
      Vec2 ev = sym_eigenvalues(b);
      lmin = std::min(lmin, ev.x());
      lmax = std::max(lmax, ev.y());
    }
    lo = std::sqrt(tmin) - lmax;
    hi = std::sqrt(tmax) - lmin;
  }
  double scale = std::max(1.0, std::abs(hi));
  rep.tolerance = 1e-7 * scale + 0.5 * S.h * S.h * scale;
  rep.lower_margin = fmin - lo;
  rep.upper_margin = hi - fmax;
  rep.pass = rep.lower_margin >= -rep.tolerance &&
             rep.upper_margin >= -rep.tolerance;
  return rep;
}

// ---- cohomology normalizations ----------------------------------------

// d^{nabla^h} of an E-valued 1-form (B, alpha).
inline double eform_closedness_residual(const Surface& S,
                                        const StructureData& st,
                                        const ECohomologyForm& form) {
  double res = 0.0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    EFormPack d1, d2;
    auto get = [&](int q) -> EFormPack {
      EFormPack p;
      p.topRows<2>() = form.B.v[q];
      p.row(2) = form.alpha.v[q].transpose();
      return p;
    };
    S.tensor_d(d, get, transport_eform, d1, d2);
    EFormPack F;
    F.topRows<2>() = form.B.v[v];
    F.row(2) = form.alpha.v[v].transpose();
    Vec3 r = (d1.col(1) + st.econn.v[v][0] * F.col(1)) -
             (d2.col(0) + st.econn.v[v][1] * F.col(0));
    res = std::max(res, r.cwiseAbs().maxCoeff());
  }
  return res;
}

// nabla^h of a section as an E-valued 1-form.
inline ECohomologyForm eform_of_section(const Surface& S,
                                        const StructureData& st,
                                        const EVectorField& v) {
  auto dv = econnection_d(S, st.econn, v);
  ECohomologyForm out(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) {
    out.B.v[q].col(0) = dv[0].v[q].head<2>();
    out.B.v[q].col(1) = dv[1].v[q].head<2>();
    out.alpha.v[q] = Vec2(dv[0].v[q].z(), dv[1].v[q].z());
  }
  return out;
}

struct HodgeResult {
  ECohomologyForm rep;
  EVectorField gauge_section;  // v with rep = form - nabla v
  double closedness = 0.0;
  double trace_residual = 0.0;
  double anticommute_residual = 0.0;
};

// Gauge-fix a closed form to alpha = 0 and trace-free B.  Two linear steps:
// subtract nabla(xi, 0) with g(xi, .) = alpha, then nabla(-grad w, w) with
// tr(B + w - nabla grad w) = 0; the latter operator has trivial kernel by
// the maximum principle.
inline HodgeResult hodge_representative(const Surface& S,
                                        const StructureData& st,
                                        const ECohomologyForm& form) {
  HodgeResult out;
  out.closedness = eform_closedness_residual(S, st, form);
  int nd = S.num_dofs();
  // step 1: kill alpha
  EVectorField v1(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) {
    double rho = metric_factor(S, st.g, q);
    v1.v[q] = Vec3(form.alpha.v[q].x() / rho, form.alpha.v[q].y() / rho, 0.0);
  }
  S.sync(v1);
  ECohomologyForm g1 = eform_of_section(S, st, v1);
  ECohomologyForm mid(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) {
    mid.B.v[q] = form.B.v[q] - g1.B.v[q];
    mid.alpha.v[q] = form.alpha.v[q] - g1.alpha.v[q];
  }
  // step 2: trace gauge: solve 2w - tr(nabla grad w) = -tr(B)
  auto dh = detail::dual_hess_operator(S, st.conn, st.g);
  Eigen::SparseMatrix<double> T(nd, nd);
  T.setIdentity();
  T *= 2.0;
  T -= dh.E[0][0];
  T -= dh.E[1][1];
  Eigen::VectorXd rhs(nd);
  for (int d = 0; d < nd; ++d) rhs[d] = -mid.B.v[S.verts[d]].trace();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(T);
  if (lu.info() != Eigen::Success)
    throw SolveError("hodge_representative: trace solve failed", {});
  ScalarField w = field_from_dofs(S, lu.solve(rhs));
  S.sync(w);
  VectorField grad = metric_gradient(S, w, st.g);
  EVectorField v2(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q)
    v2.v[q] = Vec3(-grad.v[q].x(), -grad.v[q].y(), w[q]);
  S.sync(v2);
  ECohomologyForm g2 = eform_of_section(S, st, v2);
  out.rep = ECohomologyForm(S.num_vertices());
  out.gauge_section = EVectorField(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) {
    out.rep.B.v[q] = mid.B.v[q] + g2.B.v[q];
    out.rep.alpha.v[q] = mid.alpha.v[q] + g2.alpha.v[q];
    out.gauge_section.v[q] = -v1.v[q] + v2.v[q];
  }
  Mat2 J0 = conformal_rotation();
  for (int d = 0; d < nd; ++d) {
    int q = S.verts[d];
    out.rep.alpha.v[q].setZero();  // exact by construction (h = g)
    out.trace_residual =
        std::max(out.trace_residual, std::abs(out.rep.B.v[q].trace()));
    out.anticommute_residual = std::max(
        out.anticommute_residual,
        (out.rep.B.v[q] * J0 + J0 * out.rep.B.v[q]).cwiseAbs().maxCoeff());
  }
  S.sync(out.rep.B);
  S.sync(out.rep.alpha);
  return out;
}

struct ComplexRepResult {
  EndomorphismField J;
  ECohomologyForm rep;
  ScalarField f;
  double j_squared_residual = 0.0;
  double dJ_residual = 0.0;  // d^{nabla~} J with nabla~ the dual connection
};

// Unique alpha = 0 representative with det(B) = 1; J = J0 B is then a
// complex structure.
inline ComplexRepResult complex_structure_representative(
    const Surface& S, const StructureData& st, const ECohomologyForm& form,
    double tol = 1e-10) {
  // alpha kill (step 1 of the Hodge gauge)
  EVectorField v1(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) {
    double rho = metric_factor(S, st.g, q);
    v1.v[q] = Vec3(form.alpha.v[q].x() / rho, form.alpha.v[q].y() / rho, 0.0);
  }
  S.sync(v1);
  ECohomologyForm g1 = eform_of_section(S, st, v1);
  EndomorphismField B(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q)
    B.v[q] = form.B.v[q] - g1.B.v[q];
  S.sync(B);

  MAProblem prob;
  prob.kind = MAKind::Hmu;
  prob.B = &B;
  prob.conn = &st.conn;
  prob.g = &st.g;
  ScalarField target(S.num_vertices(), 1.0);
  MAReport ma = solve_MA(S, prob, target, tol);

  ComplexRepResult out;
  out.f = ma.f;
  EndomorphismField hess = dual_hessian(S, ma.f, st.conn, st.g);
  out.rep = ECohomologyForm(S.num_vertices());
  out.J = EndomorphismField(S.num_vertices());
  Mat2 J0 = conformal_rotation();
  for (int q = 0; q < S.num_vertices(); ++q) {
    out.rep.B.v[q] = B.v[q] + ma.f[q] * Mat2::Identity() - hess.v[q];
    out.rep.alpha.v[q].setZero();
    out.J.v[q] = J0 * out.rep.B.v[q];
  }
  for (int d = 0; d < S.num_dofs(); ++d) {
    int q = S.verts[d];
    out.j_squared_residual = std::max(
        out.j_squared_residual,
        (out.J.v[q] * out.J.v[q] + Mat2::Identity()).cwiseAbs().maxCoeff());
  }
  EndomorphismField J0f(S.num_vertices());
  for (int q = 0; q < S.num_vertices(); ++q) J0f.v[q] = J0;
  ConnectionField dual = dual_connection(S, st.conn, J0f);
  for (int d = 0; d < S.num_dofs(); ++d)
    out.dJ_residual =
        std::max(out.dJ_residual,
                 dnabla_endo_oneform(S, d, out.J, dual).cwiseAbs().maxCoeff());
  return out;
}

// ---- general jet-coefficient operators --------------------------------

// M(f) = d(j^1 f) det(nabla^2 f + W(j^1 f)) for user jet-coefficients.  The
// Hessian is realized as the composition nabla(grad f) of the supplied
// connection, the same discrete object the determinant operators use, so the
// documented specializations hold exactly.
inline ScalarField general_monge_ampere(
    const Surface& S, const ConformalMetric& G, const ConnectionField& conn,
    const std::function<double(int, double, Vec2)>& dcoef,
    const std::function<Mat2(int, double, Vec2)>& wcoef,
    const ScalarField& f) {
  EndomorphismField hess = dual_hessian(S, f, conn, G);
  ScalarField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, f.v);
    Vec2 grad(j.x, j.y);
    Mat2 m = hess.v[v] + wcoef(v, f[v], grad);
    out[v] = dcoef(v, f[v], grad) * m.determinant();
  }
  S.sync(out);
  return out;
}

// L_F(f) = Lap f + F(j^1 f), with the background Laplace-Beltrami operator.
inline ScalarField general_laplace(
    const Surface& S, const std::function<double(int, double, Vec2)>& F,
    const ScalarField& f) {
  ScalarField lap = laplacian(S, f);
  ScalarField out(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    Jet j = S.scalar_jet(d, f.v);
    out[v] = lap[v] + F(v, f[v], Vec2(j.x, j.y));
  }
  S.sync(out);
  return out;
}

}  // namespace cps
