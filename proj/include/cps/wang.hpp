#pragma once

// The scalar operator H(mu) = e^{4mu} Lap(mu) + e^{6mu} + k0 e^{4mu}, its
// linearization, a damped Newton solver with pseudo-transient fallback, and
// the maximum-principle diagnostics.
//
// Sign convention: Lap is the analyst's Laplacian (Lap sin = -sin), and the
// curvature formula k_g = e^{-2mu}(k0 + Lap mu) is taken as the definition,
// which reproduces the displayed operator at k0 = -1.  The linearization is
// the Gateaux derivative of the implemented H,
//   L(lam) = 4 lam H(mu) + 2 lam e^{6mu} + e^{4mu} Lap lam,
// whose Lap-term sign is opposite to the displayed one; finite differences
// validate the derivative.

#include <Eigen/SparseLU>

#include "cps/calculus.hpp"

namespace cps {

inline ScalarField wang_operator(const Surface& S, const ScalarField& mu) {
  ScalarField lap = laplacian(S, mu);
  ScalarField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    double e4 = std::exp(4.0 * mu[v]), e6 = std::exp(6.0 * mu[v]);
    out[v] = e4 * lap[v] + e6 + S.k0 * e4;
  }
  return out;
}

inline ScalarField wang_linearization(const Surface& S, const ScalarField& mu,
                                      const ScalarField& lam) {
  ScalarField h = wang_operator(S, mu);
  ScalarField lap = laplacian(S, lam);
  ScalarField out(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    double e4 = std::exp(4.0 * mu[v]), e6 = std::exp(6.0 * mu[v]);
    out[v] = 4.0 * lam[v] * h[v] + 2.0 * lam[v] * e6 + e4 * lap[v];
  }
  return out;
}

struct WangReport {
  ScalarField mu;
  double residual = 0.0;
  int iters = 0;
  std::vector<double> history;
  bool used_fallback = false;
};

inline WangReport solve_wang(const Surface& S, const ScalarField& f,
                             double tol = 1e-8, int max_iter = 50,
                             double seed = 0.0) {
  if (!(tol > 0.0)) throw InvalidInputError("solve_wang: tol must be > 0");
  for (int d = 0; d < S.num_dofs(); ++d)
    if (f[S.verts[d]] < 0.0) throw DomainError("f must be positive");

  int nd = S.num_dofs();
  Eigen::VectorXd fv = dof_values(S, f);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(nd, seed);
  Eigen::VectorXd m(nd);
  for (int d = 0; d < nd; ++d) m[d] = S.mass[d];

  auto op = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd lap = S.stiffness * x;
    Eigen::VectorXd out(nd);
    for (int d = 0; d < nd; ++d) {
      double e4 = std::exp(4.0 * x[d]), e6 = std::exp(6.0 * x[d]);
      out[d] = e4 * lap[d] / m[d] + e6 + S.k0 * e4;
    }
    return out;
  };

  std::vector<double> history;
  Eigen::VectorXd r = op(mu) - fv;
  double rn = r.cwiseAbs().maxCoeff();
  history.push_back(rn);
  bool used_fallback = false;
  int rejects = 0;
  double ptc = 0.0;  // 1/dt; zero means plain Newton
  int it = 0;
  for (; it < max_iter && rn > tol; ++it) {
    // symmetrized system: diag(m e^{-4mu}(4H + 2 e^{6mu} + ptc)) + K
    Eigen::VectorXd hmu = op(mu);
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd we(nd);
    for (int d = 0; d < nd; ++d) {
      double e4 = std::exp(4.0 * mu[d]), e6 = std::exp(6.0 * mu[d]);
      double c = 4.0 * hmu[d] + 2.0 * e6 + ptc;
      we[d] = m[d] / e4;
      trip.emplace_back(d, d, we[d] * c);
    }
    Eigen::SparseMatrix<double> A = S.stiffness;
    Eigen::SparseMatrix<double> D(nd, nd);
    D.setFromTriplets(trip.begin(), trip.end());
    A += D;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
    if (lu.info() != Eigen::Success)
      throw SolveError("solve_wang: linear factorization failed", history);
    Eigen::VectorXd rhs = -(we.array() * r.array()).matrix();
    Eigen::VectorXd step = lu.solve(rhs);

    double alpha = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 12; ++ls) {
      Eigen::VectorXd trial = mu + alpha * step;
      Eigen::VectorXd rt = op(trial) - fv;
      double rtn = rt.cwiseAbs().maxCoeff();
      if (rtn < rn * (1.0 - 1e-4 * alpha) || rtn < tol) {
        mu = trial;
        r = rt;
        rn = rtn;
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    history.push_back(rn);
    if (ok) {
      rejects = 0;
      if (ptc > 0.0) ptc *= 0.3;  // relax the transient term as we converge
      if (ptc < 1e-8) ptc = 0.0;
    } else {
      if (++rejects >= 5 || ptc > 0.0) {
        used_fallback = true;
        ptc = ptc == 0.0 ? 10.0 : ptc * 10.0;
        if (ptc > 1e12)
          throw SolveError("solve_wang: no convergence", history);
      }
    }
  }
  if (rn > tol) throw SolveError("solve_wang: max iterations", history);

  WangReport rep;
  rep.mu = field_from_dofs(S, mu);
  S.sync(rep.mu);
  // independent residual pass through the public operator
  ScalarField h2 = wang_operator(S, rep.mu);
  double rcheck = 0.0;
  for (int d = 0; d < nd; ++d)
    rcheck = std::max(rcheck, std::abs(h2[S.verts[d]] - fv[d]));
  rep.residual = rcheck;
  rep.iters = it;
  rep.history = std::move(history);
  rep.used_fallback = used_fallback;
  return rep;
}

// e^{6c} + k0 e^{4c} and its inverse on the increasing branch.
inline double wang_constant_value(double k0, double c) {
  return std::exp(6.0 * c) + k0 * std::exp(4.0 * c);
}

inline double wang_constant_inverse(double k0, double f) {
  if (k0 == 0.0) return std::log(f) / 6.0;
  double lo = 0.0, hi = 1.0;
  while (wang_constant_value(k0, hi) < f) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (wang_constant_value(k0, mid) < f ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Maximum-principle diagnostics.  The inequalities are derived from the
// implemented operator: at a discrete argmin of mu the Laplacian term is
// nonnegative, so f >= E(mu_min) there; at an argmax, f <= E(mu_max), with
// E(c) = e^{6c} + k0 e^{4c}.  The implied C0 window follows by inverting E
// on its increasing branch.
struct AprioriReport {
  bool pass = false;
  double margin_min = 0.0;  // f(argmin) - E(mu_min)  (should be >= -tol)
  double margin_max = 0.0;  // E(mu_max) - f(argmax)  (should be >= -tol)
  double window_lo = 0.0;   // mu_max must exceed this
  double window_hi = 0.0;   // mu_min must stay below this
  double mu_min = 0.0, mu_max = 0.0;
  double tolerance = 0.0;
};

inline AprioriReport apriori_check(const Surface& S, const ScalarField& mu,
                                   const ScalarField& f) {
  AprioriReport rep;
  int amin = 0, amax = 0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    if (mu[S.verts[d]] < mu[S.verts[amin]]) amin = d;
    if (mu[S.verts[d]] > mu[S.verts[amax]]) amax = d;
  }
  double mmin = mu[S.verts[amin]], mmax = mu[S.verts[amax]];
  double fmin = 1e300, fmax = -1e300;
  for (int d = 0; d < S.num_dofs(); ++d) {
    fmin = std::min(fmin, f[S.verts[d]]);
    fmax = std::max(fmax, f[S.verts[d]]);
  }
  double scale = std::max(1.0, fmax);
  rep.tolerance = 1e-7 * scale + 0.5 * S.h * S.h * scale;
  rep.mu_min = mmin;
  rep.mu_max = mmax;
  rep.margin_min = f[S.verts[amin]] - wang_constant_value(S.k0, mmin);
  rep.margin_max = wang_constant_value(S.k0, mmax) - f[S.verts[amax]];
  rep.window_lo = wang_constant_inverse(S.k0, std::max(fmin, 0.0));
  rep.window_hi = wang_constant_inverse(S.k0, fmax);
  bool windows = mmin <= rep.window_hi + rep.tolerance &&
                 mmax >= rep.window_lo - rep.tolerance;
  rep.pass = rep.margin_min >= -rep.tolerance &&
             rep.margin_max >= -rep.tolerance && windows;
  return rep;
}

}  // namespace cps
