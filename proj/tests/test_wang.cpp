#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "cps/wang.hpp"

using namespace cps;

namespace {

double field_sup_err(const Surface& S, const ScalarField& a, double c) {
  double m = 0;
  for (int d = 0; d < S.num_dofs(); ++d)
    m = std::max(m, std::abs(a[S.verts[d]] - c));
  return m;
}

// Manufactured genus-2 solution: constant plus a centred bump whose tail is
// below roundoff at the boundary, with the analytic hyperbolic Laplacian.
struct Genus2Manufactured {
  double c0 = 0.2, a = -0.005, s = 0.3;
  double mu(double r) const { return c0 + a * std::exp(-(r / s) * (r / s)); }
  double lap(double r) const {
    double q2 = (r / s) * (r / s);
    double cothr_r = r < 1e-6 ? 1.0 + r * r / 3.0 : r / std::tanh(r);
    return a * std::exp(-q2) *
           (4.0 * r * r / (s * s * s * s) - 2.0 / (s * s) -
            2.0 * cothr_r / (s * s));
  }
  ScalarField mu_field(const Surface& S) const {
    ScalarField out(S.num_vertices());
    for (int v = 0; v < S.num_vertices(); ++v)
      out[v] = mu(hyperbolic_distance(to_cplx(S.pos[v]), 0.0));
    return out;
  }
  ScalarField f_field(const Surface& S) const {
    ScalarField out(S.num_vertices());
    for (int v = 0; v < S.num_vertices(); ++v) {
      double r = hyperbolic_distance(to_cplx(S.pos[v]), 0.0);
      double m = mu(r);
      out[v] = std::exp(4 * m) * lap(r) + std::exp(6 * m) - std::exp(4 * m);
    }
    return out;
  }
};

}  // namespace

TEST_CASE("wang_operator constant anchors") {
  Surface G = build_genus2(0);
  CHECK(field_sup_err(G, wang_operator(G, ScalarField(G.num_vertices(), 0.0)),
                      0.0) < 1e-12);
  CHECK(field_sup_err(
            G,
            wang_operator(G, ScalarField(G.num_vertices(), 0.5 * std::log(2.0))),
            4.0) < 1e-12);
  Surface T = build_torus(8, Cplx(0, 1));
  CHECK(field_sup_err(
            T, wang_operator(T, ScalarField(T.num_vertices(),
                                            std::log(5.0) / 6.0)),
            5.0) < 1e-12);
}

TEST_CASE("wang_linearization: zero direction, frozen constant, FD oracle") {
  Surface G = build_genus2(0);
  int n = G.num_vertices();
  CHECK(field_sup_err(G,
                      wang_linearization(G, ScalarField(n, 0.3),
                                         ScalarField(n, 0.0)),
                      0.0) == 0.0);
  // mu = 0, k0 = -1, lam = 1: derivative of e^{6mu} - e^{4mu} at 0 is 2
  CHECK(field_sup_err(
            G, wang_linearization(G, ScalarField(n, 0.0), ScalarField(n, 1.0)),
            2.0) < 1e-12);
  // central finite differences on random smooth fields
  ScalarField mu(n), lam(n);
  for (int v = 0; v < n; ++v) {
    double r = hyperbolic_distance(to_cplx(G.pos[v]), 0.0);
    mu[v] = 0.1 * std::cos(r * r);
    lam[v] = 0.2 * std::sin(1.5 * r * r) + 0.05;
  }
  ScalarField L = wang_linearization(G, mu, lam);
  for (double eps : {1e-3, 5e-4}) {
    ScalarField up(n), dn(n);
    for (int v = 0; v < n; ++v) {
      up[v] = mu[v] + eps * lam[v];
      dn[v] = mu[v] - eps * lam[v];
    }
    ScalarField hu = wang_operator(G, up), hd = wang_operator(G, dn);
    double err = 0;
    for (int d = 0; d < G.num_dofs(); ++d) {
      int v = G.verts[d];
      err = std::max(err,
                     std::abs(L[v] - (hu[v] - hd[v]) / (2 * eps)));
    }
    CHECK(err < 50.0 * eps * eps);
  }
}

TEST_CASE("solve_wang: constant right-hand side on genus 2") {
  Surface G = build_genus2(1);
  double f0 = std::exp(1.2) - std::exp(0.8);
  WangReport rep = solve_wang(G, ScalarField(G.num_vertices(), f0), 1e-10);
  CHECK(field_sup_err(G, rep.mu, 0.2) < 1e-9);
  CHECK(rep.residual <= 1e-10);
}

TEST_CASE("solve_wang rejects negative data") {
  Surface G = build_genus2(0);
  ScalarField f(G.num_vertices(), 1.0);
  f[10] = -0.5;
  CHECK_THROWS_AS(solve_wang(G, f), DomainError);
  CHECK_THROWS_WITH(solve_wang(G, f),
                    Catch::Matchers::ContainsSubstring("positive"));
}

TEST_CASE("solve_wang: manufactured solution converges on genus 2") {
  Genus2Manufactured man;
  double errs[2];
  int k = 0;
  for (int lvl : {0, 1}) {
    Surface G = build_genus2(lvl);
    ScalarField f = man.f_field(G);
    double fmin = 1e300;
    for (int d = 0; d < G.num_dofs(); ++d)
      fmin = std::min(fmin, f[G.verts[d]]);
    REQUIRE(fmin > 0.0);
    WangReport rep = solve_wang(G, f, 1e-10);
    ScalarField mustar = man.mu_field(G);
    double err = 0;
    for (int d = 0; d < G.num_dofs(); ++d)
      err = std::max(err,
                     std::abs(rep.mu[G.verts[d]] - mustar[G.verts[d]]));
    errs[k++] = err;
  }
  INFO("manufactured errors " << errs[0] << " -> " << errs[1]);
  CHECK(errs[1] < errs[0] / 1.8);
}

TEST_CASE("solve_wang: manufactured solution converges on the torus") {
  auto lap_exact = [](const Surface& S, Vec2 p) {
    Mat2 L;
    L.col(0) = to_vec2(Cplx(1, 0));
    L.col(1) = to_vec2(S.tau);
    Mat2 Li = L.inverse();
    Vec2 st = Li * p;
    double a = 0.01;
    double s2p = 2 * M_PI;
    Mat2 Hst;
    Hst << -a * s2p * s2p * std::sin(s2p * st.x()) * std::cos(s2p * st.y()),
        -a * s2p * s2p * std::cos(s2p * st.x()) * std::sin(s2p * st.y()),
        -a * s2p * s2p * std::cos(s2p * st.x()) * std::sin(s2p * st.y()),
        -a * s2p * s2p * std::sin(s2p * st.x()) * std::cos(s2p * st.y());
    Mat2 Hxy = Li.transpose() * Hst * Li;
    return Hxy.trace();
  };
  auto mu_exact = [](const Surface& S, Vec2 p) {
    Mat2 L;
    L.col(0) = to_vec2(Cplx(1, 0));
    L.col(1) = to_vec2(S.tau);
    Vec2 st = L.inverse() * p;
    return 0.01 * std::sin(2 * M_PI * st.x()) * std::cos(2 * M_PI * st.y());
  };
  double errs[2];
  int k = 0;
  for (int n : {16, 32}) {
    Surface S = build_torus(n, Cplx(0, 1));
    ScalarField f(S.num_vertices());
    for (int v = 0; v < S.num_vertices(); ++v) {
      double m = mu_exact(S, S.pos[v]);
      f[v] = std::exp(4 * m) * lap_exact(S, S.pos[v]) + std::exp(6 * m);
    }
    WangReport rep = solve_wang(S, f, 1e-11);
    double err = 0;
    for (int d = 0; d < S.num_dofs(); ++d)
      err = std::max(err, std::abs(rep.mu[S.verts[d]] -
                                   mu_exact(S, S.pos[S.verts[d]])));
    errs[k++] = err;
  }
  INFO("torus manufactured errors " << errs[0] << " -> " << errs[1]);
  CHECK(errs[1] < errs[0] / 3.4);  // second order
}

TEST_CASE("solve_wang: seed independence witness") {
  Surface G = build_genus2(0);
  Genus2Manufactured man;
  ScalarField f = man.f_field(G);
  WangReport a = solve_wang(G, f, 1e-9, 50, 0.0);
  WangReport b = solve_wang(G, f, 1e-9, 50, 0.3);
  double diff = 0;
  for (int d = 0; d < G.num_dofs(); ++d)
    diff = std::max(diff, std::abs(a.mu[G.verts[d]] - b.mu[G.verts[d]]));
  CHECK(diff < 10 * 1e-9);
}

TEST_CASE("apriori_check: tight on constants, passes on solves, fails on corruption") {
  Surface G = build_genus2(0);
  double f0 = std::exp(1.2) - std::exp(0.8);
  ScalarField f(G.num_vertices(), f0);
  WangReport rep = solve_wang(G, f, 1e-10);
  AprioriReport ap = apriori_check(G, rep.mu, f);
  CHECK(ap.pass);
  CHECK(std::abs(ap.margin_min) < 1e-8);
  CHECK(std::abs(ap.margin_max) < 1e-8);

  Genus2Manufactured man;
  ScalarField fm = man.f_field(G);
  WangReport rep2 = solve_wang(G, fm, 1e-10);
  CHECK(apriori_check(G, rep2.mu, fm).pass);

  ScalarField bad = rep2.mu;
  for (auto& x : bad.v) x += 1.0;
  CHECK_FALSE(apriori_check(G, bad, fm).pass);
}
