#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "cps/connection.hpp"
#include "cps/titeica.hpp"

using namespace cps;

namespace {

EndomorphismField constant_J0(const Surface& S) {
  EndomorphismField J(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) J.v[v] = conformal_rotation();
  return J;
}

std::array<EndomorphismField, 2> random_admissible_A(const Surface& S,
                                                     unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1, 1);
  CubicDifferential w(S.num_vertices());
  for (auto& c : w.coeff) c = Cplx(d(rng), d(rng));
  S.sync(w);
  return a_operator(S, ConformalMetric::background(S), w);
}

double conn_dist(const Surface& S, const ConnectionField& a,
                 const ConnectionField& b) {
  double m = 0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    int v = S.verts[d];
    m = std::max(m, (a.v[v][0] - b.v[v][0]).cwiseAbs().maxCoeff());
    m = std::max(m, (a.v[v][1] - b.v[v][1]).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

TEST_CASE("levi_civita: flat and constant-conformal tori have zero symbols") {
  Surface S = build_torus(8, Cplx(0, 1));
  for (double lam : {1.0, 3.7}) {
    ConformalMetric g(S.num_vertices(), lam);
    ConnectionField lc = levi_civita(S, g);
    for (int v = 0; v < S.num_vertices(); ++v) {
      CHECK(lc.v[v][0].cwiseAbs().maxCoeff() < 1e-13);
      CHECK(lc.v[v][1].cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("levi_civita: Poincare metric compatibility residual decays") {
  double errs[2];
  int k = 0;
  for (int lvl : {0, 1}) {
    Surface S = build_genus2(lvl);
    auto g = ConformalMetric::background(S);
    errs[k++] = metric_compatibility_residual(S, g, levi_civita(S, g));
  }
  INFO("nabla g residuals " << errs[0] << " -> " << errs[1]);
  CHECK(errs[1] < 0.7 * errs[0]);
}

TEST_CASE("build_nabla_h: zero data leaves only the identity coupling") {
  Surface S = build_torus(8, Cplx(0, 1));
  EConnection w = build_nabla_h(S, ConnectionField(S.num_vertices()),
                                BilinearField(S.num_vertices()));
  for (int v = 0; v < S.num_vertices(); ++v)
    for (int i = 0; i < 2; ++i) {
      Mat3 expect = Mat3::Zero();
      expect(i, 2) = 1.0;
      CHECK((w.v[v][i] - expect).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("build_nabla_h rejects asymmetric h") {
  Surface S = build_torus(8, Cplx(0, 1));
  BilinearField h(S.num_vertices());
  for (auto& m : h.v) m << 1, 0.5, -0.5, 1;
  CHECK_THROWS_AS(build_nabla_h(S, ConnectionField(S.num_vertices()), h),
                  InvalidInputError);
}

TEST_CASE("Titeica data: nabla^h is flat and volume-parallel") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto t = titeica_reference(1.0, Cplx(0, 1));
  auto f = titeica_fields(S, t);
  CHECK(econnection_flatness_residual(S, f.econn) < 1e-11);
  // coefficients are trace free in the flat chart (volume form parallel)
  for (int v = 0; v < S.num_vertices(); ++v) {
    CHECK(std::abs(f.econn.v[v][0].trace()) < 1e-13);
    CHECK(std::abs(f.econn.v[v][1].trace()) < 1e-13);
  }
  // reference coefficient matrices coincide with the assembled ones
  CHECK((f.econn.v[0][0] - t.M1).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((f.econn.v[0][1] - t.M2).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("condition (E): hyperbolic case and its refinement decay") {
  double curv[2];
  int k = 0;
  for (int lvl : {0, 1}) {
    Surface S = build_genus2(lvl);
    auto g = ConformalMetric::background(S);
    CondEResiduals r =
        condition_E_residual(S, levi_civita(S, g), bilinear_of_metric(S, g));
    CHECK(r.r_sym < 1e-11);
    curv[k++] = std::max({r.r_curv, r.r_codazzi});
  }
  INFO("condE residuals " << curv[0] << " -> " << curv[1]);
  CHECK(curv[1] < 0.7 * curv[0]);
}

TEST_CASE("condition (E): Titeica exact, perturbed h detected") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto f = titeica_fields(S, titeica_reference(1.0, Cplx(0, 1)));
  CondEResiduals r = condition_E_residual(S, f.conn, f.h);
  CHECK(r.r_sym < 1e-12);
  CHECK(r.r_codazzi < 1e-11);
  CHECK(r.r_curv < 1e-11);
  BilinearField bad = f.h;
  for (auto& m : bad.v) m += 0.1 * Mat2::Identity();
  CondEResiduals rb = condition_E_residual(S, f.conn, bad);
  CHECK(rb.r_curv > 0.05);
}

TEST_CASE("s_u recovers the Titeica data and is scale invariant") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto t = titeica_reference(1.3, Cplx(0, 1));
  auto f = titeica_fields(S, t);
  SuDecomposition dec = s_u_and_nabla_u(S, f.econn, f.section);
  for (int v = 0; v < S.num_vertices(); ++v) {
    CHECK((dec.S_u.v[v] - f.h.v[v]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((dec.conn_u.v[v][0] - f.conn.v[v][0]).cwiseAbs().maxCoeff() < 1e-10);
  }
  // u -> k u leaves both outputs unchanged
  EVectorField ku(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) ku.v[v] = 4.2 * f.section.v[v];
  SuDecomposition dec2 = s_u_and_nabla_u(S, f.econn, ku);
  for (int v = 0; v < S.num_vertices(); ++v) {
    CHECK((dec2.S_u.v[v] - dec.S_u.v[v]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((dec2.conn_u.v[v][0] - dec.conn_u.v[v][0]).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("s_u rejects non-immersed sections") {
  Surface S = build_torus(8, Cplx(0, 1));
  EConnection w(S.num_vertices());  // zero connection: nabla u = 0
  EVectorField u(S.num_vertices());
  for (auto& x : u.v) x = Vec3(1, 0, 0);
  CHECK_THROWS_AS(s_u_and_nabla_u(S, w, u), NotImmersedError);
}

TEST_CASE("rescaling laws hold exactly for constants and decay for smooth f") {
  auto t = titeica_reference(1.0, Cplx(0, 1));
  {
    Surface S = build_torus(16, Cplx(0, 1));
    auto fl = titeica_fields(S, t);
    RescaleResiduals r1 = rescale_laws_check(S, fl.econn, fl.section,
                                             ScalarField(S.num_vertices(), 1.0));
    CHECK(r1.r_S < 1e-12);
    CHECK(r1.r_conn < 1e-12);
    RescaleResiduals rk = rescale_laws_check(S, fl.econn, fl.section,
                                             ScalarField(S.num_vertices(), 3.0));
    CHECK(rk.r_S < 1e-10);
    CHECK(rk.r_conn < 1e-10);
  }
  double rs[2], rc[2];
  int k = 0;
  for (int n : {16, 32}) {
    Surface S = build_torus(n, Cplx(0, 1));
    auto fl = titeica_fields(S, t);
    ScalarField f(S.num_vertices());
    for (int v = 0; v < S.num_vertices(); ++v)
      f[v] = 1.5 + 0.3 * std::sin(2 * M_PI * S.pos[v].x()) *
                       std::cos(2 * M_PI * S.pos[v].y());
    RescaleResiduals r = rescale_laws_check(S, fl.econn, fl.section, f);
    rs[k] = r.r_S;
    rc[k] = r.r_conn;
    ++k;
  }
  INFO("rescale residuals S: " << rs[0] << "->" << rs[1] << " conn: " << rc[0]
                               << "->" << rc[1]);
  CHECK(rs[1] < 0.35 * rs[0]);
  CHECK(rc[1] < 0.35 * rc[0]);
}

TEST_CASE("dual connection: parallel J fixed point, exact involution") {
  Surface S = build_genus2(0);
  auto g = ConformalMetric::background(S);
  ConnectionField lc = levi_civita(S, g);
  EndomorphismField J = constant_J0(S);
  // conformal Levi-Civita has nabla J = 0: the dual equals the original
  CHECK(conn_dist(S, dual_connection(S, lc, J), lc) < 1e-11);
  // exact involution on arbitrary connections
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1, 1);
  ConnectionField conn(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    Mat2 g1, g2;
    g1 << d(rng), d(rng), d(rng), d(rng);
    g2 << d(rng), d(rng), d(rng), d(rng);
    g2.col(0) = g1.col(1);  // torsion free
    conn.v[v] = {g1, g2};
  }
  S.sync(conn);
  ConnectionField dd = dual_connection(S, dual_connection(S, conn, J), J);
  CHECK(conn_dist(S, dd, conn) < 1e-12);
}

TEST_CASE("dual connection matches the metric transpose on Titeica data") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto f = titeica_fields(S, titeica_reference(1.0, Cplx(0, 1)));
  ConnectionField dual = dual_connection(S, f.conn, constant_J0(S));
  // g-transpose oracle: Gamma*_i = g^{-1}(d_i g - Gamma_i^T g) = -Gamma_i^T
  // for the constant Titeica metric
  for (int v = 0; v < S.num_vertices(); ++v)
    for (int i = 0; i < 2; ++i)
      CHECK((dual.v[v][i] + f.conn.v[v][i].transpose()).cwiseAbs().maxCoeff() <
            1e-11);
}

TEST_CASE("j_symmetry has exact order four and j^2 negates A") {
  Surface S = build_torus(8, Cplx(0, 1));
  auto A = random_admissible_A(S, 31);
  EndomorphismField J = constant_J0(S);
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> d(-1, 1);
  ConnectionField conn(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    Mat2 g1, g2;
    g1 << d(rng), d(rng), d(rng), d(rng);
    g2 << d(rng), d(rng), d(rng), d(rng);
    g2.col(0) = g1.col(1);
    conn.v[v] = {g1, g2};
  }
  S.sync(conn);
  JTriple x{conn, J, A};
  JTriple j1 = j_symmetry(S, x.conn, x.J, x.A);
  JTriple j2 = j_symmetry(S, j1.conn, j1.J, j1.A);
  JTriple j3 = j_symmetry(S, j2.conn, j2.J, j2.A);
  JTriple j4 = j_symmetry(S, j3.conn, j3.J, j3.A);
  CHECK(conn_dist(S, j4.conn, conn) < 1e-12);
  double da = 0, da2 = 0;
  for (int v = 0; v < S.num_vertices(); ++v) {
    da = std::max(da, (j4.A[0].v[v] - A[0].v[v]).cwiseAbs().maxCoeff());
    da2 = std::max(da2, (j2.A[0].v[v] + A[0].v[v]).cwiseAbs().maxCoeff());
  }
  CHECK(da < 1e-12);
  CHECK(da2 < 1e-12);  // j^2 = antipode on A
  CHECK(conn_dist(S, j2.conn, conn) < 1e-12);
}

TEST_CASE("condition (H): Fuchsian data, and the contragredient swap") {
  double curv[2];
  int k = 0;
  for (int lvl : {0, 1}) {
    Surface S = build_genus2(lvl);
    auto g = ConformalMetric::background(S);
    ConnectionField lc = levi_civita(S, g);
    EndomorphismField J = constant_J0(S);
    ScalarField om = condition_H_default_omega(S, g);
    CondHResiduals r = condition_H_residual(S, lc, om, J);
    CHECK(r.r_torsion < 1e-11);
    curv[k++] = std::max({r.r_curv, r.r_dJ, r.r_vol});
    if (lvl == 0) {
      // swap (nabla, omega, J) -> (-J nabla J, omega, J)
      CondHResiduals rs =
          condition_H_residual(S, dual_connection(S, lc, J), om, J);
      CHECK(rs.r_curv < 2.0 * r.r_curv + 1e-9);
      CHECK(rs.r_vol < 2.0 * r.r_vol + 1e-9);
      CHECK(rs.r_dJ < 2.0 * r.r_dJ + 1e-9);
      // condition (J) with A = 0 adds exactly nothing
      CondHResiduals rj = condition_J_residual(
          S, lc, om, J,
          {EndomorphismField(S.num_vertices()),
           EndomorphismField(S.num_vertices())});
      CHECK(rj.r_dA == 0.0);
      CHECK(rj.r_AJ == 0.0);
      // condition (I) with J1 = J: J J1 = -Id is parallel
      CondHResiduals ri = condition_I_residual(S, lc, om, J, J);
      CHECK(ri.r_dJJ1 < 1e-10);
    }
  }
  CHECK(curv[1] < 0.7 * curv[0]);
}

TEST_CASE("convex_form: the dual-connection tautological form is convex") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto f = titeica_fields(S, titeica_reference(1.0, Cplx(0, 1)));
  EndomorphismField J = constant_J0(S);
  ConnectionField dual = dual_connection(S, f.conn, J);
  EndomorphismField H(S.num_vertices());
  for (auto& m : H.v) m = Mat2::Identity();  // g-raised h for h = g
  EConnection wstar = build_nabla_h_star(S, dual, H, f.h);
  EForm alpha(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) {
    alpha.a[0].v[v] = Vec3(1, 0, 0);
    alpha.a[1].v[v] = Vec3(0, 1, 0);
  }
  ConvexFormResult res = convex_form(S, wstar, alpha);
  CHECK(res.is_convex);
  for (int v = 0; v < S.num_vertices(); ++v)
    CHECK((res.h.v[v] - f.h.v[v]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("convex_form: alpha = nabla u reproduces S_u; degenerate rejected") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto f = titeica_fields(S, titeica_reference(1.0, Cplx(0, 1)));
  auto du = econnection_d(S, f.econn, f.section);
  EForm alpha(S.num_vertices());
  alpha.a[0] = du[0];
  alpha.a[1] = du[1];
  ConvexFormResult res = convex_form(S, f.econn, alpha);
  CHECK(res.is_convex);
  SuDecomposition dec = s_u_and_nabla_u(S, f.econn, f.section);
  for (int v = 0; v < S.num_vertices(); ++v)
    CHECK((res.h.v[v] - dec.S_u.v[v]).cwiseAbs().maxCoeff() < 1e-9);
  alpha.a[0].v[S.verts[3]].setZero();
  CHECK_THROWS_WITH(convex_form(S, f.econn, alpha),
                    Catch::Matchers::ContainsSubstring("vertex"));
}

TEST_CASE("pick_q3: zero, random admissible, linear scaling") {
  Surface S = build_torus(8, Cplx(0, 1));
  ConformalMetric g(S.num_vertices(), 1.9);
  std::array<EndomorphismField, 2> zero = {
      EndomorphismField(S.num_vertices()), EndomorphismField(S.num_vertices())};
  CHECK(pick_q3_check(S, g, zero) == 0.0);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> d(-2, 2);
  CubicDifferential w(S.num_vertices());
  for (auto& c : w.coeff) c = Cplx(d(rng), d(rng));
  S.sync(w);
  auto A = a_operator(S, g, w);
  CHECK(pick_q3_check(S, g, A) < 1e-10);
  for (auto& m : A[0].v) m *= 2.0;
  for (auto& m : A[1].v) m *= 2.0;
  CHECK(pick_q3_check(S, g, A) < 2e-10);  // both sides degree 1 in A
  EndomorphismField bad(S.num_vertices());
  for (auto& m : bad.v) m = Mat2::Identity();
  CHECK_THROWS_WITH(pick_q3_check(S, g, {bad, bad}),
                    Catch::Matchers::ContainsSubstring("trace"));
}

TEST_CASE("blaschke_residual: B = Id agrees with condition (E); zero data") {
  Surface S = build_torus(16, Cplx(0, 1));
  auto f = titeica_fields(S, titeica_reference(1.0, Cplx(0, 1)));
  EndomorphismField B(S.num_vertices());
  for (auto& m : B.v) m = Mat2::Identity();
  CondBResiduals rb = blaschke_residual(S, f.conn, f.g, B);
  CondEResiduals re = condition_E_residual(S, f.conn, f.h);
  CHECK(std::abs(rb.r_curv - re.r_curv) < 1e-10);
  CHECK(rb.r_trBJ < 1e-12);
  // zero data
  Surface T = build_torus(8, Cplx(0, 1));
  CondBResiduals rz =
      blaschke_residual(T, ConnectionField(T.num_vertices()),
                        ConformalMetric::background(T),
                        EndomorphismField(T.num_vertices()));
  CHECK(rz.r_torsion == 0.0);
  CHECK(rz.r_vol < 1e-13);
  CHECK(rz.r_curv < 1e-13);
  CHECK(rz.r_dB == 0.0);
}

TEST_CASE("blaschke_residual: B = J J1 with det 1 has tr(BJ) = 0") {
  Surface S = build_torus(8, Cplx(0, 1));
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> d(-1, 1);
  Mat2 J0 = conformal_rotation();
  EndomorphismField B(S.num_vertices());
  for (auto& m : B.v) {
    Mat2 P;
    do {
      P << d(rng), d(rng), d(rng), d(rng);
    } while (std::abs(P.determinant()) < 0.1);
    Mat2 J1 = P * J0 * P.inverse();
    m = J0 * J1;
    CHECK(std::abs(m.determinant() - 1.0) < 1e-9);
  }
  S.sync(B);
  CondBResiduals r = blaschke_residual(S, ConnectionField(S.num_vertices()),
                                       ConformalMetric::background(S), B);
  CHECK(r.r_trBJ < 1e-12);
}
