#pragma once

// Discrete closed surfaces: the flat torus C/(Z + tau Z) on an n x n grid and
// the genus-2 surface as a regular hyperbolic octagon (angles pi/4) in the
// Poincare disk with side pairings a b a^-1 b^-1 c d c^-1 d^-1.  Vertices are
// stored index-based with explicit pairing tables; every boundary vertex
// carries the deck transformation to its canonical representative.

#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "cps/base.hpp"
#include "cps/fields.hpp"
#include "cps/mobius.hpp"

namespace cps {

enum class SurfaceKind { Torus, Genus2 };

// First and second chart partials of a scalar quantity at a vertex.
struct Jet {
  double x = 0, y = 0, xx = 0, xy = 0, yy = 0;
};

// One entry of a derivative stencil: the field value is read at canonical
// vertex `src` (chart point `zsrc`) and transported by `phi` into the chart
// of the stencil's centre, where it sits at offset `dpos`.
struct JetSample {
  int src;
  Vec2 dpos;
  Mobius phi;
  Cplx zsrc;
};

struct JetWeights {
  std::vector<int> cols;  // dof ordinals
  Eigen::MatrixXd w;      // 5 x S rows: d1, d2, d11, d12, d22
};

struct Surface {
  SurfaceKind kind = SurfaceKind::Torus;
  double k0 = 0.0;
  int res = 0;  // grid resolution n (torus) or refinement level (genus 2)
  Cplx tau{0.0, 1.0};
  double h = 0.0;  // max cell diameter, background metric units
  int base_vertex = 0;

  std::vector<Vec2> pos;
  std::vector<std::array<int, 4>> quads;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> can;
  std::vector<Mobius> deck;  // v-neighbourhood -> can[v]-neighbourhood
  std::vector<int> dof;      // vertex -> dof ordinal of its class
  std::vector<int> verts;    // dof ordinal -> canonical vertex
  std::vector<double> lambda0;
  std::vector<double> mass;  // per dof
  Eigen::SparseMatrix<double> stiffness;
  std::vector<std::vector<int>> adj;       // raw mesh adjacency, sorted
  std::vector<int> loc;                    // -1 interior, 0..7 side, 100+k corner
  std::vector<std::vector<int>> copies_of; // per vertex: all v with can[v]=this

  // torus stencil data
  int n = 0;
  Vec2 lat_a, lat_b;
  Mat2 lat_linv;                        // [A B]^-1
  std::vector<std::array<int, 6>> nbr;  // per dof: +a,-a,+b,-b,+(a+b),-(a+b)

  // genus-2 stencil data
  std::vector<std::vector<JetSample>> samples;
  std::vector<Eigen::MatrixXd> fitmat;  // per dof, 5 x S

  int num_vertices() const { return static_cast<int>(pos.size()); }
  int num_dofs() const { return static_cast<int>(verts.size()); }
  bool is_canonical(int v) const { return can[v] == v; }
  Mat2 metric0(int v) const { return lambda0[v] * Mat2::Identity(); }
  Mat2 pairing_jacobian(int v) const {
    return cplx_mat(deck[v].deriv(to_cplx(pos[v])));
  }
  double total_area() const {
    double a = 0.0;
    for (double m : mass) a += m;
    return a;
  }
  double gauss_bonnet_integral() const { return k0 * total_area(); }
  double euler_characteristic() const {
    return kind == SurfaceKind::Torus ? 0.0 : -2.0;
  }

  // ---- identification sync ----
  template <class Store, class Tr>
  void sync_with(Store& store, Tr tr) const {
    for (int v = 0; v < num_vertices(); ++v) {
      if (is_canonical(v)) continue;
      Mobius back = deck[v].inverse();
      store[v] = tr(store[can[v]], back, to_cplx(pos[can[v]]));
    }
  }
  void sync(ScalarField& f) const {
    sync_with(f.v, [](double x, const Mobius&, Cplx) { return x; });
  }
  void sync(VectorField& f) const { sync_with(f.v, transport_vector); }
  void sync(CovectorField& f) const { sync_with(f.v, transport_covector); }
  void sync(EndomorphismField& f) const {
    sync_with(f.v, transport_endomorphism);
  }
  void sync(BilinearField& f) const { sync_with(f.v, transport_bilinear); }
  void sync(ConnectionField& f) const { sync_with(f.v, transport_connection); }
  void sync(EConnection& f) const { sync_with(f.v, transport_econnection); }
  void sync(EVectorField& f) const { sync_with(f.v, transport_evector); }
  void sync(CubicDifferential& f) const {
    sync_with(f.coeff, transport_cubic);
  }

  // ---- scalar jets ----
  Jet scalar_jet(int d, const std::vector<double>& f) const {
    Jet out;
    if (kind == SurfaceKind::Torus) {
      const auto& nb = nbr[d];
      double f0 = f[verts[d]];
      double fa = f[nb[0]], fma = f[nb[1]], fb = f[nb[2]], fmb = f[nb[3]];
      double fab = f[nb[4]], fmab = f[nb[5]];
      double da = 0.5 * (fa - fma), db = 0.5 * (fb - fmb);
      double daa = fa - 2 * f0 + fma, dbb = fb - 2 * f0 + fmb;
      double dab = 0.5 * (fab + fmab + 2 * f0 - fa - fma - fb - fmb);
      Vec2 g = lat_linv.transpose() * Vec2(da, db);
      Mat2 hl;
      hl << daa, dab, dab, dbb;
      Mat2 hx = lat_linv.transpose() * hl * lat_linv;
      out.x = g.x();
      out.y = g.y();
      out.xx = hx(0, 0);
      out.xy = 0.5 * (hx(0, 1) + hx(1, 0));
      out.yy = hx(1, 1);
      return out;
    }
    const auto& ss = samples[d];
    const auto& P = fitmat[d];
    Eigen::VectorXd vals(ss.size());
    for (size_t s = 0; s < ss.size(); ++s) vals[s] = f[ss[s].src];
    Eigen::Matrix<double, 5, 1> der = P * vals;
    out.x = der[0];
    out.y = der[1];
    out.xx = der[2];
    out.xy = der[3];
    out.yy = der[4];
    return out;
  }

  JetWeights scalar_jet_weights(int d) const {
    JetWeights jw;
    if (kind == SurfaceKind::Torus) {
      const auto& nb = nbr[d];
      jw.cols = {dof[verts[d]], dof[nb[0]], dof[nb[1]], dof[nb[2]],
                 dof[nb[3]], dof[nb[4]], dof[nb[5]]};
      Eigen::MatrixXd lat(5, 7);
      lat.setZero();
      // rows in lattice diffs: da, db, daa, dab, dbb
      lat(0, 1) = 0.5;
      lat(0, 2) = -0.5;
      lat(1, 3) = 0.5;
      lat(1, 4) = -0.5;
      lat(2, 0) = -2;
      lat(2, 1) = 1;
      lat(2, 2) = 1;
      lat(4, 0) = -2;
      lat(4, 3) = 1;
      lat(4, 4) = 1;
      lat(3, 0) = 1;
      lat(3, 1) = -0.5;
      lat(3, 2) = -0.5;
      lat(3, 3) = -0.5;
      lat(3, 4) = -0.5;
      lat(3, 5) = 0.5;
      lat(3, 6) = 0.5;
      Eigen::MatrixXd conv(5, 5);
      conv.setZero();
      Mat2 li = lat_linv;
      conv(0, 0) = li(0, 0);
      conv(0, 1) = li(1, 0);
      conv(1, 0) = li(0, 1);
      conv(1, 1) = li(1, 1);
      // chart Hessian = li^T Hlat li with Hlat rows (daa,dab,dbb)
      auto hset = [&](int row, int i, int j) {
        conv(row, 2) = li(0, i) * li(0, j);
        conv(row, 3) = li(0, i) * li(1, j) + li(1, i) * li(0, j);
        conv(row, 4) = li(1, i) * li(1, j);
      };
      hset(2, 0, 0);
      hset(3, 0, 1);
      hset(4, 1, 1);
      jw.w = conv * lat;
      return jw;
    }
    const auto& ss = samples[d];
    jw.cols.resize(ss.size());
    for (size_t s = 0; s < ss.size(); ++s) jw.cols[s] = dof[ss[s].src];
    jw.w = fitmat[d];
    return jw;
  }

  // Chart partials d1, d2 of a tensor-valued quantity.  `get(v)` returns the
  // value at the canonical vertex v (an Eigen fixed-size type); `tr` is the
  // matching transport rule.  Torus deck maps are translations, so transports
  // are trivial there.
  template <class T, class Get, class Tr>
  void tensor_d(int d, Get get, Tr tr, T& d1, T& d2) const {
    if (kind == SurfaceKind::Torus) {
      const auto& nb = nbr[d];
      T da = (0.5 * (get(nb[0]) - get(nb[1]))).eval();
      T db = (0.5 * (get(nb[2]) - get(nb[3]))).eval();
      d1 = lat_linv(0, 0) * da + lat_linv(1, 0) * db;
      d2 = lat_linv(0, 1) * da + lat_linv(1, 1) * db;
      return;
    }
    const auto& ss = samples[d];
    const auto& P = fitmat[d];
    d1 = get(verts[d]);
    d2 = get(verts[d]);
    d1.setZero();
    d2.setZero();
    for (size_t s = 0; s < ss.size(); ++s) {
      T val = tr(get(ss[s].src), ss[s].phi, ss[s].zsrc);
      d1 += P(0, s) * val;
      d2 += P(1, s) * val;
    }
  }
};

namespace detail {

inline void finalize_fit(Surface& S) {
  int nd = S.num_dofs();
  S.fitmat.resize(nd);
  for (int d = 0; d < nd; ++d) {
    auto& ss = S.samples[d];
    int m = static_cast<int>(ss.size());
    double scale = 0.0;
    for (auto& s : ss) scale = std::max(scale, s.dpos.norm());
    if (scale <= 0) scale = 1.0;
    Eigen::MatrixXd phi(m, 6);
    Eigen::VectorXd w(m);
    for (int s = 0; s < m; ++s) {
      double X = ss[s].dpos.x() / scale, Y = ss[s].dpos.y() / scale;
      phi(s, 0) = 1.0;
      phi(s, 1) = X;
      phi(s, 2) = Y;
      phi(s, 3) = 0.5 * X * X;
      phi(s, 4) = X * Y;
      phi(s, 5) = Y * Y * 0.5;
      double r = std::hypot(X, Y);
      w[s] = std::exp(-r * r);
    }
    Eigen::MatrixXd phiw = w.asDiagonal() * phi;
    Eigen::MatrixXd gram = phi.transpose() * phiw;
    Eigen::MatrixXd pinv =
        gram.ldlt().solve(phiw.transpose());  // 6 x m
    Eigen::MatrixXd P(5, m);
    P.row(0) = pinv.row(1) / scale;
    P.row(1) = pinv.row(2) / scale;
    P.row(2) = pinv.row(3) / (scale * scale);
    P.row(3) = pinv.row(4) / (scale * scale);
    P.row(4) = pinv.row(5) / (scale * scale);
    S.fitmat[d] = P;
  }
}

inline void build_adjacency(Surface& S) {
  S.adj.assign(S.num_vertices(), {});
  auto add = [&](int a, int b) {
    S.adj[a].push_back(b);
    S.adj[b].push_back(a);
  };
  for (auto& t : S.tris) {
    add(t[0], t[1]);
    add(t[1], t[2]);
    add(t[2], t[0]);
  }
  for (auto& q : S.quads) {
    add(q[0], q[1]);
    add(q[1], q[2]);
    add(q[2], q[3]);
    add(q[3], q[0]);
  }
  for (auto& a : S.adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
}

}  // namespace detail

// ---- torus ----

inline Surface build_torus(int n, Cplx tau) {
  if (n < 4) throw InvalidDomainError("build_torus: need n >= 4");
  if (tau.imag() <= 0.0)
    throw InvalidDomainError("build_torus: need Im(tau) > 0");
  Surface S;
  S.kind = SurfaceKind::Torus;
  S.k0 = 0.0;
  S.res = n;
  S.n = n;
  S.tau = tau;
  int m = n + 1;
  S.pos.resize(m * m);
  S.can.resize(m * m);
  S.deck.resize(m * m);
  S.lambda0.assign(m * m, 1.0);
  auto vid = [m](int i, int j) { return j * m + i; };
  Vec2 ea = to_vec2(Cplx(1.0, 0.0) / double(n));
  Vec2 eb = to_vec2(tau / double(n));
  S.lat_a = ea;
  S.lat_b = eb;
  Mat2 L;
  L.col(0) = ea;
  L.col(1) = eb;
  S.lat_linv = L.inverse();
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      int v = vid(i, j);
      S.pos[v] = double(i) * ea + double(j) * eb;
      int ci = i % n, cj = j % n;
      S.can[v] = vid(ci, cj);
      Cplx shift = to_cplx(S.pos[S.can[v]]) - to_cplx(S.pos[v]);
      S.deck[v] = Mobius::translation(shift);
    }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      S.quads.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1),
                         vid(i, j + 1)});
  // dof numbering over canonical vertices
  S.dof.assign(m * m, -1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      S.dof[vid(i, j)] = static_cast<int>(S.verts.size());
      S.verts.push_back(vid(i, j));
    }
  for (int v = 0; v < m * m; ++v) S.dof[v] = S.dof[S.can[v]];
  S.loc.assign(m * m, -1);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      if (i == n && j == n) S.loc[vid(i, j)] = 100;
      else if (i == n) S.loc[vid(i, j)] = 0;
      else if (j == n) S.loc[vid(i, j)] = 1;
    }
  S.copies_of.assign(m * m, {});
  for (int v = 0; v < m * m; ++v) S.copies_of[S.can[v]].push_back(v);
  double cell_area = std::abs(L.determinant());
  S.mass.assign(S.verts.size(), cell_area);
  S.h = std::max((ea + eb).norm(), (ea - eb).norm());
  S.base_vertex = vid(n / 2, n / 2);
  // neighbour table through the pairing (canonical vertex ids)
  S.nbr.resize(S.verts.size());
  auto wrap = [&](int i, int j) {
    return vid(((i % n) + n) % n, ((j % n) + n) % n);
  };
  for (size_t d = 0; d < S.verts.size(); ++d) {
    int v = S.verts[d];
    int i = v % m, j = v / m;
    S.nbr[d] = {wrap(i + 1, j),     wrap(i - 1, j),     wrap(i, j + 1),
                wrap(i, j - 1),     wrap(i + 1, j + 1), wrap(i - 1, j - 1)};
  }
  // weak laplacian: M * (Ginv11 Daa + 2 Ginv12 Dab + Ginv22 Dbb)
  Mat2 gram = L.transpose() * L;
  Mat2 gi = gram.inverse();
  std::vector<Eigen::Triplet<double>> trip;
  for (size_t d = 0; d < S.verts.size(); ++d) {
    double ca = gi(0, 0) - gi(0, 1);
    double cb = gi(1, 1) - gi(0, 1);
    double cab = gi(0, 1);
    double c0 = -2 * gi(0, 0) - 2 * gi(1, 1) + 2 * gi(0, 1);
    const auto& nb = S.nbr[d];
    int self = static_cast<int>(d);
    auto put = [&](int vtx, double w) {
      trip.emplace_back(self, S.dof[vtx], w * cell_area);
    };
    trip.emplace_back(self, self, c0 * cell_area);
    put(nb[0], ca);
    put(nb[1], ca);
    put(nb[2], cb);
    put(nb[3], cb);
    put(nb[4], cab);
    put(nb[5], cab);
  }
  S.stiffness.resize(S.num_dofs(), S.num_dofs());
  S.stiffness.setFromTriplets(trip.begin(), trip.end());
  detail::build_adjacency(S);
  return S;
}

// ---- genus 2 ----

namespace detail {

struct OctagonGroup {
  std::array<Cplx, 8> corner;           // V_0..V_7
  std::array<Mobius, 4> gen;            // A, B, C, D
  std::array<int, 8> side_pair;         // side -> paired side (identity for canonical)
  std::array<int, 4> noncanon_side;     // {2,3,6,7}
  std::array<Mobius, 8> corner_word;    // corner k -> corner 0
};

inline OctagonGroup octagon_group() {
  OctagonGroup G;
  double rv = std::sqrt(std::sqrt(0.5));  // tanh(R/2)^2 = sqrt(2)/2
  for (int k = 0; k < 8; ++k) {
    double th = (2 * k + 1) * M_PI / 8.0;
    G.corner[k] = rv * Cplx(std::cos(th), std::sin(th));
  }
  auto V = [&](int k) { return G.corner[((k % 8) + 8) % 8]; };
  // Side k runs from V_k to V_{k+1}; labels a b a^-1 b^-1 c d c^-1 d^-1.
  // Each inverse-labelled side maps onto its partner with reversed
  // orientation.
  G.gen[0] = disk_isometry_two_point(V(2), V(3), V(1), V(0));  // A: side2->side0
  G.gen[1] = disk_isometry_two_point(V(3), V(4), V(2), V(1));  // B: side3->side1
  G.gen[2] = disk_isometry_two_point(V(6), V(7), V(5), V(4));  // C: side6->side4
  G.gen[3] = disk_isometry_two_point(V(7), V(0), V(6), V(5));  // D: side7->side5
  G.side_pair = {0, 1, 0, 1, 4, 5, 4, 5};
  G.noncanon_side = {2, 3, 6, 7};
  // Corner words by BFS over the corner identifications.
  std::array<int, 8> prev;
  std::array<Mobius, 8> step;
  prev.fill(-2);
  prev[0] = -1;
  std::vector<int> queue = {0};
  auto try_edge = [&](int from, int to, const Mobius& mmap) {
    // mmap sends corner `from` to corner `to`
    if (prev[from] == -2 && prev[to] != -2) {
      prev[from] = to;
      step[from] = mmap;
      queue.push_back(from);
    }
  };
  std::array<std::pair<std::array<int, 2>, std::array<int, 2>>, 4> acts = {{
      {{2, 3}, {1, 0}},  // A
      {{3, 4}, {2, 1}},  // B
      {{6, 7}, {5, 4}},  // C
      {{7, 0}, {6, 5}},  // D
  }};
  for (size_t qi = 0; qi < queue.size(); ++qi) {
    for (int g = 0; g < 4; ++g) {
      auto [src, dst] = acts[g];
      for (int e = 0; e < 2; ++e) {
        try_edge(src[e], dst[e], G.gen[g]);
        try_edge(dst[e], src[e], G.gen[g].inverse());
      }
    }
  }
  for (int k = 0; k < 8; ++k) {
    Mobius w = Mobius::identity();
    int cur = k;
    while (prev[cur] != -1) {
      w = compose(step[cur], w);
      cur = prev[cur];
    }
    G.corner_word[k] = w;
  }
  return G;
}

}  // namespace detail

inline Surface build_genus2(int refinement) {
  if (refinement < 0) throw InvalidDomainError("build_genus2: refinement >= 0");
  Surface S;
  S.kind = SurfaceKind::Genus2;
  S.k0 = -1.0;
  S.res = refinement;
  auto G = detail::octagon_group();

  // locations: -1 interior, 0..7 on side k, 100+k corner k
  std::vector<int> loc;
  S.pos.push_back(Vec2::Zero());
  loc.push_back(-1);
  for (int k = 0; k < 8; ++k) {
    S.pos.push_back(to_vec2(G.corner[k]));
    loc.push_back(100 + k);
  }
  for (int k = 0; k < 8; ++k) S.tris.push_back({0, 1 + k, 1 + (k + 1) % 8});

  auto on_side = [&](int v, int k) {
    if (loc[v] == k) return true;
    if (loc[v] >= 100) {
      int c = loc[v] - 100;
      return c == k || c == (k + 1) % 8;
    }
    return false;
  };
  int rounds = refinement + 3;
  for (int r = 0; r < rounds; ++r) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int u, int v) {
      auto key = std::minmax(u, v);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Cplx mz = hyperbolic_midpoint(to_cplx(S.pos[u]), to_cplx(S.pos[v]));
      int id = static_cast<int>(S.pos.size());
      S.pos.push_back(to_vec2(mz));
      int l = -1;
      for (int k = 0; k < 8 && l < 0; ++k)
        if (on_side(u, k) && on_side(v, k)) l = k;
      loc.push_back(l);
      midpoint[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(S.tris.size() * 4);
    for (auto& t : S.tris) {
      int m01 = mid(t[0], t[1]), m12 = mid(t[1], t[2]), m02 = mid(t[0], t[2]);
      next.push_back({t[0], m01, m02});
      next.push_back({m01, t[1], m12});
      next.push_back({m02, m12, t[2]});
      next.push_back({m01, m12, m02});
    }
    S.tris = std::move(next);
  }

  int nv = static_cast<int>(S.pos.size());
  S.can.resize(nv);
  S.deck.resize(nv);
  S.lambda0.resize(nv);
  for (int v = 0; v < nv; ++v) {
    S.can[v] = v;
    S.deck[v] = Mobius::identity();
    S.lambda0[v] = poincare_conformal_factor(to_cplx(S.pos[v]));
  }
  // match vertices of a non-canonical side to the paired canonical side
  std::array<std::vector<int>, 8> side_verts;
  for (int v = 0; v < nv; ++v)
    if (loc[v] >= 0 && loc[v] < 8) side_verts[loc[v]].push_back(v);
  for (int s : G.noncanon_side) {
    const Mobius& P = G.gen[s == 2 ? 0 : s == 3 ? 1 : s == 6 ? 2 : 3];
    for (int v : side_verts[s]) {
      Cplx img = P(to_cplx(S.pos[v]));
      int best = -1;
      double bd = 1e9;
      for (int u : side_verts[G.side_pair[s]]) {
        double dd = std::abs(img - to_cplx(S.pos[u]));
        if (dd < bd) {
          bd = dd;
          best = u;
        }
      }
      if (best < 0 || bd > 1e-9)
        throw Error("build_genus2: side pairing mismatch");
      S.can[v] = best;
      S.deck[v] = P;
    }
  }
  for (int k = 1; k < 8; ++k) {
    S.can[1 + k] = 1;  // all corners identify with V_0
    S.deck[1 + k] = G.corner_word[k];
    if (std::abs(G.corner_word[k](G.corner[k]) - G.corner[0]) > 1e-9)
      throw Error("build_genus2: corner word mismatch");
  }

  S.dof.assign(nv, -1);
  for (int v = 0; v < nv; ++v)
    if (S.can[v] == v) {
      S.dof[v] = static_cast<int>(S.verts.size());
      S.verts.push_back(v);
    }
  for (int v = 0; v < nv; ++v) S.dof[v] = S.dof[S.can[v]];

  // cotangent weights and vertex masses from hyperbolic edge lengths
  S.mass.assign(S.num_dofs(), 0.0);
  std::vector<Eigen::Triplet<double>> trip;
  double hmax = 0.0;
  for (auto& t : S.tris) {
    Cplx z0 = to_cplx(S.pos[t[0]]), z1 = to_cplx(S.pos[t[1]]),
         z2 = to_cplx(S.pos[t[2]]);
    double l01 = hyperbolic_distance(z0, z1);
    double l12 = hyperbolic_distance(z1, z2);
    double l02 = hyperbolic_distance(z0, z2);
    hmax = std::max({hmax, l01, l12, l02});
    double a0 = hyperbolic_angle(l12, l01, l02);
    double a1 = hyperbolic_angle(l02, l01, l12);
    double a2 = hyperbolic_angle(l01, l02, l12);
    double area = std::max(0.0, M_PI - a0 - a1 - a2);
    int d0 = S.dof[t[0]], d1 = S.dof[t[1]], d2 = S.dof[t[2]];
    S.mass[d0] += area / 3.0;
    S.mass[d1] += area / 3.0;
    S.mass[d2] += area / 3.0;
    auto cot = [](double a) { return std::cos(a) / std::sin(a); };
    auto put = [&](int i, int j, double w) {
      trip.emplace_back(i, j, w);
      trip.emplace_back(j, i, w);
      trip.emplace_back(i, i, -w);
      trip.emplace_back(j, j, -w);
    };
    put(d1, d2, 0.5 * cot(a0));
    put(d0, d2, 0.5 * cot(a1));
    put(d0, d1, 0.5 * cot(a2));
  }
  S.stiffness.resize(S.num_dofs(), S.num_dofs());
  S.stiffness.setFromTriplets(trip.begin(), trip.end());
  S.h = hmax;
  S.base_vertex = 0;

  detail::build_adjacency(S);
  S.loc = loc;
  S.copies_of.assign(nv, {});
  for (int v = 0; v < nv; ++v) S.copies_of[S.can[v]].push_back(v);

  // derivative stencils: 2-rings of every copy, pushed to the canonical chart
  const auto& copies = S.copies_of;
  S.samples.resize(S.num_dofs());
  for (int d = 0; d < S.num_dofs(); ++d) {
    int c = S.verts[d];
    std::map<std::pair<int, long long>, bool> seen;
    for (int m : copies[c]) {
      const Mobius& push = S.deck[m];
      std::vector<int> ring = {m};
      for (int u : S.adj[m]) ring.push_back(u);
      size_t r1 = ring.size();
      for (size_t i = 1; i < r1; ++i)
        for (int u : S.adj[ring[i]]) ring.push_back(u);
      std::sort(ring.begin(), ring.end());
      ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
      for (int u : ring) {
        JetSample js;
        js.src = S.can[u];
        js.phi = compose(push, S.deck[u].inverse());
        js.zsrc = to_cplx(S.pos[js.src]);
        Cplx p = push(to_cplx(S.pos[u]));
        js.dpos = to_vec2(p) - S.pos[c];
        auto key = std::make_pair(
            js.src, static_cast<long long>(std::llround(p.real() * 1e8)) *
                            200000000LL +
                        std::llround(p.imag() * 1e8));
        if (seen.count(key)) continue;
        seen[key] = true;
        S.samples[d].push_back(js);
      }
    }
  }
  detail::finalize_fit(S);
  return S;
}

// ---- basic operators ----

inline Eigen::VectorXd dof_values(const Surface& S, const ScalarField& u) {
  Eigen::VectorXd x(S.num_dofs());
  for (int d = 0; d < S.num_dofs(); ++d) x[d] = u[S.verts[d]];
  return x;
}

inline ScalarField field_from_dofs(const Surface& S, const Eigen::VectorXd& x) {
  ScalarField f(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) f[v] = x[S.dof[v]];
  return f;
}

// Laplace-Beltrami of the background metric; analyst's sign (negative
// semidefinite, kernel = constants).
inline ScalarField laplacian(const Surface& S, const ScalarField& u) {
  Eigen::VectorXd x = dof_values(S, u);
  Eigen::VectorXd y = S.stiffness * x;
  for (int d = 0; d < S.num_dofs(); ++d) y[d] /= S.mass[d];
  return field_from_dofs(S, y);
}

// Chart gradient (d1 u, d2 u) per vertex.
inline VectorField chart_gradient(const Surface& S, const ScalarField& u) {
  VectorField g(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    Jet j = S.scalar_jet(d, u.v);
    g.v[S.verts[d]] = Vec2(j.x, j.y);
  }
  S.sync(g);
  return g;
}

// Chart second partials per vertex (no connection terms).
inline BilinearField chart_hessian(const Surface& S, const ScalarField& u) {
  BilinearField hh(S.num_vertices());
  for (int d = 0; d < S.num_dofs(); ++d) {
    Jet j = S.scalar_jet(d, u.v);
    Mat2 m;
    m << j.xx, j.xy, j.xy, j.yy;
    hh.v[S.verts[d]] = m;
  }
  S.sync(hh);
  return hh;
}

inline double mass_inner(const Surface& S, const ScalarField& a,
                         const ScalarField& b) {
  double s = 0.0;
  for (int d = 0; d < S.num_dofs(); ++d)
    s += S.mass[d] * a[S.verts[d]] * b[S.verts[d]];
  return s;
}

}  // namespace cps
