#pragma once

// Parallel transport along mesh paths, holonomy of the surface-group
// generators, the developing map, the convexity certificate, the Vinberg
// characteristic function and geodesic diagnostics.

#include <deque>
#include <functional>

#include "cps/connection.hpp"

namespace cps {

// 3x3 lift of the pairing jacobian at a non-canonical vertex.
inline Mat3 pairing_lift(const Surface& S, int v) {
  Mat3 u = Mat3::Identity();
  u.topLeftCorner<2, 2>() = S.pairing_jacobian(v);
  return u;
}

// Transport along the straight chart segment u -> v; RK4 on T' = -w(t) T
// with the coefficient matrices interpolated linearly between the endpoint
// values.  One mesh edge is integrated in `substeps` stages.
inline Mat3 transport_edge(const Surface& S, const EConnection& w, int u,
                           int v, int substeps = 4) {
  Vec2 dir = S.pos[v] - S.pos[u];
  auto omega = [&](double t) -> Mat3 {
    Mat3 w1 = (1 - t) * w.v[u][0] + t * w.v[v][0];
    Mat3 w2 = (1 - t) * w.v[u][1] + t * w.v[v][1];
    return dir.x() * w1 + dir.y() * w2;
  };
  Mat3 T = Mat3::Identity();
  double dt = 1.0 / substeps;
  for (int s = 0; s < substeps; ++s) {
    double t0 = s * dt;
    Mat3 k1 = -omega(t0) * T;
    Mat3 k2 = -omega(t0 + 0.5 * dt) * (T + 0.5 * dt * k1);
    Mat3 k3 = -omega(t0 + 0.5 * dt) * (T + 0.5 * dt * k2);
    Mat3 k4 = -omega(t0 + dt) * (T + dt * k3);
    T += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return T;
}

// Path-ordered transport along a vertex polyline.  Consecutive vertices must
// share a mesh edge, or be a pairing teleport: (u -> can[u]) applies the
// stored lift, (can[v] -> v) its inverse.
inline Mat3 parallel_transport(const Surface& S, const EConnection& w,
                               const std::vector<int>& path,
                               int substeps = 4) {
  if (path.size() < 2) return Mat3::Identity();
  Mat3 T = Mat3::Identity();
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    int u = path[i], v = path[i + 1];
    bool edge = std::binary_search(S.adj[u].begin(), S.adj[u].end(), v);
    if (edge) {
      T = transport_edge(S, w, u, v, substeps) * T;
    } else if (S.can[u] == v && u != v) {
      T = pairing_lift(S, u) * T;
    } else if (S.can[v] == u && u != v) {
      T = pairing_lift(S, v).inverse() * T;
    } else {
      throw InvalidInputError("parallel_transport: path leaves the atlas at " +
                              std::to_string(u) + "->" + std::to_string(v));
    }
  }
  return T;
}

// Deterministic BFS path between two raw vertices (mesh edges only).
inline std::vector<int> bfs_path(const Surface& S, int from, int to) {
  std::vector<int> prev(S.num_vertices(), -2);
  prev[from] = -1;
  std::deque<int> q = {from};
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    if (u == to) break;
    for (int v : S.adj[u])
      if (prev[v] == -2) {
        prev[v] = u;
        q.push_back(v);
      }
  }
  if (prev[to] == -2) throw Error("bfs_path: disconnected mesh");
  std::vector<int> path;
  for (int v = to; v != -1; v = prev[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

struct HolonomyRep {
  std::vector<Mat3> generators;
  double relation_residual = 0.0;
  double det_residual = 0.0;
};

// Generator loops through the base vertex.  Torus: the two lattice loops.
// Genus 2: out to each inverse-labelled side, teleport, and back; the
// relation is A B^-1 A^-1 B C D^-1 C^-1 D = 1 for this pairing convention.
inline std::vector<std::vector<int>> generator_loops(const Surface& S) {
  std::vector<std::vector<int>> loops;
  if (S.kind == SurfaceKind::Torus) {
    int n = S.n, m = n + 1;
    int i0 = S.base_vertex % m, j0 = S.base_vertex / m;
    std::vector<int> la, lb;
    for (int i = i0; i <= n; ++i) la.push_back(j0 * m + i);
    for (int i = 0; i <= i0; ++i) la.push_back(j0 * m + i);
    for (int j = j0; j <= n; ++j) lb.push_back(j * m + i0);
    for (int j = 0; j <= j0; ++j) lb.push_back(j * m + i0);
    loops = {la, lb};
    return loops;
  }
  // genus 2: nearest boundary vertex to each inverse-labelled side midpoint
  auto G = detail::octagon_group();
  for (int k = 0; k < 4; ++k) {
    int side = G.noncanon_side[k];
    double th = (2.0 * side + 2.0) * M_PI / 8.0;
    double rm = std::sqrt(std::sqrt(2.0) - 1.0);
    Vec2 target(rm * std::cos(th), rm * std::sin(th));
    int best = -1;
    double bd = 1e300;
    for (int v = 0; v < S.num_vertices(); ++v) {
      if (S.is_canonical(v) || S.loc[v] != side) continue;
      double dd = (S.pos[v] - target).norm();
      if (dd < bd) {
        bd = dd;
        best = v;
      }
    }
    std::vector<int> loop = bfs_path(S, S.base_vertex, best);
    loop.push_back(S.can[best]);
    auto back = bfs_path(S, S.can[best], S.base_vertex);
    loop.insert(loop.end(), back.begin() + 1, back.end());
    loops.push_back(loop);
  }
  return loops;
}

inline HolonomyRep holonomy(const Surface& S, const EConnection& w,
                            int substeps = 4) {
  HolonomyRep rep;
  for (auto& loop : generator_loops(S))
    rep.generators.push_back(parallel_transport(S, w, loop, substeps));
  for (auto& g : rep.generators)
    rep.det_residual =
        std::max(rep.det_residual, std::abs(g.determinant() - 1.0));
  Mat3 word;
  if (S.kind == SurfaceKind::Torus) {
    const Mat3 &A = rep.generators[0], &B = rep.generators[1];
    word = A * B * A.inverse() * B.inverse();
  } else {
    const Mat3 &A = rep.generators[0], &B = rep.generators[1],
               &C = rep.generators[2], &D = rep.generators[3];
    word = A * B.inverse() * A.inverse() * B * C * D.inverse() * C.inverse() *
           D;
  }
  rep.relation_residual = (word - Mat3::Identity()).cwiseAbs().maxCoeff();
  return rep;
}

struct DevelopedSurface {
  std::vector<Vec3> points;  // per canonical vertex (by dof ordinal)
  std::vector<Mat3> frames;
  double immersion_margin = 0.0;  // min singular value of [dphi_1 dphi_2]
};

// Integrate the flat trivialization along a deterministic spanning tree from
// the base vertex; phi = gauge * canonical section.
inline DevelopedSurface develop(const Surface& S, const EConnection& w,
                                const Vec3& u0 = Vec3(0, 0, 1),
                                const Mat3& frame0 = Mat3::Identity(),
                                int substeps = 4) {
  int nd = S.num_dofs();
  DevelopedSurface dev;
  dev.points.assign(nd, Vec3::Zero());
  dev.frames.assign(nd, Mat3::Zero());
  std::vector<char> seen(nd, 0);
  int base = S.dof[S.base_vertex];
  dev.frames[base] = frame0;
  seen[base] = 1;
  std::deque<int> q = {S.verts[base]};
  while (!q.empty()) {
    int cu = q.front();
    q.pop_front();
    Mat3 Wu = dev.frames[S.dof[cu]];
    // the tree stays on one sheet: only edges between canonical vertices
    for (int v : S.adj[cu]) {
      if (S.can[v] != v || seen[S.dof[v]]) continue;
      seen[S.dof[v]] = 1;
      Mat3 T = transport_edge(S, w, cu, v, substeps);
      dev.frames[S.dof[v]] = Wu * T.inverse();
      q.push_back(v);
    }
  }
  for (int d = 0; d < nd; ++d)
    if (!seen[d]) throw Error("develop: fundamental domain not connected");
  double margin = 1e300, top = 0.0;
  for (int d = 0; d < nd; ++d) {
    int v = S.verts[d];
    dev.points[d] = dev.frames[d] * u0;
    Eigen::Matrix<double, 3, 2> dphi;
    dphi.col(0) = dev.frames[d] * (w.v[v][0] * u0);
    dphi.col(1) = dev.frames[d] * (w.v[v][1] * u0);
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(dphi);
    margin = std::min(margin, svd.singularValues()[1]);
    top = std::max(top, svd.singularValues()[0]);
  }
  dev.immersion_margin = margin;
  if (!(margin > 1e-8 * top))
    throw NotImmersedError("develop: immersion fails (margin " +
                               std::to_string(margin) + ")",
                           -1);
  return dev;
}

// Max over seam edges of the mismatch between the development continued
// across the seam and the holonomy translate of the canonical value.
inline double equivariance_residual(const Surface& S, const EConnection& w,
                                    const DevelopedSurface& dev,
                                    const HolonomyRep& hol, int substeps = 4) {
  double res = 0.0;
  double scale = 0.0;
  for (auto& p : dev.points) scale = std::max(scale, p.norm());
  for (int m = 0; m < S.num_vertices(); ++m) {
    if (S.is_canonical(m)) continue;
    if (S.loc[m] >= 100) continue;  // corner classes need deck words
    // develop the copy from an adjacent canonical vertex
    int q = -1;
    for (int v : S.adj[m])
      if (S.can[v] == v) q = v;
    if (q < 0) continue;
    Mat3 T = transport_edge(S, w, q, m, substeps);
    Vec3 phi_copy = dev.frames[S.dof[q]] * T.inverse() * Vec3(0, 0, 1);
    Vec3 phi_rep = dev.points[S.dof[m]];
    double best = 1e300;
    for (auto& g : hol.generators) {
      best = std::min(best, (phi_copy - g * phi_rep).norm());
      best = std::min(best, (phi_copy - g.inverse() * phi_rep).norm());
    }
    res = std::max(res, best / std::max(scale, 1e-30));
  }
  return res;
}

struct ConvexityReport {
  bool pass = false;
  bool definite = false;
  bool radial = false;
  double b_margin = 0.0;  // min eigenvalue of the shape proxy / background
  double immersion_margin = 0.0;
};

// Strict convexity and radiality from the decomposition of second
// derivatives of the canonical section: the transverse coefficient field is
// the second-fundamental-form proxy.
inline ConvexityReport convexity_certificate(const Surface& S,
                                             const EConnection& w,
                                             const DevelopedSurface& dev) {
  ConvexityReport rep;
  rep.immersion_margin = dev.immersion_margin;
  EVectorField s(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) s.v[v] = Vec3(0, 0, 1);
  double lo = 1e300, hi = -1e300;
  try {
    SuDecomposition dec = s_u_and_nabla_u(S, w, s);
    for (int d = 0; d < S.num_dofs(); ++d) {
      int v = S.verts[d];
      Vec2 ev = sym_eigenvalues(dec.S_u.v[v] / S.lambda0[v]);
      lo = std::min(lo, ev.x());
      hi = std::max(hi, ev.y());
    }
  } catch (const NotImmersedError&) {
    rep.pass = false;
    return rep;
  }
  rep.definite = lo > 0.0 || hi < 0.0;
  rep.radial = lo > 0.0;
  rep.b_margin = rep.radial ? lo : (hi < 0.0 ? -hi : 0.0);
  rep.pass = rep.definite && rep.radial;
  return rep;
}

// ---- Vinberg characteristic function ----

// V(x) = integral over the dual cone of e^{-f(x)} df for the simplicial cone
// spanned by the columns of basis; by the change of variables to the dual
// basis V(x) = 1 / (|det B| * prod (B^{-1} x)).
inline double vinberg_characteristic(const Mat3& basis, const Vec3& x) {
  double det = basis.determinant();
  if (std::abs(det) < 1e-300)
    throw InvalidInputError("vinberg_characteristic: basis not independent");
  Vec3 y = basis.inverse() * x;
  for (int i = 0; i < 3; ++i)
    if (!(y[i] > 0.0))
      throw DomainError("vinberg_characteristic: x not inside the open cone");
  return 1.0 / (std::abs(det) * y.prod());
}

// ---- geodesics ----

struct GeodesicResult {
  std::vector<Vec2> points;
  std::vector<Vec2> velocities;
  std::vector<double> speed;  // mu(t) = sqrt(g(c', c'))
  bool truncated = false;
  double length = 0.0;
  double max_dinvmu = 0.0;  // measured sup |d(1/mu)/dt|
};

// 4th-order integration of the geodesic equation of `conn_at`, with speed
// diagnostics in the metric `metric_at`.
inline GeodesicResult trace_geodesic(
    const Surface& S,
    const std::function<std::array<Mat2, 2>(const Vec2&)>& conn_at,
    const std::function<Mat2(const Vec2&)>& metric_at, const Vec2& x0,
    const Vec2& v0, double T, double dt) {
  if (!(dt > 0.0)) throw InvalidInputError("trace_geodesic: dt must be > 0");
  GeodesicResult out;
  auto acc = [&](const Vec2& x, const Vec2& v) -> Vec2 {
    auto G = conn_at(x);
    return -(v.x() * G[0] + v.y() * G[1]) * v;
  };
  Vec2 x = x0, v = v0;
  int steps = static_cast<int>(std::ceil(T / dt));
  auto record = [&](const Vec2& xx, const Vec2& vv) {
    out.points.push_back(xx);
    out.velocities.push_back(vv);
    out.speed.push_back(std::sqrt(vv.dot(metric_at(xx) * vv)));
  };
  record(x, v);
  for (int s = 0; s < steps; ++s) {
    if (S.kind == SurfaceKind::Genus2 && x.norm() > 0.995) {
      out.truncated = true;
      break;
    }
    Vec2 k1x = v, k1v = acc(x, v);
    Vec2 k2x = v + 0.5 * dt * k1v, k2v = acc(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v);
    Vec2 k3x = v + 0.5 * dt * k2v, k3v = acc(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v);
    Vec2 k4x = v + dt * k3v, k4v = acc(x + dt * k3x, v + dt * k3v);
    x += dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (!x.allFinite() || !v.allFinite()) {
      out.truncated = true;
      break;
    }
    record(x, v);
  }
  for (size_t i = 0; i + 1 < out.speed.size(); ++i) {
    out.length += 0.5 * (out.speed[i] + out.speed[i + 1]) * dt;
    double d = std::abs(1.0 / out.speed[i + 1] - 1.0 / out.speed[i]) / dt;
    out.max_dinvmu = std::max(out.max_dinvmu, d);
  }
  return out;
}

// K = 0.5 sup |nabla g| in g-orthonormal frames; an upper bound for
// |d(1/mu)/dt| along geodesics of conn.
inline double geodesic_growth_bound(const Surface& S,
                                    const ConnectionField& conn,
                                    const ConformalMetric& g) {
  BilinearField gm(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v) gm.v[v] = metric_at(S, g, v);
  double K = 0.0;
  for (int d = 0; d < S.num_dofs(); ++d) {
    auto ng = covariant_d_bilinear(S, d, gm, conn);
    double rho = metric_factor(S, g, S.verts[d]);
    // orthonormalize all three slots: one factor rho^{-1/2} per slot applied
    // to the 1-form index and two to the bilinear ones
    double norm = std::sqrt(ng[0].squaredNorm() + ng[1].squaredNorm());
    K = std::max(K, 0.5 * norm / std::pow(rho, 1.5));
  }
  return K;
}

}  // namespace cps
