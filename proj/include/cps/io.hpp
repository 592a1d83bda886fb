#pragma once

// JSON serialization for every artifact schema.  Each document carries a
// version string "name/major"; readers reject unknown majors.

#include <fstream>
#include <nlohmann/json.hpp>

#include "cps/pipeline.hpp"

namespace cps {

using Json = nlohmann::ordered_json;

inline void check_version(const Json& j, const std::string& name) {
  std::string v = j.value("version", "");
  auto slash = v.find('/');
  if (slash == std::string::npos || v.substr(0, slash) != name)
    throw InvalidInputError("expected schema " + name + "/1, got '" + v + "'");
  if (std::stoi(v.substr(slash + 1)) != 1)
    throw InvalidInputError("unsupported major version in '" + v + "'");
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  Json j;
  in >> j;
  return j;
}

// ---- surface/1 ----

inline Json surface_to_json(const Surface& S) {
  Json j;
  j["version"] = "surface/1";
  j["kind"] = S.kind == SurfaceKind::Torus ? "torus" : "genus2";
  j["resolution"] = S.res;
  j["tau"] = {S.tau.real(), S.tau.imag()};
  j["k0"] = S.k0;
  j["h"] = S.h;
  Json verts = Json::array();
  for (auto& p : S.pos) verts.push_back({p.x(), p.y()});
  j["vertices"] = std::move(verts);
  Json cells = Json::array();
  for (auto& q : S.quads) cells.push_back({q[0], q[1], q[2], q[3]});
  for (auto& t : S.tris) cells.push_back({t[0], t[1], t[2]});
  j["cells"] = std::move(cells);
  Json pairing = Json::array();
  for (int v = 0; v < S.num_vertices(); ++v) {
    if (S.is_canonical(v)) continue;
    Mat2 jm = S.pairing_jacobian(v);
    pairing.push_back({{"vertex", v},
                       {"rep", S.can[v]},
                       {"jacobian", {jm(0, 0), jm(0, 1), jm(1, 0), jm(1, 1)}}});
  }
  j["pairing"] = std::move(pairing);
  Json metric = Json::array();
  for (int v = 0; v < S.num_vertices(); ++v) metric.push_back(S.lambda0[v]);
  j["metric"] = std::move(metric);
  Json weights = Json::array();
  for (double m : S.mass) weights.push_back(m);
  j["weights"] = std::move(weights);
  return j;
}

// Surfaces are rebuilt from their construction parameters (the builders are
// deterministic); the stored arrays are validated against the rebuild.
inline Surface surface_from_json(const Json& j) {
  check_version(j, "surface");
  std::string kind = j.at("kind");
  Surface S = kind == "torus"
                  ? build_torus(j.at("resolution"),
                                Cplx(j.at("tau")[0], j.at("tau")[1]))
                  : build_genus2(j.at("resolution"));
  if (j.at("vertices").size() != size_t(S.num_vertices()))
    throw InvalidInputError("surface_from_json: vertex count mismatch");
  for (int v = 0; v < S.num_vertices(); ++v) {
    Vec2 p(j.at("vertices")[v][0], j.at("vertices")[v][1]);
    if ((p - S.pos[v]).norm() > 1e-9)
      throw InvalidInputError("surface_from_json: vertex data mismatch");
  }
  return S;
}

// ---- cubic/1 ----

inline Json cubic_to_json(const CubicDifferential& w) {
  Json j;
  j["version"] = "cubic/1";
  Json re = Json::array(), im = Json::array();
  for (auto& c : w.coeff) {
    re.push_back(c.real());
    im.push_back(c.imag());
  }
  j["coeff_re"] = std::move(re);
  j["coeff_im"] = std::move(im);
  return j;
}

inline CubicDifferential cubic_from_json(const Json& j) {
  check_version(j, "cubic");
  const auto& re = j.at("coeff_re");
  const auto& im = j.at("coeff_im");
  CubicDifferential w(re.size());
  for (size_t i = 0; i < re.size(); ++i)
    w.coeff[i] = Cplx(re[i].get<double>(), im[i].get<double>());
  return w;
}

// ---- wang/1 (scalar-field solution) ----

inline Json wang_to_json(const Surface& S, const ScalarField& mu,
                         double residual, int iters) {
  Json j;
  j["version"] = "wang/1";
  Json m = Json::array();
  for (int v = 0; v < S.num_vertices(); ++v) m.push_back(mu[v]);
  j["mu"] = std::move(m);
  j["residual"] = residual;
  j["iters"] = iters;
  return j;
}

inline ScalarField scalar_from_json(const Json& j, const char* key = "mu") {
  check_version(j, "wang");
  const auto& m = j.at(key);
  ScalarField f(m.size());
  for (size_t i = 0; i < m.size(); ++i) f[i] = m[i].get<double>();
  return f;
}

// ---- residuals/1 ----

inline Json residuals_to_json(const std::map<std::string, double>& r) {
  Json j;
  j["version"] = "residuals/1";
  for (auto& [k, v] : r) j[k] = v;
  return j;
}

// ---- holonomy/1 ----

inline Json holonomy_to_json(const HolonomyRep& h) {
  Json j;
  j["version"] = "holonomy/1";
  Json gens = Json::array();
  for (auto& g : h.generators) {
    Json m = Json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.push_back(g(r, c));
    gens.push_back(std::move(m));
  }
  j["generators"] = std::move(gens);
  j["relation_residual"] = h.relation_residual;
  j["det_residual"] = h.det_residual;
  return j;
}

inline HolonomyRep holonomy_from_json(const Json& j) {
  check_version(j, "holonomy");
  HolonomyRep h;
  for (auto& m : j.at("generators")) {
    Mat3 g;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) g(r, c) = m[r * 3 + c].get<double>();
    h.generators.push_back(g);
  }
  h.relation_residual = j.at("relation_residual");
  h.det_residual = j.value("det_residual", 0.0);
  return h;
}

// ---- developed/1 ----

inline Json developed_to_json(const DevelopedSurface& d) {
  Json j;
  j["version"] = "developed/1";
  Json pts = Json::array(), frames = Json::array();
  for (auto& p : d.points) pts.push_back({p.x(), p.y(), p.z()});
  for (auto& f : d.frames) {
    Json m = Json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m.push_back(f(r, c));
    frames.push_back(std::move(m));
  }
  j["points"] = std::move(pts);
  j["frames"] = std::move(frames);
  j["immersion_margin"] = d.immersion_margin;
  return j;
}

inline DevelopedSurface developed_from_json(const Json& j) {
  check_version(j, "developed");
  DevelopedSurface d;
  for (auto& p : j.at("points"))
    d.points.push_back(Vec3(p[0], p[1], p[2]));
  for (auto& m : j.at("frames")) {
    Mat3 f;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f(r, c) = m[r * 3 + c].get<double>();
    d.frames.push_back(f);
  }
  d.immersion_margin = j.value("immersion_margin", 0.0);
  return d;
}

// ---- eform/1 ----

inline Json eform_to_json(const ECohomologyForm& f) {
  Json j;
  j["version"] = "eform/1";
  Json B = Json::array(), alpha = Json::array();
  for (auto& m : f.B.v) B.push_back({m(0, 0), m(0, 1), m(1, 0), m(1, 1)});
  for (auto& a : f.alpha.v) alpha.push_back({a.x(), a.y()});
  j["B"] = std::move(B);
  j["alpha"] = std::move(alpha);
  return j;
}

inline ECohomologyForm eform_from_json(const Json& j) {
  check_version(j, "eform");
  const auto& B = j.at("B");
  const auto& al = j.at("alpha");
  ECohomologyForm f(B.size());
  for (size_t i = 0; i < B.size(); ++i) {
    f.B.v[i] << B[i][0].get<double>(), B[i][1].get<double>(),
        B[i][2].get<double>(), B[i][3].get<double>();
    f.alpha.v[i] = Vec2(al[i][0].get<double>(), al[i][1].get<double>());
  }
  return f;
}

// ---- structure directory (pipeline output) ----

inline void write_structure_dir(const std::string& dir, const Surface& S,
                                const PipelineResult& r) {
  write_json_file(surface_to_json(S), dir + "/surface.json");
  write_json_file(cubic_to_json(r.cubic), dir + "/cubic.json");
  write_json_file(wang_to_json(S, r.structure.mu, r.wang.residual,
                               r.wang.iters),
                  dir + "/wang.json");
  write_json_file(residuals_to_json(r.certificates), dir + "/residuals.json");
  write_json_file(holonomy_to_json(r.hol), dir + "/holonomy.json");
  write_json_file(developed_to_json(r.developed), dir + "/developed.json");
}

inline std::pair<Surface, StructureData> read_structure_dir(
    const std::string& dir) {
  Surface S = surface_from_json(read_json_file(dir + "/surface.json"));
  CubicDifferential w = cubic_from_json(read_json_file(dir + "/cubic.json"));
  ScalarField mu = scalar_from_json(read_json_file(dir + "/wang.json"));
  StructureData st;
  st.mu = mu;
  st.g = ConformalMetric(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v)
    st.g.lambda[v] = std::exp(2.0 * mu[v]);
  ConnectionField lc = levi_civita(S, st.g);
  auto A = a_operator(S, st.g, w);
  st.conn = ConnectionField(S.num_vertices());
  for (int v = 0; v < S.num_vertices(); ++v)
    st.conn.v[v] = {lc.v[v][0] + A[0].v[v], lc.v[v][1] + A[1].v[v]};
  st.h = bilinear_of_metric(S, st.g);
  st.econn = build_nabla_h(S, st.conn, st.h);
  return {std::move(S), std::move(st)};
}

}  // namespace cps
