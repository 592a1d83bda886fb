#pragma once

// Moebius transformations of the complex plane / Poincare disk, plus the
// hyperbolic geometry helpers used to build the genus-2 fundamental domain.

#include <cmath>

#include "cps/base.hpp"

namespace cps {

// z -> (a z + b) / (c z + d).  Deck transformations of both domains are of
// this form: translations for the torus, disk automorphisms for genus 2.
struct Mobius {
  Cplx a{1.0}, b{0.0}, c{0.0}, d{1.0};

  Cplx operator()(Cplx z) const { return (a * z + b) / (c * z + d); }
  Cplx deriv(Cplx z) const {
    Cplx q = c * z + d;
    return (a * d - b * c) / (q * q);
  }
  Cplx deriv2(Cplx z) const {
    Cplx q = c * z + d;
    return -2.0 * c * (a * d - b * c) / (q * q * q);
  }
  Mobius inverse() const { return {d, -b, -c, a}; }
  bool is_identity(double tol = 1e-14) const {
    Mobius n = normalized();
    return std::abs(n.a - 1.0) < tol && std::abs(n.b) < tol &&
           std::abs(n.c) < tol && std::abs(n.d - 1.0) < tol;
  }
  Mobius normalized() const {
    Cplx s = std::sqrt(a * d - b * c);
    if (std::real(a / s) + std::real(d / s) < 0.0) s = -s;
    return {a / s, b / s, c / s, d / s};
  }

  static Mobius identity() { return {}; }
  static Mobius translation(Cplx t) { return {1.0, t, 0.0, 1.0}; }
  static Mobius rotation(Cplx u) { return {u, 0.0, 0.0, 1.0}; }
  // Disk automorphism sending p to the origin.
  static Mobius to_origin(Cplx p) { return {1.0, -p, -std::conj(p), 1.0}; }
};

// Composition: apply f first, then g.
inline Mobius compose(const Mobius& g, const Mobius& f) {
  return {g.a * f.a + g.b * f.c, g.a * f.b + g.b * f.d,
          g.c * f.a + g.d * f.c, g.c * f.b + g.d * f.d};
}

// ---- Poincare disk (curvature -1, metric factor (2/(1-|z|^2))^2) ----

inline double poincare_conformal_factor(Cplx z) {
  double r2 = std::norm(z);
  double s = 2.0 / (1.0 - r2);
  return s * s;
}

inline double hyperbolic_distance(Cplx z, Cplx w) {
  double t = std::abs((z - w) / (1.0 - std::conj(z) * w));
  t = std::min(t, 1.0 - 1e-16);
  return std::log((1.0 + t) / (1.0 - t));
}

// Geodesic midpoint of z and w in the disk.
inline Cplx hyperbolic_midpoint(Cplx z, Cplx w) {
  Mobius f = Mobius::to_origin(z);
  Cplx u = f(w);
  double r = std::abs(u);
  if (r < 1e-300) return z;
  double rm = r / (1.0 + std::sqrt(1.0 - r * r));  // tanh(atanh(r)/2)
  return f.inverse()(u / r * rm);
}

// Orientation-preserving disk isometry with f(p) = p2 and f(q) = q2.
// Requires d(p,q) = d(p2,q2); the pair determines the isometry uniquely.
inline Mobius disk_isometry_two_point(Cplx p, Cplx q, Cplx p2, Cplx q2) {
  Mobius fp = Mobius::to_origin(p);
  Mobius fp2 = Mobius::to_origin(p2);
  Cplx u = fp(q), v = fp2(q2);
  Cplx rot = (v / std::abs(v)) / (u / std::abs(u));
  return compose(fp2.inverse(), compose(Mobius::rotation(rot), fp));
}

// Angle at vertex A of the hyperbolic triangle with side lengths a (opposite
// A), b, c.
inline double hyperbolic_angle(double a, double b, double c) {
  double ca = (std::cosh(b) * std::cosh(c) - std::cosh(a)) /
              (std::sinh(b) * std::sinh(c));
  ca = std::clamp(ca, -1.0, 1.0);
  return std::acos(ca);
}

}  // namespace cps
