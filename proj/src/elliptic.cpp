#include "contlab/elliptic.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace contlab {

double agm(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("agm: arguments must be positive");
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return a;
}

double elliptic_k(double m) {
  if (!(m < 1.0)) throw std::domain_error("elliptic_k: parameter must be below 1");
  return std::numbers::pi / (2.0 * agm(1.0, std::sqrt(1.0 - m)));
}

namespace {

// Descending AGM scheme for 0 <= m < 1.
JacobiTriple jacobi_unit(double u, double m) {
  if (m == 0.0) return {std::sin(u), std::cos(u), 1.0};
  constexpr int kMax = 32;
  std::array<double, kMax + 1> a{};
  std::array<double, kMax + 1> c{};
  a[0] = 1.0;
  double b = std::sqrt(1.0 - m);
  c[0] = std::sqrt(m);
  int n = 0;
  while (std::abs(c[n]) > 1e-16 && n < kMax) {
    a[n + 1] = 0.5 * (a[n] + b);
    c[n + 1] = 0.5 * (a[n] - b);
    b = std::sqrt(a[n] * b);
    ++n;
  }
  double phi = std::ldexp(a[n] * u, n);
  for (int i = n; i > 0; --i) phi = 0.5 * (phi + std::asin(c[i] / a[i] * std::sin(phi)));
  const double sn = std::sin(phi);
  const double cn = std::cos(phi);
  // dn > 0 for m < 1, so the square-root form avoids the 0/0 of the cosine ratio near K.
  const double dn = std::sqrt(1.0 - m * sn * sn);
  return {sn, cn, dn};
}

}  // namespace

JacobiTriple jacobi_elliptic(double u, double m) {
  if (!(m < 1.0)) throw std::domain_error("jacobi_elliptic: parameter must be below 1");
  if (m >= 0.0) return jacobi_unit(u, m);
  // Negative parameter: sn(u|-n) = sd(v|mu) / sqrt(1+n), mu = n/(1+n), v = u sqrt(1+n).
  const double n = -m;
  const double root = std::sqrt(1.0 + n);
  const auto t = jacobi_unit(u * root, n / (1.0 + n));
  return {t.sn / (t.dn * root), t.cn / t.dn, 1.0 / t.dn};
}

ExactFreeResponse::ExactFreeResponse(double amplitude, double omega0, double alpha3)
    : amplitude_(amplitude) {
  const double omega_sq = omega0 * omega0 + 0.5 * alpha3 * amplitude * amplitude;
  if (!(omega_sq > 0.0)) throw std::domain_error("ExactFreeResponse: Omega^2 must be positive");
  omega_ = std::sqrt(omega_sq);
  kappa_ = -0.5 * alpha3 * amplitude * amplitude / omega_sq;
  if (!(kappa_ < 1.0)) throw std::domain_error("ExactFreeResponse: elliptic parameter >= 1");
}

double ExactFreeResponse::period() const { return 4.0 * elliptic_k(kappa_) / omega_; }

double ExactFreeResponse::displacement(double t) const {
  return amplitude_ * jacobi_elliptic(omega_ * t, kappa_).sn;
}

double ExactFreeResponse::velocity(double t) const {
  const auto j = jacobi_elliptic(omega_ * t, kappa_);
  return amplitude_ * omega_ * j.cn * j.dn;
}

}  // namespace contlab
