#pragma once

// Jacobi elliptic functions and the exact free response of the undamped,
// unforced Duffing oscillator q'' + w0^2 q + a3 q^3 = 0.

namespace contlab {

struct JacobiTriple {
  double sn{0.0};
  double cn{1.0};
  double dn{1.0};
};

/// Arithmetic-geometric mean of two positive numbers.
double agm(double a, double b);

/// Complete elliptic integral of the first kind, parameter convention K(m), m < 1.
double elliptic_k(double m);

/// sn, cn, dn of u with parameter m < 1. Negative m is mapped onto (0, 1).
JacobiTriple jacobi_elliptic(double u, double m);

/// q(t) = A sn(Omega t | kappa), with q(0) = 0 and q'(0) > 0.
class ExactFreeResponse {
 public:
  /// Throws std::domain_error when Omega^2 <= 0 or kappa >= 1.
  ExactFreeResponse(double amplitude, double omega0, double alpha3);

  double amplitude() const { return amplitude_; }
  double frequency() const { return omega_; }  ///< Omega
  double parameter() const { return kappa_; }  ///< kappa
  /// 4 K(kappa) / Omega
  double period() const;

  double displacement(double t) const;
  double velocity(double t) const;

 private:
  double amplitude_;
  double omega_;
  double kappa_;
};

}  // namespace contlab
