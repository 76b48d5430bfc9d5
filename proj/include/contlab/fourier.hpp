#pragma once

// Truncated Fourier representation of periodic signals and the online/offline
// estimators built on it.
//
// Coefficients are ordered [constant, sin(1..h wt), cos(1..h wt)].

#include <cstddef>
#include <span>
#include <vector>

namespace contlab {

class HarmonicVector {
 public:
  /// h = 1, all zero.
  HarmonicVector() : HarmonicVector(1) {}
  explicit HarmonicVector(int h);
  HarmonicVector(int h, std::vector<double> coeffs);

  int harmonics() const { return h_; }
  std::size_t size() const { return coeffs_.size(); }

  static std::size_t sine_index(int k) { return static_cast<std::size_t>(k); }
  std::size_t cosine_index(int k) const { return static_cast<std::size_t>(h_ + k); }

  double constant() const { return coeffs_[0]; }
  double& constant() { return coeffs_[0]; }
  double sine(int k) const { return coeffs_[sine_index(k)]; }
  double& sine(int k) { return coeffs_[sine_index(k)]; }
  double cosine(int k) const { return coeffs_[cosine_index(k)]; }
  double& cosine(int k) { return coeffs_[cosine_index(k)]; }

  double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }

  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }

  /// Signal value at phase theta = w t.
  double evaluate(double phase) const;
  /// Time derivative at phase theta for fundamental frequency omega.
  double derivative(double phase, double omega) const;

  /// Root mean square over one period (Parseval).
  double rms() const;
  double norm() const;
  bool finite() const;

  /// Copy truncated or zero-padded to h harmonics.
  HarmonicVector resized(int h) const;

  HarmonicVector& operator+=(const HarmonicVector& other);
  HarmonicVector& operator-=(const HarmonicVector& other);
  HarmonicVector& operator*=(double s);

 private:
  int h_;
  std::vector<double> coeffs_;
};

HarmonicVector operator+(HarmonicVector a, const HarmonicVector& b);
HarmonicVector operator-(HarmonicVector a, const HarmonicVector& b);
HarmonicVector operator*(HarmonicVector a, double s);

/// Basis values at phase theta written into out; out.size() must be odd.
void fill_basis(double phase, std::span<double> out);

/// Basis vector h(t) at time t for fundamental frequency omega.
HarmonicVector basis_eval(int h, double omega, double t);

struct AmpPhase {
  double amplitude{0.0};
  double phase{0.0};  ///< atan2(c_k, s_k) in (-pi, pi]; a pure sin(k wt) has phase 0.
};

AmpPhase amp_phase(const HarmonicVector& w, int k);

/// Map an angle into (-pi, pi].
double wrap_to_pi(double angle);
/// Representative of angle (mod 2 pi) closest to reference.
double unwrap_near(double angle, double reference);

/// Gain mu = w * mu_bar of the tonal LMS filter.
double optimal_gain(double omega, double mu_bar = 2.0);
/// Default LMS gain: optimal for h = 1, halved for multi-harmonic filters.
double default_lms_gain(double omega, int h, double mu_bar = 2.0);

struct LmsFilterState {
  HarmonicVector weights;
  double mu{1.0};
  double omega{1.0};
  double t{0.0};
  double phase{0.0};
  /// When false the constant weight is frozen; the optimal gain makes the
  /// sine/cosine pair critically damped only in this tonal configuration.
  bool track_constant{true};
};

/// Widrow-Hoff adaptive Fourier decomposition of a sampled signal.
///
/// The filter owns the reference phase, which integrates omega so that the
/// frequency may change on the fly.
class LmsFilter {
 public:
  LmsFilter(int h, double mu, double omega, double phase = 0.0, bool track_constant = true);
  explicit LmsFilter(LmsFilterState state);

  /// w <- w + mu dt (x - h w) h^T at the current phase, then advance.
  void update(double sample, double dt);
  /// Same law with an externally supplied phase (time still advances).
  void update_at_phase(double sample, double phase, double dt);

  /// Estimated signal h(phase) w at the current phase.
  double synthesize() const;
  double error(double sample) const { return sample - synthesize(); }

  const HarmonicVector& weights() const { return state_.weights; }
  void set_weights(const HarmonicVector& w) { state_.weights = w; }
  double mu() const { return state_.mu; }
  void set_mu(double mu) { state_.mu = mu; }
  double omega() const { return state_.omega; }
  void set_omega(double omega) { state_.omega = omega; }
  double phase() const { return state_.phase; }
  void set_phase(double phase) { state_.phase = phase; }
  double time() const { return state_.t; }
  const LmsFilterState& state() const { return state_; }

 private:
  LmsFilterState state_;
  std::vector<double> basis_;
};

LmsFilterState lms_update(LmsFilterState state, double sample, double dt);

/// Fourier coefficients from the last n_periods periods of a uniformly sampled
/// record (sample i taken at t0 + i dt).
///
/// The window must hold an integer number of samples to within 1e-6; the
/// projection is then the least-squares fit, identical to the DFT bins.
HarmonicVector dft_over_periods(std::span<const double> samples, double dt, double omega,
                                int n_periods, int h, double t0 = 0.0);

/// Projection of samples taken at the given phases, assuming they cover an
/// integer number of cycles uniformly.
HarmonicVector project_cycles(std::span<const double> samples, std::span<const double> phases,
                              int h);

/// max |x| over the final period of the record.
double total_amplitude(std::span<const double> samples, std::size_t samples_per_period);

}  // namespace contlab
