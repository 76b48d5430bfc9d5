#include "contlab/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace contlab {

HarmonicVector::HarmonicVector(int h) : h_(h) {
  if (h < 1) throw std::invalid_argument("HarmonicVector: h must be positive");
  coeffs_.assign(static_cast<std::size_t>(2 * h + 1), 0.0);
}

HarmonicVector::HarmonicVector(int h, std::vector<double> coeffs)
    : h_(h), coeffs_(std::move(coeffs)) {
  if (h < 1) throw std::invalid_argument("HarmonicVector: h must be positive");
  if (coeffs_.size() != static_cast<std::size_t>(2 * h + 1)) {
    throw std::invalid_argument("HarmonicVector: expected 2h+1 coefficients");
  }
}

void fill_basis(double phase, std::span<double> out) {
  const std::size_t n = out.size();
  if (n % 2 == 0) throw std::invalid_argument("fill_basis: size must be odd");
  const std::size_t h = n / 2;
  out[0] = 1.0;
  if (h == 0) return;
  const double s1 = std::sin(phase);
  const double c1 = std::cos(phase);
  double s = s1;
  double c = c1;
  for (std::size_t k = 1; k <= h; ++k) {
    out[k] = s;
    out[h + k] = c;
    const double sn = s * c1 + c * s1;
    const double cn = c * c1 - s * s1;
    s = sn;
    c = cn;
  }
}

double HarmonicVector::evaluate(double phase) const {
  double value = coeffs_[0];
  const double s1 = std::sin(phase);
  const double c1 = std::cos(phase);
  double s = s1;
  double c = c1;
  for (int k = 1; k <= h_; ++k) {
    value += coeffs_[sine_index(k)] * s + coeffs_[cosine_index(k)] * c;
    const double sn = s * c1 + c * s1;
    c = c * c1 - s * s1;
    s = sn;
  }
  return value;
}

double HarmonicVector::derivative(double phase, double omega) const {
  double value = 0.0;
  const double s1 = std::sin(phase);
  const double c1 = std::cos(phase);
  double s = s1;
  double c = c1;
  for (int k = 1; k <= h_; ++k) {
    value += k * omega * (coeffs_[sine_index(k)] * c - coeffs_[cosine_index(k)] * s);
    const double sn = s * c1 + c * s1;
    c = c * c1 - s * s1;
    s = sn;
  }
  return value;
}

double HarmonicVector::rms() const {
  double acc = coeffs_[0] * coeffs_[0];
  for (std::size_t i = 1; i < coeffs_.size(); ++i) acc += 0.5 * coeffs_[i] * coeffs_[i];
  return std::sqrt(acc);
}

double HarmonicVector::norm() const {
  double acc = 0.0;
  for (double x : coeffs_) acc += x * x;
  return std::sqrt(acc);
}

bool HarmonicVector::finite() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double x) { return std::isfinite(x); });
}

HarmonicVector HarmonicVector::resized(int h) const {
  HarmonicVector out(h);
  out.constant() = constant();
  for (int k = 1; k <= std::min(h, h_); ++k) {
    out.sine(k) = sine(k);
    out.cosine(k) = cosine(k);
  }
  return out;
}

HarmonicVector& HarmonicVector::operator+=(const HarmonicVector& other) {
  if (other.h_ != h_) throw std::invalid_argument("HarmonicVector: harmonic count mismatch");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

HarmonicVector& HarmonicVector::operator-=(const HarmonicVector& other) {
  if (other.h_ != h_) throw std::invalid_argument("HarmonicVector: harmonic count mismatch");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

HarmonicVector& HarmonicVector::operator*=(double s) {
  for (double& x : coeffs_) x *= s;
  return *this;
}

HarmonicVector operator+(HarmonicVector a, const HarmonicVector& b) { return a += b; }
HarmonicVector operator-(HarmonicVector a, const HarmonicVector& b) { return a -= b; }
HarmonicVector operator*(HarmonicVector a, double s) { return a *= s; }

HarmonicVector basis_eval(int h, double omega, double t) {
  HarmonicVector out(h);
  fill_basis(omega * t, out.coeffs());
  return out;
}

double wrap_to_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(angle, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

double unwrap_near(double angle, double reference) {
  return reference + wrap_to_pi(angle - reference);
}

AmpPhase amp_phase(const HarmonicVector& w, int k) {
  if (k < 1 || k > w.harmonics()) throw std::out_of_range("amp_phase: harmonic index out of range");
  const double s = w.sine(k);
  const double c = w.cosine(k);
  return {std::hypot(s, c), wrap_to_pi(std::atan2(c, s))};
}

double optimal_gain(double omega, double mu_bar) { return omega * mu_bar; }

double default_lms_gain(double omega, int h, double mu_bar) {
  return (h > 1 ? 0.5 : 1.0) * optimal_gain(omega, mu_bar);
}

LmsFilter::LmsFilter(int h, double mu, double omega, double phase, bool track_constant)
    : LmsFilter(LmsFilterState{HarmonicVector(h), mu, omega, 0.0, phase, track_constant}) {}

LmsFilter::LmsFilter(LmsFilterState state)
    : state_(std::move(state)), basis_(state_.weights.size()) {
  if (!(state_.mu >= 0.0)) throw std::invalid_argument("LmsFilter: mu must be non-negative");
}

void LmsFilter::update_at_phase(double sample, double phase, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("LmsFilter: dt must be positive");
  fill_basis(phase, basis_);
  auto w = state_.weights.coeffs();
  double estimate = 0.0;
  for (std::size_t i = 0; i < basis_.size(); ++i) estimate += basis_[i] * w[i];
  const double gain = state_.mu * dt * (sample - estimate);
  for (std::size_t i = state_.track_constant ? 0 : 1; i < basis_.size(); ++i) {
    w[i] += gain * basis_[i];
  }
  state_.t += dt;
}

void LmsFilter::update(double sample, double dt) {
  update_at_phase(sample, state_.phase, dt);
  state_.phase += state_.omega * dt;
}

double LmsFilter::synthesize() const { return state_.weights.evaluate(state_.phase); }

LmsFilterState lms_update(LmsFilterState state, double sample, double dt) {
  LmsFilter filter(std::move(state));
  filter.update(sample, dt);
  return filter.state();
}

namespace {

HarmonicVector project_uniform(std::span<const double> x, int h, auto&& phase_of) {
  HarmonicVector out(h);
  const std::size_t n = x.size();
  std::vector<double> basis(static_cast<std::size_t>(2 * h + 1));
  auto w = out.coeffs();
  for (std::size_t i = 0; i < n; ++i) {
    fill_basis(phase_of(i), basis);
    for (std::size_t j = 0; j < basis.size(); ++j) w[j] += x[i] * basis[j];
  }
  w[0] /= static_cast<double>(n);
  for (std::size_t j = 1; j < w.size(); ++j) w[j] *= 2.0 / static_cast<double>(n);
  return out;
}

}  // namespace

HarmonicVector dft_over_periods(std::span<const double> samples, double dt, double omega,
                                int n_periods, int h, double t0) {
  if (!(dt > 0.0) || !(omega > 0.0) || n_periods < 1) {
    throw std::invalid_argument("dft_over_periods: dt, omega and n_periods must be positive");
  }
  const double exact = n_periods * 2.0 * std::numbers::pi / (omega * dt);
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6 * std::max(1.0, exact)) {
    throw std::invalid_argument("dft_over_periods: window is not an integer number of samples");
  }
  const auto m = static_cast<std::size_t>(rounded);
  if (m > samples.size()) throw std::invalid_argument("dft_over_periods: record too short");
  if (m <= static_cast<std::size_t>(2 * h)) {
    throw std::invalid_argument("dft_over_periods: too few samples for the harmonic count");
  }
  const std::size_t first = samples.size() - m;
  return project_uniform(samples.subspan(first), h, [&](std::size_t i) {
    return omega * (t0 + static_cast<double>(first + i) * dt);
  });
}

HarmonicVector project_cycles(std::span<const double> samples, std::span<const double> phases,
                              int h) {
  if (samples.size() != phases.size() || samples.empty()) {
    throw std::invalid_argument("project_cycles: samples and phases must match and be non-empty");
  }
  return project_uniform(samples, h, [&](std::size_t i) { return phases[i]; });
}

double total_amplitude(std::span<const double> samples, std::size_t samples_per_period) {
  if (samples_per_period == 0 || samples.size() < samples_per_period) {
    throw std::invalid_argument("total_amplitude: record shorter than one period");
  }
  double peak = 0.0;
  for (std::size_t i = samples.size() - samples_per_period; i < samples.size(); ++i) {
    peak = std::max(peak, std::abs(samples[i]));
  }
  return peak;
}

}  // namespace contlab
