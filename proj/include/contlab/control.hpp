#pragma once

// Feedback laws shared by the control-based methods and the machinery that
// checks they stay non-invasive.

#include <cmath>
#include <limits>

#include "contlab/fourier.hpp"
#include "contlab/plant.hpp"

namespace contlab {

struct PidGains {
  double kp{0.0};
  double ki{0.0};
  double kd{0.0};
};

struct PidOptions {
  double bias{0.0};
  /// Loop bandwidth [rad/s]; the derivative smoothing pole sits at 10x this.
  /// Non-positive disables the smoothing.
  double bandwidth{0.0};
  /// Bound on |ki * integral|; non-positive disables the clamp.
  double integral_clamp{0.0};
};

struct PidState {
  double integral{0.0};
  double previous_error{0.0};
  double derivative{0.0};
  bool primed{false};
};

struct PidOutput {
  double value{0.0};
  bool clamped{false};
};

/// output = bias + kp e + ki sum(e dt) + kd de/dt, rectangle-rule integral and
/// first-difference derivative through a single-pole smoother.
PidOutput pid_step(PidState& state, double error, double dt, const PidGains& gains,
                   const PidOptions& options);

class PidController {
 public:
  PidController(PidGains gains, PidOptions options) : gains_(gains), options_(options) {}

  PidOutput step(double error, double dt) { return pid_step(state_, error, dt, gains_, options_); }
  void reset() { state_ = {}; }

  const PidGains& gains() const { return gains_; }
  const PidOptions& options() const { return options_; }
  const PidState& state() const { return state_; }

 private:
  PidGains gains_;
  PidOptions options_;
  PidState state_{};
};

/// kd (x*' - x').
inline double differential_control(double x_star_vel, double sensed_vel, double kd) {
  return kd * (x_star_vel - sensed_vel);
}

/// Copy with the fundamental pair zeroed.
HarmonicVector non_fundamental(const HarmonicVector& w);

/// x*(t) = a* sin(wt) + b* cos(wt) + h(t) P_nf w*.
struct ReferenceSignal {
  double omega{1.0};
  double a_star{0.0};
  double b_star{0.0};
  HarmonicVector nonfundamental{};

  /// Throws std::invalid_argument when the fundamental pair of
  /// nonfundamental is not zero or omega is not positive.
  void validate() const;
  double fundamental_amplitude() const { return std::hypot(a_star, b_star); }
  /// Full reference coefficient vector.
  HarmonicVector coeffs() const;
};

/// Reference value at phase theta (= omega t for a fixed frequency).
double synth_reference_at_phase(const ReferenceSignal& ref, double phase);
/// Reference time derivative at phase theta.
double synth_reference_velocity_at_phase(const ReferenceSignal& ref, double phase);

inline double synth_reference(const ReferenceSignal& ref, double t) {
  return synth_reference_at_phase(ref, ref.omega * t);
}
inline double synth_reference_velocity(const ReferenceSignal& ref, double t) {
  return synth_reference_velocity_at_phase(ref, ref.omega * t);
}

struct InvasivenessReport {
  double residual_norm{0.0};
  /// residual_norm / fundamental reference amplitude; NaN when that is zero.
  double relative{std::numeric_limits<double>::quiet_NaN()};
};

/// Norm of (reference - measured) over the constant and harmonics 2..h.
InvasivenessReport invasiveness(const ReferenceSignal& ref, const HarmonicVector& measured);

/// Open-loop forcing f(theta) = h(theta) coeffs with theta = phase0 + omega (t - t0).
struct TonalDrive {
  double omega{1.0};
  double phase0{0.0};
  double t0{0.0};
  HarmonicVector coeffs{};

  double phase(double t) const { return phase0 + omega * (t - t0); }
  double value(double t) const { return coeffs.evaluate(phase(t)); }
  /// Exact values at the RK4 stage times of the step [t, t + dt].
  DriveSample sample(double t, double dt) const {
    return {value(t), value(t + 0.5 * dt), value(t + dt)};
  }
};

enum class OpenLoopStability { stable, unstable };

struct StabilityProbeOptions {
  int hold_periods{50};
  /// Relative band on the fundamental amplitude.
  double band{0.05};
  int steps_per_period{1000};
  /// Displacement kick relative to the amplitude applied when control is cut,
  /// so that an orbit held exactly by the integrator still reveals instability.
  double kick{1e-3};
};

struct StabilityProbeResult {
  OpenLoopStability verdict{OpenLoopStability::stable};
  /// Largest relative deviation of the per-period fundamental amplitude.
  double max_deviation{0.0};
  int periods_held{0};
};

/// Cut the feedback of a converged closed loop, keep its open-loop forcing
/// and watch the fundamental amplitude over hold_periods forcing periods.
/// The plant is copied; divergence classifies the point as unstable.
StabilityProbeResult control_off_stability_probe(const Plant& plant, const TonalDrive& forcing,
                                                 double amplitude,
                                                 const StabilityProbeOptions& options = {});

}  // namespace contlab
