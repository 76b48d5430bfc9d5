#include "contlab/control.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace contlab {

PidOutput pid_step(PidState& state, double error, double dt, const PidGains& gains,
                   const PidOptions& options) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be positive");
  bool clamped = false;
  state.integral += error * dt;
  if (options.integral_clamp > 0.0 && gains.ki != 0.0) {
    const double bound = options.integral_clamp / std::abs(gains.ki);
    if (std::abs(state.integral) > bound) {
      state.integral = std::clamp(state.integral, -bound, bound);
      clamped = true;
    }
  }
  const double raw = state.primed ? (error - state.previous_error) / dt : 0.0;
  if (options.bandwidth > 0.0) {
    const double pole = 10.0 * options.bandwidth;
    state.derivative += (pole * dt / (1.0 + pole * dt)) * (raw - state.derivative);
  } else {
    state.derivative = raw;
  }
  state.previous_error = error;
  state.primed = true;
  const double out = options.bias + gains.kp * error + gains.ki * state.integral +
                     gains.kd * state.derivative;
  return {out, clamped};
}

HarmonicVector non_fundamental(const HarmonicVector& w) {
  HarmonicVector out = w;
  out.sine(1) = 0.0;
  out.cosine(1) = 0.0;
  return out;
}

void ReferenceSignal::validate() const {
  if (!(omega > 0.0)) throw std::invalid_argument("ReferenceSignal: omega must be positive");
  if (nonfundamental.sine(1) != 0.0 || nonfundamental.cosine(1) != 0.0) {
    throw std::invalid_argument("ReferenceSignal: nonfundamental carries fundamental content");
  }
}

HarmonicVector ReferenceSignal::coeffs() const {
  HarmonicVector out = nonfundamental;
  out.sine(1) = a_star;
  out.cosine(1) = b_star;
  return out;
}

double synth_reference_at_phase(const ReferenceSignal& ref, double phase) {
  return ref.a_star * std::sin(phase) + ref.b_star * std::cos(phase) +
         ref.nonfundamental.evaluate(phase);
}

double synth_reference_velocity_at_phase(const ReferenceSignal& ref, double phase) {
  return ref.omega * (ref.a_star * std::cos(phase) - ref.b_star * std::sin(phase)) +
         ref.nonfundamental.derivative(phase, ref.omega);
}

InvasivenessReport invasiveness(const ReferenceSignal& ref, const HarmonicVector& measured) {
  const int h = std::max(ref.nonfundamental.harmonics(), measured.harmonics());
  const HarmonicVector diff =
      non_fundamental(ref.nonfundamental.resized(h) - measured.resized(h));
  InvasivenessReport r;
  r.residual_norm = diff.norm();
  const double a = ref.fundamental_amplitude();
  if (a > 0.0) r.relative = r.residual_norm / a;
  return r;
}

StabilityProbeResult control_off_stability_probe(const Plant& plant, const TonalDrive& forcing,
                                                 double amplitude,
                                                 const StabilityProbeOptions& options) {
  if (options.hold_periods < 1 || options.steps_per_period < 8 || !(options.band > 0.0)) {
    throw std::invalid_argument("control_off_stability_probe: invalid options");
  }
  if (!(amplitude > 0.0)) {
    throw std::invalid_argument("control_off_stability_probe: amplitude must be positive");
  }
  Plant p = plant;
  PlantState s = p.state();
  s.q += options.kick * amplitude;
  p.reset(s);

  const int n = options.steps_per_period;
  const double dt = 2.0 * std::numbers::pi / forcing.omega / n;
  std::vector<double> samples(static_cast<std::size_t>(n));
  std::vector<double> phases(static_cast<std::size_t>(n));
  StabilityProbeResult result;
  try {
    for (int period = 0; period < options.hold_periods; ++period) {
      for (int i = 0; i < n; ++i) {
        const double t = p.state().t;
        const auto out = p.step(forcing.sample(t, dt), dt);
        samples[static_cast<std::size_t>(i)] = out.displacement;
        phases[static_cast<std::size_t>(i)] = forcing.phase(p.state().t);
      }
      const auto c = project_cycles(samples, phases, 1);
      const double dev = std::abs(std::hypot(c.sine(1), c.cosine(1)) - amplitude) / amplitude;
      result.max_deviation = std::max(result.max_deviation, dev);
      result.periods_held = period + 1;
      if (dev > options.band) {
        result.verdict = OpenLoopStability::unstable;
        return result;
      }
    }
  } catch (const PlantDivergence&) {
    result.verdict = OpenLoopStability::unstable;
    result.max_deviation = std::numeric_limits<double>::infinity();
  }
  return result;
}

}  // namespace contlab
