#pragma once

// Simulated structures under test: Duffing-family single-DOF oscillators.
//
// The rest of the library talks to a Plant only through drive-in / sense-out,
// which mirrors how an experiment sees the structure.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace contlab {

/// m q'' + c q' + k q + k2 q^2 + k3 q^3 = f
struct DuffingParams {
  double m{1.0};
  double c{0.0};
  double k{1.0};
  double k2{0.0};
  double k3{0.0};

  /// Throws std::domain_error unless m > 0, k > 0 and all entries are finite.
  void validate() const;

  double natural_frequency() const;
};

/// q'' + 2 zeta0 q' + q + beta2 q^2 + q^3 = f (time and displacement scaled).
struct DimensionlessDuffing {
  double zeta0{0.0};
  double beta2{0.0};

  /// Physical parameter set with m = k = k3 = 1 that reproduces this oscillator.
  DuffingParams to_params() const;
};

struct Nondimensionalization {
  DimensionlessDuffing dimensionless;
  double omega0{0.0};              ///< sqrt(k/m) [rad/s]
  double displacement_scale{0.0};  ///< qbar = displacement_scale * q, i.e. sqrt(k3/k)
  double force_scale{0.0};         ///< fbar = force_scale * f, i.e. sqrt(k3/k^3)
};

Nondimensionalization nondimensionalize(const DuffingParams& params);

struct NoiseModel {
  double sensor_rms{0.0};
  std::uint64_t seed{0};
};

struct PlantState {
  double q{0.0};
  double v{0.0};
  double t{0.0};
};

struct StateDerivative {
  double dq{0.0};
  double dv{0.0};
};

StateDerivative duffing_rhs(const PlantState& state, double forcing, const DuffingParams& params);

/// Drive values at the start, midpoint and end of one integrator step.
///
/// A sampled controller holds its output over the step; a synthesized tonal
/// excitation can supply the exact values at the RK4 stage times.
struct DriveSample {
  double start{0.0};
  double mid{0.0};
  double end{0.0};

  static DriveSample hold(double value) { return {value, value, value}; }
};

struct SensedOutput {
  double displacement{0.0};
  double velocity{0.0};
};

class PlantDivergence : public std::runtime_error {
 public:
  PlantDivergence(const std::string& what, PlantState last)
      : std::runtime_error(what), last_state_(last) {}
  const PlantState& last_state() const { return last_state_; }

 private:
  PlantState last_state_;
};

/// One classical RK4 step of the Duffing ODE under the given drive.
PlantState rk4_step(const PlantState& state, const DriveSample& drive, double dt,
                    const DuffingParams& params);

struct PlantOptions {
  NoiseModel noise{};
  /// Gain applied to the sensed velocity channel (the electronic analog
  /// reports roughly -1e-3 times the velocity).
  double velocity_gain{1.0};
  /// Divergence bound on |q|; non-positive selects 1e6 x displacement scale.
  double blowup_bound{0.0};
};

/// Black-box oscillator: a single-owner state machine advanced by drive samples.
class Plant {
 public:
  explicit Plant(DuffingParams params, PlantOptions options = {});

  /// Advance one step and return the (noisy) sensed outputs at the new time.
  /// Throws PlantDivergence if the state leaves the configured bound.
  SensedOutput step(const DriveSample& drive, double dt);
  SensedOutput step(double drive, double dt) { return step(DriveSample::hold(drive), dt); }

  /// Sensed outputs at the current state without advancing.
  SensedOutput sense();

  const PlantState& state() const { return state_; }
  void reset(const PlantState& state) { state_ = state; }

  const DuffingParams& params() const { return params_; }
  const PlantOptions& options() const { return options_; }
  double displacement_bound() const { return q_bound_; }
  double velocity_bound() const { return v_bound_; }

 private:
  DuffingParams params_;
  PlantOptions options_;
  PlantState state_{};
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  double q_bound_{0.0};
  double v_bound_{0.0};
};

}  // namespace contlab
