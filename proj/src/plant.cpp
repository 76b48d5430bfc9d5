#include "contlab/plant.hpp"

#include <cmath>

namespace contlab {

void DuffingParams::validate() const {
  if (!(std::isfinite(m) && std::isfinite(c) && std::isfinite(k) && std::isfinite(k2) &&
        std::isfinite(k3))) {
    throw std::domain_error("DuffingParams: non-finite coefficient");
  }
  if (!(m > 0.0)) throw std::domain_error("DuffingParams: m must be positive");
  if (!(k > 0.0)) throw std::domain_error("DuffingParams: k must be positive");
}

double DuffingParams::natural_frequency() const { return std::sqrt(k / m); }

DuffingParams DimensionlessDuffing::to_params() const {
  return DuffingParams{1.0, 2.0 * zeta0, 1.0, beta2, 1.0};
}

Nondimensionalization nondimensionalize(const DuffingParams& p) {
  if (!(p.m > 0.0) || !(p.k > 0.0) || !(p.k3 > 0.0)) {
    throw std::domain_error("nondimensionalize: m, k and k3 must be positive");
  }
  Nondimensionalization out;
  out.dimensionless.zeta0 = p.c / (2.0 * std::sqrt(p.k * p.m));
  out.dimensionless.beta2 = p.k2 / std::sqrt(p.k * p.k3);
  out.omega0 = std::sqrt(p.k / p.m);
  out.displacement_scale = std::sqrt(p.k3 / p.k);
  out.force_scale = std::sqrt(p.k3 / (p.k * p.k * p.k));
  return out;
}

StateDerivative duffing_rhs(const PlantState& s, double forcing, const DuffingParams& p) {
  const double q = s.q;
  const double restoring = p.c * s.v + p.k * q + p.k2 * q * q + p.k3 * q * q * q;
  return {s.v, (forcing - restoring) / p.m};
}

PlantState rk4_step(const PlantState& s, const DriveSample& drive, double dt,
                    const DuffingParams& p) {
  const double h2 = 0.5 * dt;
  const auto k1 = duffing_rhs(s, drive.start, p);
  const auto k2 = duffing_rhs({s.q + h2 * k1.dq, s.v + h2 * k1.dv, s.t + h2}, drive.mid, p);
  const auto k3 = duffing_rhs({s.q + h2 * k2.dq, s.v + h2 * k2.dv, s.t + h2}, drive.mid, p);
  const auto k4 = duffing_rhs({s.q + dt * k3.dq, s.v + dt * k3.dv, s.t + dt}, drive.end, p);
  PlantState next;
  next.q = s.q + dt / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
  next.v = s.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  next.t = s.t + dt;
  return next;
}

Plant::Plant(DuffingParams params, PlantOptions options)
    : params_(params), options_(options), rng_(options.noise.seed) {
  params_.validate();
  if (options_.noise.sensor_rms < 0.0) {
    throw std::domain_error("Plant: sensor_rms must be non-negative");
  }
  const double scale = params_.k3 > 0.0 ? std::sqrt(params_.k / params_.k3) : 1.0;
  q_bound_ = options_.blowup_bound > 0.0 ? options_.blowup_bound : 1e6 * scale;
  v_bound_ = q_bound_ * params_.natural_frequency();
}

SensedOutput Plant::sense() {
  SensedOutput out{state_.q, options_.velocity_gain * state_.v};
  if (options_.noise.sensor_rms > 0.0) {
    out.displacement += options_.noise.sensor_rms * gauss_(rng_);
    out.velocity += options_.noise.sensor_rms * gauss_(rng_);
  }
  return out;
}

SensedOutput Plant::step(const DriveSample& drive, double dt) {
  if (!(dt > 0.0)) throw std::domain_error("Plant::step: dt must be positive");
  const PlantState next = rk4_step(state_, drive, dt, params_);
  if (!std::isfinite(next.q) || !std::isfinite(next.v) || std::abs(next.q) > q_bound_ ||
      std::abs(next.v) > v_bound_) {
    throw PlantDivergence("plant state left the divergence bound", state_);
  }
  state_ = next;
  return sense();
}

}  // namespace contlab
