#include "contlab/methods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "contlab/fourier.hpp"

namespace contlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double calibrated_velocity(const Plant& plant, const SensedOutput& s) {
  return s.velocity / plant.options().velocity_gain;
}

/// Samples of x and u at the phases they were taken, for one measurement window.
struct Record {
  std::vector<double> x, u, phase;

  void clear() {
    x.clear();
    u.clear();
    phase.clear();
  }
  void push(double xi, double ui, double ph) {
    x.push_back(xi);
    u.push_back(ui);
    phase.push_back(ph);
  }
};

/// max |x| over the last `per_period` samples of the record.
double last_period_peak(const std::vector<double>& x, std::size_t per_period) {
  double peak = 0.0;
  const std::size_t n = std::min(per_period, x.size());
  for (std::size_t i = x.size() - n; i < x.size(); ++i) peak = std::max(peak, std::abs(x[i]));
  return peak;
}

void fill_point(BranchPoint& p, const HarmonicVector& response, const HarmonicVector& force) {
  p.response = response;
  p.forcing = force;
  const auto x1 = amp_phase(response, 1);
  const auto u1 = amp_phase(force, 1);
  p.a1 = x1.amplitude;
  p.f_meas = u1.amplitude;
  p.phase1 = wrap_to_pi(x1.phase - u1.phase);
}

HarmonicVector tonal(int h, double amplitude) {
  HarmonicVector f(h);
  f.sine(1) = amplitude;
  return f;
}

void check_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be positive");
}

/// Holds an open-loop tonal drive F sin(theta) at fixed omega with a
/// continuous phase; measures the last measure_periods.
class TonalRig {
 public:
  TonalRig(Plant& plant, int steps) : plant_(plant), steps_(steps) {}

  LoopMeasurement hold(double amplitude, double omega, int settle, int measure, int h) {
    const double dt = kTwoPi / (omega * steps_);
    SensedOutput sensed = plant_.sense();
    Record rec;
    for (int period = 0; period < settle + measure; ++period) {
      for (int i = 0; i < steps_; ++i) {
        const double th = phase_;
        const DriveSample d{amplitude * std::sin(th), amplitude * std::sin(th + 0.5 * omega * dt),
                            amplitude * std::sin(th + omega * dt)};
        if (period >= settle) rec.push(sensed.displacement, d.start, th);
        sensed = plant_.step(d, dt);
        phase_ = std::fmod(th + omega * dt, kTwoPi);
      }
    }
    LoopMeasurement m;
    m.response = project_cycles(rec.x, rec.phase, h);
    m.force = tonal(h, amplitude);
    m.total_amp = last_period_peak(rec.x, static_cast<std::size_t>(steps_));
    return m;
  }

  double phase() const { return phase_; }

 private:
  Plant& plant_;
  int steps_;
  double phase_{0.0};
};

}  // namespace

// ---------------------------------------------------------------------------
// Swept sine

Branch swept_sine(Plant& plant, const SweepSettings& s) {
  check_positive(s.omega_start, "swept_sine: omega_start");
  check_positive(s.omega_end, "swept_sine: omega_end");
  check_positive(s.rate, "swept_sine: rate");
  if (s.steps_per_period < 8 || s.cycles_per_point < 1 || s.lead_in_periods < 0 || s.h < 1) {
    throw std::invalid_argument("swept_sine: invalid settings");
  }
  const double dir = s.omega_end >= s.omega_start ? 1.0 : -1.0;
  const double dt = kTwoPi / (std::max(s.omega_start, s.omega_end) * s.steps_per_period);
  const bool log = s.spacing == SweepSpacing::logarithmic;
  const double r = dir * s.rate;
  // Elapsed sweep time tau: frequency and accumulated phase in closed form.
  auto omega_at = [&](double tau) { return log ? s.omega_start * std::exp(r * tau) : s.omega_start + r * tau; };
  auto phase_at = [&](double tau) {
    if (tau <= 0.0) return s.omega_start * tau;
    return log ? s.omega_start * std::expm1(r * tau) / r : s.omega_start * tau + 0.5 * r * tau * tau;
  };

  Branch b;
  b.method = "sws";
  const double lead = s.lead_in_periods * kTwoPi / s.omega_start;
  double tau = -lead;
  SensedOutput sensed = plant.sense();
  Record rec;
  double cycle_start = phase_at(0.0);
  const double cycle_span = kTwoPi * s.cycles_per_point;
  for (;;) {
    const double th = phase_at(tau);
    auto drive = [&](double tt) { return s.forcing * std::sin(phase_at(tt)); };
    const DriveSample d{drive(tau), drive(tau + 0.5 * dt), drive(tau + dt)};
    if (tau >= 0.0) rec.push(sensed.displacement, d.start, th);
    sensed = plant.step(d, dt);
    tau += dt;
    if (tau > 0.0 && phase_at(tau) - cycle_start >= cycle_span) {
      BranchPoint p;
      const double mid = 0.5 * (cycle_start + phase_at(tau));
      // Frequency at the mid-cycle phase.
      p.omega = log ? s.omega_start + r * mid : std::sqrt(s.omega_start * s.omega_start + 2.0 * r * mid);
      fill_point(p, project_cycles(rec.x, rec.phase, s.h), tonal(s.h, s.forcing));
      p.a_star = kNaN;
      p.total_amp = last_period_peak(rec.x, rec.x.size() / static_cast<std::size_t>(s.cycles_per_point));
      p.converged = true;
      p.open_loop_stable = true;
      p.wall_time = plant.state().t;
      b.points.push_back(std::move(p));
      rec.clear();
      cycle_start = phase_at(tau);
      const double w = omega_at(tau);
      if (dir * (w - s.omega_end) >= 0.0) break;
    }
  }
  return b;
}

std::vector<Jump> detect_jumps(const Branch& branch, double rel_threshold, std::size_t window) {
  std::vector<Jump> out;
  const auto& pts = branch.points;
  if (window < 1 || pts.size() <= window) return out;
  bool inside = false;
  std::size_t quiet = 0;
  for (std::size_t i = 0; i + window < pts.size(); ++i) {
    const double a = pts[i].a1;
    const double c = pts[i + window].a1;
    const double big = std::max(std::abs(a), std::abs(c));
    const bool hit = big > 0.0 && std::abs(c - a) > rel_threshold * big;
    if (hit && !inside) {
      // Locate the steepest single-point change inside the window.
      std::size_t k = i;
      double steepest = -1.0;
      for (std::size_t j = i; j < i + window; ++j) {
        const double d = std::abs(pts[j + 1].a1 - pts[j].a1);
        if (d > steepest) {
          steepest = d;
          k = j;
        }
      }
      out.push_back({k, pts[k].omega, pts[i].a1, pts[i + window].a1});
      inside = true;
    }
    // A region closes after `window` consecutive quiet points, which absorbs
    // the beating transient that follows a jump.
    quiet = hit ? 0 : quiet + 1;
    if (quiet >= window) inside = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stepped sine

Branch stepped_sine(Plant& plant, const SteppedSettings& s) {
  if (s.grid.empty()) throw std::invalid_argument("stepped_sine: empty grid");
  if (s.settle_periods < 0 || s.measure_periods < 1 || s.steps_per_period < 8 || s.h < 1) {
    throw std::invalid_argument("stepped_sine: invalid settings");
  }
  Branch b;
  b.method = "sts";
  TonalRig rig(plant, s.steps_per_period);
  for (double g : s.grid) {
    const double omega = s.mode == SteppedMode::frequency ? g : s.omega;
    const double f = s.mode == SteppedMode::frequency ? s.forcing : g;
    check_positive(omega, "stepped_sine: frequency");
    BranchPoint p;
    p.omega = omega;
    p.a_star = kNaN;
    try {
      const auto m = rig.hold(f, omega, s.settle_periods, s.measure_periods, s.h);
      fill_point(p, m.response, m.force);
      p.total_amp = m.total_amp;
      p.converged = true;
      p.open_loop_stable = true;
    } catch (const PlantDivergence&) {
      p.f_meas = f;
      p.a1 = kNaN;
      p.converged = false;
      plant.reset({0.0, 0.0, plant.state().t});
    }
    p.wall_time = plant.state().t;
    b.points.push_back(std::move(p));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Closed loop

LoopMeasurement ClosedLoopRig::run(const HarmonicVector& reference, double omega, double kd,
                                   int settle_periods, int measure_periods,
                                   const HarmonicVector* feedforward) {
  check_positive(omega, "ClosedLoopRig: omega");
  if (settle_periods < 0 || measure_periods < 1) throw std::invalid_argument("ClosedLoopRig: invalid periods");
  const double dt = kTwoPi / (omega * steps_);
  const int h = reference.harmonics();
  Record rec;
  SensedOutput sensed = plant_.sense();
  for (int period = 0; period < settle_periods + measure_periods; ++period) {
    for (int i = 0; i < steps_; ++i) {
      const double th = phase_;
      const double ref_vel = reference.derivative(th, omega);
      double u = differential_control(ref_vel, calibrated_velocity(plant_, sensed), kd);
      DriveSample d = DriveSample::hold(u);
      if (feedforward) {
        const double f0 = feedforward->evaluate(th);
        d.start += f0;
        d.mid += feedforward->evaluate(th + 0.5 * omega * dt);
        d.end += feedforward->evaluate(th + omega * dt);
        u += f0;
      }
      if (period >= settle_periods) rec.push(sensed.displacement, u, th);
      sensed = plant_.step(d, dt);
      phase_ = std::fmod(th + omega * dt, kTwoPi);
    }
  }
  LoopMeasurement m;
  m.response = project_cycles(rec.x, rec.phase, h);
  m.force = project_cycles(rec.u, rec.phase, h);
  m.total_amp = last_period_peak(rec.x, static_cast<std::size_t>(steps_));
  return m;
}

namespace {

HarmonicVector fundamental_target(int h, double f_star) { return tonal(h, f_star); }

Eigen::VectorXd to_eigen(const HarmonicVector& w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) v(static_cast<Eigen::Index>(i)) = w[i];
  return v;
}

HarmonicVector from_eigen(int h, const Eigen::VectorXd& v, Eigen::Index count) {
  HarmonicVector w(h);
  for (Eigen::Index i = 0; i < count; ++i) w[static_cast<std::size_t>(i)] = v(i);
  return w;
}

/// CBC-FD driver: unknowns y = [w*, omega / omega_scale].
class CbcFd {
 public:
  CbcFd(Plant& plant, const CbcFdSettings& s)
      : s_(s), rig_(plant, s.steps_per_period), n_(2 * s.h + 1), scale_(s.omega_start),
        target_(to_eigen(fundamental_target(s.h, s.f_star))) {}

  struct Eval {
    Eigen::VectorXd residual;
    LoopMeasurement m;
  };

  Eval evaluate(const Eigen::VectorXd& y) {
    const double omega = y(n_) * scale_;
    check_positive(omega, "cbc_fd: frequency");
    Eval e;
    e.m = rig_.run(from_eigen(s_.h, y, n_), omega, s_.kd, s_.settle_periods, s_.measure_periods);
    e.residual = to_eigen(e.m.force) - target_;
    return e;
  }

  double fd_step(double yi) const { return std::max(s_.fd_abs, s_.fd_rel * std::abs(yi)); }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& y, const Eigen::VectorXd& r0) {
    Eigen::MatrixXd J(n_, n_ + 1);
    double floor = 0.0;
    if (s_.fd_adaptive) floor = (evaluate(y).residual - r0).cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j <= n_; ++j) {
      double d = fd_step(y(j));
      Eigen::VectorXd col;
      for (int attempt = 0;; ++attempt) {
        Eigen::VectorXd yp = y;
        yp(j) += d;
        col = (evaluate(yp).residual - r0) / d;
        if (!s_.fd_adaptive || attempt >= 4 || col.cwiseAbs().maxCoeff() * d > 10.0 * floor) break;
        d *= 2.0;
      }
      J.col(j) = col;
    }
    return J;
  }

  Eigen::VectorXd tangent(const Eigen::MatrixXd& J, const Eigen::VectorXd& ref) const {
    Eigen::MatrixXd A(n_ + 1, n_ + 1);
    A.topRows(n_) = J;
    A.row(n_) = ref.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_ + 1);
    rhs(n_) = 1.0;
    Eigen::VectorXd t = A.partialPivLu().solve(rhs);
    t.normalize();
    if (t.dot(ref) < 0.0) t = -t;
    return t;
  }

  struct Correction {
    Eigen::VectorXd y;
    Eval eval;
    int iterations{0};
  };

  /// Chord Newton with a frozen Jacobian. With a zero normal the frequency is fixed.
  std::optional<Correction> correct(Eigen::VectorXd y, const Eigen::MatrixXd& J,
                                    const Eigen::VectorXd& anchor, const Eigen::VectorXd& normal) {
    Eigen::MatrixXd A(n_ + 1, n_ + 1);
    A.topRows(n_) = J;
    const bool natural = normal.norm() == 0.0;
    if (natural) {
      A.row(n_).setZero();
      A(n_, n_) = 1.0;
    } else {
      A.row(n_) = normal.transpose();
    }
    const auto lu = A.partialPivLu();
    for (int it = 0; it <= s_.newton_max_iter; ++it) {
      Eval e = evaluate(y);
      if (!e.residual.allFinite()) return std::nullopt;
      if (e.residual.cwiseAbs().maxCoeff() <= s_.tol_b * s_.f_star) return Correction{y, std::move(e), it};
      if (it == s_.newton_max_iter) break;
      Eigen::VectorXd rhs(n_ + 1);
      rhs.head(n_) = -e.residual;
      rhs(n_) = natural ? 0.0 : -normal.dot(y - anchor);
      const Eigen::VectorXd dy = lu.solve(rhs);
      if (!dy.allFinite()) return std::nullopt;
      y += dy;
    }
    return std::nullopt;
  }

  BranchPoint point(const Eigen::VectorXd& y, const Eval& e) {
    BranchPoint p;
    const HarmonicVector ref = from_eigen(s_.h, y, n_);
    p.omega = y(n_) * scale_;
    p.a_star = std::hypot(ref.sine(1), ref.cosine(1));
    fill_point(p, e.m.response, e.m.force);
    p.total_amp = e.m.total_amp;
    ReferenceSignal rs{p.omega, ref.sine(1), ref.cosine(1), non_fundamental(ref)};
    p.invasiveness = invasiveness(rs, e.m.response);
    p.converged = true;
    if (s_.probe_stability && p.a1 > 0.0) {
      const TonalDrive drive{p.omega, rig_.phase(), rig_.plant().state().t, e.m.force};
      auto opt = s_.probe;
      opt.steps_per_period = s_.steps_per_period;
      p.open_loop_stable =
          control_off_stability_probe(rig_.plant(), drive, p.a1, opt).verdict == OpenLoopStability::stable;
    }
    p.wall_time = rig_.plant().state().t;
    return p;
  }

  Eigen::Index n() const { return n_; }
  double scale() const { return scale_; }
  Plant& plant() { return rig_.plant(); }

 private:
  const CbcFdSettings& s_;
  ClosedLoopRig rig_;
  Eigen::Index n_;
  double scale_;
  Eigen::VectorXd target_;
};

}  // namespace

Branch cbc_fd(Plant& plant, const CbcFdSettings& s) {
  check_positive(s.f_star, "cbc_fd: f_star");
  check_positive(s.omega_start, "cbc_fd: omega_start");
  check_positive(s.omega_end, "cbc_fd: omega_end");
  if (s.h < 1 || !(s.min_step > 0.0) || s.step < s.min_step || s.max_step < s.step || !(s.tol_b > 0.0) ||
      s.newton_max_iter < 1 || s.settle_periods < 0 || s.measure_periods < 1 || s.max_points < 1) {
    throw std::invalid_argument("cbc_fd: invalid settings");
  }
  Branch b;
  b.method = "cbc-fd";
  CbcFd fd(plant, s);
  const auto n = fd.n();
  const double dir = s.omega_end >= s.omega_start ? 1.0 : -1.0;
  const double lo = std::min(s.omega_start, s.omega_end);
  const double hi = std::max(s.omega_start, s.omega_end);

  // Start: with x the open-loop response to f* sin(theta), the reference
  // x* = x - f* cos(theta) / (kd omega) makes kd (x*' - x') = f* sin(theta).
  Eigen::VectorXd y(n + 1);
  {
    TonalRig ol(plant, s.steps_per_period);
    auto m = ol.hold(s.f_star, s.omega_start, 4 * s.settle_periods, s.measure_periods, s.h);
    m.response.cosine(1) -= s.f_star / (s.kd * s.omega_start);
    y.head(n) = to_eigen(m.response);
    y(n) = 1.0;
  }
  auto e0 = fd.evaluate(y);
  Eigen::MatrixXd J = fd.jacobian(y, e0.residual);
  auto start = fd.correct(y, J, y, Eigen::VectorXd::Zero(n + 1));
  if (!start) {
    b.truncated = true;
    b.diagnostic = "start point did not converge";
    return b;
  }
  y = start->y;
  b.points.push_back(fd.point(y, start->eval));
  J = fd.jacobian(y, start->eval.residual);
  Eigen::VectorXd ref = Eigen::VectorXd::Zero(n + 1);
  ref(n) = dir;
  Eigen::VectorXd t = fd.tangent(J, ref);

  double ds = s.step;
  while (static_cast<int>(b.points.size()) < s.max_points) {
    const Eigen::VectorXd pred = y + ds * t;
    auto c = fd.correct(pred, J, pred, t);
    const bool ok = c && (c->y - y).dot(t) > 0.0;
    if (!ok) {
      ds *= 0.5;
      if (ds < s.min_step) {
        b.truncated = true;
        b.diagnostic = "step underflow at omega = " + std::to_string(y(n) * fd.scale());
        break;
      }
      continue;
    }
    y = c->y;
    b.points.push_back(fd.point(y, c->eval));
    const double w = y(n) * fd.scale();
    if (w < lo || w > hi) break;
    J = fd.jacobian(y, c->eval.residual);
    t = fd.tangent(J, t);
    if (c->iterations <= 2) ds = std::min(ds * 1.5, s.max_step);
  }
  return b;
}

// ---------------------------------------------------------------------------
// SCBC

namespace {

/// Closed loop whose reference non-fundamentals follow an LMS estimate of
/// the response, sample by sample.
class AdaptiveLoop {
 public:
  AdaptiveLoop(Plant& plant, int h, double mu) : plant_(plant), lms_(h, mu, 1.0), h_(h) {}

  struct Result {
    LoopMeasurement m;
    HarmonicVector reference_nf;
  };

  /// Fixed omega and a*; dt from steps per period.
  Result run(double a_star, double omega, double kd, int steps, int settle, int measure) {
    const double dt = kTwoPi / (omega * steps);
    lms_.set_omega(omega);
    SensedOutput sensed = plant_.sense();
    Record rec;
    for (int period = 0; period < settle + measure; ++period) {
      for (int i = 0; i < steps; ++i) {
        const double th = phase_;
        lms_.update_at_phase(sensed.displacement, th, dt);
        const HarmonicVector nf = non_fundamental(lms_.weights());
        const double ref_vel = a_star * omega * std::cos(th) + nf.derivative(th, omega);
        const double u = differential_control(ref_vel, calibrated_velocity(plant_, sensed), kd);
        if (period >= settle) rec.push(sensed.displacement, u, th);
        sensed = plant_.step(u, dt);
        phase_ = std::fmod(th + omega * dt, kTwoPi);
      }
    }
    Result r;
    r.m.response = project_cycles(rec.x, rec.phase, h_);
    r.m.force = project_cycles(rec.u, rec.phase, h_);
    r.m.total_amp = last_period_peak(rec.x, static_cast<std::size_t>(steps));
    r.reference_nf = non_fundamental(lms_.weights());
    return r;
  }

  double phase() const { return phase_; }

 private:
  Plant& plant_;
  LmsFilter lms_;
  int h_;
  double phase_{0.0};
};

void probe_point(BranchPoint& p, Plant& plant, double phase, const StabilityProbeOptions& opt_in,
                 int steps) {
  if (!(p.a1 > 0.0)) return;
  const TonalDrive drive{p.omega, phase, plant.state().t, p.forcing};
  auto opt = opt_in;
  opt.steps_per_period = steps;
  p.open_loop_stable =
      control_off_stability_probe(plant, drive, p.a1, opt).verdict == OpenLoopStability::stable;
}

}  // namespace

Branch scbc(Plant& plant, const ScbcSettings& s) {
  check_positive(s.omega, "scbc: omega");
  if (s.a_star_grid.empty()) throw std::invalid_argument("scbc: empty a* grid");
  if (s.h < 1 || !(s.tol > 0.0) || s.max_iterations < 1 || s.settle_periods < 0 || s.measure_periods < 1 ||
      s.steps_per_period < 8) {
    throw std::invalid_argument("scbc: invalid settings");
  }
  Branch b;
  b.method = s.variant == ScbcVariant::picard ? "scbc-picard" : "scbc-adaptive";
  if (s.variant == ScbcVariant::picard) {
    ClosedLoopRig rig(plant, s.steps_per_period);
    HarmonicVector nf(s.h);
    for (double a_star : s.a_star_grid) {
      BranchPoint p;
      p.omega = s.omega;
      p.a_star = a_star;
      for (int it = 0; it < s.max_iterations; ++it) {
        HarmonicVector ref = nf;
        ref.sine(1) = a_star;
        const auto m = rig.run(ref, s.omega, s.kd, s.settle_periods, s.measure_periods);
        const HarmonicVector next = non_fundamental(m.response);
        const ReferenceSignal rs{s.omega, a_star, 0.0, nf};
        fill_point(p, m.response, m.force);
        p.total_amp = m.total_amp;
        p.invasiveness = invasiveness(rs, m.response);
        const double change = (next - nf).norm() / std::abs(a_star);
        nf = next;
        if (change < s.tol || a_star == 0.0) {
          p.converged = true;
          break;
        }
      }
      if (s.probe_stability) probe_point(p, plant, rig.phase(), s.probe, s.steps_per_period);
      p.wall_time = plant.state().t;
      b.points.push_back(std::move(p));
    }
    return b;
  }
  AdaptiveLoop loop(plant, s.h, default_lms_gain(s.omega, s.h, s.mu_bar));
  for (double a_star : s.a_star_grid) {
    BranchPoint p;
    p.omega = s.omega;
    p.a_star = a_star;
    for (int it = 0; it < s.max_iterations; ++it) {
      const auto r = loop.run(a_star, s.omega, s.kd, s.steps_per_period, s.settle_periods, s.measure_periods);
      fill_point(p, r.m.response, r.m.force);
      p.total_amp = r.m.total_amp;
      p.invasiveness = invasiveness(ReferenceSignal{s.omega, a_star, 0.0, r.reference_nf}, r.m.response);
      if (a_star == 0.0 || p.invasiveness.relative < s.tol) {
        p.converged = true;
        break;
      }
    }
    if (s.probe_stability) probe_point(p, plant, loop.phase(), s.probe, s.steps_per_period);
    p.wall_time = plant.state().t;
    b.points.push_back(std::move(p));
  }
  return b;
}

SurfaceGrid scbc_surface(Plant& plant, const ScbcSettings& settings, const std::vector<double>& omega_grid) {
  SurfaceGrid g(omega_grid, settings.a_star_grid);
  g.validate();
  for (std::size_t i = 0; i < omega_grid.size(); ++i) {
    ScbcSettings s = settings;
    s.omega = omega_grid[i];
    const Branch b = scbc(plant, s);
    for (std::size_t j = 0; j < b.points.size(); ++j) {
      const auto k = g.index(i, j);
      g.f[k] = b.points[j].f_meas;
      g.a[k] = b.points[j].a1;
      g.flag[k] = b.points[j].converged ? 0 : 1;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// PLL

std::vector<PllTarget> pll_phase_schedule(double forcing, double theta_begin, double theta_end, int n) {
  if (n < 1) throw std::invalid_argument("pll_phase_schedule: n must be positive");
  std::vector<PllTarget> out;
  for (int i = 0; i < n; ++i) {
    const double u = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out.push_back({forcing, theta_begin + u * (theta_end - theta_begin)});
  }
  return out;
}

std::vector<PllTarget> pll_forcing_schedule(const std::vector<double>& forcing, double theta_star) {
  std::vector<PllTarget> out;
  for (double f : forcing) out.push_back({f, theta_star});
  return out;
}

Branch pll(Plant& plant, const PllSettings& s, std::vector<PllPointDiagnostics>* diagnostics) {
  if (s.targets.empty()) throw std::invalid_argument("pll: no targets");
  if (s.gains.ki == 0.0) throw std::invalid_argument("pll: ki must be non-zero");
  check_positive(s.omega_start, "pll: omega_start");
  if (s.lock_harmonic < 1 || s.h < 1 || s.steps_per_period < 8 || s.measure_periods < 1 ||
      s.settle_periods < 0 || s.ramp_periods < 0 || !(s.omega_min > 0.0) || s.omega_max <= s.omega_min) {
    throw std::invalid_argument("pll: invalid settings");
  }
  const int k = s.lock_harmonic;
  const int h = std::max(s.h, k);
  PidOptions po;
  po.bias = s.omega_start;
  po.bandwidth = s.bandwidth > 0.0 ? s.bandwidth : s.omega_start / 20.0;
  po.integral_clamp = 10.0 * std::max(s.omega_start, s.omega_max < 1e5 ? s.omega_max : s.omega_start);
  PidController pid(s.gains, po);
  LmsFilter lms(h, default_lms_gain(s.omega_start, h, s.mu_bar), s.omega_start);

  Branch b;
  b.method = "pll";
  double omega = s.omega_start;
  double phi = 0.0;
  SensedOutput sensed = plant.sense();
  PllTarget current = s.targets.front();
  bool clamped = false;

  // One step at fixed dt with the PID closing the loop on harmonic k.
  auto step = [&](double dt, const PllTarget& tgt, Record* rec, std::vector<double>* omegas) {
    lms.set_mu(default_lms_gain(omega, h, s.mu_bar));
    lms.set_omega(omega);
    lms.update_at_phase(sensed.displacement, phi, dt);
    const auto& w = lms.weights();
    const double theta = std::atan2(w.cosine(k), w.sine(k));
    const auto out = pid.step(wrap_to_pi(theta - tgt.theta_star), dt);
    clamped = clamped || out.clamped;
    const double next = std::clamp(out.value, s.omega_min, s.omega_max);
    if (rec) rec->push(sensed.displacement, tgt.forcing * std::sin(phi), phi);
    if (omegas) omegas->push_back(omega);
    omega = next;
    const DriveSample d{tgt.forcing * std::sin(phi), tgt.forcing * std::sin(phi + 0.5 * omega * dt),
                        tgt.forcing * std::sin(phi + omega * dt)};
    sensed = plant.step(d, dt);
    phi += omega * dt;
  };

  for (const auto& target : s.targets) {
    const double dt = kTwoPi / (omega * s.steps_per_period);
    // Ramp the set point from the previous target.
    const PllTarget from = current;
    const double ramp_span = kTwoPi * s.ramp_periods;
    const double phi_ramp = phi;
    while (phi - phi_ramp < ramp_span) {
      const double u = (phi - phi_ramp) / ramp_span;
      const PllTarget tgt{from.forcing + u * (target.forcing - from.forcing),
                          from.theta_star + u * (target.theta_star - from.theta_star)};
      step(dt, tgt, nullptr, nullptr);
    }
    current = target;
    const double phi_settle = phi;
    while (phi - phi_settle < kTwoPi * s.settle_periods) step(dt, target, nullptr, nullptr);
    // Saturation counts only while measuring; the start-up transient may clamp.
    clamped = false;
    Record rec;
    std::vector<double> omegas;
    const double phi_meas = phi;
    while (phi - phi_meas < kTwoPi * s.measure_periods) step(dt, target, &rec, &omegas);

    for (auto& ph : rec.phase) ph = std::fmod(ph, kTwoPi);
    BranchPoint p;
    double sum = 0.0;
    for (double w : omegas) sum += w;
    p.omega = sum / static_cast<double>(omegas.size());
    const auto [lo_it, hi_it] = std::minmax_element(omegas.begin(), omegas.end());
    const HarmonicVector response = project_cycles(rec.x, rec.phase, h);
    fill_point(p, response, tonal(h, target.forcing));
    p.a_star = kNaN;
    p.total_amp = last_period_peak(rec.x, rec.x.size() / static_cast<std::size_t>(s.measure_periods));
    const double theta_k = amp_phase(response, k).phase;
    p.phase1 = theta_k;
    PllPointDiagnostics diag;
    diag.phase_error = wrap_to_pi(theta_k - target.theta_star);
    diag.omega_spread = (*hi_it - *lo_it) / p.omega;
    diag.integral_clamped = clamped;
    p.converged = std::abs(diag.phase_error) < s.lock_tol && diag.omega_spread < s.omega_spread_tol && !clamped;
    p.wall_time = plant.state().t;
    b.points.push_back(std::move(p));
    if (diagnostics) diagnostics->push_back(diag);
  }
  return b;
}

// ---------------------------------------------------------------------------
// RCT

SurfaceGrid rct(Plant& plant, const RctSettings& s, std::vector<RctCell>* cells) {
  if (s.omega_grid.empty() || s.a_star_grid.empty()) throw std::invalid_argument("rct: empty grid");
  if (!(s.tol > 0.0) || s.max_corrections < 0 || s.hold_periods < 1 || s.measure_periods < 1 ||
      s.measure_periods > s.hold_periods || s.steps_per_period < 8 || s.h < 1 || !(s.relaxation > 0.0) ||
      s.relaxation > 1.0) {
    throw std::invalid_argument("rct: invalid settings");
  }
  for (double a : s.a_star_grid) check_positive(a, "rct: target amplitude");
  SurfaceGrid g(s.omega_grid, s.a_star_grid);
  g.validate();
  if (cells) cells->assign(g.f.size(), {});
  TonalRig rig(plant, s.steps_per_period);
  const std::size_t na = s.a_star_grid.size();
  std::vector<double> drive(g.f.size(), 0.0);
  for (std::size_t i = 0; i < s.omega_grid.size(); ++i) {
    const double omega = s.omega_grid[i];
    for (std::size_t j = 0; j < na; ++j) {
      const double target = s.a_star_grid[j];
      double u;
      if (j > 0) {
        u = drive[g.index(i, j - 1)] * std::pow(target / s.a_star_grid[j - 1], s.relaxation);
      } else if (i > 0) {
        u = drive[g.index(i - 1, 0)];
      } else {
        u = s.initial_gain * target;
      }
      RctCell cell;
      double a1 = 0.0;
      for (;;) {
        double err;
        try {
          const auto m = rig.hold(u, omega, s.hold_periods - s.measure_periods, s.measure_periods, s.h);
          a1 = amp_phase(m.response, 1).amplitude;
          err = std::abs(a1 - target) / target;
        } catch (const PlantDivergence&) {
          plant.reset({0.0, 0.0, plant.state().t});
          a1 = kNaN;
          err = std::numeric_limits<double>::infinity();
          cell.rel_error = err;
          break;
        }
        cell.rel_error = err;
        if (err < s.tol) {
          cell.converged = true;
          break;
        }
        if (cell.corrections >= s.max_corrections || !(a1 > 0.0)) break;
        u *= std::pow(target / a1, s.relaxation);
        ++cell.corrections;
      }
      const auto idx = g.index(i, j);
      drive[idx] = u;
      g.f[idx] = u;
      g.a[idx] = a1;
      g.flag[idx] = cell.rel_error > s.flag_threshold ? 1 : 0;
      if (cells) (*cells)[idx] = cell;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ACBC

double sweep_law(SweepLaw law, double rate, double error) {
  switch (law) {
    case SweepLaw::constant:
      return rate;
    case SweepLaw::integral:
      return -rate * error;
    case SweepLaw::sign:
      return error > 0.0 ? -rate : (error < 0.0 ? rate : 0.0);
  }
  return 0.0;
}

void EllipseState::validate() const {
  if (!(d_omega > 0.0) || !(d_a > 0.0)) throw std::invalid_argument("EllipseState: semi-axes must be positive");
  if (!(sigma > 0.0 && sigma < 1.0)) throw std::invalid_argument("EllipseState: sigma must lie in (0, 1)");
  if (!(rho > 0.0)) throw std::invalid_argument("EllipseState: rho must be positive");
  if (rate == 0.0 || !std::isfinite(rate)) throw std::invalid_argument("EllipseState: rate must be non-zero");
}

double EllipseState::omega() const { return omega_n + d_omega * std::cos(alpha); }
double EllipseState::a_star() const { return a_n + d_a * std::sin(alpha); }

namespace {

/// Closed loop of the arclength method at a continuously integrated phase:
/// reference a* sin(phi) + P_nf(w_x) with w_x an LMS estimate of the response,
/// force error from a multi-harmonic LMS demodulator of the control signal.
class AcbcLoop {
 public:
  AcbcLoop(Plant& plant, const AcbcSettings& s, double dt)
      : plant_(plant), s_(s), dt_(dt), lms_x_(s.h, s.mu, 1.0), lms_u_(s.h, 1.0, 1.0) {
    sensed_ = plant_.sense();
  }

  double omega{0.0};
  double a_star{0.0};

  double force_error() const {
    const auto& w = lms_u_.weights();
    return std::hypot(w.sine(1), w.cosine(1)) - s_.f_star;
  }

  void step(Record* rec = nullptr) {
    const double th = phi_;
    lms_x_.update_at_phase(sensed_.displacement, th, dt_);
    const HarmonicVector nf = non_fundamental(lms_x_.weights());
    const double ref_vel = a_star * omega * std::cos(th) + nf.derivative(th, omega);
    const double u = differential_control(ref_vel, calibrated_velocity(plant_, sensed_), s_.kd);
    lms_u_.set_mu(default_lms_gain(omega, s_.h, s_.force_mu_bar));
    lms_u_.update_at_phase(u, th, dt_);
    if (rec) rec->push(sensed_.displacement, u, th);
    sensed_ = plant_.step(u, dt_);
    phi_ = std::fmod(th + omega * dt_, kTwoPi);
  }

  /// Hold for a number of forcing periods at the current omega.
  void wait(double periods) {
    const auto n = static_cast<long>(std::ceil(kTwoPi * periods / (omega * dt_)));
    for (long i = 0; i < n; ++i) step();
  }

  /// Record an integer number of forcing periods at fixed omega and a*.
  LoopMeasurement measure(int periods) {
    Record rec;
    double travelled = 0.0;
    while (travelled + omega * dt_ <= kTwoPi * periods + 1e-12) {
      step(&rec);
      travelled += omega * dt_;
    }
    LoopMeasurement m;
    m.response = project_cycles(rec.x, rec.phase, s_.h);
    m.force = project_cycles(rec.u, rec.phase, s_.h);
    m.total_amp = last_period_peak(rec.x, rec.x.size() / static_cast<std::size_t>(periods));
    return m;
  }

  HarmonicVector reference_nf() const { return non_fundamental(lms_x_.weights()); }
  double phase() const { return phi_; }
  double dt() const { return dt_; }
  Plant& plant() { return plant_; }

 private:
  Plant& plant_;
  const AcbcSettings& s_;
  double dt_;
  LmsFilter lms_x_;
  LmsFilter lms_u_;
  SensedOutput sensed_{};
  double phi_{0.0};
};

}  // namespace

Branch acbc(Plant& plant, const AcbcSettings& s) {
  check_positive(s.f_star, "acbc: f_star");
  check_positive(s.omega_start, "acbc: omega_start");
  check_positive(s.mu, "acbc: mu");
  check_positive(s.force_mu_bar, "acbc: force_mu_bar");
  if (s.h < 1 || s.n_points < 1 || s.t_steady < 0.0 || s.steps_per_period < 8 || s.max_retries < 0 ||
      s.verify_periods < 1 || s.omega_max <= s.omega_min) {
    throw std::invalid_argument("acbc: invalid settings");
  }
  EllipseState e = s.ellipse;
  e.validate();
  const double omega_dt = s.omega_dt > 0.0 ? s.omega_dt : s.omega_start;
  const double dt = kTwoPi / (omega_dt * s.steps_per_period);
  AcbcLoop loop(plant, s, dt);
  const double tol = s.ellipse.rho * s.f_star;
  const double tight = s.ellipse.sigma * tol;

  Branch b;
  b.method = "acbc";

  auto record = [&](bool converged) {
    const auto m = loop.measure(s.verify_periods);
    BranchPoint p;
    p.omega = loop.omega;
    p.a_star = loop.a_star;
    fill_point(p, m.response, m.force);
    p.total_amp = m.total_amp;
    p.invasiveness = invasiveness(ReferenceSignal{loop.omega, loop.a_star, 0.0, loop.reference_nf()}, m.response);
    p.converged = converged && std::abs(p.f_meas - s.f_star) <= tol;
    if (s.probe_stability) probe_point(p, loop.plant(), loop.phase(), s.probe, s.steps_per_period);
    p.wall_time = loop.plant().state().t;
    return p;
  };

  // Start: adjust a* at fixed omega until the force matches.
  loop.omega = s.omega_start;
  loop.a_star = std::max(0.0, s.a_start);
  loop.wait(s.t_steady);
  const double max_search = 1e3 * std::max(s.t_steady, 1.0) * kTwoPi / s.omega_start;
  double rate = std::abs(e.rate);
  BranchPoint start;
  for (int attempt = 0;; ++attempt) {
    double elapsed = 0.0;
    while (std::abs(loop.force_error()) > tight && elapsed < max_search) {
      loop.a_star = std::max(0.0, loop.a_star - rate * e.d_a * loop.force_error() * dt);
      loop.step();
      elapsed += dt;
    }
    loop.wait(s.t_steady);
    start = record(true);
    if (start.converged || attempt >= s.max_retries) break;
    rate *= 0.5;
  }
  b.points.push_back(start);
  if (!start.converged) {
    b.truncated = true;
    b.diagnostic = "start point did not converge";
    return b;
  }

  e.omega_n = loop.omega;
  e.a_n = loop.a_star;
  e.alpha = e.rate > 0.0 ? 0.0 : std::numbers::pi;
  while (static_cast<int>(b.points.size()) < s.n_points) {
    // Prediction with the previous alpha.
    loop.omega = e.omega();
    loop.a_star = e.a_star();
    loop.wait(s.t_steady);
    double r = e.rate;
    BranchPoint p;
    bool accepted = false;
    for (int retry = 0; retry <= s.max_retries; ++retry) {
      double swept = 0.0;
      while (std::abs(loop.force_error()) > tight) {
        const double d_alpha = sweep_law(e.law, r, loop.force_error()) * dt;
        e.alpha += d_alpha;
        swept += std::abs(d_alpha);
        if (swept > kTwoPi) {
          b.truncated = true;
          b.diagnostic = "no intersection: correction swept a full turn around omega = " +
                         std::to_string(e.omega_n);
          return b;
        }
        loop.omega = e.omega();
        loop.a_star = e.a_star();
        if (!(loop.omega > 0.0)) {
          b.truncated = true;
          b.diagnostic = "ellipse crossed zero frequency";
          return b;
        }
        loop.step();
      }
      loop.wait(s.t_steady);
      p = record(true);
      if (p.converged) {
        accepted = true;
        break;
      }
      r *= 0.5;
    }
    if (!accepted) {
      p.converged = false;
      b.points.push_back(std::move(p));
      b.truncated = true;
      b.diagnostic = "force tolerance not met after retries";
      return b;
    }
    b.points.push_back(std::move(p));
    e.omega_n = loop.omega;
    e.a_n = loop.a_star;
    if (loop.omega < s.omega_min || loop.omega > s.omega_max) break;
  }
  return b;
}

}  // namespace contlab
