#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "contlab/control.hpp"
#include "contlab/hbm.hpp"

using namespace contlab;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

HbmBranch duffing_f3_branch(int h = 9) {
  HbmProblem p;
  p.plant = DimensionlessDuffing{0.05, 0.0}.to_params();
  p.h = h;
  p.forcing_amp = 3.0;
  ContinuationSettings s;
  s.step = 0.05;
  const auto start = linear_start(p, 1.5, s);
  return continue_branch(p, s, start.coeffs, start.omega, {1.5, 7.0});
}

// Branch points strictly between the two primary folds (the open-loop-unstable segment).
std::vector<const HbmPoint*> middle_segment(const HbmBranch& b) {
  std::vector<const HbmPoint*> out;
  std::vector<std::size_t> folds;
  for (auto f : b.folds) {
    if (b.points[f].omega > 1.5) folds.push_back(f);
  }
  REQUIRE(folds.size() == 2);
  for (std::size_t i = folds[0] + 1; i <= folds[1]; ++i) out.push_back(&b.points[i]);
  return out;
}

TonalDrive sine_drive(double f, double omega) {
  TonalDrive d;
  d.omega = omega;
  d.coeffs = HarmonicVector(1);
  d.coeffs.sine(1) = f;
  return d;
}

// Closed loop u = f sin(wt) + kd (x*' - v) from the state s0 over n periods;
// returns the control corrections kd (x*' - v) sampled at every step.
std::vector<double> run_closed_loop(const DuffingParams& params, const HarmonicVector& orbit,
                                    double omega, double f, double kd, PlantState s0, int periods,
                                    int steps = 1000) {
  const double dt = 2.0 * kPi / omega / steps;
  Plant plant(params);
  plant.reset(s0);
  ReferenceSignal ref;
  ref.omega = omega;
  ref.a_star = orbit.sine(1);
  ref.b_star = orbit.cosine(1);
  ref.nonfundamental = non_fundamental(orbit);
  std::vector<double> corrections;
  for (int i = 0; i < periods * steps; ++i) {
    const double t = plant.state().t;
    const double u = differential_control(synth_reference_velocity(ref, t), plant.sense().velocity, kd);
    corrections.push_back(u);
    plant.step({f * std::sin(omega * t) + u, f * std::sin(omega * (t + 0.5 * dt)) + u,
                f * std::sin(omega * (t + dt)) + u},
               dt);
  }
  return corrections;
}

}  // namespace

TEST_CASE("pid_step examples") {
  SECTION("zero error history gives the bias") {
    PidState st;
    const auto out = pid_step(st, 0.0, 0.01, {1.0, 2.0, 3.0}, {.bias = 4.2});
    CHECK(out.value == 4.2);
    CHECK_FALSE(out.clamped);
  }
  SECTION("constant error grows the integral term linearly with slope ki e") {
    PidState st;
    const PidGains g{0.0, 0.5, 0.0};
    const double e = 0.3, dt = 0.01;
    std::vector<double> out;
    for (int i = 0; i < 100; ++i) out.push_back(pid_step(st, e, dt, g, {}).value);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK((out[i] - out[i - 1]) / dt == Approx(0.5 * e));
  }
  SECTION("first-difference derivative, zero on the first call") {
    PidState st;
    const PidGains g{0.0, 0.0, 1.0};
    CHECK(pid_step(st, 1.0, 0.1, g, {}).value == 0.0);
    CHECK(pid_step(st, 1.5, 0.1, g, {}).value == Approx(5.0));
  }
  SECTION("derivative smoothing pole at ten times the bandwidth") {
    PidState st;
    const PidGains g{0.0, 0.0, 1.0};
    const PidOptions o{.bias = 0.0, .bandwidth = 1.0};
    pid_step(st, 0.0, 0.1, g, o);
    const double alpha = 1.0 / (1.0 + 1.0);
    CHECK(pid_step(st, 1.0, 0.1, g, o).value == Approx(alpha * 10.0));
  }
  SECTION("integral clamp bounds ki times the integral and flags it") {
    PidState st;
    const PidGains g{0.0, 2.0, 0.0};
    const PidOptions o{.integral_clamp = 1.0};
    PidOutput out;
    for (int i = 0; i < 100; ++i) out = pid_step(st, 1.0, 0.1, g, o);
    CHECK(out.clamped);
    CHECK(out.value == Approx(1.0));
  }
  SECTION("non-positive dt") {
    PidState st;
    CHECK_THROWS_AS(pid_step(st, 1.0, 0.0, {}, {}), std::invalid_argument);
  }
}

TEST_CASE("PI loop with ki != 0 drives a steady error to zero") {
  // First-order plant y' = -y + u with a constant disturbance; set point 1.
  PidController pid({0.8, 1.5, 0.0}, {});
  double y = 0.0;
  const double dt = 1e-3;
  double e = 1.0;
  for (int i = 0; i < 40000; ++i) {
    e = 1.0 - y;
    const double u = pid.step(e, dt).value;
    y += dt * (-y + u - 0.4);
  }
  CHECK(std::abs(e) < 1e-6);
}

TEST_CASE("differential_control examples") {
  CHECK(differential_control(0.7, 0.7, 2.0) == 0.0);
  CHECK(differential_control(0.5, 0.0, 2.0) == Approx(1.0));
}

TEST_CASE("synth_reference examples") {
  SECTION("zero non-fundamental and b* = 0 give a pure sine") {
    ReferenceSignal r{1.7, 0.4, 0.0, HarmonicVector(5)};
    for (double t : {0.0, 0.3, 1.1, 4.2}) CHECK(synth_reference(r, t) == Approx(0.4 * std::sin(1.7 * t)));
  }
  SECTION("at wt = 0 the cosine part contributes b*") {
    ReferenceSignal r{2.0, 0.3, 1.0, HarmonicVector(3)};
    CHECK(synth_reference(r, 0.0) == Approx(1.0));
  }
  SECTION("velocity is the time derivative") {
    HarmonicVector nf(4);
    nf.constant() = 0.2;
    nf.sine(3) = 0.05;
    nf.cosine(2) = -0.1;
    ReferenceSignal r{1.3, 0.6, -0.2, nf};
    const double t = 0.77, eps = 1e-6;
    const double fd = (synth_reference(r, t + eps) - synth_reference(r, t - eps)) / (2 * eps);
    CHECK(synth_reference_velocity(r, t) == Approx(fd).epsilon(1e-7));
  }
  SECTION("fundamental content in the non-fundamental part is rejected") {
    HarmonicVector nf(3);
    nf.sine(1) = 0.1;
    CHECK_THROWS_AS((ReferenceSignal{1.0, 1.0, 0.0, nf}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ReferenceSignal{0.0, 1.0, 0.0, HarmonicVector(3)}.validate()), std::invalid_argument);
  }
  SECTION("non-fundamental copied from the response leaves a mono-harmonic difference") {
    const auto b = duffing_f3_branch();
    const auto& pt = b.points[b.points.size() / 3];
    ReferenceSignal r{pt.omega, 1.05 * pt.coeffs.sine(1), 0.9 * pt.coeffs.cosine(1),
                      non_fundamental(pt.coeffs)};
    const int n = 512;
    std::vector<double> diff, phases;
    for (int i = 0; i < n; ++i) {
      const double th = 2.0 * kPi * i / n;
      diff.push_back(synth_reference_at_phase(r, th) - pt.coeffs.evaluate(th));
      phases.push_back(th);
    }
    const auto d = project_cycles(diff, phases, pt.coeffs.harmonics());
    const double fund = std::hypot(d.sine(1), d.cosine(1));
    CHECK(non_fundamental(d).norm() < 0.01 * fund);
  }
}

TEST_CASE("invasiveness examples") {
  HarmonicVector nf(5);
  nf.constant() = 0.1;
  nf.sine(3) = 0.2;
  ReferenceSignal r{1.0, 2.0, 0.0, nf};
  SECTION("measured equal to reference on non-fundamentals gives zero") {
    HarmonicVector m = nf;
    m.sine(1) = 1.9;
    m.cosine(1) = 0.4;
    const auto rep = invasiveness(r, m);
    CHECK(rep.residual_norm == 0.0);
    CHECK(rep.relative == 0.0);
  }
  SECTION("norm over constant and higher harmonics relative to a*") {
    HarmonicVector m(7);
    m.cosine(6) = 0.2;
    const auto rep = invasiveness(r, m);
    CHECK(rep.residual_norm == Approx(std::sqrt(0.01 + 0.04 + 0.04)));
    CHECK(rep.relative == Approx(rep.residual_norm / 2.0));
  }
  SECTION("zero reference amplitude leaves the relative figure undefined") {
    CHECK(std::isnan(invasiveness(ReferenceSignal{1.0, 0.0, 0.0, nf}, HarmonicVector(5)).relative));
  }
}

TEST_CASE("control_off_stability_probe examples") {
  const auto b = duffing_f3_branch();
  const auto params = b.problem.plant;
  auto probe = [&](const HbmPoint& pt) {
    Plant plant(params);
    plant.reset({pt.coeffs.evaluate(0.0), pt.coeffs.derivative(0.0, pt.omega), 0.0});
    return control_off_stability_probe(plant, sine_drive(3.0, pt.omega),
                                       amp_phase(pt.coeffs, 1).amplitude);
  };
  SECTION("stable low branch") {
    const auto it = std::find_if(b.points.rbegin(), b.points.rend(),
                                 [](const HbmPoint& p) { return p.omega > 3.0 && p.omega < 4.0; });
    REQUIRE(it != b.points.rend());
    REQUIRE(it->stable);
    CHECK(probe(*it).verdict == OpenLoopStability::stable);
  }
  SECTION("middle branch between the folds") {
    const auto mid = middle_segment(b);
    const auto* pt = mid[mid.size() / 2];
    REQUIRE_FALSE(pt->stable);
    CHECK(probe(*pt).verdict == OpenLoopStability::unstable);
  }
  SECTION("linear plant") {
    const DuffingParams lin{1.0, 0.1, 1.0, 0.0, 0.0};
    for (double w : {0.5, 1.0, 2.0}) {
      const auto frf = std::complex<double>(1.0 - w * w, 0.1 * w);
      const auto x = 1.0 / frf;
      // x(t) = Im(x e^{iwt}) = |x| sin(wt + arg x).
      Plant plant(lin);
      plant.reset({std::abs(x) * std::sin(std::arg(x)), w * std::abs(x) * std::cos(std::arg(x)), 0.0});
      CHECK(control_off_stability_probe(plant, sine_drive(1.0, w), std::abs(x)).verdict ==
            OpenLoopStability::stable);
    }
  }
  SECTION("invalid amplitude") {
    Plant plant(params);
    CHECK_THROWS_AS(control_off_stability_probe(plant, sine_drive(1.0, 1.0), 0.0), std::invalid_argument);
  }
}

TEST_CASE("control is non-invasive on the open-loop orbit") {
  const auto b = duffing_f3_branch(25);
  const auto mid = middle_segment(b);
  const auto& pt = *mid[mid.size() / 2];
  const PlantState s0{pt.coeffs.evaluate(0.0), pt.coeffs.derivative(0.0, pt.omega), 0.0};
  const auto u = run_closed_loop(b.problem.plant, pt.coeffs, pt.omega, 3.0, 2.0, s0, 1, 4000);
  double ms = 0.0;
  for (double x : u) ms += x * x;
  CHECK(std::sqrt(ms / static_cast<double>(u.size())) < 1e-9);
}

TEST_CASE("control correction is Lipschitz in the state perturbation") {
  const auto b = duffing_f3_branch(15);
  const auto mid = middle_segment(b);
  const auto& pt = *mid[mid.size() / 2];
  const double amp = amp_phase(pt.coeffs, 1).amplitude;
  std::vector<double> ratios;
  for (double rel : {1e-4, 1e-3, 1e-2}) {
    const double eps = rel * amp;
    const PlantState s0{pt.coeffs.evaluate(0.0) + eps, pt.coeffs.derivative(0.0, pt.omega), 0.0};
    const auto u = run_closed_loop(b.problem.plant, pt.coeffs, pt.omega, 3.0, 2.0, s0, 5);
    double peak = 0.0;
    for (double x : u) peak = std::max(peak, std::abs(x));
    ratios.push_back(peak / eps);
  }
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(std::isfinite(hi));
  CHECK(hi < 1.5 * lo);
}

TEST_CASE("larger derivative gain stabilizes more of the middle branch") {
  const auto b = duffing_f3_branch(15);
  const auto mid = middle_segment(b);
  std::size_t n_low = 0, n_high = 0;
  for (const auto* pt : mid) {
    const bool s_low = floquet_multipliers(pt->coeffs, pt->omega, b.problem.plant, {.feedback_kd = 0.2}).stable;
    const bool s_high = floquet_multipliers(pt->coeffs, pt->omega, b.problem.plant, {.feedback_kd = 2.0}).stable;
    if (s_low) CHECK(s_high);
    n_low += s_low;
    n_high += s_high;
  }
  CHECK(n_high > n_low);
  CHECK(n_high == mid.size());
}
