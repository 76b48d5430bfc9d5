#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "contlab/io.hpp"
#include "contlab/oracle.hpp"

using namespace contlab;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

// Frozen outputs of adaptive time integration (scipy DOP853): the two attractors
// of q'' + 0.1 q' + q + q^3 = 3 sin(2.5 t).
constexpr double kAttractorLow = 0.60191443;
constexpr double kAttractorHigh = 2.82318626;
constexpr double kTotalLow = 0.60291257;
constexpr double kTotalHigh = 2.95997231;

}  // namespace

TEST_CASE("linear_frf examples") {
  auto r = linear_frf(1.0, 0.1, 4.0, 2.0, 1e-9);
  CHECK(r.amplitude == Approx(0.5));
  CHECK(r.phase == Approx(0.0).margin(1e-9));
  r = linear_frf(2.0, 0.3, 8.0, 1.0, 2.0);
  CHECK(r.phase == Approx(-kPi / 2.0));
  r = linear_frf(1.0, 0.1, 1.0, 1.0, 1.0);
  CHECK(r.amplitude == Approx(10.0));
  r = linear_frf(1.0, 0.1, 1.0, 1.0, 10.0);
  CHECK(r.phase < -kPi / 2.0);
  CHECK_THROWS_AS(linear_frf(0.0, 0.1, 1.0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("linear_multipliers") {
  const auto z = linear_multipliers(1.0, 0.0, 4.0, kPi);
  for (const auto& x : z) CHECK(std::abs(x) == Approx(1.0));
  const auto over = linear_multipliers(1.0, 5.0, 1.0, 1.0);
  CHECK(over[0].imag() == 0.0);
  CHECK(std::abs(over[0] * over[1]) == Approx(std::exp(-5.0)));
}

TEST_CASE("settle_and_measure examples") {
  SettleOptions opt;
  opt.h = 5;
  SECTION("linear plant reproduces the analytic FRF") {
    const DuffingParams p{1.0, 0.2, 1.0, 0.0, 0.0};
    for (double w : {0.5, 1.0, 1.7}) {
      const auto m = settle_and_measure(p, 1.0, w, {}, 80, 10, opt);
      const auto frf = linear_frf(1.0, 0.2, 1.0, 1.0, w);
      CHECK(m.period_multiple == 1);
      CHECK(m.fundamental_amp == Approx(frf.amplitude).epsilon(0.002));
      CHECK(m.phase == Approx(frf.phase).margin(0.002));
    }
  }
  SECTION("two initial conditions reveal the bistability") {
    const DuffingParams p{1.0, 0.1, 1.0, 0.0, 1.0};
    const auto lo = settle_and_measure(p, 3.0, 2.5, {0.0, 0.0, 0.0}, 300, 10, opt);
    const auto hi = settle_and_measure(p, 3.0, 2.5, {3.0, 0.0, 0.0}, 300, 10, opt);
    CHECK(lo.fundamental_amp == Approx(kAttractorLow).epsilon(1e-4));
    CHECK(hi.fundamental_amp == Approx(kAttractorHigh).epsilon(1e-4));
    CHECK(lo.total_amp == Approx(kTotalLow).epsilon(1e-4));
    CHECK(hi.total_amp == Approx(kTotalHigh).epsilon(1e-4));
  }
  SECTION("zero forcing on a damped plant decays to zero") {
    const DuffingParams p{1.0, 0.5, 1.0, 0.0, 1.0};
    const auto m = settle_and_measure(p, 0.0, 1.0, {0.5, 0.0, 0.0}, 100, 5, opt);
    CHECK(m.coeffs.norm() < 1e-12);
    CHECK(m.period_multiple == 1);
  }
  SECTION("invalid arguments") {
    const DuffingParams p{1.0, 0.5, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS(settle_and_measure(p, 1.0, 1.0, {}, 0, 5, opt), std::invalid_argument);
    CHECK_THROWS_AS(settle_and_measure(p, 1.0, 0.0, {}, 5, 5, opt), std::invalid_argument);
  }
  SECTION("divergence propagates") {
    const DuffingParams p{1.0, -0.5, 1.0, 0.0, 0.0};
    CHECK_THROWS_AS(settle_and_measure(p, 1.0, 1.0, {1.0, 0.0, 0.0}, 200, 5, opt), PlantDivergence);
  }
}

TEST_CASE("detect_period_multiple") {
  std::vector<std::pair<double, double>> one(12, {0.3, -0.2});
  CHECK(detect_period_multiple(one, 0.1, 5, 0.999) == 1);
  std::vector<std::pair<double, double>> three;
  for (int j = 0; j < 15; ++j) three.push_back({std::cos(2.0 * kPi * j / 3.0), std::sin(2.0 * kPi * j / 3.0)});
  CHECK(detect_period_multiple(three, 1.0, 5, 0.999) == 3);
  CHECK(detect_period_multiple({}, 1.0, 5, 0.999) == 1);
}

TEST_CASE("subharmonic orbits are classified by their period multiple") {
  // Weakly damped hardening oscillator driven near three times its natural
  // frequency: the 1:3 subharmonic coexists with the small forced response.
  const DuffingParams p{1.0, 0.02, 1.0, 0.0, 1.0};
  SettleOptions opt;
  opt.h = 3;
  opt.steps_per_period = 300;
  bool found = false;
  for (double q0 : {0.5, 1.0, 1.5, 2.0, 2.5}) {
    const auto m = settle_and_measure(p, 3.0, 3.5, {q0, 0.0, 0.0}, 600, 30, opt);
    if (m.period_multiple == 3) {
      found = true;
      CHECK(m.coeffs.harmonics() == 9);
      CHECK(amp_phase(m.coeffs, 1).amplitude > amp_phase(m.coeffs, 3).amplitude);
    } else {
      CHECK(m.period_multiple == 1);
    }
  }
  CHECK(found);
}

TEST_CASE("fixture store round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "contlab_fixture_test";
  std::filesystem::remove_all(dir);
  FixtureStore store(dir);
  const std::string digest = digest_hex("scenario");
  CHECK_FALSE(store.exists("frf", digest));
  store.save("frf", digest, {"omega", "amp"}, {{0.1, 1.0 / 3.0}, {2.5, -1e-300}});
  CHECK(store.exists("frf", digest));
  const auto rows = store.load("frf", digest);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == 1.0 / 3.0);
  CHECK(rows[1][1] == -1e-300);
  CHECK_THROWS_AS(store.load("other", digest), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("io helpers") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(digest_hex("a") == "af63dc4c8601ec8c");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
  CHECK(format_double(-2.0) == "-2");
  CHECK(format_double(NAN) == "nan");
  CHECK(split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(split_csv_line("a,") == std::vector<std::string>{"a", ""});
}
