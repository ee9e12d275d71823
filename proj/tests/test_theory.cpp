#include "doctest.h"

#include <cmath>
#include <tuple>

#include "muonlab/errors.hpp"
#include "muonlab/linalg.hpp"
#include "muonlab/theory.hpp"

using namespace muonlab;
using namespace muonlab::theory;

namespace {

/// Fine-step RK4 for σ̇ = 2σ(s − σ), written out here so it shares nothing with the library.
double integrate_logistic(double s, double sigma0, double t_end, int steps = 100000) {
  const double h = t_end / steps;
  const auto f = [s](double x) { return 2.0 * x * (s - x); };
  double x = sigma0;
  for (int i = 0; i < steps; ++i) {
    const double k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

SpectrumSpec spec(Vector s, double init = 1e-2) { return {std::move(s), init}; }

}  // namespace

TEST_CASE("gd trajectory examples") {
  CHECK(gd_sigma_trajectory(spec({1.0}, 1.0), 0, 3.7) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(gd_sigma_trajectory(spec({1.0}, 0.01), 0, 1e6) - 1.0) < 1e-12);
  CHECK(std::abs(gd_sigma_trajectory(spec({2.0}, 0.01), 0, 1.0) - integrate_logistic(2.0, 0.01, 1.0)) < 1e-8);
  CHECK(logistic_sigma(0.0, 0.3, 5.0) == 0.3);
  CHECK(logistic_sigma(2.0, 0.0, 5.0) == 0.0);
}

TEST_CASE("gd trajectory satisfies its ODE and is monotone") {
  const auto sp = spec({3.0, 1.0, 0.25}, 1e-3);
  const double h = 1e-6;
  for (std::size_t k = 0; k < sp.size(); ++k) {
    const double s = sp.singular_values[k];
    double prev = 0.0;
    for (double t = 0.0; t < 20.0; t += 0.173) {
      const double x = gd_sigma_trajectory(sp, k, t);
      CHECK(x >= prev);
      prev = x;
      if (t > h) {
        const double deriv = (gd_sigma_trajectory(sp, k, t + h) - gd_sigma_trajectory(sp, k, t - h)) / (2 * h);
        CHECK(std::abs(deriv - 2 * x * (s - x)) < 1e-6);
      }
    }
  }
}

TEST_CASE("gd learn time") {
  const double s = 3.0, s0 = 1e-5;
  CHECK(gd_learn_time(spec({s}, s0), 0, 0.5) == doctest::Approx(std::log(s / s0 - 1) / (2 * s)).epsilon(1e-14));
  CHECK(gd_learn_time(spec({2.0}, 0.99 * 2.0), 0, 0.99) == doctest::Approx(0.0));
  CHECK_THROWS_AS(gd_learn_time(spec({2.0}), 0, 0.0), InvalidInput);
  CHECK_THROWS_AS(gd_learn_time(spec({2.0}), 0, 1.0), InvalidInput);

  // Round trip: the trajectory evaluated at the learn time gives fraction·s.
  for (double f : {0.1, 0.5, 0.9, 0.99})
    CHECK(gd_sigma_trajectory(spec({1.7}, 1e-4), 0, gd_learn_time(spec({1.7}, 1e-4), 0, f)) ==
          doctest::Approx(f * 1.7).epsilon(1e-12));

  // Doubling s: closed-form identity 4s·t(2s) = 2s·t(s) + ln((2s/σ₀−1)/(s/σ₀−1)) at f = ½, plus ordering.
  for (double sv : {0.5, 1.0, 4.0}) {
    const double t1 = gd_learn_time(spec({sv}, s0), 0, 0.5);
    const double t2 = gd_learn_time(spec({2 * sv}, s0), 0, 0.5);
    CHECK(4 * sv * t2 == doctest::Approx(2 * sv * t1 + std::log((2 * sv / s0 - 1) / (sv / s0 - 1))).epsilon(1e-12));
    CHECK(t2 < t1);
  }
}

TEST_CASE("spectral trajectory examples and properties") {
  const auto sp = spec({4.0, 1.0}, 1e-3);
  CHECK(spectral_sigma_trajectory(sp, 0, 0.0) == 0.0);
  CHECK(spectral_sigma_trajectory(sp, 0, 1.5) == doctest::Approx(2.25));
  CHECK(spectral_sigma_trajectory(sp, 0, 3.0) == 4.0);
  CHECK(spectral_learn_time(sp, 0) == doctest::Approx(2.0));
  CHECK(spectral_learn_time(sp, 1) == doctest::Approx(1.0));
  CHECK(spectral_learn_time(sp, 0, 0.5) == doctest::Approx(1.5));
  CHECK(spectral_learn_time(sp, 1, 3.0) == 0.0);
  double prev = 0.0;
  for (double t = 0.0; t < 4.0; t += 0.01) {
    const double x = spectral_sigma_trajectory(sp, 0, t);
    CHECK(x >= prev);
    CHECK(x - prev < 0.05);  // no jumps at the sampling resolution
    prev = x;
    if (t >= 2.0) CHECK(x == 4.0);
  }
}

TEST_CASE("spectral phase schedule") {
  auto phases = spectral_phase_schedule(spec({9.0}));
  REQUIRE(phases.size() == 1);
  CHECK(phases[0].exit_time == doctest::Approx(3.0));

  phases = spectral_phase_schedule(spec({4.0, 1.0}));
  REQUIRE(phases.size() == 2);
  CHECK(phases[0].active_count == 2);
  CHECK(phases[0].exit_time == doctest::Approx(1.0));
  CHECK(phases[1].active_count == 1);
  CHECK(phases[1].active == std::vector<std::size_t>{0});
  CHECK(phases[1].entry_time == doctest::Approx(1.0));
  CHECK(phases[1].exit_time == doctest::Approx(2.0));

  phases = spectral_phase_schedule(spec({4.0, 4.0}));
  REQUIRE(phases.size() == 1);
  CHECK(phases[0].active_count == 2);
  CHECK(phases[0].exit_time == doctest::Approx(2.0));
}

TEST_CASE("gd phase schedule and order reversal") {
  const auto gd = gd_phase_schedule(spec({2.0, 1.0}, 1e-4), 0.99);
  REQUIRE(gd.size() == 2);
  CHECK(gd[0].mode == 0);
  CHECK(gd[0].time < gd[1].time);

  const auto eq = gd_phase_schedule(spec({1.5, 1.5}, 1e-4));
  CHECK(eq[0].time == doctest::Approx(eq[1].time).epsilon(1e-15));

  const auto sp = spec({8.0, 5.0, 2.0, 0.5}, 1e-4);
  const auto g = gd_phase_schedule(sp);
  const auto s = spectral_phase_schedule(sp);
  // GD saturates in decreasing-s order, the spectral flow in increasing-s order.
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i].mode == i);
  REQUIRE(s.size() == 4);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].active_count == 4 - i);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].exit_time > s[i - 1].exit_time);
}

TEST_CASE("gd saddle point is the rank-r truncation") {
  const Matrix a{{3, 0, 0}, {0, 0, 1}};
  const Matrix w1 = gd_saddle_point(a, 1);
  CHECK(max_abs_difference(w1, Matrix{{3, 0, 0}, {0, 0, 0}}) < 1e-14);
  CHECK(max_abs_difference(gd_saddle_point(a, 2), a) < 1e-14);
  CHECK(gd_saddle_point(a, 0).is_zero());
}

TEST_CASE("spectrum validation") {
  CHECK_THROWS_AS(spec({1.0, 2.0}).validate(), InvalidInput);
  CHECK_THROWS_AS(spec({1.0}, 0.0).validate(), InvalidInput);
  CHECK_THROWS_AS(spec({1.0}, 2.0).validate(), InvalidInput);
  CHECK_NOTHROW(spec({2.0, 1.0}).validate());
}

TEST_CASE("gating fixed points") {
  GatingParams p;
  p.pathways = 7;
  p.sources = 7;
  p.s_stat = 2.0;
  p.d_stat = 0.5;
  auto [d1, d2] = gating_derivatives(p, 0.0, 0.0);
  CHECK(std::abs(d1) < 1e-12);
  CHECK(std::abs(d2) < 1e-12);
  // B1 = 0 is invariant for any B2.
  std::tie(d1, d2) = gating_derivatives(p, 0.0, 3.0);
  CHECK(std::abs(d1) < 1e-12);
  CHECK(std::abs(d2) < 1e-12);
  // Equilibrium manifold B2·B1² = S/D.
  for (double b1 : {0.5, 1.0, 2.0}) {
    const double b2 = p.equilibrium() / (b1 * b1);
    std::tie(d1, d2) = gating_derivatives(p, b1, b2);
    CHECK(std::hypot(d1, d2) < 1e-12);
  }
  p.b1_0 = 0.0;
  p.b2_0 = 0.0;
  const auto traj = gating_race_integrate(p, 1e-2, 5.0);
  for (const auto& st : traj) {
    CHECK(st.b1 == 0.0);
    CHECK(st.b2 == 0.0);
  }
}

TEST_CASE("gating integrator matches a fine-step oracle") {
  GatingParams p;
  p.pathways = 7;
  p.sources = 7;
  p.b1_0 = 0.05;
  p.b2_0 = 0.05;
  const auto traj = gating_race_integrate(p, 1e-3, 10.0);
  REQUIRE(traj.size() > 1);
  // Forward Euler at a much smaller step, independent of the library's RK4.
  const double h = 1e-6;
  const double c1 = std::sqrt(p.pathways) / (p.sources * p.sources), c2 = p.pathways / (p.sources * p.sources);
  double b1 = p.b1_0, b2 = p.b2_0, t = 0.0;
  const GatingState& probe = traj[traj.size() / 2];
  while (t + h <= probe.t + 1e-12) {
    const double bracket = p.s_stat - b2 * b1 * b1 * p.d_stat;
    const double n1 = b1 + h * c1 * b2 * b1 * bracket;
    const double n2 = b2 + h * c2 * b1 * b1 * bracket;
    b1 = n1;
    b2 = n2;
    t += h;
  }
  CHECK(std::abs(probe.b1 - b1) < 1e-4);
  CHECK(std::abs(probe.b2 - b2) < 1e-4);
}

TEST_CASE("more pathways win the gating race") {
  double prev = INFINITY;
  for (double pathways : {1.0, 7.0, 49.0}) {
    GatingParams p;
    p.pathways = pathways;
    p.sources = 7;
    p.b1_0 = 0.1;
    p.b2_0 = 0.1;
    const auto traj = gating_race_integrate(p, 1e-2, 1e5);
    const double t_half = gating_time_to_fraction(traj, p, 0.5);
    REQUIRE(t_half > 0.0);
    CHECK(t_half < prev);
    prev = t_half;
  }
}

TEST_CASE("gating validation") {
  GatingParams p;
  p.pathways = 50;
  p.sources = 7;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p.pathways = 1;
  p.s_stat = -1;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
}
