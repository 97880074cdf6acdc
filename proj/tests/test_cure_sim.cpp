#include <doctest.h>

#include <cmath>

#include "pidnet/cure_sim.hpp"
#include "pidnet/error.hpp"

using namespace pidnet;

TEST_CASE("build_profile accepts interior and boundary points") {
  const TemperatureProfile p = build_profile(1.61, 133.01);
  CHECK(p.t1() == 1.61);
  CHECK(p.T1() == 133.01);

  const ProfileAnchors a;
  const TemperatureProfile flat = build_profile(a.t0 + kDefaultMargin, a.T_start);
  CHECK(flat.slopes().m1 == 0.0);
}

TEST_CASE("build_profile rejects out-of-bounds points with the bound named") {
  try {
    build_profile(300.0, 100.0);
    FAIL("expected a constraint violation");
  } catch (const ConstraintViolation& e) {
    CHECK(std::string(e.what()).find("t2 - margin") != std::string::npos);
  }
  CHECK_THROWS_AS(build_profile(10.0, 10.0), ConstraintViolation);
  CHECK_THROWS_AS(build_profile(10.0, 190.0), ConstraintViolation);
  CHECK_THROWS_AS(build_profile(0.5, 100.0), ConstraintViolation);
}

TEST_CASE("sample_profile at knots and midpoints") {
  const ProfileAnchors a;
  const TemperatureProfile p = build_profile(40.0, 120.0);
  CHECK(sample_profile(p, 40.0) == 120.0);
  CHECK(sample_profile(p, a.t0) == a.T_start);
  CHECK(sample_profile(p, a.t2) == a.T_peak);
  CHECK(sample_profile(p, a.t3) == a.T_end);
  CHECK(sample_profile(p, 0.333) == 20.000);
  CHECK(sample_profile(p, 0.5 * (a.t2 + a.t3)) == doctest::Approx(99.9525).epsilon(1e-12));
  CHECK_THROWS_AS(sample_profile(p, a.t3 + 1.0), DomainError);
  CHECK_THROWS_AS(sample_profile(p, 0.0), DomainError);
}

TEST_CASE("profile slopes") {
  const Slopes s = profile_slopes(build_profile(1.61, 133.01));
  CHECK(s.m1 == doctest::Approx((133.01 - 20.0) / (1.61 - 0.333)).epsilon(1e-12));
  CHECK(s.m1 == doctest::Approx(88.50).epsilon(1e-3));
  CHECK(s.m2 == doctest::Approx(0.2758).epsilon(1e-3));

  const ProfileAnchors a;
  for (double t1 : {5.0, 60.0, 150.0})
    for (double T1 : {20.0, 90.0, 179.905}) {
      const Slopes q = profile_slopes(build_profile(t1, T1));
      CHECK(std::abs(q.m1 * (t1 - a.t0) + q.m2 * (a.t2 - t1) - (a.T_peak - a.T_start)) < 1e-9);
    }
}

TEST_CASE("initial degree of cure from enthalpies") {
  CHECK(std::abs(compute_initial_doc(382.5, 508.0) - 24.70) < 0.01);
  CHECK(std::abs(compute_initial_doc(402.5, 489.0) - 17.69) < 0.02);
  CHECK(std::abs(compute_initial_doc(362.5, 527.0) - 31.21) < 0.02);
  CHECK(compute_initial_doc(400.0, 400.0) == 0.0);
  CHECK(residual_heat_ratio(382.5, 508.0) == doctest::Approx(100.0 * 382.5 / 508.0));
  CHECK_THROWS_AS(compute_initial_doc(0.0, 508.0), DomainError);
  CHECK_THROWS_AS(compute_initial_doc(-1.0, 508.0), DomainError);
  CHECK_THROWS_AS(compute_initial_doc(600.0, 508.0), DomainError);
}

TEST_CASE("cure_rate matches a direct evaluation of the two-regime form") {
  const KineticsParams p;
  const double R = 8.314462618;
  auto direct = [&](double a, double Tc) {
    const double TK = Tc + 273.15;
    const double k1 = p.A1 * std::exp(-p.E1 / (R * TK));
    const double k2 = p.A2 * std::exp(-p.E2 / (R * TK));
    const double k3 = p.A3 * std::exp(-p.E3 / (R * TK));
    if (a < p.alpha_switch) return (k1 + k2 * a) * (1.0 - a) * (p.B - a);
    return k3 * (1.0 - a);
  };
  CHECK(cure_rate(0.5, 150.0, p) == doctest::Approx(direct(0.5, 150.0)).epsilon(1e-13));
  CHECK(cure_rate(0.1, 120.0, p) == doctest::Approx(direct(0.1, 120.0)).epsilon(1e-13));
  CHECK(cure_rate(1.0, 150.0, p) == 0.0);
  CHECK(cure_rate(1.0, 20.0, p) == 0.0);
  for (double a : {0.0, 0.2, 0.6, 0.95}) {
    double prev = 0.0;
    for (double T = 20.0; T <= 180.0; T += 10.0) {
      const double r = cure_rate(a, T, p);
      CHECK(r > prev);
      prev = r;
    }
  }
  CHECK_THROWS_AS(cure_rate(-0.01, 100.0, p), DomainError);
  CHECK_THROWS_AS(cure_rate(1.01, 100.0, p), DomainError);
}

TEST_CASE("viscosity clamp and log transform") {
  KineticsParams p;
  CHECK(viscosity(p.alpha_gel, 120.0, p) == p.mu_max);
  CHECK(viscosity(0.9, 120.0, p) == p.mu_max);
  CHECK(log_viscosity(0.0) == std::log(1e-8));

  const double a = 0.2, T = 100.0;
  const double base = viscosity(a, T, p);
  KineticsParams doubled = p;
  doubled.K = 2.0 * p.K;
  CHECK(viscosity(a, T, doubled) == doctest::Approx(base * std::exp(p.K * a)).epsilon(1e-12));
}

TEST_CASE("stiffness gate is a clipped smoothstep") {
  CHECK(stiffness_gate(0.3, 0.47, 0.1) == 0.0);
  CHECK(stiffness_gate(0.47, 0.47, 0.1) == 0.0);
  CHECK(stiffness_gate(0.52, 0.47, 0.1) == doctest::Approx(0.5));
  CHECK(stiffness_gate(0.9, 0.47, 0.1) == 1.0);
}

TEST_CASE("simulate produces a valid trajectory") {
  const KineticsParams kp;
  const DeformationParams dp;
  const TemperatureProfile p = build_profile(40.0, 120.0);
  const CureTrajectory a = simulate(p, 0.3, kp, dp);
  const CureTrajectory b = simulate(p, 0.001, kp, dp);
  REQUIRE(a.size() == 128);
  CHECK(a.doc.front() == 0.3);
  CHECK(b.doc.front() == 0.001);
  for (std::size_t i = 1; i < a.size(); ++i) {
    CHECK(a.doc[i] >= a.doc[i - 1] - 1e-12);
    CHECK(b.doc[i] >= b.doc[i - 1] - 1e-12);
  }
  CHECK(a.doc.back() > 0.95);
  CHECK(b.doc.back() > 0.95);
  CHECK(a.doc.back() > b.doc.back());
  const CureTrajectory hot = simulate(build_profile(40.0, 160.0), 0.001, kp, dp);
  CHECK(hot.doc.back() > 0.99);
  CHECK(hot.doc.back() > b.doc.back());
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a.deformation[i] - b.deformation[i]));
  CHECK(max_diff > 0.0);
  CHECK(std::abs(a.deformation.back()) > 1.0);
  CHECK(std::abs(a.deformation.back()) < 100.0);

  const CureTrajectory again = simulate(p, 0.3, kp, dp);
  CHECK(again.doc == a.doc);
  CHECK(again.deformation == a.deformation);
}

TEST_CASE("no driving mechanisms, no deformation") {
  DeformationParams dp;
  dp.kappa_cte = 0.0;
  dp.kappa_sh = 0.0;
  const CureTrajectory tr = simulate(build_profile(80.0, 150.0), 0.3, {}, dp);
  for (double u : tr.deformation) CHECK(u == 0.0);
}

TEST_CASE("half-step comparison and integrator order") {
  const KineticsParams kp;
  const DeformationParams dp;
  const TemperatureProfile p = build_profile(60.0, 110.0);
  SimSettings s1, s2;
  s2.dt = s1.dt / 2.0;
  const CureTrajectory a = simulate(p, 0.001, kp, dp, s1);
  const CureTrajectory b = simulate(p, 0.001, kp, dp, s2);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a.doc[i] - b.doc[i]));
  CHECK(max_diff < 1e-6);

  SimSettings ref, coarse, fine;
  ref.dt = 1.0 / 512.0;
  coarse.dt = 1.0;
  fine.dt = 0.5;
  const double truth = simulate(p, 0.001, kp, dp, ref).doc.back();
  const double e1 = std::abs(simulate(p, 0.001, kp, dp, coarse).doc.back() - truth);
  const double e2 = std::abs(simulate(p, 0.001, kp, dp, fine).doc.back() - truth);
  CHECK(e1 / e2 >= 8.0);
}

TEST_CASE("simulate rejects bad settings") {
  const TemperatureProfile p = build_profile(40.0, 120.0);
  SimSettings s;
  s.dt = 60.0;
  CHECK_THROWS_AS(simulate(p, 0.3, {}, {}, s), ConfigError);
  CHECK_THROWS_AS(simulate(p, 1.0, {}, {}), DomainError);
}

TEST_CASE("generate_dataset cardinality, ordering and skipping") {
  const ProfileAnchors a;
  const std::vector<DesignPoint> grid = design_grid(a, kDefaultMargin, 10, 10);
  REQUIRE(grid.size() == 100);
  std::vector<DesignPoint> small(grid.begin(), grid.begin() + 3);
  small.push_back({300.0, 100.0});
  const Dataset ds = generate_dataset(small, {0.3, 0.001}, {}, {}, {}, 32);
  CHECK(ds.records.size() == 6);
  REQUIRE(ds.skipped.size() == 1);
  CHECK(ds.skipped[0].t1 == 300.0);
  CHECK(ds.records[0].doc0 == 0.3);
  CHECK(ds.records[1].doc0 == 0.001);
  CHECK(ds.records[1].t1 == ds.records[0].t1);
  for (const auto& r : ds.records) {
    CHECK(r.branch_input().size() == 33);
    CHECK(r.branch_input().back() == r.doc0);
  }
  const Dataset serial = generate_dataset(small, {0.3, 0.001}, {}, {}, {}, 32, a, kDefaultMargin, 1);
  const Dataset par = generate_dataset(small, {0.3, 0.001}, {}, {}, {}, 32, a, kDefaultMargin, 4);
  for (std::size_t i = 0; i < serial.records.size(); ++i)
    CHECK(serial.records[i].trajectory.deformation == par.records[i].trajectory.deformation);
}
