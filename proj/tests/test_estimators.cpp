#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bistab/estimators.hpp"

using namespace bistab;

TEST_CASE("circular power") {
  CHECK(circular_power(2.0, 0.0) == 0.0);
  CHECK(circular_power(2.0, 45.0) == doctest::Approx(2.0));
  CHECK(circular_power(2.0, -15.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(circular_power(2.0, 50.0), std::invalid_argument);
}

TEST_CASE("broadening budget slope") {
  BroadeningBudget b;
  // (30 + 0.3 * 90) nT/mW * 2 mW * 2 pi / 180
  CHECK(broadening_rate(b) == doctest::Approx(57.0 * 2.0 * 2.0 * 3.14159265358979 / 180.0));
  CHECK(broadening_rate(b) == doctest::Approx(4.0).epsilon(0.025));
  b.chi_deg = 0.01;
  CHECK(broadening_at(b) == doctest::Approx(0.01 * broadening_rate(b)).epsilon(1e-6));
  b.chi_deg = 45.0;
  CHECK(broadening_at(b) == doctest::Approx(114.0));
  b.k_lb = -1.0;
  CHECK_THROWS_AS(broadening_rate(b), std::invalid_argument);
}

TEST_CASE("point dipole field") {
  DipoleConfig d;
  // mu0/4pi * 2 N mu_B / l^3
  const double want = 1e-7 * 2 * 5e11 * 9.2740100783e-24 / 1e-9 * 1e9;
  CHECK(dipole_field(d) == doctest::Approx(want));
  CHECK(dipole_field(d) == doctest::Approx(0.927).epsilon(1e-3));
  d.geometry = DipoleGeometry::equatorial;
  CHECK(dipole_field(d) == doctest::Approx(want / 2));
  d.distance_mm = 2.0;
  CHECK(dipole_field(d) == doctest::Approx(want / 16));
  d.n_atoms = 0.0;
  CHECK_THROWS_AS(dipole_field(d), std::invalid_argument);
}

TEST_CASE("ensemble volume and validity") {
  const auto v = ensemble_volume(5e11, 2e14);
  CHECK(v.volume_mm3 == doctest::Approx(2.5));
  CHECK(v.side_mm == doctest::Approx(std::cbrt(2.5)));
  CHECK(v.validity_ratio(1.0) == doctest::Approx(2.0 / std::cbrt(2.5)));
  CHECK(validity_label(v.validity_ratio(1.0)) == "marginal");
  CHECK(validity_label(5.0) == "satisfied");
  CHECK(validity_label(0.5) == "violated");
  CHECK_THROWS_AS(ensemble_volume(5e11, 0.0), std::invalid_argument);
}

TEST_CASE("Cs vapor density anchors") {
  CHECK(cs_number_density(145.0) == doctest::Approx(1.8e14).epsilon(0.15));
  CHECK(cs_number_density(150.0) == doctest::Approx(2.2e14).epsilon(0.15));
  // room temperature: about 1.5e-6 Torr
  CHECK(cs_vapor_pressure_pa(25.0) / 133.322 == doctest::Approx(1.5e-6).epsilon(0.3));
  CHECK_THROWS_AS(cs_number_density(300.0), std::out_of_range);
  CHECK_THROWS_AS(cs_number_density(-5.0), std::out_of_range);
}

TEST_CASE("vapor density rises monotonically") {
  double prev = 0.0;
  for (double t = 0.0; t <= 250.0; t += 10.0) {
    const double n = cs_number_density(t);
    CHECK(n > prev);
    prev = n;
  }
}
