#include "doctest.h"

#include <random>

#include "cardioloop/errors.hpp"
#include "cardioloop/hr_zones.hpp"

using namespace cardioloop;

TEST_CASE("maximum heart rate formulas") {
  CHECK(hr_max_bpm(30, HrMaxFormula::Tanaka) == doctest::Approx(187.0));
  CHECK(hr_max_bpm(40, HrMaxFormula::Fox) == doctest::Approx(180.0));
  for (int age = 10; age <= 100; ++age) {
    CHECK(hr_max_bpm(age, HrMaxFormula::Tanaka) == doctest::Approx(208.0 - 0.7 * age));
    CHECK(hr_max_bpm(age, HrMaxFormula::Fox) == doctest::Approx(220.0 - age));
  }
  CHECK_THROWS_AS(hr_max_bpm(9, HrMaxFormula::Tanaka), ParameterError);
  CHECK_THROWS_AS(hr_max_bpm(101, HrMaxFormula::Tanaka), ParameterError);
  CHECK_THROWS_AS(hr_max_bpm(300, HrMaxFormula::Fox), ParameterError);
}

TEST_CASE("zone table for age 30") {
  const ZoneModel m = compute_zone_model(AthleteProfile{});
  CHECK(m.hr_max_bpm == doctest::Approx(187.0));
  const double expected[6] = {93.5, 112.2, 130.9, 149.6, 168.3, 187.0};
  for (int i = 0; i < 6; ++i) CHECK(m.boundaries[i] == doctest::Approx(expected[i]));
  CHECK(m.lower(ZoneId{3}) == doctest::Approx(130.9));
  CHECK(m.upper(ZoneId{3}) == doctest::Approx(149.6));
  CHECK(m.center(ZoneId{3}) == doctest::Approx(140.25));
}

TEST_CASE("classification is half-open") {
  const ZoneModel m = compute_zone_model(AthleteProfile{});
  CHECK(classify(130.9, m).value() == 3);
  CHECK(classify(130.8999, m).value() == 2);
  CHECK(classify(149.6, m).value() == 4);
  CHECK(classify(50.0, m).value() == 0);
  CHECK(classify(93.49, m).value() == 0);
  CHECK(classify(93.5, m).value() == 1);
  CHECK(classify(200.0, m).value() == 5);
  CHECK_THROWS_AS(classify(0.0, m), ParameterError);
  CHECK_THROWS_AS(classify(-3.0, m), ParameterError);
  CHECK_THROWS_AS(classify(std::nan(""), m), ParameterError);
}

TEST_CASE("zone ids are range checked") {
  CHECK_THROWS_AS(ZoneId{6}, ParameterError);
  CHECK_THROWS_AS(ZoneId{-1}, ParameterError);
  const ZoneModel m = compute_zone_model(AthleteProfile{});
  CHECK_THROWS_AS(m.center(ZoneId{0}), ParameterError);
  CHECK(ZoneId{2} < ZoneId{3});
}

TEST_CASE("formula names") {
  CHECK(parse_hr_max_formula("tanaka") == HrMaxFormula::Tanaka);
  CHECK(parse_hr_max_formula("fox") == HrMaxFormula::Fox);
  CHECK(to_string(HrMaxFormula::Fox) == "fox");
  CHECK_THROWS_AS(parse_hr_max_formula("karvonen"), ParameterError);
}

TEST_CASE("property: classification agrees with the boundary table") {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<int> age_d(10, 100);
  std::uniform_real_distribution<double> hr_d(20.0, 240.0);
  for (int i = 0; i < 20000; ++i) {
    const int age = age_d(gen);
    const auto formula = (i % 2) ? HrMaxFormula::Fox : HrMaxFormula::Tanaka;
    const ZoneModel m = compute_zone_model(AthleteProfile{age, formula, std::nullopt});
    const double hr = hr_d(gen);
    const int z = classify(hr, m).value();
    const double frac = hr / m.hr_max_bpm;
    int expected = 0;
    if (frac >= 0.5) expected = std::min(5, 1 + static_cast<int>(std::floor((frac - 0.5) / 0.1 + 1e-12)));
    // Boundary-adjacent draws may round either way; only the table is authoritative there.
    if (std::abs(frac * 10.0 - std::round(frac * 10.0)) < 1e-9) continue;
    CHECK(z == expected);
    if (z >= 1) {
      CHECK(hr >= m.lower(ZoneId{z}));
      if (z < 5) CHECK(hr < m.upper(ZoneId{z}));
    }
  }
}
