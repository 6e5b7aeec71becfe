#include "doctest.h"

#include <cmath>
#include <random>

#include "cardioloop/adaptation.hpp"
#include "cardioloop/errors.hpp"
#include "cardioloop/hr_zones.hpp"
#include "cardioloop/rng.hpp"

using namespace cardioloop;

namespace {
const ZoneModel kModel30 = compute_zone_model(AthleteProfile{});
const AdaptationConfig kCfg30 = AdaptationConfig{}.resolved_for(kModel30);
}  // namespace

TEST_CASE("adaptive offset examples") {
  // Zone 3 centre is 140.25 bpm for age 30.
  CHECK(adaptive_offset(140.25, ZoneId{3}, kModel30, kCfg30) == doctest::Approx(0.0));
  CHECK(adaptive_offset(125.25, ZoneId{3}, kModel30, kCfg30) == doctest::Approx(30.0));
  CHECK(adaptive_offset(100.0, ZoneId{3}, kModel30, kCfg30) == doctest::Approx(30.0));
  CHECK(adaptive_offset(147.75, ZoneId{3}, kModel30, kCfg30) == doctest::Approx(-15.0));
  CHECK(adaptive_offset(190.0, ZoneId{3}, kModel30, kCfg30) == doctest::Approx(-30.0));
  CHECK_THROWS_AS(adaptive_offset(120.0, ZoneId{0}, kModel30, kCfg30), ParameterError);
  CHECK_THROWS_AS(adaptive_offset(0.0, ZoneId{2}, kModel30, kCfg30), ParameterError);
}

TEST_CASE("green radius defaults to the offset at the zone edge") {
  // 30 m * (0.05 * 187) / 15 bpm
  CHECK(*kCfg30.green_radius_m == doctest::Approx(18.7));
  const double edge_offset = adaptive_offset(kModel30.lower(ZoneId{3}), ZoneId{3}, kModel30, kCfg30);
  CHECK(edge_offset == doctest::Approx(*kCfg30.green_radius_m));

  AdaptationConfig explicit_radius;
  explicit_radius.green_radius_m = 5.0;
  CHECK(*explicit_radius.resolved_for(kModel30).green_radius_m == 5.0);

  // Narrow full scale would put the edge beyond max offset: capped.
  AdaptationConfig narrow;
  narrow.full_scale_dev_bpm = 2.0;
  CHECK(*narrow.resolved_for(kModel30).green_radius_m == doctest::Approx(narrow.max_offset_m));
}

TEST_CASE("configuration validation") {
  AdaptationConfig c;
  c.max_offset_m = 0.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = AdaptationConfig{};
  c.npc_slew_mps = -1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = AdaptationConfig{};
  c.green_radius_m = -2.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK(parse_condition("adaptive") == Condition::AdaptiveNpc);
  CHECK(parse_condition("random") == Condition::RandomNpc);
  CHECK(parse_condition("baseline") == Condition::Baseline);
  CHECK(to_string(Condition::RandomNpc) == "random");
  CHECK_THROWS_AS(parse_condition("adaptative"), ParameterError);
}

TEST_CASE("property: controller law over random (hr, zone) pairs") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> hr_d(30.0, 230.0);
  std::uniform_real_distribution<double> step_d(0.0, 20.0);
  std::uniform_int_distribution<int> zone_d(1, 5);
  std::uniform_int_distribution<int> age_d(10, 100);
  for (int i = 0; i < 20000; ++i) {
    const ZoneModel m = compute_zone_model(AthleteProfile{age_d(gen), HrMaxFormula::Tanaka, std::nullopt});
    const AdaptationConfig cfg = AdaptationConfig{}.resolved_for(m);
    const ZoneId z{zone_d(gen)};
    const double hr = hr_d(gen);
    const double off = adaptive_offset(hr, z, m, cfg);
    const double dev = m.center(z) - hr;
    CHECK(std::abs(off) <= 30.0);
    if (dev > 0) CHECK(off > 0);
    if (dev < 0) CHECK(off < 0);
    CHECK(adaptive_offset(hr + step_d(gen), z, m, cfg) <= off);
  }
}

TEST_CASE("property: NPC moves at most the slew limit per tick and stays bounded") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> target_d(-60.0, 60.0);
  NpcState s;
  const double dt = 0.02;
  std::uint64_t last_score = 0;
  for (int i = 0; i < 20000; ++i) {
    const NpcState next = step_npc(s, target_d(gen), dt, kCfg30);
    CHECK(std::abs(next.offset_m - s.offset_m) <= kCfg30.npc_slew_mps * dt + 1e-12);
    CHECK(std::abs(next.offset_m) <= kCfg30.max_offset_m);
    CHECK(next.aligned == (std::abs(next.offset_m) <= *kCfg30.green_radius_m));
    CHECK(next.score >= last_score);
    CHECK(next.score - last_score == (next.aligned ? 1u : 0u));
    last_score = next.score;
    s = next;
  }
  CHECK_THROWS_AS(step_npc(s, 0.0, 0.0, kCfg30), ParameterError);
  CHECK_THROWS_AS(step_npc(s, 0.0, dt, AdaptationConfig{}), ParameterError);
}

TEST_CASE("adaptive controller holds the NPC level until a heart rate exists") {
  ConditionController c(Condition::AdaptiveNpc, AdaptationConfig{}, kModel30, 0.02);
  for (int i = 0; i < 100; ++i) {
    const Feedback fb = c.step(std::nullopt, ZoneId{1});
    REQUIRE(fb.npc);
    CHECK(fb.npc->offset_m == 0.0);
    CHECK_FALSE(fb.bike_view);
  }
  // HR far below zone 3: the NPC pulls ahead at the slew rate.
  Feedback fb;
  for (int i = 0; i < 50; ++i) fb = c.step(90.0, ZoneId{3});
  CHECK(fb.npc->offset_m == doctest::Approx(2.0));
}

TEST_CASE("random controller ignores heart rate and is reproducible") {
  AdaptationConfig cfg;
  cfg.rng_seed = 77;
  ConditionController a(Condition::RandomNpc, cfg, kModel30, 0.02);
  ConditionController b(Condition::RandomNpc, cfg, kModel30, 0.02);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> hr_d(60.0, 200.0);
  for (int i = 0; i < 2000; ++i) {
    const Feedback fa = a.step(hr_d(gen), ZoneId{2});
    const Feedback fb = b.step(std::nullopt, ZoneId{4});
    REQUIRE(fa.npc);
    CHECK(fa.npc->offset_m == fb.npc->offset_m);
    CHECK(fa.npc->score == 0);
  }
}

TEST_CASE("baseline shows the bike computer and no NPC") {
  ConditionController c(Condition::Baseline, AdaptationConfig{}, kModel30, 0.02);
  Feedback fb = c.step(140.0, ZoneId{3});
  CHECK_FALSE(fb.npc);
  REQUIRE(fb.bike_view);
  CHECK(*fb.bike_view->hr_bpm == 140.0);
  CHECK(fb.bike_view->current_zone->value() == 3);
  CHECK(fb.bike_view->target_zone.value() == 3);
  fb = c.step(std::nullopt, ZoneId{1});
  CHECK_FALSE(fb.bike_view->hr_bpm);
  CHECK_FALSE(fb.bike_view->current_zone);
}

TEST_CASE("rng is reproducible and in range") {
  Rng a(5), b(5);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform01();
    CHECK(u == b.uniform01());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = a.normal();
    b.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02).scale(1.0));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}
