#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace cardioloop {

enum class HrMaxFormula { Tanaka, Fox };

std::string_view to_string(HrMaxFormula f);
HrMaxFormula parse_hr_max_formula(std::string_view s);

struct AthleteProfile {
  int age = 30;  // years, 10..100
  HrMaxFormula formula = HrMaxFormula::Tanaka;
  std::optional<double> hr_rest_bpm;
};

// 0 = below Zone 1, 1..5 = the five training zones.
class ZoneId {
 public:
  static constexpr int kMin = 0;
  static constexpr int kMax = 5;

  constexpr ZoneId() = default;
  explicit ZoneId(int value);

  constexpr int value() const { return value_; }
  friend constexpr auto operator<=>(ZoneId, ZoneId) = default;

 private:
  int value_ = 0;
};

struct ZoneModel {
  double hr_max_bpm = 0.0;
  // 50/60/70/80/90/100 % of hr_max.
  std::array<double, 6> boundaries{};

  // Half-open [lower, upper) for zones 1..5.
  double lower(ZoneId z) const;
  double upper(ZoneId z) const;
  double center(ZoneId z) const;
};

double hr_max_bpm(int age, HrMaxFormula formula);

ZoneModel compute_zone_model(const AthleteProfile& profile);

ZoneId classify(double hr_bpm, const ZoneModel& model);

}  // namespace cardioloop
