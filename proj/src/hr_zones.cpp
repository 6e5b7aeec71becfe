#include "cardioloop/hr_zones.hpp"

#include <cmath>

#include "cardioloop/errors.hpp"

namespace cardioloop {

namespace {
constexpr std::array<double, 6> kZoneFractions{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
constexpr int kMinAge = 10;
constexpr int kMaxAge = 100;

void require_training_zone(ZoneId z) {
  if (z.value() < 1) throw ParameterError("zone 0 has no bounds");
}
}  // namespace

std::string_view to_string(HrMaxFormula f) { return f == HrMaxFormula::Fox ? "fox" : "tanaka"; }

HrMaxFormula parse_hr_max_formula(std::string_view s) {
  if (s == "tanaka") return HrMaxFormula::Tanaka;
  if (s == "fox") return HrMaxFormula::Fox;
  throw ParameterError("unknown hr_max formula '" + std::string(s) + "'");
}

ZoneId::ZoneId(int value) : value_(value) {
  if (value < kMin || value > kMax) throw ParameterError("zone id out of range: " + std::to_string(value));
}

double ZoneModel::lower(ZoneId z) const {
  require_training_zone(z);
  return boundaries[static_cast<std::size_t>(z.value() - 1)];
}

double ZoneModel::upper(ZoneId z) const {
  require_training_zone(z);
  return boundaries[static_cast<std::size_t>(z.value())];
}

double ZoneModel::center(ZoneId z) const { return 0.5 * (lower(z) + upper(z)); }

double hr_max_bpm(int age, HrMaxFormula formula) {
  if (age < kMinAge || age > kMaxAge)
    throw ParameterError("age must be within [10, 100], got " + std::to_string(age));
  switch (formula) {
    case HrMaxFormula::Fox:
      return 220.0 - age;
    case HrMaxFormula::Tanaka:
      break;
  }
  return 208.0 - 0.7 * age;
}

ZoneModel compute_zone_model(const AthleteProfile& profile) {
  ZoneModel m;
  m.hr_max_bpm = hr_max_bpm(profile.age, profile.formula);
  if (profile.hr_rest_bpm &&
      !(*profile.hr_rest_bpm > 0.0 && *profile.hr_rest_bpm < m.hr_max_bpm))
    throw ParameterError("resting heart rate must be positive and below hr_max");
  for (std::size_t i = 0; i < kZoneFractions.size(); ++i) m.boundaries[i] = kZoneFractions[i] * m.hr_max_bpm;
  return m;
}

ZoneId classify(double hr_bpm, const ZoneModel& model) {
  if (!std::isfinite(hr_bpm) || hr_bpm <= 0.0) throw ParameterError("heart rate must be finite and positive");
  int zone = 0;
  for (int z = 1; z <= 5; ++z) {
    if (hr_bpm >= model.boundaries[static_cast<std::size_t>(z - 1)]) zone = z;
  }
  return ZoneId{zone};
}

}  // namespace cardioloop
