#include "cardioloop/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cardioloop/errors.hpp"

namespace cardioloop {

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Baseline:
      return "baseline";
    case Condition::RandomNpc:
      return "random";
    case Condition::AdaptiveNpc:
      return "adaptive";
  }
  return "adaptive";
}

Condition parse_condition(std::string_view s) {
  if (s == "baseline") return Condition::Baseline;
  if (s == "random") return Condition::RandomNpc;
  if (s == "adaptive") return Condition::AdaptiveNpc;
  throw ParameterError("unknown condition '" + std::string(s) + "'");
}

void AdaptationConfig::validate() const {
  if (!(max_offset_m > 0.0)) throw ParameterError("max_offset_m must be positive");
  if (!(full_scale_dev_bpm > 0.0)) throw ParameterError("full_scale_dev_bpm must be positive");
  if (!(npc_slew_mps > 0.0)) throw ParameterError("npc_slew_mps must be positive");
  if (!(random_retarget_s > 0.0)) throw ParameterError("random_retarget_s must be positive");
  if (green_radius_m && !(*green_radius_m > 0.0 && *green_radius_m <= max_offset_m))
    throw ParameterError("green_radius_m must lie in (0, max_offset_m]");
}

AdaptationConfig AdaptationConfig::resolved_for(const ZoneModel& model) const {
  validate();
  AdaptationConfig out = *this;
  if (!out.green_radius_m) {
    // Every zone spans 10 % of hr_max, so the edge sits 5 % from the centre.
    const double half_width = 0.05 * model.hr_max_bpm;
    out.green_radius_m = std::min(max_offset_m, max_offset_m * half_width / full_scale_dev_bpm);
  }
  return out;
}

double adaptive_offset(double hr_bpm, ZoneId target_zone, const ZoneModel& model,
                       const AdaptationConfig& cfg) {
  if (target_zone.value() < 1) throw ParameterError("adaptive target zone must be 1..5");
  if (!(hr_bpm > 0.0) || !std::isfinite(hr_bpm)) throw ParameterError("heart rate must be positive");
  const double deviation = model.center(target_zone) - hr_bpm;
  return std::clamp(cfg.max_offset_m * deviation / cfg.full_scale_dev_bpm, -cfg.max_offset_m,
                    cfg.max_offset_m);
}

NpcState step_npc(const NpcState& state, double target_offset_m, double dt,
                  const AdaptationConfig& cfg, bool scoring) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (!cfg.green_radius_m) throw ParameterError("step_npc needs a resolved green radius");
  const double target = std::clamp(target_offset_m, -cfg.max_offset_m, cfg.max_offset_m);
  const double max_step = cfg.npc_slew_mps * dt;
  NpcState next = state;
  next.offset_m = state.offset_m + std::clamp(target - state.offset_m, -max_step, max_step);
  next.offset_m = std::clamp(next.offset_m, -cfg.max_offset_m, cfg.max_offset_m);
  next.aligned = std::abs(next.offset_m) <= *cfg.green_radius_m;
  if (scoring && next.aligned) ++next.score;
  return next;
}

double random_offset_target(Rng& rng, const AdaptationConfig& cfg) {
  return rng.uniform(-cfg.max_offset_m, cfg.max_offset_m);
}

BikeComputerView baseline_view(double hr_bpm, const ZoneModel& model, ZoneId target_zone) {
  return BikeComputerView{hr_bpm, classify(hr_bpm, model), target_zone};
}

ConditionController::ConditionController(Condition condition, const AdaptationConfig& cfg,
                                         const ZoneModel& model, double tick_dt)
    : condition_(condition),
      cfg_(cfg.resolved_for(model)),
      model_(model),
      dt_(tick_dt),
      rng_(cfg.rng_seed),
      retarget_ticks_(static_cast<std::uint64_t>(
          std::max<long long>(1, std::llround(cfg.random_retarget_s / tick_dt)))) {
  if (!(tick_dt > 0.0)) throw ParameterError("tick dt must be positive");
  npc_.aligned = std::abs(npc_.offset_m) <= *cfg_.green_radius_m;
}

Feedback ConditionController::step(std::optional<double> hr_bpm, ZoneId target_zone) {
  Feedback fb;
  const std::uint64_t tick = ticks_++;
  switch (condition_) {
    case Condition::Baseline:
      if (hr_bpm)
        fb.bike_view = baseline_view(*hr_bpm, model_, target_zone);
      else
        fb.bike_view = BikeComputerView{std::nullopt, std::nullopt, target_zone};
      return fb;
    case Condition::RandomNpc:
      // Depends only on (seed, tick): independent of the rider.
      if (tick % retarget_ticks_ == 0) random_target_ = random_offset_target(rng_, cfg_);
      npc_ = step_npc(npc_, random_target_, dt_, cfg_, /*scoring=*/false);
      break;
    case Condition::AdaptiveNpc: {
      const double target = hr_bpm ? adaptive_offset(*hr_bpm, target_zone, model_, cfg_) : 0.0;
      npc_ = step_npc(npc_, target, dt_, cfg_, /*scoring=*/true);
      break;
    }
  }
  fb.npc = npc_;
  return fb;
}

}  // namespace cardioloop
