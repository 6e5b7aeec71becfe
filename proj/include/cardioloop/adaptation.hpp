#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "cardioloop/hr_zones.hpp"
#include "cardioloop/rng.hpp"

namespace cardioloop {

enum class Condition { Baseline, RandomNpc, AdaptiveNpc };

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);  // "baseline" | "random" | "adaptive"

struct AdaptationConfig {
  double max_offset_m = 30.0;
  double full_scale_dev_bpm = 15.0;  // deviation from zone centre that saturates the offset
  double npc_slew_mps = 2.0;
  // Unset: the offset produced at the target-zone edge, so that being aligned
  // and being in the target zone coincide.
  std::optional<double> green_radius_m;
  double random_retarget_s = 2.0;
  std::uint64_t rng_seed = 1;

  void validate() const;

  // Copy with green_radius_m filled in for this zone model.
  AdaptationConfig resolved_for(const ZoneModel& model) const;
};

// Positive offset: NPC ahead of the rider (heart rate too low).
struct NpcState {
  double offset_m = 0.0;
  bool aligned = false;
  std::uint64_t score = 0;

  friend bool operator==(const NpcState&, const NpcState&) = default;
};

struct BikeComputerView {
  std::optional<double> hr_bpm;
  std::optional<ZoneId> current_zone;
  ZoneId target_zone;

  friend bool operator==(const BikeComputerView&, const BikeComputerView&) = default;
};

double adaptive_offset(double hr_bpm, ZoneId target_zone, const ZoneModel& model,
                       const AdaptationConfig& cfg);

// Rate-limited move toward `target_offset_m`. `cfg` must be resolved.
NpcState step_npc(const NpcState& state, double target_offset_m, double dt,
                  const AdaptationConfig& cfg, bool scoring = true);

double random_offset_target(Rng& rng, const AdaptationConfig& cfg);

BikeComputerView baseline_view(double hr_bpm, const ZoneModel& model, ZoneId target_zone);

struct Feedback {
  std::optional<NpcState> npc;
  std::optional<BikeComputerView> bike_view;
};

// Per-session controller for one condition, stepped once per tick.
class ConditionController {
 public:
  ConditionController(Condition condition, const AdaptationConfig& cfg, const ZoneModel& model,
                      double tick_dt);

  Feedback step(std::optional<double> hr_bpm, ZoneId target_zone);

  Condition condition() const { return condition_; }
  const AdaptationConfig& config() const { return cfg_; }
  const NpcState& npc() const { return npc_; }

 private:
  Condition condition_;
  AdaptationConfig cfg_;
  ZoneModel model_;
  double dt_;
  Rng rng_;
  std::uint64_t retarget_ticks_;
  std::uint64_t ticks_ = 0;
  double random_target_ = 0.0;
  NpcState npc_;
};

}  // namespace cardioloop
