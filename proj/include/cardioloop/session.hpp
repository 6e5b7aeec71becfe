#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cardioloop/adaptation.hpp"
#include "cardioloop/ecg_dsp.hpp"
#include "cardioloop/hr_zones.hpp"
#include "cardioloop/rider_sim.hpp"

namespace cardioloop {

enum class Phase { Training, Running, Finished };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);

struct ScheduleSegment {
  ZoneId zone;
  double duration_s = 0.0;

  friend bool operator==(const ScheduleSegment&, const ScheduleSegment&) = default;
};

struct SessionSeeds {
  std::uint64_t adaptation = 1;
  std::uint64_t rider = 2;
  std::uint64_t ecg = 3;

  // Spreads one user-facing seed over the three streams.
  static SessionSeeds derive(std::uint64_t seed);
};

struct SessionConfig {
  std::string participant_id = "P00";
  int age = 30;
  HrMaxFormula formula = HrMaxFormula::Tanaka;
  Condition condition = Condition::AdaptiveNpc;
  std::vector<ScheduleSegment> zone_schedule{{ZoneId{1}, 120.0}, {ZoneId{2}, 120.0}, {ZoneId{3}, 120.0}};
  double tick_hz = 50.0;
  double hr_window_s = 10.0;
  double training_s = 120.0;
  SessionSeeds seeds;
  AdaptationConfig adaptation;
  FilterSpec filter;
  QrsDetectorConfig detector;
  BikePhysics physics;

  void validate() const;
};

// Everything the simulated rider needs beyond the session itself.
struct SimulationSetup {
  RiderModel rider;
  RiderPolicy policy;
  double ecg_noise_mv = 0.02;

  void validate() const;
};

struct LoopState {
  double t_s = 0.0;
  Phase phase = Phase::Training;
  std::optional<double> hr_bpm;
  std::optional<double> hr_norm;  // hr_bpm / hr_max
  std::optional<ZoneId> current_zone;
  ZoneId target_zone;
  double remaining_s = 0.0;  // left in the current phase
  Condition condition = Condition::AdaptiveNpc;
  std::optional<NpcState> npc;
  std::optional<BikeComputerView> bike_view;
  double speed_mps = 0.0;
  bool end_prompt = false;

  friend bool operator==(const LoopState&, const LoopState&) = default;
};

// Fixed-tick session: ECG in, one LoopState out per tick.
class Session {
 public:
  explicit Session(SessionConfig config);

  // Ingests the ECG that arrived since the previous tick, then advances the
  // clock by one tick. `power_w`, when known, drives the speed readout.
  LoopState tick(std::span<const EcgSample> ecg, std::optional<double> power_w = std::nullopt);

  // Operator stop: emits a final Finished state.
  LoopState stop(std::optional<double> power_w = std::nullopt);

  const SessionConfig& config() const { return config_; }
  const ZoneModel& zones() const { return zones_; }
  Phase phase() const { return phase_; }
  std::uint64_t ticks() const { return ticks_; }
  std::uint64_t training_ticks() const { return training_ticks_; }
  std::uint64_t run_ticks() const { return run_ticks_total_; }
  const std::optional<HrEstimate>& hr() const { return pipeline_.latest(); }

  // Target zone after `run_ticks` ticks of the scored run (left-closed segments).
  ZoneId scheduled_zone(std::uint64_t run_ticks) const;

 private:
  LoopState advance(std::span<const EcgSample> ecg, std::optional<double> power_w, bool force_finish);

  SessionConfig config_;
  ZoneModel zones_;
  EcgPipeline pipeline_;
  ConditionController controller_;
  PipelineEvents events_;
  std::vector<std::uint64_t> segment_ends_;  // cumulative run ticks
  std::uint64_t training_ticks_ = 0;
  std::uint64_t run_ticks_total_ = 0;
  std::uint64_t ticks_ = 0;
  Phase phase_ = Phase::Training;
};

}  // namespace cardioloop
