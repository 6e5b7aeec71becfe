#pragma once

#include <functional>
#include <vector>

#include "cardioloop/rider_sim.hpp"
#include "cardioloop/rng.hpp"
#include "cardioloop/session.hpp"
#include "cardioloop/session_log.hpp"

namespace cardioloop {

// Rider physiology plus a synthetic ECG sensor, advanced one tick at a time.
class SimulatedRider {
 public:
  SimulatedRider(const SimulationSetup& setup, const SessionConfig& config);

  // Steps heart rate at the current power, then returns the ECG samples up
  // to and including `t_end`.
  const std::vector<EcgSample>& advance(double dt, double t_end);

  // Policy reaction to the feedback just shown; updates power.
  void react(const LoopState& state);

  double hr_bpm() const { return hr_; }
  double power_w() const { return power_; }
  void set_power(double w) { power_ = w; }

 private:
  SimulationSetup setup_;
  Rng rng_;
  EcgSynth ecg_;
  RiderAgent agent_;
  double hr_;
  double power_;
  std::vector<EcgSample> batch_;
};

// Headless closed loop: rider model -> synthetic ECG -> the same pipeline a
// live sensor feeds -> controller -> rider policy. Deterministic in the seeds.
SessionLog run_simulated(const SessionConfig& config, const SimulationSetup& setup);

// Same loop, with an observer called after every tick.
SessionLog run_simulated(const SessionConfig& config, const SimulationSetup& setup,
                         const std::function<void(const LoopState&, double power_w, double true_hr)>& on_tick);

}  // namespace cardioloop
