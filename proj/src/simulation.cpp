#include "cardioloop/simulation.hpp"

#include <algorithm>
#include <vector>

#include "cardioloop/errors.hpp"

namespace cardioloop {

SimulatedRider::SimulatedRider(const SimulationSetup& setup, const SessionConfig& config)
    : setup_(setup),
      rng_(config.seeds.rider),
      ecg_(EcgSynthConfig{config.filter.fs, setup.ecg_noise_mv}, config.seeds.ecg),
      agent_(setup.policy, setup.rider.p_max_w, 1.0 / config.tick_hz),
      hr_(setup.rider.hr_rest_bpm),
      power_(agent_.initial_power()) {
  setup_.validate();
}

const std::vector<EcgSample>& SimulatedRider::advance(double dt, double t_end) {
  hr_ = hr_step(hr_, power_, dt, setup_.rider, rng_);
  // Sensor physiology stays inside the synthesiser's range.
  const double ecg_rate = std::clamp(hr_, 25.0, 230.0);
  batch_.clear();
  while (ecg_.next_time() <= t_end) batch_.push_back(ecg_.next(ecg_rate));
  return batch_;
}

void SimulatedRider::react(const LoopState& state) {
  power_ = agent_.step(Feedback{state.npc, state.bike_view}, power_);
}

SessionLog run_simulated(const SessionConfig& config, const SimulationSetup& setup) {
  return run_simulated(config, setup, nullptr);
}

SessionLog run_simulated(const SessionConfig& config, const SimulationSetup& setup,
                         const std::function<void(const LoopState&, double, double)>& on_tick) {
  setup.validate();
  Session session(config);
  const SessionConfig& cfg = session.config();
  const double dt = 1.0 / cfg.tick_hz;
  SimulatedRider rider(setup, cfg);

  SessionLog log;
  log.config = config_to_json(cfg, &setup);
  log.ticks.reserve(static_cast<std::size_t>(session.training_ticks() + session.run_ticks()));

  while (session.phase() != Phase::Finished) {
    const double t_end = static_cast<double>(session.ticks() + 1) / cfg.tick_hz;
    const double power = rider.power_w();
    const auto& batch = rider.advance(dt, t_end);
    const LoopState state = session.tick(batch, power);
    log.ticks.push_back(state);
    if (on_tick) on_tick(state, power, rider.hr_bpm());
    rider.react(state);
  }

  try {
    log.summary = optimal_hr_ratio(log.ticks);
  } catch (const UndefinedMetricError&) {
    log.summary.reset();
  }
  return log;
}

}  // namespace cardioloop
