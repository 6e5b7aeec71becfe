#include "cardioloop/session.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "cardioloop/errors.hpp"

namespace cardioloop {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Training:
      return "training";
    case Phase::Running:
      return "running";
    case Phase::Finished:
      return "finished";
  }
  return "training";
}

Phase parse_phase(std::string_view s) {
  if (s == "training") return Phase::Training;
  if (s == "running") return Phase::Running;
  if (s == "finished") return Phase::Finished;
  throw ParameterError("unknown phase '" + std::string(s) + "'");
}

SessionSeeds SessionSeeds::derive(std::uint64_t seed) {
  // seed_seq's mixing is fixed by the standard, so this is portable.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::array<std::uint32_t, 6> words{};
  seq.generate(words.begin(), words.end());
  auto join = [&](std::size_t i) {
    return (static_cast<std::uint64_t>(words[i]) << 32) | words[i + 1];
  };
  return SessionSeeds{join(0), join(2), join(4)};
}

void SessionConfig::validate() const {
  hr_max_bpm(age, formula);  // throws on bad age
  if (zone_schedule.empty()) throw ParameterError("zone schedule must not be empty");
  for (const auto& seg : zone_schedule) {
    if (seg.zone.value() < 1) throw ParameterError("scheduled zones must be 1..5");
    if (!(seg.duration_s > 0.0) || !std::isfinite(seg.duration_s))
      throw ParameterError("schedule durations must be positive");
    if (std::llround(seg.duration_s * tick_hz) < 1)
      throw ParameterError("schedule segment shorter than one tick");
  }
  if (!(tick_hz >= 10.0 && tick_hz <= 250.0)) throw ParameterError("tick_hz must be within [10, 250]");
  if (!(hr_window_s > 0.0)) throw ParameterError("hr_window_s must be positive");
  if (!(training_s >= 0.0) || !std::isfinite(training_s))
    throw ParameterError("training_s must be >= 0");
  adaptation.validate();
  filter.validate();
  detector.validate();
  physics.validate();
}

void SimulationSetup::validate() const {
  rider.validate();
  policy.validate();
  if (!(ecg_noise_mv >= 0.0)) throw ParameterError("ecg_noise_mv must be >= 0");
}

namespace {

SessionConfig validated(SessionConfig c) {
  c.validate();
  c.adaptation.rng_seed = c.seeds.adaptation;
  c.detector.fs = c.filter.fs;
  return c;
}

}  // namespace

Session::Session(SessionConfig config)
    : config_(validated(std::move(config))),
      zones_(compute_zone_model({config_.age, config_.formula, std::nullopt})),
      pipeline_(PipelineConfig{config_.filter, config_.detector, config_.hr_window_s}),
      controller_(config_.condition, config_.adaptation, zones_, 1.0 / config_.tick_hz) {
  training_ticks_ = static_cast<std::uint64_t>(std::llround(config_.training_s * config_.tick_hz));
  std::uint64_t acc = 0;
  for (const auto& seg : config_.zone_schedule) {
    acc += static_cast<std::uint64_t>(std::llround(seg.duration_s * config_.tick_hz));
    segment_ends_.push_back(acc);
  }
  run_ticks_total_ = acc;
  phase_ = training_ticks_ > 0 ? Phase::Training : Phase::Running;
}

ZoneId Session::scheduled_zone(std::uint64_t run_ticks) const {
  for (std::size_t i = 0; i < segment_ends_.size(); ++i)
    if (run_ticks < segment_ends_[i]) return config_.zone_schedule[i].zone;
  return config_.zone_schedule.back().zone;
}

LoopState Session::tick(std::span<const EcgSample> ecg, std::optional<double> power_w) {
  return advance(ecg, power_w, false);
}

LoopState Session::stop(std::optional<double> power_w) { return advance({}, power_w, true); }

LoopState Session::advance(std::span<const EcgSample> ecg, std::optional<double> power_w,
                           bool force_finish) {
  if (phase_ == Phase::Finished) throw StateError("session already finished");
  if (power_w && !(*power_w >= 0.0)) throw ParameterError("power must be >= 0");

  events_.clear();
  pipeline_.push(ecg, events_);

  ++ticks_;
  const double hz = config_.tick_hz;
  LoopState s;
  s.t_s = static_cast<double>(ticks_) / hz;
  s.condition = config_.condition;

  const auto run = static_cast<std::int64_t>(ticks_) - static_cast<std::int64_t>(training_ticks_);
  const auto total = static_cast<std::int64_t>(run_ticks_total_);
  if (force_finish || run >= total) {
    phase_ = Phase::Finished;
    s.target_zone = run < 0 ? config_.zone_schedule.front().zone
                            : scheduled_zone(static_cast<std::uint64_t>(std::min(run, total)));
    s.remaining_s = 0.0;
    s.end_prompt = true;
  } else if (run < 0) {
    phase_ = Phase::Training;
    s.target_zone = config_.zone_schedule.front().zone;
    s.remaining_s = static_cast<double>(-run) / hz;
  } else {
    phase_ = Phase::Running;
    s.target_zone = scheduled_zone(static_cast<std::uint64_t>(run));
    s.remaining_s = static_cast<double>(total - run) / hz;
  }
  s.phase = phase_;

  std::optional<double> hr;
  if (const auto& est = pipeline_.latest()) hr = est->hr_bpm;
  if (hr) {
    s.hr_bpm = hr;
    s.hr_norm = *hr / zones_.hr_max_bpm;
    s.current_zone = classify(*hr, zones_);
  }

  const Feedback fb = controller_.step(hr, s.target_zone);
  s.npc = fb.npc;
  s.bike_view = fb.bike_view;
  s.speed_mps = power_w ? power_to_speed(*power_w, config_.physics) : 0.0;
  return s;
}

}  // namespace cardioloop
