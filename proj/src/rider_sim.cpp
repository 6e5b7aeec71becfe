#include "cardioloop/rider_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "cardioloop/errors.hpp"

namespace cardioloop {

void RiderModel::validate() const {
  if (!(hr_rest_bpm > 0.0 && hr_gain_bpm_per_w > 0.0 && tau_up_s > 0.0 && tau_down_s > 0.0 &&
        p_max_w > 0.0))
    throw ParameterError("rider model constants must be positive");
  if (tau_down_s < tau_up_s) throw ParameterError("rider model needs tau_down_s >= tau_up_s");
  if (noise_bpm_sd < 0.0) throw ParameterError("noise_bpm_sd must be non-negative");
}

void BikePhysics::validate() const {
  if (!(mass_kg > 0.0 && crr > 0.0 && cda_m2 > 0.0 && air_density > 0.0 && g > 0.0))
    throw ParameterError("bike physics constants must be positive");
}

void RiderPolicy::validate() const {
  if (gain_w_per_m < 0.0 || damping_w_per_m < 0.0) throw ParameterError("policy gains must be >= 0");
  if (reaction_delay_s < 0.0) throw ParameterError("reaction delay must be >= 0");
  if (bike_computer_step_w < 0.0) throw ParameterError("bike computer step must be >= 0");
  if (constant_power_w < 0.0) throw ParameterError("constant power must be >= 0");
}

RiderPolicy parse_policy(const std::string& s) {
  RiderPolicy p;
  if (s == "follow-npc") {
    p.kind = PolicyKind::FollowNpc;
  } else if (s == "follow-bike-computer") {
    p.kind = PolicyKind::FollowBikeComputer;
  } else if (s.rfind("constant:", 0) == 0) {
    p.kind = PolicyKind::ConstantPower;
    const std::string watts = s.substr(9);
    std::size_t used = 0;
    double w = 0.0;
    try {
      w = std::stod(watts, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != watts.size() || !std::isfinite(w) || w < 0.0)
      throw ParameterError("constant policy needs a non-negative wattage, e.g. constant:150");
    p.constant_power_w = w;
  } else {
    throw ParameterError("unknown policy '" + s + "'");
  }
  return p;
}

std::string to_string(const RiderPolicy& p) {
  switch (p.kind) {
    case PolicyKind::FollowNpc:
      return "follow-npc";
    case PolicyKind::FollowBikeComputer:
      return "follow-bike-computer";
    case PolicyKind::ConstantPower:
      break;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "constant:%g", p.constant_power_w);
  return buf;
}

double hr_step(double hr_bpm, double power_w, double dt, const RiderModel& model, Rng& rng) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  if (!(power_w >= 0.0 && power_w <= model.p_max_w)) throw ParameterError("power outside [0, p_max]");
  const double steady = model.hr_rest_bpm + model.hr_gain_bpm_per_w * power_w;
  const double tau = steady > hr_bpm ? model.tau_up_s : model.tau_down_s;
  if (dt > tau) throw ParameterError("dt must not exceed the HR time constant");
  double next = hr_bpm + dt / tau * (steady - hr_bpm);
  if (model.noise_bpm_sd > 0.0) next += rng.normal() * model.noise_bpm_sd * std::sqrt(dt);
  return next;
}

double speed_to_power(double v, const BikePhysics& b) {
  return 0.5 * b.air_density * b.cda_m2 * v * v * v + b.crr * b.mass_kg * b.g * v;
}

double power_to_speed(double power_w, const BikePhysics& b) {
  b.validate();
  if (!(power_w >= 0.0) || !std::isfinite(power_w)) throw ParameterError("power must be >= 0");
  if (power_w == 0.0) return 0.0;
  const double aero = 0.5 * b.air_density * b.cda_m2;
  const double rolling = b.crr * b.mass_kg * b.g;
  // Both single-term solutions overestimate v; P(v) is convex for v > 0, so
  // Newton from above descends monotonically onto the root.
  double v = std::min(power_w / rolling, std::cbrt(power_w / aero));
  for (int i = 0; i < 100; ++i) {
    const double residual = speed_to_power(v, b) - power_w;
    if (std::abs(residual) < 1e-6) break;
    v -= residual / (3.0 * aero * v * v + rolling);
  }
  return v;
}

double policy_step(const RiderPolicy& policy, const Feedback& feedback,
                   std::optional<double> previous_offset_m, double power_w, double dt,
                   double p_max_w) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  double next = power_w;
  switch (policy.kind) {
    case PolicyKind::FollowNpc:
      if (feedback.npc) {
        const double offset = feedback.npc->offset_m;
        const double change = previous_offset_m ? offset - *previous_offset_m : 0.0;
        next += policy.gain_w_per_m * offset * dt + policy.damping_w_per_m * change;
      }
      break;
    case PolicyKind::FollowBikeComputer:
      if (feedback.bike_view && feedback.bike_view->current_zone) {
        const auto current = *feedback.bike_view->current_zone;
        const auto target = feedback.bike_view->target_zone;
        if (current < target) next += policy.bike_computer_step_w;
        if (current > target) next -= policy.bike_computer_step_w;
      }
      break;
    case PolicyKind::ConstantPower:
      break;
  }
  return std::clamp(next, 0.0, p_max_w);
}

RiderAgent::RiderAgent(RiderPolicy policy, double p_max_w, double tick_dt)
    : policy_(policy), p_max_w_(p_max_w), dt_(tick_dt) {
  policy_.validate();
  if (!(tick_dt > 0.0)) throw ParameterError("tick dt must be positive");
  delay_ticks_ = static_cast<std::size_t>(std::llround(policy_.reaction_delay_s / tick_dt));
}

double RiderAgent::initial_power() const {
  return policy_.kind == PolicyKind::ConstantPower ? std::clamp(policy_.constant_power_w, 0.0, p_max_w_)
                                                   : 0.0;
}

double RiderAgent::step(const Feedback& feedback, double power_w) {
  line_.push_back(feedback);
  if (line_.size() <= delay_ticks_) return power_w;  // nothing perceived yet
  const Feedback perceived = line_.front();
  line_.pop_front();
  const double next = policy_step(policy_, perceived, previous_offset_, power_w, dt_, p_max_w_);
  if (perceived.npc) previous_offset_ = perceived.npc->offset_m;
  return next;
}

// ---------------------------------------------------------------------------
// Synthetic ECG

namespace {

struct Wave {
  double amplitude_mv;
  double center_s;
  double width_s;
};

constexpr std::array<Wave, 5> kPqrst{{
    {0.15, -0.200, 0.025},   // P
    {-0.12, -0.030, 0.010},  // Q
    {1.00, 0.000, 0.012},    // R
    {-0.25, 0.030, 0.010},   // S
    {0.30, 0.250, 0.050},    // T
}};

constexpr double kTemplateSupport = 1.0;  // seconds either side of R

void require_rate(double hr_bpm) {
  if (!(hr_bpm >= 25.0 && hr_bpm <= 230.0))
    throw ParameterError("synthetic heart rate must be within [25, 230] bpm, got " +
                         std::to_string(hr_bpm));
}

}  // namespace

double ecg_template(double dt) {
  double v = 0.0;
  for (const auto& w : kPqrst) {
    const double z = (dt - w.center_s) / w.width_s;
    v += w.amplitude_mv * std::exp(-0.5 * z * z);
  }
  return v;
}

EcgSynth::EcgSynth(EcgSynthConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), phase_(cfg.initial_phase) {
  if (!(cfg_.fs >= 100.0)) throw ParameterError("synthetic ECG needs fs >= 100 Hz");
  if (cfg_.noise_sd_mv < 0.0) throw ParameterError("noise sd must be >= 0");
  if (!(cfg_.initial_phase >= 0.0 && cfg_.initial_phase < 1.0))
    throw ParameterError("initial phase must be in [0, 1)");
}

void EcgSynth::advance_clock(double hr_bpm) {
  require_rate(hr_bpm);
  const double h = 1.0 / cfg_.fs;
  const double t0 = static_cast<double>(clock_steps_) / cfg_.fs;
  const double rate = hr_bpm / 60.0;
  const double advanced = phase_ + rate * h;
  if (advanced >= 1.0) {
    beats_.push_back(t0 + (1.0 - phase_) / rate);
    phase_ = advanced - 1.0;
  } else {
    phase_ = advanced;
  }
  ++clock_steps_;
}

EcgSample EcgSynth::next(double hr_bpm) {
  require_rate(hr_bpm);
  const double horizon = next_time() + cfg_.lookahead_s;
  while (static_cast<double>(clock_steps_) / cfg_.fs < horizon) advance_clock(hr_bpm);
  return emit();
}

EcgSample EcgSynth::next(const std::function<double(double)>& hr_at) {
  const double horizon = next_time() + cfg_.lookahead_s;
  while (static_cast<double>(clock_steps_) / cfg_.fs < horizon)
    advance_clock(hr_at(static_cast<double>(clock_steps_) / cfg_.fs));
  return emit();
}

EcgSample EcgSynth::emit() {
  const double t = next_time();
  while (first_live_ < beats_.size() && beats_[first_live_] < t - kTemplateSupport) ++first_live_;
  double v = 0.0;
  for (std::size_t i = first_live_; i < beats_.size() && beats_[i] <= t + kTemplateSupport; ++i)
    v += ecg_template(t - beats_[i]);
  if (cfg_.noise_sd_mv > 0.0) v += cfg_.noise_sd_mv * rng_.normal();
  ++n_;
  return {t, v};
}

SynthResult synth_ecg(const std::function<double(double)>& hr_schedule, double fs,
                      double duration_s, Rng& rng, std::optional<double> snr_db) {
  if (!(duration_s > 0.0)) throw ParameterError("duration must be positive");
  EcgSynth synth(EcgSynthConfig{fs, 0.0}, rng.next_u64());
  SynthResult out;
  const auto n = static_cast<std::size_t>(std::ceil(duration_s * fs - 1e-9));
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.samples.push_back(synth.next(hr_schedule));
  for (double b : synth.beats())
    if (b < duration_s) out.beats.push_back(b);

  if (snr_db) {
    double power = 0.0;
    for (const auto& s : out.samples) power += s.v * s.v;
    power /= static_cast<double>(out.samples.size());
    const double sd = std::sqrt(power / std::pow(10.0, *snr_db / 10.0));
    for (auto& s : out.samples) s.v += sd * rng.normal();
  }
  return out;
}

}  // namespace cardioloop
