#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cardioloop/adaptation.hpp"
#include "cardioloop/ecg_dsp.hpp"
#include "cardioloop/rng.hpp"

namespace cardioloop {

// First-order heart-rate response to power. Simulation constants only.
struct RiderModel {
  double hr_rest_bpm = 60.0;
  double hr_gain_bpm_per_w = 0.30;
  double tau_up_s = 30.0;
  double tau_down_s = 45.0;
  double p_max_w = 400.0;
  double noise_bpm_sd = 1.0;  // 0 disables noise

  void validate() const;
};

struct BikePhysics {
  double mass_kg = 85.0;
  double crr = 0.005;
  double cda_m2 = 0.4;
  double air_density = 1.225;
  double g = 9.81;

  void validate() const;
};

enum class PolicyKind { FollowNpc, FollowBikeComputer, ConstantPower };

struct RiderPolicy {
  PolicyKind kind = PolicyKind::FollowNpc;
  double gain_w_per_m = 0.3;      // W per metre of offset per second
  double damping_w_per_m = 5.0;   // W per metre of offset change
  double reaction_delay_s = 1.5;
  double bike_computer_step_w = 10.0;  // per tick
  double constant_power_w = 0.0;

  void validate() const;
};

// "follow-npc" | "follow-bike-computer" | "constant:<watts>"
RiderPolicy parse_policy(const std::string& s);
std::string to_string(const RiderPolicy& p);

double hr_step(double hr_bpm, double power_w, double dt, const RiderModel& model, Rng& rng);

// Steady speed on the flat: P = 0.5*rho*CdA*v^3 + Crr*m*g*v.
double power_to_speed(double power_w, const BikePhysics& physics);
double speed_to_power(double speed_mps, const BikePhysics& physics);

// One policy update. `offset_m`/`previous_offset_m` are the (already delayed)
// NPC offsets the rider perceives; `view` is the bike computer.
double policy_step(const RiderPolicy& policy, const Feedback& feedback,
                   std::optional<double> previous_offset_m, double power_w, double dt,
                   double p_max_w);

// Stateful rider: holds the reaction-delay line in front of policy_step.
class RiderAgent {
 public:
  RiderAgent(RiderPolicy policy, double p_max_w, double tick_dt);

  double initial_power() const;
  double step(const Feedback& feedback, double power_w);

 private:
  RiderPolicy policy_;
  double p_max_w_;
  double dt_;
  std::size_t delay_ticks_;
  std::deque<Feedback> line_;
  std::optional<double> previous_offset_;
};

// ---------------------------------------------------------------------------
// Synthetic ECG

// Gaussian-sum PQRST beat shape (mV) at `dt` seconds from the R peak.
double ecg_template(double dt);

struct EcgSynthConfig {
  double fs = 130.0;
  double noise_sd_mv = 0.0;
  double lookahead_s = 0.4;    // beats are scheduled this far ahead of the output
  double initial_phase = 0.5;  // fraction of a beat already elapsed at t = 0
};

// Streaming generator: each call to next() emits the sample at n/fs, with the
// beat clock advanced at the supplied rate.
class EcgSynth {
 public:
  EcgSynth(EcgSynthConfig cfg, std::uint64_t seed);

  double next_time() const { return static_cast<double>(n_) / cfg_.fs; }
  EcgSample next(double hr_bpm);
  EcgSample next(const std::function<double(double)>& hr_at);

  // Ground-truth beat times scheduled so far (may run ahead of the samples).
  const std::vector<double>& beats() const { return beats_; }

 private:
  EcgSample emit();
  void advance_clock(double hr_bpm);

  EcgSynthConfig cfg_;
  Rng rng_;
  std::uint64_t n_ = 0;
  std::uint64_t clock_steps_ = 0;
  double phase_;
  std::vector<double> beats_;
  std::size_t first_live_ = 0;
};

struct SynthResult {
  std::vector<EcgSample> samples;
  std::vector<double> beats;  // ground-truth R times inside [0, duration)
};

// Batch generator. `snr_db` sets white noise relative to the clean trace's
// mean power.
SynthResult synth_ecg(const std::function<double(double)>& hr_schedule, double fs,
                      double duration_s, Rng& rng, std::optional<double> snr_db = std::nullopt);

}  // namespace cardioloop
