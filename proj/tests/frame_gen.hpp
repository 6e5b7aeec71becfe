#pragma once

// Random protocol frames for round-trip checks.

#include <cmath>
#include <string>

#include "cardioloop/protocol.hpp"
#include "cardioloop/rng.hpp"

namespace testsupport {

inline int pick(cardioloop::Rng& rng, int n) { return static_cast<int>(rng.uniform01() * n); }

// Finite doubles over a wide dynamic range, including signed zero and integers.
inline double any_double(cardioloop::Rng& rng) {
  switch (pick(rng, 6)) {
    case 0:
      return 0.0;
    case 1:
      return -0.0;
    case 2:
      return static_cast<double>(pick(rng, 2000) - 1000);
    case 3:
      return std::ldexp(rng.uniform(-1.0, 1.0), pick(rng, 200) - 100);
    default:
      return rng.uniform(-500.0, 500.0);
  }
}

// Values the log keeps at six decimals.
inline double micro_grid(cardioloop::Rng& rng, double hi) {
  return static_cast<double>(static_cast<long long>(rng.uniform(0.0, hi) * 1e6)) / 1e6;
}

inline std::string any_text(cardioloop::Rng& rng) {
  static const std::string alphabet = "abcXYZ019 _-\"\\/\t\n{}[]:,\xc3\xa9";
  std::string s;
  const int n = pick(rng, 24);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng, static_cast<int>(alphabet.size()) - 1);
    if (k == static_cast<int>(alphabet.size()) - 2) {
      s += "\xc3\xa9";  // keep the UTF-8 pair intact
    } else {
      s += alphabet[static_cast<std::size_t>(k)];
    }
  }
  return s;
}

inline cardioloop::ZoneId any_zone(cardioloop::Rng& rng, int lo = 0) {
  return cardioloop::ZoneId{lo + pick(rng, 6 - lo)};
}

inline cardioloop::LoopState any_state(cardioloop::Rng& rng) {
  using namespace cardioloop;
  LoopState s;
  s.t_s = micro_grid(rng, 1000.0);
  s.phase = static_cast<Phase>(pick(rng, 3));
  if (pick(rng, 4)) {
    s.hr_bpm = rng.uniform(25.0, 230.0);
    s.hr_norm = *s.hr_bpm / 187.0;
    s.current_zone = any_zone(rng);
  }
  s.target_zone = any_zone(rng, 1);
  s.remaining_s = micro_grid(rng, 600.0);
  s.condition = static_cast<Condition>(pick(rng, 3));
  if (s.condition == Condition::Baseline) {
    s.bike_view = BikeComputerView{s.hr_bpm, s.current_zone, s.target_zone};
  } else {
    s.npc = NpcState{rng.uniform(-30.0, 30.0), pick(rng, 2) == 1, rng.next_u64() >> 20};
  }
  s.speed_mps = pick(rng, 5) ? rng.uniform(0.0, 20.0) : 0.0;
  s.end_prompt = s.phase == Phase::Finished;
  return s;
}

inline cardioloop::net::Frame random_frame(cardioloop::Rng& rng) {
  using namespace cardioloop;
  using namespace cardioloop::net;
  switch (pick(rng, 7)) {
    case 0:
      return HelloFrame{static_cast<Role>(pick(rng, 3))};
    case 1: {
      EcgFrame f;
      f.batched = pick(rng, 2) == 1;
      const int n = f.batched ? pick(rng, 40) : 1;
      for (int i = 0; i < n; ++i) f.samples.push_back({std::abs(any_double(rng)), any_double(rng)});
      return f;
    }
    case 2:
      return EffortFrame{any_double(rng)};
    case 3: {
      CmdFrame f;
      f.cmd = static_cast<CommandKind>(pick(rng, 5));
      if (pick(rng, 2)) f.id = any_text(rng);
      if (pick(rng, 2)) f.age = pick(rng, 200) - 50;
      if (pick(rng, 2)) f.condition = static_cast<Condition>(pick(rng, 3));
      if (pick(rng, 2)) f.participant_id = any_text(rng);
      if (pick(rng, 2)) f.mode = static_cast<ServeMode>(pick(rng, 3));
      return f;
    }
    case 4:
      return StateFrame{rng.next_u64() >> pick(rng, 64), rng.next_u64() >> 1,
                        static_cast<std::int64_t>(rng.next_u64() >> 1) * (pick(rng, 2) ? 1 : -1), any_state(rng)};
    case 5: {
      AckFrame f;
      f.ref = any_text(rng);
      if (pick(rng, 2)) f.id = any_text(rng);
      const int n = pick(rng, 4);
      for (int i = 0; i < n; ++i) {
        const std::string key = "k" + std::to_string(pick(rng, 1000));
        if (pick(rng, 2))
          f.detail[key] = any_double(rng);
        else
          f.detail[key] = any_text(rng);
      }
      return f;
    }
    default: {
      ErrorFrame f;
      f.code = any_text(rng);
      f.message = any_text(rng);
      if (pick(rng, 2)) f.id = any_text(rng);
      return f;
    }
  }
}

}  // namespace testsupport
