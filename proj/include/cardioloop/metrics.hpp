#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cardioloop/session.hpp"

namespace cardioloop {

struct SegmentMetrics {
  ZoneId zone;
  std::optional<double> ratio_pct;  // unset when the segment has no HR-bearing tick
  std::optional<double> mean_hr_norm;
  std::size_t n_ticks = 0;          // HR-bearing ticks

  friend bool operator==(const SegmentMetrics&, const SegmentMetrics&) = default;
};

struct SessionMetrics {
  double optimal_hr_ratio_pct = 0.0;
  double mean_hr_norm = 0.0;
  std::vector<SegmentMetrics> per_segment;
  std::size_t n_ticks_total = 0;

  friend bool operator==(const SessionMetrics&, const SessionMetrics&) = default;
};

// Only Running ticks that carry an HR estimate count, in numerator and
// denominator alike. Throws UndefinedMetricError when there are none.
SessionMetrics optimal_hr_ratio(std::span<const LoopState> ticks);

double mean_normalized_hr(std::span<const LoopState> ticks);

}  // namespace cardioloop
