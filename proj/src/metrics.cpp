#include "cardioloop/metrics.hpp"

#include "cardioloop/errors.hpp"

namespace cardioloop {

namespace {

bool counts(const LoopState& s) { return s.phase == Phase::Running && s.hr_bpm && s.hr_norm && s.current_zone; }

struct Accumulator {
  std::size_t on_target = 0;
  std::size_t n = 0;
  double norm_sum = 0.0;

  void add(const LoopState& s) {
    ++n;
    norm_sum += *s.hr_norm;
    if (*s.current_zone == s.target_zone) ++on_target;
  }
  double ratio() const { return 100.0 * static_cast<double>(on_target) / static_cast<double>(n); }
  double mean() const { return norm_sum / static_cast<double>(n); }
};

}  // namespace

SessionMetrics optimal_hr_ratio(std::span<const LoopState> ticks) {
  SessionMetrics m;
  Accumulator total;
  std::vector<std::pair<ZoneId, Accumulator>> segments;
  for (const auto& s : ticks) {
    if (s.phase != Phase::Running) continue;
    if (segments.empty() || segments.back().first != s.target_zone) segments.push_back({s.target_zone, {}});
    if (!counts(s)) continue;
    total.add(s);
    segments.back().second.add(s);
  }
  if (total.n == 0) throw UndefinedMetricError();

  m.optimal_hr_ratio_pct = total.ratio();
  m.mean_hr_norm = total.mean();
  m.n_ticks_total = total.n;
  for (const auto& [zone, acc] : segments) {
    SegmentMetrics seg;
    seg.zone = zone;
    seg.n_ticks = acc.n;
    if (acc.n > 0) {
      seg.ratio_pct = acc.ratio();
      seg.mean_hr_norm = acc.mean();
    }
    m.per_segment.push_back(seg);
  }
  return m;
}

double mean_normalized_hr(std::span<const LoopState> ticks) {
  Accumulator acc;
  for (const auto& s : ticks)
    if (counts(s)) acc.add(s);
  if (acc.n == 0) throw UndefinedMetricError();
  return acc.mean();
}

}  // namespace cardioloop
