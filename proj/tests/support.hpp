#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "cardioloop/ecg_dsp.hpp"

namespace testsupport {

// Direct DTFT of an FIR, written independently of the library's evaluator.
inline double dtft_magnitude(std::span<const double> h, double f_hz, double fs) {
  std::complex<double> acc{0.0, 0.0};
  const double w = 2.0 * std::numbers::pi * f_hz / fs;
  for (std::size_t n = 0; n < h.size(); ++n) acc += h[n] * std::polar(1.0, -w * static_cast<double>(n));
  return std::abs(acc);
}

// Number of true beats with a detection within `tol_s`; each detection
// counts once.
inline std::size_t matched_beats(const std::vector<double>& truth, const std::vector<double>& detected, double tol_s) {
  std::vector<bool> used(detected.size(), false);
  std::size_t hits = 0;
  for (double b : truth) {
    auto it = std::lower_bound(detected.begin(), detected.end(), b - tol_s);
    for (; it != detected.end() && *it <= b + tol_s; ++it) {
      const auto i = static_cast<std::size_t>(it - detected.begin());
      if (!used[i]) {
        used[i] = true;
        ++hits;
        break;
      }
    }
  }
  return hits;
}

struct PipelineRun {
  std::vector<double> peak_times;
  std::vector<cardioloop::HrEstimate> estimates;
};

inline PipelineRun run_pipeline(std::span<const cardioloop::EcgSample> samples, cardioloop::PipelineConfig cfg = {}) {
  cardioloop::EcgPipeline p(cfg);
  cardioloop::PipelineEvents ev;
  p.push(samples, ev);
  p.finish(ev);
  PipelineRun r;
  for (const auto& pk : ev.peaks) r.peak_times.push_back(pk.t);
  r.estimates = ev.estimates;
  return r;
}

}  // namespace testsupport
