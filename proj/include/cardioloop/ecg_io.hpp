#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "cardioloop/ecg_dsp.hpp"

namespace cardioloop {

// CSV with header `t,v` (seconds, millivolts). Throws LogParseError with the
// offending line number.
std::vector<EcgSample> read_ecg_csv(std::istream& is);
void write_ecg_csv(std::ostream& os, std::span<const EcgSample> samples);

// JSON Lines, one object per record.
void write_peaks_jsonl(std::ostream& os, std::span<const RPeak> peaks);
void write_hr_jsonl(std::ostream& os, std::span<const HrEstimate> estimates);
void write_beats_jsonl(std::ostream& os, std::span<const double> beat_times);

}  // namespace cardioloop
