#include "cardioloop/ecg_io.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "cardioloop/errors.hpp"

namespace cardioloop {

namespace {

double parse_field(std::string_view s, std::size_t lineno) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw LogParseError(lineno, "not a number: '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<EcgSample> read_ecg_csv(std::istream& is) {
  std::vector<EcgSample> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "t,v") throw LogParseError(lineno, "expected header 't,v'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw LogParseError(lineno, "expected two columns");
    const std::string_view view(line);
    out.push_back({parse_field(view.substr(0, comma), lineno), parse_field(view.substr(comma + 1), lineno)});
  }
  if (!header) throw LogParseError(lineno + 1, "missing header 't,v'");
  return out;
}

void write_ecg_csv(std::ostream& os, std::span<const EcgSample> samples) {
  os << "t,v\n";
  for (const auto& s : samples) fmt::print(os, "{:.6f},{:.6f}\n", s.t, s.v);
}

void write_peaks_jsonl(std::ostream& os, std::span<const RPeak> peaks) {
  for (const auto& p : peaks) fmt::print(os, "{{\"t\":{:.6f},\"amplitude\":{}}}\n", p.t, p.amplitude);
}

void write_hr_jsonl(std::ostream& os, std::span<const HrEstimate> estimates) {
  for (const auto& e : estimates)
    fmt::print(os, "{{\"t\":{:.6f},\"hr_bpm\":{},\"n_beats\":{}}}\n", e.t, e.hr_bpm, e.n_beats);
}

void write_beats_jsonl(std::ostream& os, std::span<const double> beat_times) {
  for (double t : beat_times) fmt::print(os, "{{\"t\":{:.6f}}}\n", t);
}

}  // namespace cardioloop
