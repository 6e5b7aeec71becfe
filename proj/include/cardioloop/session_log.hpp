#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardioloop/metrics.hpp"
#include "cardioloop/session.hpp"

namespace cardioloop {

using OrderedJson = nlohmann::ordered_json;

// Session log: JSON Lines. Line 1 is the config snapshot, then one tick record
// per tick, then the summary.
struct SessionLog {
  OrderedJson config;
  std::vector<LoopState> ticks;
  std::optional<SessionMetrics> summary;  // unset: metric undefined for this run
  std::string stored_summary_line;        // verbatim, when read from a file
};

// Config snapshot. `setup` adds the simulated-rider block.
OrderedJson config_to_json(const SessionConfig& config, const SimulationSetup* setup = nullptr);

// Overlays the keys present in `j` on `base`. Unknown keys are rejected.
SessionConfig config_from_json(const nlohmann::json& j, SessionConfig base = {});
SimulationSetup simulation_from_json(const nlohmann::json& j, SimulationSetup base = {});

// `"t_s":...,"phase":...` without braces; timestamps carry six decimals.
std::string loop_state_fields(const LoopState& s);
LoopState loop_state_from_json(const nlohmann::json& j);

std::string format_tick_line(const LoopState& s);
std::string format_summary_line(const std::optional<SessionMetrics>& m);
OrderedJson metrics_to_json(const SessionMetrics& m);

void write_session_log(std::ostream& os, const SessionLog& log);
void write_session_log(const std::string& path, const SessionLog& log);

// Throws LogParseError with the offending line number.
SessionLog read_session_log(std::istream& is);
SessionLog read_session_log(const std::string& path);

}  // namespace cardioloop
