#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cardioloop/adaptation.hpp"
#include "cardioloop/ecg_dsp.hpp"
#include "cardioloop/session.hpp"

// Wire protocol: one UTF-8 JSON object per LF-terminated line (or one per
// WebSocket text message), discriminated by `type`. Unknown fields are ignored.
namespace cardioloop::net {

inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;

enum class Role { Sensor, Console, Observer };
enum class ServeMode { Sensor, Manual, Sim };
enum class CommandKind { Start, Stop, SetCondition, SetAge, SetMode };

std::string_view to_string(Role r);
std::string_view to_string(ServeMode m);
std::string_view to_string(CommandKind c);
Role parse_role(std::string_view s);
ServeMode parse_serve_mode(std::string_view s);
CommandKind parse_command(std::string_view s);

struct HelloFrame {
  Role role = Role::Observer;
  friend bool operator==(const HelloFrame&, const HelloFrame&) = default;
};

// `t`/`v` are scalars for a single sample, parallel arrays when batched.
struct EcgFrame {
  std::vector<EcgSample> samples;
  bool batched = false;
  friend bool operator==(const EcgFrame& a, const EcgFrame& b);
};

struct EffortFrame {
  double power_w = 0.0;
  friend bool operator==(const EffortFrame&, const EffortFrame&) = default;
};

struct CmdFrame {
  CommandKind cmd = CommandKind::Start;
  std::optional<std::string> id;
  std::optional<int> age;
  std::optional<Condition> condition;
  std::optional<std::string> participant_id;
  std::optional<ServeMode> mode;
  friend bool operator==(const CmdFrame&, const CmdFrame&) = default;
};

struct StateFrame {
  std::uint64_t dropped = 0;  // frames this client missed since its last state
  std::uint64_t seq = 0;
  std::int64_t tick_ns = 0;   // server steady clock at tick start
  LoopState state;
  friend bool operator==(const StateFrame&, const StateFrame&) = default;
};

struct AckFrame {
  std::string ref;  // what is acknowledged: "hello", "effort" or a command name
  std::optional<std::string> id;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
  friend bool operator==(const AckFrame&, const AckFrame&) = default;
};

struct ErrorFrame {
  std::string code;
  std::string message;
  std::optional<std::string> id;
  friend bool operator==(const ErrorFrame&, const ErrorFrame&) = default;
};

using Frame = std::variant<HelloFrame, EcgFrame, EffortFrame, CmdFrame, StateFrame, AckFrame, ErrorFrame>;

// Error raised while decoding a frame; `code` goes into the error frame.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Single line, no trailing newline.
std::string serialize(const Frame& f);
Frame parse_frame(std::string_view line);

// State frames are shared across clients except for `dropped`; the server
// serialises the body once and prefixes it per client.
std::string state_body(std::uint64_t seq, std::int64_t tick_ns, const LoopState& s);
std::string state_frame_with_body(std::uint64_t dropped, std::string_view body);

}  // namespace cardioloop::net
