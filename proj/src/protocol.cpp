#include "cardioloop/protocol.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>

#include "cardioloop/errors.hpp"
#include "cardioloop/session_log.hpp"

namespace cardioloop::net {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Sensor:
      return "sensor";
    case Role::Console:
      return "console";
    case Role::Observer:
      return "observer";
  }
  return "observer";
}

std::string_view to_string(ServeMode m) {
  switch (m) {
    case ServeMode::Sensor:
      return "sensor";
    case ServeMode::Manual:
      return "manual";
    case ServeMode::Sim:
      return "sim";
  }
  return "sensor";
}

std::string_view to_string(CommandKind c) {
  switch (c) {
    case CommandKind::Start:
      return "start";
    case CommandKind::Stop:
      return "stop";
    case CommandKind::SetCondition:
      return "set_condition";
    case CommandKind::SetAge:
      return "set_age";
    case CommandKind::SetMode:
      return "set_mode";
  }
  return "start";
}

Role parse_role(std::string_view s) {
  if (s == "sensor") return Role::Sensor;
  if (s == "console") return Role::Console;
  if (s == "observer") return Role::Observer;
  throw ProtocolError("bad_field", "unknown role '" + std::string(s) + "'");
}

ServeMode parse_serve_mode(std::string_view s) {
  if (s == "sensor") return ServeMode::Sensor;
  if (s == "manual") return ServeMode::Manual;
  if (s == "sim") return ServeMode::Sim;
  throw ProtocolError("bad_field", "unknown mode '" + std::string(s) + "'");
}

CommandKind parse_command(std::string_view s) {
  if (s == "start") return CommandKind::Start;
  if (s == "stop") return CommandKind::Stop;
  if (s == "set_condition") return CommandKind::SetCondition;
  if (s == "set_age") return CommandKind::SetAge;
  if (s == "set_mode") return CommandKind::SetMode;
  throw ProtocolError("bad_field", "unknown cmd '" + std::string(s) + "'");
}

bool operator==(const EcgFrame& a, const EcgFrame& b) {
  if (a.batched != b.batched || a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    // Bitwise, so that -0.0 and 0.0 are told apart by the round-trip check.
    if (std::bit_cast<std::uint64_t>(a.samples[i].t) != std::bit_cast<std::uint64_t>(b.samples[i].t) ||
        std::bit_cast<std::uint64_t>(a.samples[i].v) != std::bit_cast<std::uint64_t>(b.samples[i].v))
      return false;
  }
  return true;
}

namespace {

double finite_number(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ProtocolError("bad_field", std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ProtocolError("bad_field", std::string("'") + key + "' must be finite");
  return d;
}

std::string string_field(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ProtocolError("bad_field", std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

struct Serializer {
  std::string operator()(const HelloFrame& f) const {
    ordered_json j{{"type", "hello"}, {"role", std::string(to_string(f.role))}};
    return j.dump();
  }
  std::string operator()(const EcgFrame& f) const {
    ordered_json j;
    j["type"] = "ecg";
    if (f.batched) {
      ordered_json t = ordered_json::array(), v = ordered_json::array();
      for (const auto& s : f.samples) {
        t.push_back(s.t);
        v.push_back(s.v);
      }
      j["t"] = std::move(t);
      j["v"] = std::move(v);
    } else {
      const EcgSample s = f.samples.empty() ? EcgSample{} : f.samples.front();
      j["t"] = s.t;
      j["v"] = s.v;
    }
    return j.dump();
  }
  std::string operator()(const EffortFrame& f) const {
    ordered_json j{{"type", "effort"}, {"power_w", f.power_w}};
    return j.dump();
  }
  std::string operator()(const CmdFrame& f) const {
    ordered_json j;
    j["type"] = "cmd";
    j["cmd"] = std::string(to_string(f.cmd));
    if (f.id) j["id"] = *f.id;
    if (f.age) j["age"] = *f.age;
    if (f.condition) j["condition"] = std::string(cardioloop::to_string(*f.condition));
    if (f.participant_id) j["participant_id"] = *f.participant_id;
    if (f.mode) j["mode"] = std::string(to_string(*f.mode));
    return j.dump();
  }
  std::string operator()(const StateFrame& f) const {
    return state_frame_with_body(f.dropped, state_body(f.seq, f.tick_ns, f.state));
  }
  std::string operator()(const AckFrame& f) const {
    ordered_json j;
    j["type"] = "ack";
    j["ref"] = f.ref;
    if (f.id) j["id"] = *f.id;
    j["detail"] = f.detail;
    return j.dump();
  }
  std::string operator()(const ErrorFrame& f) const {
    ordered_json j;
    j["type"] = "error";
    j["code"] = f.code;
    j["message"] = f.message;
    if (f.id) j["id"] = *f.id;
    return j.dump();
  }
};

Frame parse_object(const ordered_json& j) {
  if (!j.is_object()) throw ProtocolError("malformed_json", "frame must be a JSON object");
  if (!j.contains("type") || !j.at("type").is_string())
    throw ProtocolError("bad_field", "frame needs a string 'type'");
  const std::string type = j.at("type").get<std::string>();

  if (type == "hello") return HelloFrame{parse_role(string_field(j, "role"))};

  if (type == "ecg") {
    EcgFrame f;
    const auto& t = j.at("t");
    const auto& v = j.at("v");
    if (t.is_array()) {
      if (!v.is_array() || v.size() != t.size())
        throw ProtocolError("bad_field", "'t' and 'v' arrays must have equal length");
      f.batched = true;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t[i].is_number() || !v[i].is_number()) throw ProtocolError("bad_field", "ecg values must be numbers");
        f.samples.push_back({t[i].get<double>(), v[i].get<double>()});
      }
    } else {
      f.samples.push_back({finite_number(j, "t"), finite_number(j, "v")});
    }
    for (const auto& s : f.samples)
      if (!std::isfinite(s.t) || !std::isfinite(s.v) || s.t < 0.0)
        throw ProtocolError("bad_field", "ecg samples need finite t >= 0 and finite v");
    return f;
  }

  if (type == "effort") return EffortFrame{finite_number(j, "power_w")};

  if (type == "cmd") {
    CmdFrame f;
    f.cmd = parse_command(string_field(j, "cmd"));
    if (j.contains("id")) f.id = string_field(j, "id");
    if (j.contains("age")) {
      if (!j.at("age").is_number_integer()) throw ProtocolError("bad_field", "'age' must be an integer");
      f.age = j.at("age").get<int>();
    }
    if (j.contains("condition")) {
      try {
        f.condition = parse_condition(string_field(j, "condition"));
      } catch (const ParameterError& e) {
        throw ProtocolError("bad_field", e.what());
      }
    }
    if (j.contains("participant_id")) f.participant_id = string_field(j, "participant_id");
    if (j.contains("mode")) f.mode = parse_serve_mode(string_field(j, "mode"));
    return f;
  }

  if (type == "state") {
    StateFrame f;
    f.dropped = j.at("dropped").get<std::uint64_t>();
    f.seq = j.at("seq").get<std::uint64_t>();
    f.tick_ns = j.at("tick_ns").get<std::int64_t>();
    try {
      f.state = loop_state_from_json(json(j));
    } catch (const ParameterError& e) {
      throw ProtocolError("bad_field", e.what());
    }
    return f;
  }

  if (type == "ack") {
    AckFrame f;
    f.ref = string_field(j, "ref");
    if (j.contains("id")) f.id = string_field(j, "id");
    if (j.contains("detail")) f.detail = j.at("detail");
    return f;
  }

  if (type == "error") {
    ErrorFrame f;
    f.code = string_field(j, "code");
    f.message = j.contains("message") ? string_field(j, "message") : std::string{};
    if (j.contains("id")) f.id = string_field(j, "id");
    return f;
  }

  throw ProtocolError("unknown_type", "unknown frame type '" + type + "'");
}

}  // namespace

std::string serialize(const Frame& f) { return std::visit(Serializer{}, f); }

Frame parse_frame(std::string_view line) {
  if (line.size() > kMaxFrameBytes) throw ProtocolError("frame_too_large", "frame exceeds 64 KiB");
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError("malformed_json", e.what());
  }
  try {
    return parse_object(j);
  } catch (const json::exception& e) {
    throw ProtocolError("bad_field", e.what());
  }
}

std::string state_body(std::uint64_t seq, std::int64_t tick_ns, const LoopState& s) {
  return fmt::format("\"seq\":{},\"tick_ns\":{},{}}}", seq, tick_ns, loop_state_fields(s));
}

std::string state_frame_with_body(std::uint64_t dropped, std::string_view body) {
  return fmt::format("{{\"type\":\"state\",\"dropped\":{},{}", dropped, body);
}

}  // namespace cardioloop::net
