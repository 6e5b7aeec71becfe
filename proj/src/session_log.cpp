#include "cardioloop/session_log.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "cardioloop/errors.hpp"

namespace cardioloop {

namespace {

using nlohmann::json;

std::string policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::FollowNpc:
      return "follow-npc";
    case PolicyKind::FollowBikeComputer:
      return "follow-bike-computer";
    case PolicyKind::ConstantPower:
      return "constant";
  }
  return "follow-npc";
}

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "follow-npc") return PolicyKind::FollowNpc;
  if (s == "follow-bike-computer") return PolicyKind::FollowBikeComputer;
  if (s == "constant") return PolicyKind::ConstantPower;
  throw ParameterError("unknown policy kind '" + s + "'");
}

// Applies `fn(key, value)` to every member, rejecting non-objects.
template <typename Fn>
void each_member(const json& j, const char* where, Fn&& fn) {
  if (!j.is_object()) throw ParameterError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) fn(key, value);
}

[[noreturn]] void unknown_key(const char* where, const std::string& key) {
  throw ParameterError(std::string("unknown key '") + key + "' in " + where);
}

void append_number(std::string& out, double v) { fmt::format_to(std::back_inserter(out), "{}", v); }

void append_opt(std::string& out, const std::optional<double>& v) {
  if (v)
    append_number(out, *v);
  else
    out += "null";
}

void append_opt(std::string& out, const std::optional<ZoneId>& z) {
  if (z)
    fmt::format_to(std::back_inserter(out), "{}", z->value());
  else
    out += "null";
}

std::optional<double> opt_double(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::optional<ZoneId> opt_zone(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return ZoneId{v.get<int>()};
}

SessionMetrics metrics_from_json(const json& j) {
  SessionMetrics m;
  m.optimal_hr_ratio_pct = j.at("optimal_hr_ratio_pct").get<double>();
  m.mean_hr_norm = j.at("mean_hr_norm").get<double>();
  m.n_ticks_total = j.at("n_ticks_total").get<std::size_t>();
  for (const auto& seg : j.at("per_segment")) {
    SegmentMetrics s;
    s.zone = ZoneId{seg.at("zone").get<int>()};
    s.ratio_pct = opt_double(seg, "ratio_pct");
    s.mean_hr_norm = opt_double(seg, "mean_hr_norm");
    s.n_ticks = seg.at("n_ticks").get<std::size_t>();
    m.per_segment.push_back(s);
  }
  return m;
}

}  // namespace

OrderedJson config_to_json(const SessionConfig& c, const SimulationSetup* setup) {
  OrderedJson j;
  j["type"] = "config";
  j["participant_id"] = c.participant_id;
  j["age"] = c.age;
  j["hr_max_formula"] = std::string(to_string(c.formula));
  j["hr_max_bpm"] = hr_max_bpm(c.age, c.formula);
  j["condition"] = std::string(to_string(c.condition));
  j["zone_schedule"] = OrderedJson::array();
  for (const auto& seg : c.zone_schedule)
    j["zone_schedule"].push_back(OrderedJson{{"zone", seg.zone.value()}, {"duration_s", seg.duration_s}});
  j["tick_hz"] = c.tick_hz;
  j["hr_window_s"] = c.hr_window_s;
  j["training_s"] = c.training_s;
  j["seeds"] = {{"adaptation", c.seeds.adaptation}, {"rider", c.seeds.rider}, {"ecg", c.seeds.ecg}};

  const auto& a = c.adaptation;
  OrderedJson adapt;
  adapt["max_offset_m"] = a.max_offset_m;
  adapt["full_scale_dev_bpm"] = a.full_scale_dev_bpm;
  adapt["npc_slew_mps"] = a.npc_slew_mps;
  adapt["green_radius_m"] = a.green_radius_m ? OrderedJson(*a.green_radius_m) : OrderedJson(nullptr);
  adapt["random_retarget_s"] = a.random_retarget_s;
  j["adaptation"] = adapt;

  j["filter"] = {{"f_lo", c.filter.f_lo}, {"f_hi", c.filter.f_hi}, {"n_taps", c.filter.n_taps}, {"fs", c.filter.fs}};
  const auto& d = c.detector;
  j["detector"] = {{"threshold_coeff", d.threshold_coeff}, {"refractory_s", d.refractory_s},
                   {"integration_s", d.integration_s},     {"buffer_len", d.buffer_len},
                   {"searchback_factor", d.searchback_factor}, {"searchback_min_s", d.searchback_min_s},
                   {"learning_s", d.learning_s},           {"peak_timeout_s", d.peak_timeout_s},
                   {"preblank_s", d.preblank_s}};
  const auto& p = c.physics;
  j["physics"] = {{"mass_kg", p.mass_kg}, {"crr", p.crr}, {"cda_m2", p.cda_m2},
                  {"air_density", p.air_density}, {"g", p.g}};

  if (setup) {
    const auto& r = setup->rider;
    const auto& pol = setup->policy;
    OrderedJson sim;
    sim["rider"] = {{"hr_rest_bpm", r.hr_rest_bpm}, {"hr_gain_bpm_per_w", r.hr_gain_bpm_per_w},
                    {"tau_up_s", r.tau_up_s},       {"tau_down_s", r.tau_down_s},
                    {"p_max_w", r.p_max_w},         {"noise_bpm_sd", r.noise_bpm_sd}};
    sim["policy"] = {{"kind", policy_kind_name(pol.kind)},
                     {"gain_w_per_m", pol.gain_w_per_m},
                     {"damping_w_per_m", pol.damping_w_per_m},
                     {"reaction_delay_s", pol.reaction_delay_s},
                     {"bike_computer_step_w", pol.bike_computer_step_w},
                     {"constant_power_w", pol.constant_power_w}};
    sim["ecg_noise_mv"] = setup->ecg_noise_mv;
    j["simulation"] = sim;
  }
  return j;
}

SessionConfig config_from_json(const json& j, SessionConfig c) {
  try {
    each_member(j, "config", [&](const std::string& k, const json& v) {
      if (k == "type" || k == "hr_max_bpm" || k == "simulation") return;
      if (k == "participant_id") c.participant_id = v.get<std::string>();
      else if (k == "age") c.age = v.get<int>();
      else if (k == "hr_max_formula") c.formula = parse_hr_max_formula(v.get<std::string>());
      else if (k == "condition") c.condition = parse_condition(v.get<std::string>());
      else if (k == "zone_schedule") {
        c.zone_schedule.clear();
        for (const auto& seg : v)
          c.zone_schedule.push_back({ZoneId{seg.at("zone").get<int>()}, seg.at("duration_s").get<double>()});
      } else if (k == "tick_hz") c.tick_hz = v.get<double>();
      else if (k == "hr_window_s") c.hr_window_s = v.get<double>();
      else if (k == "training_s") c.training_s = v.get<double>();
      else if (k == "seeds") {
        each_member(v, "seeds", [&](const std::string& sk, const json& sv) {
          if (sk == "adaptation") c.seeds.adaptation = sv.get<std::uint64_t>();
          else if (sk == "rider") c.seeds.rider = sv.get<std::uint64_t>();
          else if (sk == "ecg") c.seeds.ecg = sv.get<std::uint64_t>();
          else unknown_key("seeds", sk);
        });
      } else if (k == "adaptation") {
        auto& a = c.adaptation;
        each_member(v, "adaptation", [&](const std::string& ak, const json& av) {
          if (ak == "max_offset_m") a.max_offset_m = av.get<double>();
          else if (ak == "full_scale_dev_bpm") a.full_scale_dev_bpm = av.get<double>();
          else if (ak == "npc_slew_mps") a.npc_slew_mps = av.get<double>();
          else if (ak == "green_radius_m")
            a.green_radius_m = av.is_null() ? std::nullopt : std::optional<double>(av.get<double>());
          else if (ak == "random_retarget_s") a.random_retarget_s = av.get<double>();
          else unknown_key("adaptation", ak);
        });
      } else if (k == "filter") {
        auto& f = c.filter;
        each_member(v, "filter", [&](const std::string& fk, const json& fv) {
          if (fk == "f_lo") f.f_lo = fv.get<double>();
          else if (fk == "f_hi") f.f_hi = fv.get<double>();
          else if (fk == "n_taps") f.n_taps = fv.get<int>();
          else if (fk == "fs") f.fs = fv.get<double>();
          else unknown_key("filter", fk);
        });
      } else if (k == "detector") {
        auto& d = c.detector;
        each_member(v, "detector", [&](const std::string& dk, const json& dv) {
          if (dk == "threshold_coeff") d.threshold_coeff = dv.get<double>();
          else if (dk == "refractory_s") d.refractory_s = dv.get<double>();
          else if (dk == "integration_s") d.integration_s = dv.get<double>();
          else if (dk == "buffer_len") d.buffer_len = dv.get<std::size_t>();
          else if (dk == "searchback_factor") d.searchback_factor = dv.get<double>();
          else if (dk == "searchback_min_s") d.searchback_min_s = dv.get<double>();
          else if (dk == "learning_s") d.learning_s = dv.get<double>();
          else if (dk == "peak_timeout_s") d.peak_timeout_s = dv.get<double>();
          else if (dk == "preblank_s") d.preblank_s = dv.get<double>();
          else unknown_key("detector", dk);
        });
      } else if (k == "physics") {
        auto& p = c.physics;
        each_member(v, "physics", [&](const std::string& pk, const json& pv) {
          if (pk == "mass_kg") p.mass_kg = pv.get<double>();
          else if (pk == "crr") p.crr = pv.get<double>();
          else if (pk == "cda_m2") p.cda_m2 = pv.get<double>();
          else if (pk == "air_density") p.air_density = pv.get<double>();
          else if (pk == "g") p.g = pv.get<double>();
          else unknown_key("physics", pk);
        });
      } else {
        unknown_key("config", k);
      }
    });
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  return c;
}

SimulationSetup simulation_from_json(const json& j, SimulationSetup s) {
  if (!j.contains("simulation")) return s;
  try {
    each_member(j.at("simulation"), "simulation", [&](const std::string& k, const json& v) {
      if (k == "ecg_noise_mv") s.ecg_noise_mv = v.get<double>();
      else if (k == "rider") {
        auto& r = s.rider;
        each_member(v, "rider", [&](const std::string& rk, const json& rv) {
          if (rk == "hr_rest_bpm") r.hr_rest_bpm = rv.get<double>();
          else if (rk == "hr_gain_bpm_per_w") r.hr_gain_bpm_per_w = rv.get<double>();
          else if (rk == "tau_up_s") r.tau_up_s = rv.get<double>();
          else if (rk == "tau_down_s") r.tau_down_s = rv.get<double>();
          else if (rk == "p_max_w") r.p_max_w = rv.get<double>();
          else if (rk == "noise_bpm_sd") r.noise_bpm_sd = rv.get<double>();
          else unknown_key("rider", rk);
        });
      } else if (k == "policy") {
        auto& p = s.policy;
        each_member(v, "policy", [&](const std::string& pk, const json& pv) {
          if (pk == "kind") p.kind = parse_policy_kind(pv.get<std::string>());
          else if (pk == "gain_w_per_m") p.gain_w_per_m = pv.get<double>();
          else if (pk == "damping_w_per_m") p.damping_w_per_m = pv.get<double>();
          else if (pk == "reaction_delay_s") p.reaction_delay_s = pv.get<double>();
          else if (pk == "bike_computer_step_w") p.bike_computer_step_w = pv.get<double>();
          else if (pk == "constant_power_w") p.constant_power_w = pv.get<double>();
          else unknown_key("policy", pk);
        });
      } else {
        unknown_key("simulation", k);
      }
    });
  } catch (const json::exception& e) {
    throw ParameterError(std::string("simulation config: ") + e.what());
  }
  return s;
}

std::string loop_state_fields(const LoopState& s) {
  std::string out;
  out.reserve(320);
  auto it = std::back_inserter(out);
  fmt::format_to(it, "\"t_s\":{:.6f},\"phase\":\"{}\",\"hr_bpm\":", s.t_s, to_string(s.phase));
  append_opt(out, s.hr_bpm);
  out += ",\"hr_norm\":";
  append_opt(out, s.hr_norm);
  out += ",\"current_zone\":";
  append_opt(out, s.current_zone);
  fmt::format_to(std::back_inserter(out), ",\"target_zone\":{},\"remaining_s\":{:.6f},\"condition\":\"{}\",\"npc\":",
                 s.target_zone.value(), s.remaining_s, to_string(s.condition));
  if (s.npc) {
    out += "{\"offset_m\":";
    append_number(out, s.npc->offset_m);
    fmt::format_to(std::back_inserter(out), ",\"aligned\":{},\"score\":{}}}", s.npc->aligned, s.npc->score);
  } else {
    out += "null";
  }
  out += ",\"bike_view\":";
  if (s.bike_view) {
    out += "{\"hr_bpm\":";
    append_opt(out, s.bike_view->hr_bpm);
    out += ",\"current_zone\":";
    append_opt(out, s.bike_view->current_zone);
    fmt::format_to(std::back_inserter(out), ",\"target_zone\":{}}}", s.bike_view->target_zone.value());
  } else {
    out += "null";
  }
  out += ",\"speed_mps\":";
  append_number(out, s.speed_mps);
  fmt::format_to(std::back_inserter(out), ",\"end_prompt\":{}", s.end_prompt);
  return out;
}

LoopState loop_state_from_json(const json& j) {
  LoopState s;
  s.t_s = j.at("t_s").get<double>();
  s.phase = parse_phase(j.at("phase").get<std::string>());
  s.hr_bpm = opt_double(j, "hr_bpm");
  s.hr_norm = opt_double(j, "hr_norm");
  s.current_zone = opt_zone(j, "current_zone");
  s.target_zone = ZoneId{j.at("target_zone").get<int>()};
  s.remaining_s = j.at("remaining_s").get<double>();
  s.condition = parse_condition(j.at("condition").get<std::string>());
  if (const auto& npc = j.at("npc"); !npc.is_null()) {
    s.npc = NpcState{npc.at("offset_m").get<double>(), npc.at("aligned").get<bool>(),
                     npc.at("score").get<std::uint64_t>()};
  }
  if (const auto& bv = j.at("bike_view"); !bv.is_null()) {
    s.bike_view = BikeComputerView{opt_double(bv, "hr_bpm"), opt_zone(bv, "current_zone"),
                                   ZoneId{bv.at("target_zone").get<int>()}};
  }
  s.speed_mps = j.at("speed_mps").get<double>();
  s.end_prompt = j.at("end_prompt").get<bool>();
  return s;
}

std::string format_tick_line(const LoopState& s) { return "{\"type\":\"tick\"," + loop_state_fields(s) + "}"; }

OrderedJson metrics_to_json(const SessionMetrics& m) {
  OrderedJson j;
  j["optimal_hr_ratio_pct"] = m.optimal_hr_ratio_pct;
  j["mean_hr_norm"] = m.mean_hr_norm;
  j["n_ticks_total"] = m.n_ticks_total;
  j["per_segment"] = OrderedJson::array();
  for (const auto& seg : m.per_segment) {
    OrderedJson s;
    s["zone"] = seg.zone.value();
    s["ratio_pct"] = seg.ratio_pct ? OrderedJson(*seg.ratio_pct) : OrderedJson(nullptr);
    s["mean_hr_norm"] = seg.mean_hr_norm ? OrderedJson(*seg.mean_hr_norm) : OrderedJson(nullptr);
    s["n_ticks"] = seg.n_ticks;
    j["per_segment"].push_back(s);
  }
  return j;
}

std::string format_summary_line(const std::optional<SessionMetrics>& m) {
  OrderedJson j;
  j["type"] = "summary";
  if (m) {
    const OrderedJson body = metrics_to_json(*m);
    for (const auto& [k, v] : body.items()) j[k] = v;
  } else {
    j["error"] = "undefined metric";
  }
  return j.dump();
}

void write_session_log(std::ostream& os, const SessionLog& log) {
  os << log.config.dump() << '\n';
  for (const auto& s : log.ticks) os << format_tick_line(s) << '\n';
  os << format_summary_line(log.summary) << '\n';
}

void write_session_log(const std::string& path, const SessionLog& log) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_session_log(os, log);
  os.flush();
  if (!os) throw IoError("failed writing '" + path + "'");
}

SessionLog read_session_log(std::istream& is) {
  SessionLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_config = false;
  bool have_summary = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (have_summary) throw LogParseError(lineno, "content after summary");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LogParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (!have_config) {
        if (type != "config") throw LogParseError(lineno, "first record must be the config");
        log.config = OrderedJson::parse(line);
        have_config = true;
      } else if (type == "tick") {
        log.ticks.push_back(loop_state_from_json(j));
      } else if (type == "summary") {
        if (!j.contains("error")) log.summary = metrics_from_json(j);
        log.stored_summary_line = line;
        have_summary = true;
      } else {
        throw LogParseError(lineno, "unexpected record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw LogParseError(lineno, std::string("malformed record: ") + e.what());
    } catch (const ParameterError& e) {
      throw LogParseError(lineno, std::string("malformed record: ") + e.what());
    }
  }
  if (!have_config) throw LogParseError(lineno + 1, "missing config record");
  if (!have_summary) throw LogParseError(lineno + 1, "missing summary record (truncated log?)");
  return log;
}

SessionLog read_session_log(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_session_log(is);
}

}  // namespace cardioloop
