// cardioloop: operator entry points over the library.
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cardioloop/ecg_dsp.hpp"
#include "cardioloop/ecg_io.hpp"
#include "cardioloop/errors.hpp"
#include "cardioloop/hr_zones.hpp"
#include "cardioloop/metrics.hpp"
#include "cardioloop/protocol.hpp"
#include "cardioloop/rider_sim.hpp"
#include "cardioloop/server.hpp"
#include "cardioloop/session.hpp"
#include "cardioloop/session_log.hpp"
#include "cardioloop/simulation.hpp"

namespace cl = cardioloop;

namespace {

// sysexits(3)
constexpr int kExitUsage = 64;
constexpr int kExitDataErr = 65;
constexpr int kExitNoInput = 66;
constexpr int kExitSoftware = 70;
constexpr int kExitIoErr = 74;
constexpr int kExitUndefinedMetric = 2;

constexpr std::uint64_t kDefaultSeed = 1;

struct Globals {
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  std::string config_path;
};

// Configuration file: same shape as a session log's config line; every key
// is optional.
struct LoadedConfig {
  cl::SessionConfig session;
  cl::SimulationSetup setup;
};

LoadedConfig load_config(const Globals& g) {
  LoadedConfig out;
  out.session.seeds = cl::SessionSeeds::derive(g.seed);
  if (g.config_path.empty()) return out;
  std::ifstream in(g.config_path);
  if (!in) throw cl::IoError("cannot open config '" + g.config_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw cl::LogParseError(1, std::string("config is not valid JSON: ") + e.what());
  }
  out.session = cl::config_from_json(j, out.session);
  out.setup = cl::simulation_from_json(j, out.setup);
  if (g.seed_given) out.session.seeds = cl::SessionSeeds::derive(g.seed);
  return out;
}

std::string fmt_opt(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string("-");
}

void print_metrics(std::ostream& os, const cl::SessionMetrics& m) {
  fmt::print(os, "optimal_hr_ratio  {:.1f} %\n", m.optimal_hr_ratio_pct);
  fmt::print(os, "mean_hr_norm      {:.3f}\n", m.mean_hr_norm);
  fmt::print(os, "hr_ticks          {}\n", m.n_ticks_total);
  fmt::print(os, "segment  zone  ratio_pct  mean_hr_norm  hr_ticks\n");
  for (std::size_t i = 0; i < m.per_segment.size(); ++i) {
    const auto& s = m.per_segment[i];
    fmt::print(os, "{:<8} {:<5} {:>9}  {:>12}  {:>8}\n", i + 1, s.zone.value(), fmt_opt(s.ratio_pct, "{:.1f}"),
               fmt_opt(s.mean_hr_norm, "{:.3f}"), s.n_ticks);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw cl::IoError("cannot write '" + path + "'");
  return os;
}

void check_written(std::ostream& os, const std::string& path) {
  os.flush();
  if (!os) throw cl::IoError("write to '" + path + "' failed");
}

// ---- zones -------------------------------------------------------------------

int run_zones(int age, const std::string& formula) {
  const cl::ZoneModel m = cl::compute_zone_model(cl::AthleteProfile{age, cl::parse_hr_max_formula(formula), std::nullopt});
  fmt::print("hr_max {:.1f}\n", m.hr_max_bpm);
  for (int z = 1; z <= 5; ++z) {
    const cl::ZoneId id{z};
    fmt::print("zone {}  [{:.1f}, {:.1f})\n", z, m.lower(id), m.upper(id));
  }
  return 0;
}

// ---- sim ---------------------------------------------------------------------

struct SimFlags {
  std::optional<std::string> condition;
  std::optional<int> age;
  std::optional<std::string> policy;
  std::optional<std::string> participant;
  std::string out = "session.jsonl";
};

int run_sim(const Globals& g, const SimFlags& f) {
  LoadedConfig cfg = load_config(g);
  if (f.condition) cfg.session.condition = cl::parse_condition(*f.condition);
  if (f.age) cfg.session.age = *f.age;
  if (f.participant) cfg.session.participant_id = *f.participant;
  if (f.policy) {
    const cl::RiderPolicy p = cl::parse_policy(*f.policy);
    cfg.setup.policy.kind = p.kind;
    cfg.setup.policy.constant_power_w = p.constant_power_w;
  }
  cfg.session.validate();

  const cl::SessionLog log = cl::run_simulated(cfg.session, cfg.setup);
  {
    std::ofstream os = open_out(f.out);
    cl::write_session_log(os, log);
    check_written(os, f.out);
  }
  fmt::print("condition         {}\n", cl::to_string(cfg.session.condition));
  fmt::print("policy            {}\n", cl::to_string(cfg.setup.policy));
  fmt::print("log               {}\n", f.out);
  if (!log.summary) {
    fmt::print(stderr, "undefined metric: no tick carried a heart rate\n");
    return kExitUndefinedMetric;
  }
  print_metrics(std::cout, *log.summary);
  return 0;
}

// ---- analyze -----------------------------------------------------------------

int run_analyze(const std::string& path, bool json_only) {
  if (!std::filesystem::exists(path)) {
    fmt::print(stderr, "cannot open '{}'\n", path);
    return kExitNoInput;
  }
  const cl::SessionLog log = cl::read_session_log(path);
  const cl::SessionMetrics m = cl::optimal_hr_ratio(log.ticks);  // throws when undefined
  const std::string line = cl::format_summary_line(m);
  if (line != log.stored_summary_line)
    fmt::print(stderr, "warning: stored summary differs from the recomputed one\n  stored:     {}\n  recomputed: {}\n",
               log.stored_summary_line, line);
  if (!json_only) print_metrics(std::cout, m);
  fmt::print("{}\n", line);
  return 0;
}

// ---- synth-ecg ---------------------------------------------------------------

struct SynthFlags {
  double hr = 75.0;
  double duration = 120.0;
  double fs = 130.0;
  std::optional<double> snr_db;
  std::string out = "ecg.csv";
  std::optional<std::string> beats_out;
};

int run_synth(const Globals& g, const SynthFlags& f) {
  if (!(f.hr >= 25.0 && f.hr <= 230.0)) throw cl::ParameterError("--hr must be within [25, 230] bpm");
  if (!(f.duration > 0.0)) throw cl::ParameterError("--duration must be positive");
  if (!(f.fs > 0.0)) throw cl::ParameterError("--fs must be positive");
  const LoadedConfig cfg = load_config(g);
  cl::Rng rng(cfg.session.seeds.ecg);
  const double hr = f.hr;
  const cl::SynthResult r = cl::synth_ecg([hr](double) { return hr; }, f.fs, f.duration, rng, f.snr_db);
  {
    std::ofstream os = open_out(f.out);
    cl::write_ecg_csv(os, r.samples);
    check_written(os, f.out);
  }
  if (f.beats_out) {
    std::ofstream os = open_out(*f.beats_out);
    cl::write_beats_jsonl(os, r.beats);
    check_written(os, *f.beats_out);
  }
  fmt::print("{} samples, {} beats -> {}\n", r.samples.size(), r.beats.size(), f.out);
  return 0;
}

// ---- replay ------------------------------------------------------------------

struct ReplayFlags {
  std::string input;
  std::optional<std::string> out;
  std::optional<std::string> peaks_out;
  std::optional<std::string> hr_out;
};

void emit_state(std::ostream& os, std::uint64_t seq, const cl::LoopState& s) {
  const auto tick_ns = static_cast<std::int64_t>(std::llround(s.t_s * 1e9));
  os << cl::net::state_frame_with_body(0, cl::net::state_body(seq, tick_ns, s)) << '\n';
}

// A session log replays its tick records; an ECG CSV is run through a fresh
// session as if a sensor had streamed it.
int run_replay(const Globals& g, const ReplayFlags& f) {
  std::ofstream file;
  if (f.out) file = open_out(*f.out);
  std::ostream& os = f.out ? static_cast<std::ostream&>(file) : std::cout;

  if (std::filesystem::path(f.input).extension() != ".csv") {
    if (f.peaks_out || f.hr_out) throw cl::ParameterError("--peaks-out/--hr-out need an ECG CSV input");
    const cl::SessionLog log = cl::read_session_log(f.input);
    std::uint64_t seq = 0;
    for (const auto& s : log.ticks) emit_state(os, seq++, s);
    if (f.out) check_written(file, *f.out);
    return 0;
  }

  std::ifstream in(f.input);
  if (!in) {
    fmt::print(stderr, "cannot open '{}'\n", f.input);
    return kExitNoInput;
  }
  const std::vector<cl::EcgSample> samples = cl::read_ecg_csv(in);
  const LoadedConfig cfg = load_config(g);

  if (f.peaks_out || f.hr_out) {
    cl::PipelineConfig pc;
    pc.filter = cfg.session.filter;
    pc.detector = cfg.session.detector;
    pc.detector.fs = pc.filter.fs;
    pc.hr_window_s = cfg.session.hr_window_s;
    cl::EcgPipeline pipeline(pc);
    cl::PipelineEvents all;
    pipeline.push(samples, all);
    pipeline.finish(all);
    if (f.peaks_out) {
      std::ofstream p = open_out(*f.peaks_out);
      cl::write_peaks_jsonl(p, all.peaks);
      check_written(p, *f.peaks_out);
    }
    if (f.hr_out) {
      std::ofstream h = open_out(*f.hr_out);
      cl::write_hr_jsonl(h, all.estimates);
      check_written(h, *f.hr_out);
    }
  }

  cl::Session session(cfg.session);
  const double tick_hz = session.config().tick_hz;
  std::size_t next = 0;
  std::uint64_t seq = 0;
  while (session.phase() != cl::Phase::Finished && next < samples.size()) {
    const double t_end = static_cast<double>(session.ticks() + 1) / tick_hz;
    std::size_t end = next;
    while (end < samples.size() && samples[end].t <= t_end) ++end;
    const auto state = session.tick(std::span(samples).subspan(next, end - next));
    next = end;
    emit_state(os, seq++, state);
  }
  if (session.phase() != cl::Phase::Finished) emit_state(os, seq++, session.stop());
  if (f.out) check_written(file, *f.out);
  return 0;
}

// ---- serve -------------------------------------------------------------------

struct ServeFlags {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;
  double tick_hz = 50.0;
  std::string mode = "sensor";
  std::optional<std::string> console_dir;
  std::optional<std::string> condition;
  std::optional<int> age;
  bool auto_start = false;
};

int run_serve(const Globals& g, const ServeFlags& f) {
  const LoadedConfig cfg = load_config(g);
  cl::net::ServerConfig sc;
  sc.host = f.host;
  sc.port = f.port;
  sc.tick_hz = f.tick_hz;
  try {
    sc.mode = cl::net::parse_serve_mode(f.mode);
  } catch (const cl::net::ProtocolError& e) {
    throw cl::ParameterError(e.what());
  }
  sc.session = cfg.session;
  if (f.condition) sc.session.condition = cl::parse_condition(*f.condition);
  if (f.age) sc.session.age = *f.age;
  sc.simulation = cfg.setup;
  if (f.console_dir) sc.console_dir = *f.console_dir;
  sc.auto_start = f.auto_start;
  sc.quiet = false;

  // Signals are taken synchronously by this thread only.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  cl::net::Server server(sc);
  server.start();
  fmt::print(stderr, "listening on {}:{} (mode {}, {} Hz)\n", f.host, server.port(), f.mode, f.tick_hz);
  int sig = 0;
  sigwait(&set, &sig);
  fmt::print(stderr, "shutting down\n");
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cardioloop: heart-rate-adaptive training engine"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed; all session seeds derive from it")
                       ->default_val(kDefaultSeed);
  app.add_option("--config", g.config_path, "JSON file overriding defaults (session log config shape)")
      ->check(CLI::ExistingFile);

  int zones_age = 30;
  std::string zones_formula = "tanaka";
  auto* zones = app.add_subcommand("zones", "Print the heart-rate zone table");
  zones->add_option("--age", zones_age, "Age in years")->default_val(30);
  zones->add_option("--formula", zones_formula, "tanaka or fox")->default_val("tanaka");

  SimFlags sim_flags;
  auto* sim = app.add_subcommand("sim", "Run a simulated session and write its log");
  sim->add_option("--condition", sim_flags.condition, "baseline, random or adaptive");
  sim->add_option("--age", sim_flags.age, "Age in years");
  sim->add_option("--policy", sim_flags.policy, "follow-npc, follow-bike-computer or constant:<W>");
  sim->add_option("--participant", sim_flags.participant, "Participant id");
  sim->add_option("--out", sim_flags.out, "Session log path")->default_val("session.jsonl");

  std::string analyze_path;
  bool analyze_json = false;
  auto* analyze = app.add_subcommand("analyze", "Recompute metrics from a session log");
  analyze->add_option("log", analyze_path, "Session log (JSON Lines)")->required();
  analyze->add_flag("--json", analyze_json, "Print only the summary JSON line");

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth-ecg", "Write a synthetic ECG at constant heart rate");
  synth->add_option("--hr", synth_flags.hr, "Heart rate in bpm")->default_val(75.0);
  synth->add_option("--duration", synth_flags.duration, "Seconds")->default_val(120.0);
  synth->add_option("--fs", synth_flags.fs, "Sampling rate in Hz")->default_val(130.0);
  synth->add_option("--snr-db", synth_flags.snr_db, "Additive white noise, dB below signal power");
  synth->add_option("--out", synth_flags.out, "CSV path (t,v)")->default_val("ecg.csv");
  synth->add_option("--beats-out", synth_flags.beats_out, "JSON Lines of true beat times");

  ReplayFlags replay_flags;
  auto* replay = app.add_subcommand("replay", "Emit state frames from a session log or an ECG CSV");
  replay->add_option("input", replay_flags.input, "Session log or ECG CSV")->required();
  replay->add_option("--out", replay_flags.out, "Frame stream path (default stdout)");
  replay->add_option("--peaks-out", replay_flags.peaks_out, "Detected R peaks (CSV input)");
  replay->add_option("--hr-out", replay_flags.hr_out, "Heart-rate estimates (CSV input)");

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the streaming service");
  serve->add_option("--host", serve_flags.host, "Bind address")->default_val("127.0.0.1");
  serve->add_option("--port", serve_flags.port, "TCP port (0 picks one)")->default_val(8765);
  serve->add_option("--tick-hz", serve_flags.tick_hz, "Loop rate")->default_val(50.0);
  serve->add_option("--mode", serve_flags.mode, "sensor, manual or sim")->default_val("sensor");
  serve->add_option("--console-dir", serve_flags.console_dir, "Static files for the web console")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--condition", serve_flags.condition, "Initial condition");
  serve->add_option("--age", serve_flags.age, "Initial age");
  serve->add_flag("--auto-start", serve_flags.auto_start, "Start a session immediately");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*zones) return run_zones(zones_age, zones_formula);
    if (*sim) return run_sim(g, sim_flags);
    if (*analyze) return run_analyze(analyze_path, analyze_json);
    if (*synth) return run_synth(g, synth_flags);
    if (*replay) return run_replay(g, replay_flags);
    if (*serve) return run_serve(g, serve_flags);
  } catch (const cl::ParameterError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const cl::LogParseError& e) {
    fmt::print(stderr, "parse error: {}\n", e.what());
    return kExitDataErr;
  } catch (const cl::UndefinedMetricError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kExitUndefinedMetric;
  } catch (const cl::IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kExitIoErr;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitSoftware;
  }
  return kExitUsage;
}
