#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "cardioloop/adaptation.hpp"
#include "cardioloop/ecg_dsp.hpp"
#include "cardioloop/errors.hpp"
#include "cardioloop/hr_zones.hpp"
#include "cardioloop/metrics.hpp"
#include "cardioloop/protocol.hpp"
#include "cardioloop/rider_sim.hpp"
#include "cardioloop/session_log.hpp"
#include "cardioloop/simulation.hpp"

namespace py = pybind11;
using namespace cardioloop;

namespace {

ZoneModel zones_for(int age, const std::string& formula) {
  return compute_zone_model(AthleteProfile{age, parse_hr_max_formula(formula), std::nullopt});
}

py::object json_loads(const std::string& s) { return py::module_::import("json").attr("loads")(s); }

}  // namespace

PYBIND11_MODULE(_cardioloop, m) {
  m.doc() = "Bindings for the cardioloop engine.";

  auto value_error = py::handle(PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", value_error);
  py::register_exception<StreamError>(m, "StreamError", value_error);
  py::register_exception<LogParseError>(m, "LogParseError", value_error);
  py::register_exception<net::ProtocolError>(m, "ProtocolError", value_error);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", py::handle(PyExc_ArithmeticError));
  py::register_exception<IoError>(m, "IoError", py::handle(PyExc_OSError));

  m.def("hr_max_bpm", [](int age, const std::string& formula) { return hr_max_bpm(age, parse_hr_max_formula(formula)); },
        py::arg("age"), py::arg("formula") = "tanaka");

  m.def(
      "zone_boundaries",
      [](int age, const std::string& formula) {
        const auto b = zones_for(age, formula).boundaries;
        return std::vector<double>(b.begin(), b.end());
      },
      py::arg("age"), py::arg("formula") = "tanaka",
      "Six boundaries (50..100 % of hr_max); zone k is [b[k-1], b[k]).");

  m.def(
      "bandpass_coefficients",
      [](double low_hz, double high_hz, int n_taps, double fs) {
        FilterSpec spec;
        spec.f_lo = low_hz;
        spec.f_hi = high_hz;
        spec.n_taps = n_taps;
        spec.fs = fs;
        return design_bandpass(spec);
      },
      py::arg("low_hz") = 3.0, py::arg("high_hz") = 45.0, py::arg("n_taps") = 129, py::arg("fs") = 130.0);

  m.def(
      "magnitude_response",
      [](const std::vector<double>& coeffs, double f_hz, double fs) { return magnitude_response(coeffs, f_hz, fs); },
      py::arg("coeffs"), py::arg("f_hz"), py::arg("fs"));

  m.def(
      "synth_ecg",
      [](double hr_bpm, double duration_s, double fs, std::uint64_t seed, std::optional<double> snr_db) {
        Rng rng(seed);
        const auto r = synth_ecg([hr_bpm](double) { return hr_bpm; }, fs, duration_s, rng, snr_db);
        std::vector<double> t, v;
        t.reserve(r.samples.size());
        v.reserve(r.samples.size());
        for (const auto& s : r.samples) {
          t.push_back(s.t);
          v.push_back(s.v);
        }
        return py::make_tuple(t, v, r.beats);
      },
      py::arg("hr_bpm"), py::arg("duration_s"), py::arg("fs") = 130.0, py::arg("seed") = 1,
      py::arg("snr_db") = py::none(), "Returns (t, v, beat_times).");

  m.def(
      "detect",
      [](const std::vector<double>& t, const std::vector<double>& v, double fs, double hr_window_s) {
        if (t.size() != v.size()) throw ParameterError("t and v must have equal length");
        PipelineConfig cfg;
        cfg.filter.fs = fs;
        cfg.detector.fs = fs;
        cfg.hr_window_s = hr_window_s;
        EcgPipeline pipeline(cfg);
        PipelineEvents ev;
        {
          py::gil_scoped_release release;
          for (std::size_t i = 0; i < t.size(); ++i) pipeline.push(EcgSample{t[i], v[i]}, ev);
          pipeline.finish(ev);
        }
        py::list peaks, hr;
        for (const auto& p : ev.peaks) peaks.append(p.t);
        for (const auto& e : ev.estimates) hr.append(py::make_tuple(e.t, e.hr_bpm, e.n_beats));
        py::dict out;
        out["peaks"] = peaks;
        out["hr"] = hr;
        return out;
      },
      py::arg("t"), py::arg("v"), py::arg("fs") = 130.0, py::arg("hr_window_s") = 10.0,
      "Runs the streaming pipeline; returns {'peaks': [t], 'hr': [(t, bpm, n_beats)]}.");

  m.def(
      "adaptive_offset",
      [](double hr_bpm, int target_zone, int age, const std::string& formula) {
        const ZoneModel model = zones_for(age, formula);
        const AdaptationConfig cfg = AdaptationConfig{}.resolved_for(model);
        return adaptive_offset(hr_bpm, ZoneId{target_zone}, model, cfg);
      },
      py::arg("hr_bpm"), py::arg("target_zone"), py::arg("age") = 30, py::arg("formula") = "tanaka");

  m.def(
      "run_simulated",
      [](const std::string& condition, int age, const std::string& policy, std::uint64_t seed,
         std::optional<std::string> log_path) -> py::object {
        SessionConfig cfg;
        cfg.condition = parse_condition(condition);
        cfg.age = age;
        cfg.seeds = SessionSeeds::derive(seed);
        SimulationSetup setup;
        const RiderPolicy p = parse_policy(policy);
        setup.policy.kind = p.kind;
        setup.policy.constant_power_w = p.constant_power_w;
        SessionLog log;
        {
          py::gil_scoped_release release;
          log = run_simulated(cfg, setup);
          if (log_path) write_session_log(*log_path, log);
        }
        if (!log.summary) return py::none();
        return json_loads(metrics_to_json(*log.summary).dump());
      },
      py::arg("condition") = "adaptive", py::arg("age") = 30, py::arg("policy") = "follow-npc", py::arg("seed") = 1,
      py::arg("log_path") = py::none(), "Runs a simulated session; returns the summary metrics, or None if undefined.");

  m.def(
      "analyze_log",
      [](const std::string& path) {
        const SessionLog log = read_session_log(path);
        const std::string line = format_summary_line(optimal_hr_ratio(log.ticks));
        py::dict out;
        out["summary"] = json_loads(line);
        out["matches_stored"] = line == log.stored_summary_line;
        return out;
      },
      py::arg("path"));

  m.def(
      "canonical_frame", [](const std::string& line) { return net::serialize(net::parse_frame(line)); },
      py::arg("line"), "Parses one protocol frame and serialises it again.");
}
