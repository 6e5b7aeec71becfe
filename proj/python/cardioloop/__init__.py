"""Heart-rate-adaptive training engine: ECG pipeline, zones, pacing agent, simulation."""

from ._cardioloop import (
    IoError,
    LogParseError,
    ParameterError,
    ProtocolError,
    StreamError,
    UndefinedMetricError,
    adaptive_offset,
    analyze_log,
    bandpass_coefficients,
    canonical_frame,
    detect,
    hr_max_bpm,
    magnitude_response,
    run_simulated,
    synth_ecg,
    zone_boundaries,
)

__all__ = [
    "IoError",
    "LogParseError",
    "ParameterError",
    "ProtocolError",
    "StreamError",
    "UndefinedMetricError",
    "adaptive_offset",
    "analyze_log",
    "bandpass_coefficients",
    "canonical_frame",
    "detect",
    "hr_max_bpm",
    "magnitude_response",
    "run_simulated",
    "synth_ecg",
    "zone_boundaries",
]
