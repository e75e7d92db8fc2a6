"""JSON experiment configuration: schema, validation and resolution to objects."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import multicoset
from .experiments import EstimatorSettings, Method, Scenario
from .multicoset import MulticosetPattern
from .siggen import SignalSpec

__all__ = ["ConfigError", "ExperimentConfig", "CONFIG_SCHEMA", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


_BAND = {
    "type": "object",
    "required": ["center_hz", "bandwidth_hz"],
    "properties": {
        "center_hz": {"type": "number"},
        "bandwidth_hz": {"type": "number", "exclusiveMinimum": 0},
        "power": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_SIGNAL = {
    "type": "object",
    "required": ["fs_hz", "bands"],
    "properties": {
        "fs_hz": {"type": "number", "exclusiveMinimum": 0},
        "duration_s": {"type": "number", "minimum": 0},
        "bands": {"type": "array", "items": _BAND},
        "kind": {"enum": ["wss_multiband", "bpsk", "qam16"]},
        "symbol_rate_hz": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

_PATTERN = {
    "oneOf": [
        {
            "type": "object",
            "required": ["N", "delays"],
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "delays": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["N", "delays_s"],
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "delays_s": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["search"],
            "properties": {
                "search": {
                    "type": "object",
                    "required": ["N", "M"],
                    "properties": {
                        "N": {"type": "integer", "minimum": 1},
                        "M": {"type": "integer", "minimum": 1},
                        "max_n": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
    ]
}

_METHODS = [m.value for m in Method]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mcpsd experiment",
    "type": "object",
    "required": ["signal"],
    "properties": {
        "signal": {"oneOf": [_SIGNAL, {"type": "array", "items": _SIGNAL, "minItems": 1}]},
        "pattern": _PATTERN,
        "patterns": {"type": "array", "items": _PATTERN, "minItems": 1},
        "snr_db": {"type": ["number", "null"]},
        "snr_list": {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 1},
        "durations_s": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 1,
        },
        "method": {"enum": _METHODS},
        "methods": {"type": "array", "items": {"enum": _METHODS}, "minItems": 1},
        "truncation": {"type": "integer", "minimum": 0},
        "window": {"enum": ["hamming", "rect"]},
        "resolution_hz": {"type": "number", "exclusiveMinimum": 0},
        "psd_len": {"type": "integer", "minimum": 1},
        "clamp": {"type": "boolean"},
        "n_thresholds": {"type": "integer", "minimum": 2},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "output_dir": {"type": "string"},
        "time_domain": {
            "type": "object",
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "max_L": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "bench": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["method", "grid"],
                "properties": {
                    "method": {"enum": ["proposed", "time_domain", "freq_domain"]},
                    "grid": {"type": "array", "items": {"type": "object"}, "minItems": 1},
                    "repeats": {"type": "integer", "minimum": 1},
                    "fs_hz": {"type": "number", "exclusiveMinimum": 0},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _resolve_pattern(d: dict, fs_hz: float) -> MulticosetPattern:
    if "search" in d:
        req = d["search"]
        found = multicoset.search_pattern(
            req["N"], req["M"], req.get("max_n", multicoset.DEFAULT_SEARCH_MAX_N)
        )
        if found is None:
            raise ConfigError(f"no valid pattern with N={req['N']} and M={req['M']}")
        return found
    if "delays_s" in d:
        return MulticosetPattern(d["N"], multicoset.delays_from_seconds(d["delays_s"], fs_hz))
    return MulticosetPattern(d["N"], tuple(d["delays"]))


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``raw`` keeps the JSON for hashing."""

    scenario: Scenario
    patterns: list[MulticosetPattern]
    snr_list: list[float | None]
    durations_s: list[float]
    methods: list[Method]
    settings: EstimatorSettings
    seeds: list[int]
    output_dir: Path
    bench: list[dict] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @property
    def fs_hz(self) -> float:
        return self.scenario.fs_hz

    @property
    def resolution_hz(self) -> float:
        return self.fs_hz / self.settings.psd_len

    def require_durations(self) -> list[float]:
        if not self.durations_s:
            raise ConfigError("config needs 'durations_s' (or signal.duration_s)")
        return self.durations_s

    @property
    def method(self) -> Method:
        return self.methods[0]

    @property
    def pattern(self) -> MulticosetPattern:
        return self.patterns[0]


def parse_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate ``raw`` against :data:`CONFIG_SCHEMA` and build the objects.

    ``overrides`` may set ``seed`` (replaces ``seeds``), ``output_dir`` and
    ``corr_fft_len``.
    """
    overrides = overrides or {}
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None

    signals = raw["signal"] if isinstance(raw["signal"], list) else [raw["signal"]]
    try:
        specs = [SignalSpec.from_dict({"duration_s": 0.0, **s}) for s in signals]
        scenario = Scenario(tuple(specs))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid signal: {exc}") from None
    fs = scenario.fs_hz

    if "durations_s" in raw:
        durations = raw["durations_s"]
    elif "duration_s" in signals[0]:
        durations = [specs[0].duration_s]
    else:
        durations = []  # benchmarks need no capture; sweeps check via require_durations
    if any(not d > 0 for d in durations):
        raise ConfigError("every duration must be positive; a zero-length capture is refused")
    for d in durations:
        n = fs * d
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigError(f"duration {d} s is not a whole number of Nyquist samples")

    pat_dicts = raw.get("patterns") or ([raw["pattern"]] if "pattern" in raw else [])
    try:
        patterns = [_resolve_pattern(p, fs) for p in pat_dicts]
    except multicoset.SearchBudgetExceeded:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid pattern: {exc}") from None

    methods = [Method(m) for m in raw.get("methods") or [raw.get("method", "proposed")]]
    needs_pattern = any(m is not Method.NYQUIST_REF for m in methods)
    if needs_pattern and not patterns:
        raise ConfigError("a pattern is required for sub-Nyquist methods")
    if not patterns:
        patterns = [MulticosetPattern(1, (0,))]

    psd_len = raw.get("psd_len")
    if "resolution_hz" in raw:
        ratio = fs / raw["resolution_hz"]
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"fs / resolution_hz = {ratio} is not an integer")
        if psd_len is not None and psd_len != round(ratio):
            raise ConfigError(
                f"resolution_hz implies {round(ratio)} bins but psd_len is {psd_len}"
            )
        psd_len = int(round(ratio))
    truncation = raw.get("truncation")
    if psd_len is None:
        psd_len = 2 * truncation + 1 if truncation is not None else 32000
    if truncation is None:
        truncation = (psd_len - 1) // 2
    td = raw.get("time_domain", {})
    try:
        settings = EstimatorSettings(
            truncation=truncation,
            psd_len=psd_len,
            window=raw.get("window", "hamming"),
            clamp=raw.get("clamp", False),
            corr_fft_len=overrides.get("corr_fft_len"),
            td_L=td.get("L"),
            td_max_L=td.get("max_L", EstimatorSettings.td_max_L),
            n_thresholds=raw.get("n_thresholds", EstimatorSettings.n_thresholds),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if "snr_list" in raw:
        snrs = list(raw["snr_list"])
    else:
        snrs = [raw.get("snr_db")]
    snrs = [None if s is None or (isinstance(s, float) and math.isinf(s)) else s for s in snrs]

    seeds = raw.get("seeds", [0])
    if overrides.get("seed") is not None:
        seeds = [int(overrides["seed"])]
    out = overrides.get("output_dir") or raw.get("output_dir", "out")

    return ExperimentConfig(
        scenario, patterns, snrs, list(durations), methods, settings, list(seeds),
        Path(out), list(raw.get("bench", [])), raw,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw, overrides)
