"""On-disk formats: raw signals with JSON sidecars, CSV artifacts, pattern JSON."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .multicoset import MulticosetPattern
from .siggen import NyquistSignal, SignalSpec

__all__ = [
    "config_hash",
    "write_signal",
    "read_signal",
    "write_csv",
    "read_csv",
    "write_psd_csv",
    "write_mask_csv",
    "write_autocorr_csv",
    "write_roc_csv",
    "write_bench_csv",
    "write_pattern",
    "read_pattern",
]

_SIDECAR_SUFFIX = ".json"


def config_hash(obj) -> str:
    """Short SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + _SIDECAR_SUFFIX)


def write_signal(path, x: NyquistSignal) -> Path:
    """Raw little-endian float64 samples plus ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(x.samples, dtype="<f8").tofile(path)
    spec = x.provenance.to_dict() if isinstance(x.provenance, SignalSpec) else x.provenance
    header = {
        "fs_hz": x.fs_hz,
        "n_samples": int(x.samples.size),
        "spec": spec,
        "noise_var": x.noise_var,
    }
    _sidecar(path).write_text(json.dumps(header, indent=2, sort_keys=True, default=str))
    return path


def read_signal(path) -> NyquistSignal:
    path = Path(path)
    header = json.loads(_sidecar(path).read_text())
    samples = np.fromfile(path, dtype="<f8")
    if samples.size != header["n_samples"]:
        raise ValueError(
            f"{path} holds {samples.size} samples, header says {header['n_samples']}"
        )
    spec = header.get("spec")
    if isinstance(spec, dict) and "fs_hz" in spec and "bands" in spec:
        spec = SignalSpec.from_dict(spec)
    return NyquistSignal(
        samples, float(header["fs_hz"]), spec, float(header.get("noise_var", 0.0))
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, columns, rows, header: dict | None = None) -> Path:
    """CSV with ``# key: value`` comment lines before the column names.

    Floats are written with ``repr`` so reruns are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key, value in (header or {}).items():
            if not isinstance(value, str):
                value = json.dumps(value, sort_keys=True, default=str)
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """``(header, columns, rows)`` with rows as lists of strings."""
    header = {}
    body = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                header[key] = value
            else:
                body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    return header, columns, [r for r in reader]


def write_psd_csv(path, psd, header: dict | None = None) -> Path:
    meta = {k: v for k, v in psd.meta.items()}
    meta.update(header or {})
    return write_csv(path, ("freq_hz", "psd"), zip(psd.grid_hz, psd.values), meta)


def write_mask_csv(path, mask, header: dict | None = None) -> Path:
    rows = zip(mask.grid_hz, mask.occupied.astype(int))
    return write_csv(path, ("freq_hz", "value"), rows, header)


def write_autocorr_csv(path, est, max_lag: int, header: dict | None = None) -> Path:
    """Lags ``-max_lag..max_lag`` of an autocorrelation estimate."""
    lags = np.arange(-max_lag, max_lag + 1)
    rows = zip(lags, np.real(est.at(lags)), est.q[lags + est.lag_span - 1])
    return write_csv(path, ("lag", "r_x_real", "q"), rows, header)


def write_roc_csv(path, curve, header: dict | None = None) -> Path:
    info = {"auc": repr(curve.auc)}
    info.update(header or {})
    return write_csv(path, ("threshold", "tpr", "fpr"), curve.points, info)


BENCH_COLUMNS = (
    "method", "M", "N", "L", "P", "wall_time_s", "flops_model",
    "seed", "resolution_hz", "status",
)


def write_bench_csv(path, records, header: dict | None = None) -> Path:
    rows = ([getattr(r, c) for c in BENCH_COLUMNS] for r in records)
    return write_csv(path, BENCH_COLUMNS, rows, header)


def write_pattern(path, pattern: MulticosetPattern) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(pattern.to_dict()))
    return path


def read_pattern(path) -> MulticosetPattern:
    return MulticosetPattern.from_dict(json.loads(Path(path).read_text()))
