"""Accuracy, detection and cost metrics."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft as sfft
from threadpoolctl import threadpool_limits

from . import baselines, fastpsd, multicoset
from .fastpsd import PowerSpectrum
from .siggen import OccupancyMask

__all__ = [
    "RocCurve",
    "BenchRecord",
    "nmse",
    "align_to_grid",
    "roc",
    "detect",
    "receiver_sensitivity",
    "time_call",
    "bench",
    "BENCH_METHODS",
    "loglog_slope",
    "THERMAL_NOISE_DBM_HZ",
    "DEFAULT_THRESHOLDS",
]

THERMAL_NOISE_DBM_HZ = -174.0
DEFAULT_THRESHOLDS = 512


def nmse(est: PowerSpectrum, ref: PowerSpectrum) -> float:
    """``||est - ref||^2 / ||ref||^2`` on raw (unclamped) values."""
    if est.grid_hz.shape != ref.grid_hz.shape or not np.allclose(
        est.grid_hz, ref.grid_hz, rtol=1e-12, atol=1e-6
    ):
        raise ValueError("NMSE needs identical frequency grids")
    s = ref.raw
    denom = float(np.sum(np.abs(s) ** 2))
    if denom == 0.0:
        raise ValueError("reference spectrum is identically zero")
    return float(np.sum(np.abs(est.raw - s) ** 2)) / denom


def align_to_grid(psd: PowerSpectrum, grid_hz) -> np.ndarray:
    """PSD values at the bins whose centres are nearest to ``grid_hz``."""
    grid = np.asarray(grid_hz, dtype=float)
    src = psd.grid_hz
    if src.shape == grid.shape and np.allclose(src, grid, rtol=0, atol=1e-6):
        return psd.values
    idx = np.clip(np.searchsorted(src, grid), 1, src.size - 1)
    left = src[idx - 1]
    right = src[idx]
    idx -= (grid - left) <= (right - grid)
    return psd.values[idx]


@dataclass
class RocCurve:
    """``points`` rows are ``(threshold, tpr, fpr)`` for decreasing thresholds."""

    points: np.ndarray
    auc: float

    @property
    def thresholds(self):
        return self.points[:, 0]

    @property
    def tpr(self):
        return self.points[:, 1]

    @property
    def fpr(self):
        return self.points[:, 2]


def _rates(values, occupied, thresholds):
    pos = np.sort(values[occupied])
    neg = np.sort(values[~occupied])
    tp = pos.size - np.searchsorted(pos, thresholds, side="right")
    fp = neg.size - np.searchsorted(neg, thresholds, side="right")
    return tp / pos.size, fp / neg.size


def roc(
    psd: PowerSpectrum, mask: OccupancyMask, n_thresholds: int = DEFAULT_THRESHOLDS
) -> RocCurve:
    """Threshold sweep against a ground-truth occupancy mask.

    A bin is declared occupied when its value exceeds the threshold.  The
    reported points use ``n_thresholds`` levels spaced linearly over the PSD
    range; the AUC is the trapezoid area of the full-resolution curve (one
    threshold per distinct value), which makes it independent of the sweep
    spacing.
    """
    occ = mask.occupied
    if occ.all() or not occ.any():
        raise ValueError("mask must contain both occupied and free bins")
    values = align_to_grid(psd, mask.grid_hz)
    lo, hi = float(np.min(values)), float(np.max(values))
    sweep = np.linspace(hi, lo, n_thresholds)
    tpr, fpr = _rates(values, occ, sweep)
    points = np.column_stack([sweep, tpr, fpr])

    distinct = np.concatenate(([np.inf], np.unique(values)[::-1], [-np.inf]))
    full_tpr, full_fpr = _rates(values, occ, distinct)
    auc = float(np.trapezoid(full_tpr, full_fpr))
    return RocCurve(points, auc)


def detect(psd: PowerSpectrum, threshold: float) -> np.ndarray:
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return np.maximum(psd.raw, 0.0) > threshold


def receiver_sensitivity(bandwidth_hz: float, nf_db: float, snr_db: float) -> float:
    """Minimum detectable power in dBm."""
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth_hz must be positive")
    return THERMAL_NOISE_DBM_HZ + 10 * math.log10(bandwidth_hz) + nf_db + snr_db


@dataclass
class BenchRecord:
    method: str
    M: int
    N: int
    L: int
    P: int
    wall_time_s: float | None
    flops_model: float
    seed: int
    resolution_hz: float
    status: str = "ok"

    def as_row(self) -> dict:
        return asdict(self)


def time_call(fn, repeats: int = 5, warmup: int = 1) -> float:
    """Median wall time of ``fn()`` over ``repeats`` runs after ``warmup`` runs."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(max(repeats, 1)):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _bench_pattern(params):
    N = int(params["N"])
    if params.get("delays") == "contiguous":
        return multicoset.MulticosetPattern(N, tuple(range(N // 2 + 1)))
    if "delays" in params:
        return multicoset.MulticosetPattern(N, tuple(params["delays"]))
    if "M" not in params:
        return multicoset.minimal_pattern(N)
    pattern = multicoset.search_pattern(N, int(params["M"]))
    if pattern is None:
        raise ValueError(f"no valid pattern with M={params['M']}, N={N}")
    return pattern


def _setup_proposed(params, rng):
    pattern = _bench_pattern(params)
    L = int(params["L"])
    span = pattern.validity.guaranteed_lag_span(L)
    K = min(int(params.get("K", span)), span)
    fft_len = int(params.get("fft_len", sfft.next_fast_len(2 * K + 1, real=True)))
    x = rng.standard_normal(L * pattern.n_factor)
    y = multicoset.sample(x, pattern, L)
    q = fastpsd.pattern_q(pattern, L)

    def run():
        cap = multicoset.zero_fill(y)
        est = fastpsd.estimate_autocorr(cap, precomputed_q=q)
        return fastpsd.autocorr_to_psd(est, K, fft_len=fft_len)

    dims = dict(M=pattern.m, N=pattern.n_factor, L=L, P=1)
    return run, dims, fft_len


def _setup_time_domain(params, rng):
    pattern = _bench_pattern(params)
    L = int(params["L"])
    cap = int(params.get("max_L", baselines.TD_MAX_L))
    if L > cap:
        raise _Skip(f"L={L} exceeds the time-domain cap {cap}")
    n_lags = int(params.get("n_lags", L * pattern.n_factor))
    op = baselines.build_td_operator(
        baselines.selection_mixing(pattern), L, n_lags=n_lags, max_L=cap
    )
    if not op.rank_ok:
        raise _Skip("time-domain operator is rank deficient for this pattern")
    P = int(params.get("P", 1000))
    K = int(params.get("K", n_lags - 1))
    fft_len = int(params.get("fft_len", 2 * K + 1))
    stream = rng.standard_normal((pattern.m, P + L - 1))

    def run():
        return baselines.td_estimate(stream, op, P, K=K, fft_len=fft_len)

    dims = dict(M=pattern.m, N=pattern.n_factor, L=L, P=P)
    return run, dims, fft_len


def _setup_freq_domain(params, rng):
    M, N, L = int(params["M"]), int(params["N"]), int(params["L"])
    if M * M < N:
        raise _Skip(f"M^2 < N (M={M}, N={N})")
    pn = baselines.draw_pn(M, N, seed=int(rng.integers(2**31)))
    op = baselines.build_fd_operator(pn, N, L)
    P = int(params.get("P", 64))
    streams = rng.standard_normal((M, P * 2 * L))

    def run():
        return baselines.fd_estimate(streams, op, P)

    return run, dict(M=M, N=N, L=L, P=P), 2 * N * L


class _Skip(Exception):
    pass


BENCH_METHODS = {
    "proposed": _setup_proposed,
    "time_domain": _setup_time_domain,
    "freq_domain": _setup_freq_domain,
}


def bench(
    method: str,
    params_grid,
    repeats: int = 5,
    seed: int = 0,
    single_thread: bool = True,
    fs_hz: float = 1.0,
) -> list[BenchRecord]:
    """Time ``method`` on every parameter set in ``params_grid``.

    Inputs are white Gaussian data of the right shape; operator
    construction and pair counts are prepared outside the timed region.
    Incompatible settings come back with ``status`` starting ``skipped``.
    """
    if method not in BENCH_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(BENCH_METHODS)}")
    records = []
    for params in params_grid:
        rng = np.random.default_rng(seed)
        try:
            run, dims, fft_len = BENCH_METHODS[method](params, rng)
        except _Skip as exc:
            records.append(_skipped(method, params, seed, str(exc)))
            continue
        flops = baselines.flop_models(dims["M"], dims["N"], dims["L"], dims["P"])[method]
        if single_thread:
            with threadpool_limits(limits=1):
                t = time_call(run, repeats)
        else:
            t = time_call(run, repeats)
        records.append(
            BenchRecord(method, seed=seed, wall_time_s=t, flops_model=flops,
                        resolution_hz=fs_hz / fft_len, **dims)
        )
    return records


def _skipped(method, params, seed, reason):
    return BenchRecord(
        method,
        M=int(params.get("M", 0)),
        N=int(params.get("N", 0)),
        L=int(params.get("L", 0)),
        P=int(params.get("P", 0)),
        wall_time_s=None,
        flops_model=float("nan"),
        seed=seed,
        resolution_hz=float("nan"),
        status=f"skipped: {reason}",
    )


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)
