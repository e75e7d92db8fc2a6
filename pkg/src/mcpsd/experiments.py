"""Experiment pipeline: scenarios, method dispatch, ground truth and sweep cells.

The command line and the acceptance tests both go through :func:`run_cell`,
so a single-cell sweep reproduces a direct library call exactly.
"""

from __future__ import annotations

import enum
import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines, evaluation, fastpsd, multicoset, siggen
from .fastpsd import PowerSpectrum
from .multicoset import MulticosetPattern
from .siggen import BandSpec, NyquistSignal, SignalKind, SignalSpec

__all__ = [
    "Method",
    "Scenario",
    "EstimatorSettings",
    "CellResult",
    "derive_seed",
    "five_bands",
    "dense_bands",
    "five_band_scenario",
    "dense_scenario",
    "cyclostationary_scenario",
    "estimate",
    "truth_psd",
    "run_cell",
    "cell_signal",
    "realized_snr_db",
    "NYQUIST_RATE_HZ",
    "DEFAULT_PATTERN",
    "DEFAULT_PSD_LEN",
    "DEFAULT_TRUNCATION",
]

NYQUIST_RATE_HZ = 2e9
FIVE_BAND_CENTERS_HZ = (130e6, 310e6, 470e6, 550e6, 780e6)
FIVE_BAND_WIDTH_HZ = 10e6
DEFAULT_PATTERN = MulticosetPattern(25, (0, 1, 2, 3, 4, 5, 6, 13))
DEFAULT_PSD_LEN = 32000  # 62.5 kHz bins at 2 GHz
DEFAULT_TRUNCATION = 15999

# seed streams hashed together with the user seed
_SIGNAL_STREAM = 0
_NOISE_STREAM = 1
_PN_STREAM = 2


class Method(str, enum.Enum):
    PROPOSED = "proposed"
    TD_BASELINE = "td_baseline"
    FD_BASELINE = "fd_baseline"
    NYQUIST_REF = "nyquist_ref"


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


def five_bands() -> tuple[BandSpec, ...]:
    return tuple(BandSpec(c, FIVE_BAND_WIDTH_HZ) for c in FIVE_BAND_CENTERS_HZ)


def dense_bands(n_bands: int = 32, width_hz: float = 20e6, span_hz: float = 1e9):
    """``n_bands`` equal bands centred in equal slots of ``[0, span_hz]``."""
    slot = span_hz / n_bands
    return tuple(BandSpec((i + 0.5) * slot, width_hz) for i in range(n_bands))


@dataclass(frozen=True)
class Scenario:
    """A sum of independently generated components on one Nyquist grid."""

    components: tuple[SignalSpec, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a scenario needs at least one component")
        if len({c.fs_hz for c in comps}) != 1:
            raise ValueError("all components must share fs_hz")
        object.__setattr__(self, "components", comps)

    @property
    def fs_hz(self) -> float:
        return self.components[0].fs_hz

    @property
    def bands(self) -> tuple[BandSpec, ...]:
        return tuple(b for c in self.components for b in c.bands)

    @property
    def is_wss(self) -> bool:
        return all(c.kind is SignalKind.WSS_MULTIBAND for c in self.components)

    def signal(self, duration_s: float, seed: int) -> NyquistSignal:
        """Clean signal; component ``i`` uses ``derive_seed(seed, 0, i)``."""
        return _cached_signal(self, float(duration_s), int(seed))

    def true_autocorr(self, max_lag: int, noise_var: float = 0.0) -> np.ndarray:
        r = sum(siggen.true_autocorr(c, max_lag) for c in self.components)
        r[0] += noise_var
        return r

    def to_list(self) -> list[dict]:
        return [c.to_dict() for c in self.components]


@functools.lru_cache(maxsize=2)
def _cached_signal(scenario: Scenario, duration_s: float, seed: int) -> NyquistSignal:
    total = None
    for i, comp in enumerate(scenario.components):
        spec = comp.with_duration(duration_s).with_seed(derive_seed(seed, _SIGNAL_STREAM, i))
        x = siggen.generate(spec).samples
        total = x if total is None else total + x
    prov = scenario.components[0].with_duration(duration_s) if len(scenario.components) == 1 else None
    return NyquistSignal(total, scenario.fs_hz, prov)


def five_band_scenario(duration_s: float = 1e-3) -> Scenario:
    return Scenario((SignalSpec(NYQUIST_RATE_HZ, duration_s, five_bands()),))


def dense_scenario(duration_s: float = 10e-3) -> Scenario:
    return Scenario((SignalSpec(NYQUIST_RATE_HZ, duration_s, dense_bands()),))


def cyclostationary_scenario(duration_s: float = 10e-3, symbol_rate_hz: float = 10e6):
    """BPSK at 130 MHz plus QAM16 at 380 MHz, each ``Rs * 1.35`` wide."""
    width = symbol_rate_hz * (1 + siggen.RRC_ROLLOFF)
    return Scenario(
        (
            SignalSpec(NYQUIST_RATE_HZ, duration_s, (BandSpec(130e6, width),),
                       SignalKind.BPSK, symbol_rate_hz),
            SignalSpec(NYQUIST_RATE_HZ, duration_s, (BandSpec(380e6, width),),
                       SignalKind.QAM16, symbol_rate_hz),
        )
    )


@dataclass(frozen=True)
class EstimatorSettings:
    """Shared knobs of every estimator.

    ``psd_len`` fixes the output grid (resolution ``fs / psd_len``);
    ``corr_fft_len`` overrides the correlation transform length of the
    proposed estimator (``"exact"`` means ``2LN - 1``).
    """

    truncation: int = DEFAULT_TRUNCATION
    psd_len: int = DEFAULT_PSD_LEN
    window: str = "hamming"
    clamp: bool = False
    corr_fft_len: int | str | None = None
    td_L: int | None = None
    td_max_L: int = baselines.TD_MAX_L
    n_thresholds: int = evaluation.DEFAULT_THRESHOLDS

    def __post_init__(self):
        if self.truncation < 0:
            raise ValueError("truncation must be non-negative")
        if self.psd_len < 2 * self.truncation + 1:
            raise ValueError(
                f"psd_len={self.psd_len} is shorter than 2K+1 = {2 * self.truncation + 1}"
            )


def _corr_len(settings, n):
    v = settings.corr_fft_len
    if v is None:
        return None
    if v == "exact":
        return 2 * n - 1
    return int(v)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _autocorr_psd(x, pattern, s: EstimatorSettings):
    """Zero-fill, correlate, window; pair counts are prepared untimed."""
    N = pattern.n_factor
    L = x.samples.size // N
    y = multicoset.sample(x, pattern, L)
    n_fft = fastpsd.correlation_fft_len(L * N, _corr_len(s, L * N))
    q = fastpsd.pattern_q(pattern, L, n_fft)

    def run():
        cap = multicoset.zero_fill(y)
        est = fastpsd.estimate_autocorr(cap, q, max_lag=s.truncation, fft_len=n_fft)
        return fastpsd.autocorr_to_psd(est, s.truncation, s.window, s.clamp, s.psd_len), est

    return _timed(run)


def _proposed(x, pattern, s: EstimatorSettings):
    L = x.samples.size // pattern.n_factor
    if L < 1:
        raise ValueError("record shorter than one sampling period")
    bound = pattern.validity.guaranteed_lag_span(L)
    if bound is None:
        raise ValueError(
            f"pattern is not a circular sparse ruler; missing residues {pattern.validity.missing}"
        )
    if s.truncation > bound:
        raise ValueError(
            f"truncation K={s.truncation} exceeds the guaranteed lag span (L-2)N = {bound}"
        )
    return _autocorr_psd(x, pattern, s)


def _nyquist(x, s: EstimatorSettings):
    (psd, est), elapsed = _autocorr_psd(x, MulticosetPattern(1, (0,)), s)
    psd.meta["method"] = Method.NYQUIST_REF.value
    return (psd, est), elapsed


@functools.lru_cache(maxsize=4)
def _td_operator(pattern: MulticosetPattern, n_lags: int, L: int | None, max_L: int):
    mix = baselines.selection_mixing(pattern)
    candidates = [L] if L is not None else range(
        max(1, math.ceil(n_lags / pattern.n_factor)), max_L + 1
    )
    for cand in candidates:
        if cand * pattern.n_factor < n_lags:
            continue
        op = baselines.build_td_operator(mix, cand, n_lags=n_lags, max_L=max_L)
        if op.rank_ok:
            return op
    raise ValueError(
        f"no time-domain operator with L <= {max_L} identifies lags 0..{n_lags - 1}"
    )


def _time_domain(x, pattern, s: EstimatorSettings):
    op = _td_operator(pattern, s.truncation + 1, s.td_L, s.td_max_L)
    L_total = x.samples.size // pattern.n_factor
    y = multicoset.sample(x, pattern, L_total).y
    return _timed(lambda: baselines.td_estimate(
        y, op, fs_hz=x.fs_hz, K=s.truncation, window=s.window,
        fft_len=s.psd_len, clamp=s.clamp,
    ))


@functools.lru_cache(maxsize=4)
def _fd_operator(M: int, N: int, L: int, seed: int):
    def acceptable(c):
        try:
            baselines.build_fd_operator(c, N, L)
        except baselines.IllConditioned:
            return False
        return True

    pn = baselines.draw_pn(M, N, seed, accept=acceptable)
    return baselines.build_fd_operator(pn, N, L)


def _freq_domain(x, pattern, s: EstimatorSettings, seed):
    N, M = pattern.n_factor, pattern.m
    if s.psd_len % (2 * N):
        raise ValueError(
            f"frequency-domain grid needs psd_len divisible by 2N = {2 * N}, got {s.psd_len}"
        )
    op = _fd_operator(M, N, s.psd_len // (2 * N), derive_seed(seed, _PN_STREAM))
    streams = baselines.mwc_sample(x, op.pn, N)
    psd, elapsed = _timed(lambda: baselines.fd_estimate(streams, op, fs_hz=x.fs_hz))
    if s.clamp:
        psd = PowerSpectrum(psd.grid_hz, np.maximum(psd.values, 0.0), psd.meta, psd.values)
        psd.meta["clamped"] = True
    return psd, elapsed


def estimate(
    method, x: NyquistSignal, pattern: MulticosetPattern, settings: EstimatorSettings,
    seed: int = 0,
):
    """Run one estimator; returns ``(psd, autocorr_or_None, wall_time_s)``.

    The wall time covers reconstruction only: acquisition (sampling,
    mixing, filtering) happens in hardware and is excluded.
    """
    method = Method(method)
    if method is Method.FD_BASELINE:
        psd, elapsed = _freq_domain(x, pattern, settings, seed)
        return psd, None, elapsed
    if method is Method.TD_BASELINE:
        psd, elapsed = _time_domain(x, pattern, settings)
        return psd, None, elapsed
    if method is Method.PROPOSED:
        (psd, est), elapsed = _proposed(x, pattern, settings)
    else:
        (psd, est), elapsed = _nyquist(x, settings)
    return psd, est, elapsed


def truth_psd(
    scenario: Scenario, noise_var: float, settings: EstimatorSettings,
    clean: NyquistSignal | None = None,
) -> PowerSpectrum:
    """Exact lag-windowed PSD of the generating process plus white noise.

    Cyclostationary components have no closed form here; their
    time-averaged autocorrelation is taken from the clean Nyquist record.
    """
    K = settings.truncation
    if scenario.is_wss:
        r = scenario.true_autocorr(K, noise_var)
    else:
        if clean is None:
            raise ValueError("a clean record is required for non-WSS ground truth")
        (_, est), _ = _nyquist(clean, settings)
        r = np.array(est.nonnegative(K), dtype=float)
        r[0] += noise_var
    psd = fastpsd.lag_window_psd(
        r, K, scenario.fs_hz, settings.window, settings.psd_len, meta={"method": "truth"}
    )
    return psd


@dataclass
class CellResult:
    method: str
    n_factor: int
    m: int
    snr_db: float | None
    duration_s: float
    seed: int
    noise_index: int
    nmse: float
    auc: float
    wall_time_s: float
    noise_var: float
    realized_snr_db: float
    psd: PowerSpectrum = field(repr=False)
    truth: PowerSpectrum = field(repr=False)
    roc: evaluation.RocCurve | None = field(repr=False, default=None)
    autocorr: fastpsd.AutocorrEstimate | None = field(repr=False, default=None)

    def summary_row(self) -> dict:
        return {
            "method": self.method,
            "N": self.n_factor,
            "M": self.m,
            "snr_db": self.snr_db,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "nmse": self.nmse,
            "auc": self.auc,
            "wall_time_s": self.wall_time_s,
            "realized_snr_db": self.realized_snr_db,
        }


def realized_snr_db(clean: NyquistSignal, noisy: NyquistSignal) -> float:
    noise = noisy.samples - clean.samples
    energy = float(np.sum(noise**2))
    if energy == 0.0:
        return math.inf
    return 10 * math.log10(float(np.sum(clean.samples**2)) / energy)


def cell_signal(
    scenario: Scenario,
    snr_db: float | None,
    duration_s: float,
    seed: int,
    noise_index: int = 0,
    signal_duration_s: float | None = None,
):
    """``(clean, noisy)`` for one sweep cell.

    The clean record depends only on ``seed``; shorter durations are
    prefixes of a ``signal_duration_s`` realisation.  The noise uses
    ``derive_seed(seed, 1, noise_index)``.
    """
    if not duration_s > 0:
        raise ValueError("duration_s must be positive; a zero-length capture is refused")
    full = scenario.signal(signal_duration_s or duration_s, seed)
    n = int(round(duration_s * scenario.fs_hz))
    if n > full.samples.size:
        raise ValueError("duration_s exceeds the generated record")
    clean = NyquistSignal(full.samples[:n], full.fs_hz, full.provenance)
    if snr_db is None:
        return clean, clean
    return clean, siggen.add_awgn(clean, snr_db, derive_seed(seed, _NOISE_STREAM, noise_index))


def run_cell(
    scenario: Scenario,
    method,
    pattern: MulticosetPattern,
    settings: EstimatorSettings,
    *,
    snr_db: float | None,
    duration_s: float,
    seed: int,
    noise_index: int = 0,
    signal_duration_s: float | None = None,
    with_roc: bool = True,
) -> CellResult:
    """Generate (see :func:`cell_signal`), estimate, and score one sweep cell."""
    method = Method(method)
    clean, x = cell_signal(scenario, snr_db, duration_s, seed, noise_index, signal_duration_s)
    realized = realized_snr_db(clean, x)
    psd, est, elapsed = estimate(method, x, pattern, settings, seed)
    truth = truth_psd(scenario, x.noise_var, settings, clean)
    score = evaluation.nmse(psd, truth)
    curve = None
    auc = float("nan")
    if with_roc:
        mask = siggen.occupancy_mask(scenario.bands, psd.one_sided().grid_hz)
        detect_psd = psd.one_sided()
        if not settings.clamp:
            detect_psd = PowerSpectrum(
                detect_psd.grid_hz, np.maximum(detect_psd.raw, 0.0), detect_psd.meta
            )
        curve = evaluation.roc(detect_psd, mask, settings.n_thresholds)
        auc = curve.auc
    return CellResult(
        method.value, pattern.n_factor, pattern.m, snr_db, duration_s, seed,
        noise_index, score, auc, elapsed, x.noise_var, realized, psd, truth, curve, est,
    )
