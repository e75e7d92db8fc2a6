"""FFT-based power spectrum estimation from zero-filled multicoset samples.

With ``h[n] = x[n] I[n]`` the unbiased autocorrelation estimate is

    r_x[k] = r_h[k] / Q_k,   r_h[k] = sum_n h[n] h*[n-k],   Q_k = sum_n I[n] I[n-k]

and both ``r_h`` and ``Q_k`` are linear autocorrelations, so each costs one
forward and one inverse FFT of length ``>= 2*L*N - 1``.  Lag arrays in this
module always run over ``k = -L*N+1 .. L*N-1``; index ``L*N - 1`` is lag 0.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .multicoset import MulticosetPattern, ZeroFilledCapture

__all__ = [
    "Window",
    "NumericalFailure",
    "ZeroDivisorLag",
    "AutocorrEstimate",
    "PowerSpectrum",
    "naive_rh",
    "fast_rh",
    "fast_q",
    "pattern_q",
    "estimate_autocorr",
    "autocorr_to_psd",
    "lag_window",
    "lag_window_psd",
    "bin_frequencies",
    "predict_mse",
    "correlation_fft_len",
]

Q_ROUNDING_TOL = 1e-6


class Window(str, enum.Enum):
    HAMMING = "hamming"
    RECT = "rect"


class NumericalFailure(ArithmeticError):
    pass


class ZeroDivisorLag(ValueError):
    """A lag with ``Q_k = 0`` was requested."""

    def __init__(self, lag: int, message: str | None = None):
        self.lag = lag
        super().__init__(message or f"Q_k = 0 at lag k={lag}; r_x is undefined there")


def correlation_fft_len(n: int, fft_len: int | None = None) -> int:
    """Transform length for a linear autocorrelation of ``n`` samples.

    Any length ``>= 2n - 1`` avoids circular wrap-around; by default the
    next fast size is used.
    """
    minimum = 2 * n - 1
    if fft_len is None:
        return sfft.next_fast_len(minimum, real=True)
    if fft_len < minimum:
        raise ValueError(f"fft_len={fft_len} is shorter than 2*L*N-1 = {minimum}")
    return int(fft_len)


def naive_rh(h) -> np.ndarray:
    """Direct evaluation of ``r_h[k]`` lag by lag, O((LN)^2)."""
    h = np.asarray(h)
    n = h.size
    if n < 1:
        raise ValueError("h must be non-empty")
    out = np.zeros(2 * n - 1, dtype=np.result_type(h, float))
    for k in range(-n + 1, n):
        if k >= 0:
            out[k + n - 1] = np.sum(h[k:] * np.conj(h[: n - k]))
        else:
            out[k + n - 1] = np.sum(h[: n + k] * np.conj(h[-k:]))
    return out


def _autocorr_fft(h, fft_len):
    n = h.size
    spec = sfft.fft(h, fft_len) if np.iscomplexobj(h) else sfft.rfft(h, fft_len)
    power = np.square(spec.real)
    power += np.square(spec.imag)
    del spec
    if np.iscomplexobj(h):
        c = sfft.ifft(power, overwrite_x=True)
    else:
        c = sfft.irfft(power, fft_len, overwrite_x=True)
    # circular index k -> lag k, index fft_len - k -> lag -k
    return np.concatenate((c[fft_len - n + 1 :], c[:n]))


def fast_rh(h, fft_len: int | None = None) -> np.ndarray:
    """``r_h`` as the inverse transform of ``|F h|^2`` (zero-padded)."""
    h = np.asarray(h)
    if h.size < 1:
        raise ValueError("h must be non-empty")
    return _autocorr_fft(h, correlation_fft_len(h.size, fft_len))


def fast_q(indicator, fft_len: int | None = None) -> np.ndarray:
    """Pair counts ``Q_k`` via FFT, rounded and checked for integrality."""
    ind = np.asarray(indicator, dtype=float)
    q = _autocorr_fft(ind, correlation_fft_len(ind.size, fft_len))
    qi = np.rint(q)
    resid = float(np.max(np.abs(q - qi))) if q.size else 0.0
    if resid > Q_ROUNDING_TOL:
        raise NumericalFailure(f"FFT pair counts deviate from integers by {resid:.3g}")
    out = qi.astype(np.int64)
    out[out < 0] = 0
    return out


@functools.lru_cache(maxsize=4)
def pattern_q(pattern: MulticosetPattern, L: int, fft_len: int | None = None) -> np.ndarray:
    """Cached, read-only ``Q_k`` for ``(pattern, L)``; depends on nothing else."""
    q = fast_q(pattern.indicator(L), fft_len)
    q.setflags(write=False)
    return q


@dataclass
class AutocorrEstimate:
    """Unbiased autocorrelation estimate over lags ``-LN+1 .. LN-1``.

    ``r_x`` is NaN wherever ``Q_k = 0``; those lags are listed in
    ``zero_divisor_lags``.
    """

    r_h: np.ndarray
    q: np.ndarray
    r_x: np.ndarray
    lag_span: int
    zero_divisor_lags: np.ndarray
    pattern: MulticosetPattern | None = None
    L: int | None = None
    fs_hz: float = 1.0

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.lag_span + 1, self.lag_span)

    def at(self, k) -> np.ndarray:
        """``r_x`` at lag(s) ``k``."""
        return self.r_x[np.asarray(k) + self.lag_span - 1]

    def nonnegative(self, K: int) -> np.ndarray:
        """``r_x[0..K]``."""
        c = self.lag_span - 1
        return self.r_x[c : c + K + 1]

    @property
    def guaranteed_span(self) -> int:
        """Largest ``K`` for which every ``|k| <= K`` is guaranteed ``Q_k > 0``."""
        if self.pattern is None or self.L is None:
            return self.lag_span - 1
        span = self.pattern.validity.guaranteed_lag_span(self.L)
        return -1 if span is None else span


@dataclass
class PowerSpectrum:
    """PSD on an ascending frequency grid covering ``[-fs/2, fs/2)``.

    ``values`` may be clamped at zero for detection; ``raw_values`` always
    holds the unclamped estimate.  The scale is such that the mean over
    bins equals the windowed lag-0 autocorrelation (the signal power).
    """

    grid_hz: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    raw_values: np.ndarray | None = None

    @property
    def raw(self) -> np.ndarray:
        return self.values if self.raw_values is None else self.raw_values

    @property
    def resolution_hz(self) -> float:
        return float(self.grid_hz[1] - self.grid_hz[0]) if self.grid_hz.size > 1 else 0.0

    def one_sided(self) -> "PowerSpectrum":
        """Bins with ``0 <= f < fs/2``."""
        keep = self.grid_hz >= 0
        if "fs_hz" in self.meta:
            keep &= self.grid_hz < self.meta["fs_hz"] / 2
        raw = None if self.raw_values is None else self.raw_values[keep]
        return PowerSpectrum(self.grid_hz[keep], self.values[keep], dict(self.meta), raw)


def estimate_autocorr(
    capture: ZeroFilledCapture,
    precomputed_q: np.ndarray | None = None,
    max_lag: int | None = None,
    fft_len: int | None = None,
) -> AutocorrEstimate:
    """``r_x[k] = r_h[k] / Q_k`` for every lag with ``Q_k > 0``.

    ``max_lag`` asks for a guarantee: a zero divisor at ``|k| <= max_lag``
    raises :class:`ZeroDivisorLag`.
    """
    h = capture.h
    LN = h.size
    if capture.indicator.size != LN:
        raise ValueError("h and indicator lengths differ")
    n_fft = correlation_fft_len(LN, fft_len)
    if precomputed_q is None:
        q = pattern_q(capture.pattern, capture.L, n_fft)
    else:
        q = np.asarray(precomputed_q)
        if q.size != 2 * LN - 1:
            raise ValueError(
                f"precomputed q has {q.size} lags, capture needs {2 * LN - 1}"
            )
    r_h = _autocorr_fft(h, n_fft)
    zero = q == 0
    zero_lags = np.flatnonzero(zero) - (LN - 1)
    if max_lag is not None and zero_lags.size:
        bad = zero_lags[np.abs(zero_lags) <= max_lag]
        if bad.size:
            k = int(bad[np.argmin(np.abs(bad))])
            raise ZeroDivisorLag(k)
    if zero.any():
        with np.errstate(invalid="ignore", divide="ignore"):
            r_x = np.where(zero, np.nan, r_h / np.where(zero, 1, q))
    else:
        r_x = r_h / q
    return AutocorrEstimate(
        r_h, q, r_x, LN, zero_lags, capture.pattern, capture.L, capture.fs_hz
    )


@functools.lru_cache(maxsize=16)
def bin_frequencies(n_fft: int, fs_hz: float) -> np.ndarray:
    """Ascending DFT bin centres ``k * fs / n`` for ``k = -n//2 .. (n-1)//2``.

    Multiplying before dividing keeps exact values on round-number grids.
    The result is cached and read-only.
    """
    k = np.arange(-(n_fft // 2), (n_fft + 1) // 2)
    grid = k * float(fs_hz) / n_fft
    grid.flags.writeable = False
    return grid


@functools.lru_cache(maxsize=8)
def _half_window(K: int, window: Window) -> np.ndarray:
    """Weights for lags ``0..K``; cached and read-only."""
    if window is Window.RECT or K == 0:
        w = np.ones(K + 1)
    else:
        # right half of np.hamming(2K+1); exactly 1 at lag 0
        w = 0.54 + 0.46 * np.cos(np.pi * np.arange(K + 1) / K)
    w.flags.writeable = False
    return w


def lag_window(K: int, window=Window.HAMMING) -> np.ndarray:
    """Symmetric window over lags ``-K..K`` with unit weight at lag 0."""
    half = _half_window(K, Window(window))
    return np.concatenate((half[:0:-1], half))


def lag_window_psd(
    r_nonneg,
    K: int,
    fs_hz: float,
    window=Window.HAMMING,
    fft_len: int | None = None,
    clamp: bool = False,
    meta: dict | None = None,
) -> PowerSpectrum:
    """Window the even sequence ``r[-K..K]`` (given as ``r[0..K]``) and transform."""
    r = np.asarray(r_nonneg)[: K + 1]
    if r.size != K + 1:
        raise ValueError(f"need {K + 1} lags, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise ValueError("autocorrelation has non-finite values inside the window")
    n_fft = 2 * K + 1 if fft_len is None else int(fft_len)
    if n_fft < 2 * K + 1:
        raise ValueError(f"fft_len={n_fft} is shorter than 2K+1 = {2 * K + 1}")
    w = _half_window(K, Window(window))
    buf = np.zeros(n_fft, dtype=r.dtype)
    np.multiply(w, r, out=buf[: K + 1])
    if K:
        buf[n_fft - K :] = np.conj(buf[K:0:-1])
    if np.iscomplexobj(buf):
        spec = sfft.fft(buf, overwrite_x=True)
        raw = sfft.fftshift(spec.real)
    else:
        # a real even sequence has a real even transform: bin -k equals bin k
        spec = sfft.rfft(buf, overwrite_x=True)
        half = spec.real
        raw = np.concatenate((half[n_fft // 2 : 0 : -1], half[: (n_fft + 1) // 2]))
    scale = max(float(spec.real.max()), -float(spec.real.min())) or 1.0
    imag_residue = max(float(spec.imag.max()), -float(spec.imag.min())) / scale
    grid = bin_frequencies(n_fft, fs_hz)
    info = {
        "window": Window(window).value,
        "truncation": K,
        "fft_len": n_fft,
        "fs_hz": fs_hz,
        "imag_residue": imag_residue,
        "clamped": bool(clamp),
    }
    if meta:
        info.update(meta)
    if clamp:
        return PowerSpectrum(grid, np.maximum(raw, 0.0), info, raw)
    return PowerSpectrum(grid, raw, info)


def autocorr_to_psd(
    est: AutocorrEstimate,
    K: int,
    window=Window.HAMMING,
    clamp: bool = False,
    fft_len: int | None = None,
) -> PowerSpectrum:
    """Lag-windowed DFT of ``r_x[-K..K]``.

    ``K`` may not exceed the span over which the sampling pattern
    guarantees ``Q_k > 0`` (``(L-2)*N``, or ``L*N-1`` under full sampling).
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if 2 * K + 1 > 2 * est.lag_span - 1:
        raise ValueError(f"2K+1 = {2 * K + 1} exceeds the {2 * est.lag_span - 1} available lags")
    bound = est.guaranteed_span
    if K > bound:
        raise ValueError(
            f"truncation K={K} exceeds the guaranteed-positive lag span {bound}"
        )
    if est.zero_divisor_lags.size:
        bad = est.zero_divisor_lags[np.abs(est.zero_divisor_lags) <= K]
        if bad.size:
            raise ZeroDivisorLag(int(bad[np.argmin(np.abs(bad))]))
    meta = {"method": "proposed"}
    if est.pattern is not None:
        meta.update(N=est.pattern.n_factor, M=est.pattern.m, delays=list(est.pattern.delays))
    if est.L is not None:
        meta["L"] = est.L
    return lag_window_psd(
        est.nonnegative(K), K, est.fs_hz, window, fft_len, clamp, meta
    )


def predict_mse(
    pattern: MulticosetPattern, L: int, sigma2: float, K: int | None = None
) -> float:
    """``sigma^4 * sum_{|k|<=K} 1/Q_k`` for temporally white input.

    ``K`` defaults to the guaranteed span ``(L-2)*N``.
    """
    LN = L * pattern.n_factor
    if K is None:
        K = pattern.validity.guaranteed_lag_span(L)
        if K is None:
            raise ValueError("pattern is not a circular sparse ruler")
    if K > LN - 1:
        raise ValueError(f"K={K} exceeds the maximum lag {LN - 1}")
    q = pattern_q(pattern, L)
    span = q[LN - 1 - K : LN + K]
    if np.any(span == 0):
        k = int(np.flatnonzero(span == 0)[0]) - K
        raise ZeroDivisorLag(k)
    return float(sigma2**2 * np.sum(1.0 / span))
