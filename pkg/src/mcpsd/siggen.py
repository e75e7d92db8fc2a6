"""Nyquist-grid test signals and their ground truth.

Signals are simulated directly on the Nyquist grid (sample interval
``1/fs_hz``).  Two families are provided:

* wide-sense stationary multiband signals, made by band-pass filtering
  independent unit-variance white Gaussian noise with Hamming-windowed
  linear-phase FIR filters, one filter per band;
* cyclostationary BPSK / QAM16 carriers with root-raised-cosine pulses.

Everything is a pure function of ``(spec, seed)``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

__all__ = [
    "BandSpec",
    "SignalKind",
    "SignalSpec",
    "NyquistSignal",
    "OccupancyMask",
    "RRC_ROLLOFF",
    "RRC_SPAN_SYMBOLS",
    "band_filter",
    "gen_multiband_wss",
    "gen_linear_mod",
    "generate",
    "add_awgn",
    "noise_variance_for_snr",
    "true_autocorr",
    "reference_psd",
    "occupancy_mask",
    "rrc_taps",
]

RRC_ROLLOFF = 0.35
RRC_SPAN_SYMBOLS = 16

# Hamming-window FIR: transition width ~ 3.3 * fs / numtaps.  The transition
# is held to a fixed fraction of the band so in-band power stays above 95 %.
_HAMMING_TRANSITION_FACTOR = 3.3
_TRANSITION_FRACTION = 1.0 / 8.0


class SignalKind(str, enum.Enum):
    WSS_MULTIBAND = "wss_multiband"
    BPSK = "bpsk"
    QAM16 = "qam16"


@dataclass(frozen=True)
class BandSpec:
    """One occupied band: carrier, width (both Hz) and linear relative power."""

    center_hz: float
    bandwidth_hz: float
    power: float = 1.0

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")

    @property
    def low_hz(self) -> float:
        return self.center_hz - self.bandwidth_hz / 2

    @property
    def high_hz(self) -> float:
        return self.center_hz + self.bandwidth_hz / 2


@dataclass(frozen=True)
class SignalSpec:
    fs_hz: float
    duration_s: float
    bands: tuple[BandSpec, ...] = ()
    kind: SignalKind = SignalKind.WSS_MULTIBAND
    symbol_rate_hz: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if not self.fs_hz > 0:
            raise ValueError("fs_hz must be positive")
        if self.duration_s < 0:
            raise ValueError("duration_s must be non-negative")
        n = self.fs_hz * self.duration_s
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError(
                f"fs_hz * duration_s = {n!r} is not an integer sample count"
            )

    @property
    def n_samples(self) -> int:
        return int(round(self.fs_hz * self.duration_s))

    @property
    def nyquist_band_hz(self) -> float:
        return self.fs_hz / 2

    def with_duration(self, duration_s: float) -> "SignalSpec":
        return dataclasses.replace(self, duration_s=duration_s)

    def with_seed(self, seed: int) -> "SignalSpec":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "fs_hz": self.fs_hz,
            "duration_s": self.duration_s,
            "bands": [dataclasses.asdict(b) for b in self.bands],
            "kind": self.kind.value,
            "symbol_rate_hz": self.symbol_rate_hz,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignalSpec":
        return cls(
            fs_hz=float(d["fs_hz"]),
            duration_s=float(d["duration_s"]),
            bands=tuple(BandSpec(**b) for b in d.get("bands", ())),
            kind=SignalKind(d.get("kind", SignalKind.WSS_MULTIBAND.value)),
            symbol_rate_hz=d.get("symbol_rate_hz"),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class NyquistSignal:
    """Real samples ``x[n]`` on the Nyquist grid.

    ``noise_var`` is the variance of white Gaussian noise that has been
    injected by :func:`add_awgn` (0 for clean signals).  It is part of the
    ground truth: the noise contributes ``noise_var * delta[k]`` to the true
    autocorrelation.
    """

    samples: np.ndarray
    fs_hz: float
    provenance: SignalSpec | None = None
    noise_var: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs_hz

    def power(self) -> float:
        return float(np.mean(self.samples**2)) if self.samples.size else 0.0


@dataclass(frozen=True)
class OccupancyMask:
    grid_hz: np.ndarray
    occupied: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid_hz, dtype=float)
        occ = np.asarray(self.occupied, dtype=bool)
        if g.shape != occ.shape or g.ndim != 1:
            raise ValueError("grid_hz and occupied must be 1-D and the same length")
        if g.size > 1 and not np.all(np.diff(g) > 0):
            raise ValueError("grid_hz must be strictly increasing")
        object.__setattr__(self, "grid_hz", g)
        object.__setattr__(self, "occupied", occ)


def _check_bands(bands, fs_hz):
    nyq = fs_hz / 2
    for b in bands:
        if not (0 < b.low_hz and b.high_hz < nyq):
            raise ValueError(
                f"band [{b.low_hz:g}, {b.high_hz:g}] Hz lies outside (0, {nyq:g}) Hz"
            )
    ordered = sorted(bands, key=lambda b: b.low_hz)
    for a, b in zip(ordered, ordered[1:]):
        if b.low_hz < a.high_hz:
            raise ValueError(
                f"bands centred at {a.center_hz:g} Hz and {b.center_hz:g} Hz overlap"
            )


def band_filter(band: BandSpec, fs_hz: float) -> np.ndarray:
    """Linear-phase band-pass FIR for ``band``, scaled to the band's power.

    The taps are normalised so that filtering unit-variance white noise
    yields a process of variance ``band.power``.
    """
    transition = band.bandwidth_hz * _TRANSITION_FRACTION
    numtaps = int(math.ceil(_HAMMING_TRANSITION_FACTOR * fs_hz / transition))
    numtaps += 1 - numtaps % 2  # odd length -> type I linear phase
    taps = sps.firwin(
        numtaps,
        [band.low_hz, band.high_hz],
        pass_zero=False,
        window="hamming",
        fs=fs_hz,
    )
    return taps * math.sqrt(band.power / np.sum(taps**2))


def gen_multiband_wss(spec: SignalSpec) -> NyquistSignal:
    """Sum of band-pass filtered independent white Gaussian noise processes."""
    if spec.kind is not SignalKind.WSS_MULTIBAND:
        raise ValueError(f"gen_multiband_wss needs kind WSS_MULTIBAND, got {spec.kind}")
    _check_bands(spec.bands, spec.fs_hz)
    n = spec.n_samples
    rng = np.random.default_rng(spec.seed)
    x = np.zeros(n)
    if n == 0:
        return NyquistSignal(x, spec.fs_hz, spec)
    for band in spec.bands:
        taps = band_filter(band, spec.fs_hz)
        # 'valid' drops the len(taps) - 1 warm-up outputs.
        w = rng.standard_normal(n + taps.size - 1)
        x += sps.oaconvolve(w, taps, mode="valid")
    return NyquistSignal(x, spec.fs_hz, spec)


def rrc_taps(beta: float, span: int, sps_: int) -> np.ndarray:
    """Root-raised-cosine impulse response with unit energy.

    ``span`` is in symbols, ``sps_`` samples per symbol; the result has
    ``span * sps_ + 1`` taps.
    """
    t = np.arange(-span * sps_ / 2, span * sps_ / 2 + 1) / sps_
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti == 0.0:
            h[i] = 1.0 - beta + 4 * beta / np.pi
        elif beta > 0 and abs(abs(ti) - 1 / (4 * beta)) < 1e-12:
            h[i] = (beta / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
            )
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(
                np.pi * ti * (1 + beta)
            )
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


def _symbols(kind, n, rng, constant):
    if kind is SignalKind.BPSK:
        if constant:
            return np.ones(n)
        return 2.0 * rng.integers(0, 2, n) - 1.0
    levels = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)
    if constant:
        return np.full(n, levels[3] + 1j * levels[3]) / abs(levels[3] + 1j * levels[3])
    return levels[rng.integers(0, 4, n)] + 1j * levels[rng.integers(0, 4, n)]


def gen_linear_mod(spec: SignalSpec, *, constant_symbols: bool = False) -> NyquistSignal:
    """Real passband BPSK or QAM16 signal with RRC pulse shaping.

    ``constant_symbols`` replaces the random symbol stream by a constant one
    (the output then collapses to a tone at the carrier), which is handy for
    checking carrier placement.
    """
    if spec.kind not in (SignalKind.BPSK, SignalKind.QAM16):
        raise ValueError(f"gen_linear_mod needs kind BPSK or QAM16, got {spec.kind}")
    if len(spec.bands) != 1:
        raise ValueError("a linearly modulated signal occupies exactly one band")
    rs = spec.symbol_rate_hz
    if rs is None or not rs > 0:
        raise ValueError("symbol_rate_hz must be positive for modulated signals")
    band = spec.bands[0]
    if rs > band.bandwidth_hz:
        raise ValueError("symbol_rate_hz exceeds the band's bandwidth")
    occupied = (1 + RRC_ROLLOFF) * rs / 2
    if band.center_hz - occupied <= 0 or band.center_hz + occupied >= spec.fs_hz / 2:
        raise ValueError("carrier plus symbol bandwidth exceeds [0, fs/2]")
    sps_f = spec.fs_hz / rs
    sps_ = int(round(sps_f))
    if abs(sps_f - sps_) > 1e-9 * sps_f:
        raise ValueError("fs_hz must be an integer multiple of symbol_rate_hz")

    n = spec.n_samples
    if n == 0:
        return NyquistSignal(np.zeros(0), spec.fs_hz, spec)
    rng = np.random.default_rng(spec.seed)
    pulse = rrc_taps(RRC_ROLLOFF, RRC_SPAN_SYMBOLS, sps_)
    n_sym = -(-(n + pulse.size) // sps_) + 1
    syms = _symbols(spec.kind, n_sym, rng, constant_symbols)
    train = np.zeros(n_sym * sps_, dtype=syms.dtype)
    train[::sps_] = syms
    base = sps.oaconvolve(train, pulse, mode="valid")[:n]
    # unit-energy pulse and unit-power symbols give 1/sps power per sample
    scale = math.sqrt(2 * sps_ * band.power)
    carrier = np.exp(2j * np.pi * band.center_hz * np.arange(n) / spec.fs_hz)
    x = scale * np.real(base * carrier)
    return NyquistSignal(x, spec.fs_hz, spec)


def generate(spec: SignalSpec) -> NyquistSignal:
    """Dispatch on ``spec.kind``."""
    if spec.kind is SignalKind.WSS_MULTIBAND:
        return gen_multiband_wss(spec)
    return gen_linear_mod(spec)


def noise_variance_for_snr(x: NyquistSignal, snr_db: float) -> float:
    """Noise variance giving ``SNR = 10 log10(sum x^2 / (N_t sigma^2))``."""
    if x.samples.size == 0:
        raise ValueError("SNR is undefined for an empty signal")
    energy = float(np.sum(x.samples**2))
    if energy == 0.0:
        raise ValueError("SNR is undefined for an identically zero signal")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return energy / x.samples.size * 10.0 ** (-snr_db / 10.0)


def add_awgn(x: NyquistSignal, snr_db: float, seed: int) -> NyquistSignal:
    """Add white Gaussian noise at ``snr_db`` (``math.inf`` means no noise)."""
    sigma2 = noise_variance_for_snr(x, snr_db)
    if sigma2 == 0.0:
        return x
    rng = np.random.default_rng(seed)
    noisy = x.samples + math.sqrt(sigma2) * rng.standard_normal(x.samples.size)
    return NyquistSignal(noisy, x.fs_hz, x.provenance, x.noise_var + sigma2)


def true_autocorr(spec: SignalSpec, max_lag: int, noise_var: float = 0.0) -> np.ndarray:
    """Exact autocorrelation ``r[0..max_lag]`` of the process behind ``spec``.

    Only defined for WSS multiband signals: each band contributes the
    deterministic autocorrelation of its (power-scaled) FIR filter.
    """
    if spec.kind is not SignalKind.WSS_MULTIBAND:
        raise ValueError("closed-form autocorrelation only exists for WSS_MULTIBAND")
    _check_bands(spec.bands, spec.fs_hz)
    r = np.zeros(max_lag + 1)
    for band in spec.bands:
        taps = band_filter(band, spec.fs_hz)
        full = sps.correlate(taps, taps, mode="full", method="direct")
        one_sided = full[taps.size - 1 :]
        m = min(one_sided.size, max_lag + 1)
        r[:m] += one_sided[:m]
    r[0] += noise_var
    return r


def reference_psd(x: NyquistSignal, out_len: int, window="hamming", K: int | None = None):
    """Lag-windowed unbiased correlogram of the full Nyquist record.

    Runs the same zero-fill / autocorrelation / window / FFT path as the
    sub-Nyquist estimator with every sample kept, so differences between the
    two isolate the effect of sub-sampling.  The result has ``out_len`` bins
    built from lags ``-K..K``; ``K`` defaults to ``(out_len - 1) // 2``.
    """
    from . import fastpsd, multicoset

    n = x.samples.size
    if out_len < 1:
        raise ValueError("out_len must be positive")
    if out_len > 2 * n - 1:
        raise ValueError(f"out_len={out_len} exceeds 2*N_t - 1 = {2 * n - 1}")
    full = multicoset.MulticosetPattern(1, (0,))
    capture = multicoset.zero_fill(multicoset.sample(x, full, n))
    est = fastpsd.estimate_autocorr(capture)
    k = (out_len - 1) // 2 if K is None else int(K)
    psd = fastpsd.autocorr_to_psd(est, k, window=window, fft_len=out_len)
    psd.meta["method"] = "nyquist_reference"
    return psd


def occupancy_mask(spec_or_bands, grid_hz) -> OccupancyMask:
    """Mark every grid frequency lying inside a band (closed interval)."""
    bands = getattr(spec_or_bands, "bands", spec_or_bands)
    grid = np.asarray(grid_hz, dtype=float)
    occ = np.zeros(grid.size, dtype=bool)
    for b in bands:
        occ |= (grid >= b.low_hz) & (grid <= b.high_hz)
    return OccupancyMask(grid, occ)
