"""Multicoset acquisition on the Nyquist grid.

A multicoset sampler with downsampling factor ``N`` and integer delays
``{d_m}`` keeps the Nyquist samples ``x[l*N + d_m]``.  This module checks
delay sets against the circular sparse-ruler condition, searches for
patterns, and embeds coset samples back onto the Nyquist grid.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MulticosetPattern",
    "ValidationReport",
    "CosetSamples",
    "ZeroFilledCapture",
    "SearchBudgetExceeded",
    "validate_pattern",
    "search_pattern",
    "minimal_pattern",
    "sample",
    "zero_fill",
    "brute_force_qk",
    "delays_from_seconds",
]

DEFAULT_SEARCH_MAX_N = 64


class SearchBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a delay set.

    ``witnesses[n]`` is ``(m1, m2, c)`` with
    ``n == delays[m1] - delays[m2] + c * N`` or ``None`` when no such triple
    exists.  Indices refer to the sorted delay tuple.
    """

    n_factor: int
    delays: tuple[int, ...]
    witnesses: dict
    allow_wrap: bool = True

    @property
    def is_circular_ruler(self) -> bool:
        return all(w is not None for w in self.witnesses.values())

    @property
    def missing(self) -> list[int]:
        return [n for n, w in self.witnesses.items() if w is None]

    @property
    def min_guaranteed_positive_lag_span(self) -> int:
        """Largest ``r`` such that every residue ``|n| <= r`` has a witness.

        Equals ``N // 2`` for a valid pattern, ``-1`` if even ``n = 0`` fails.
        """
        r = -1
        for n in sorted(self.witnesses):
            if self.witnesses[n] is None:
                break
            r = n
        return r

    def guaranteed_lag_span(self, L: int) -> int | None:
        """Lags ``|k| <= span`` are guaranteed ``Q_k > 0`` after ``L`` periods.

        ``(L - 2) * N`` in general and ``L*N - 1`` under full sampling;
        ``None`` for an invalid pattern.
        """
        if not self.is_circular_ruler:
            return None
        if len(self.delays) == self.n_factor:
            return L * self.n_factor - 1
        return max(L - 2, 0) * self.n_factor

    def table(self) -> str:
        lines = [f"{'n':>4} {'m1':>4} {'m2':>4} {'c':>3}"]
        for n, w in sorted(self.witnesses.items()):
            if w is None:
                lines.append(f"{n:>4} MISSING")
            else:
                m1, m2, c = w
                lines.append(f"{n:>4} {m1:>4} {m2:>4} {c:>3}")
        return "\n".join(lines)


def validate_pattern(N: int, delays, allow_wrap: bool = True) -> ValidationReport:
    """Find a witness ``(m1, m2, c)`` for every ``n`` in ``0..N//2``.

    With ``allow_wrap=False`` only ``c = 0`` is accepted, which is the
    (stricter) linear sparse-ruler condition.
    """
    d = tuple(sorted(int(v) for v in delays))
    _check_delays(N, d)
    pos = {v: i for i, v in enumerate(d)}
    cs = (0, 1, -1) if allow_wrap else (0,)
    witnesses = {}
    for n in range(N // 2 + 1):
        found = None
        for c in cs:
            for m2, d2 in enumerate(d):
                m1 = pos.get(n + d2 - c * N)
                if m1 is not None:
                    found = (m1, m2, c)
                    break
            if found:
                break
        witnesses[n] = found
    return ValidationReport(N, d, witnesses, allow_wrap)


def _check_delays(N, d):
    if N < 1:
        raise ValueError(f"downsampling factor must be >= 1, got {N}")
    if not d:
        raise ValueError("at least one delay is required")
    if len(set(d)) != len(d):
        raise ValueError(f"delays must be distinct: {d}")
    if d[0] < 0 or d[-1] > N - 1:
        raise ValueError(f"delays must lie in [0, {N - 1}]: {d}")


@dataclass(frozen=True)
class MulticosetPattern:
    n_factor: int
    delays: tuple[int, ...]

    def __post_init__(self):
        d = tuple(sorted(int(v) for v in self.delays))
        _check_delays(int(self.n_factor), d)
        object.__setattr__(self, "n_factor", int(self.n_factor))
        object.__setattr__(self, "delays", d)

    @property
    def m(self) -> int:
        return len(self.delays)

    @functools.cached_property
    def validity(self) -> ValidationReport:
        return validate_pattern(self.n_factor, self.delays)

    @property
    def is_full(self) -> bool:
        return self.m == self.n_factor

    def indicator(self, L: int) -> np.ndarray:
        """``I[n]`` for ``n = 0..L*N-1``."""
        period = np.zeros(self.n_factor, dtype=np.int8)
        period[list(self.delays)] = 1
        return np.tile(period, L)

    def to_dict(self) -> dict:
        return {"N": self.n_factor, "delays": list(self.delays)}

    @classmethod
    def from_dict(cls, d: dict) -> "MulticosetPattern":
        return cls(int(d["N"]), tuple(d["delays"]))


def delays_from_seconds(delays_s, fs_hz: float) -> tuple[int, ...]:
    """Convert delays in seconds to Nyquist-grid integers, refusing drift."""
    out = []
    for t in delays_s:
        v = t * fs_hz
        k = int(round(v))
        if abs(v - k) > 1e-6:
            raise ValueError(f"delay {t!r} s is not a multiple of the Nyquist interval")
        out.append(k)
    return tuple(out)


def search_pattern(N: int, M: int, max_n: int = DEFAULT_SEARCH_MAX_N):
    """Lexicographically smallest valid delay set of size ``M`` with ``0`` first.

    Depth-first search in lexicographic order with a covering bound: a set
    of ``s`` delays can add at most ``s`` new residues when one more delay
    is appended.  Returns ``None`` when no pattern exists.
    """
    if not 1 <= M <= N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={N}")
    if N > max_n:
        raise SearchBudgetExceeded(f"N={N} exceeds the search budget max_n={max_n}")
    half = N // 2
    need = half + 1  # residues 0..N//2

    def residue(a, b):
        r = (a - b) % N
        return min(r, N - r)

    chosen = [0]

    def dfs(covered):
        s = len(chosen)
        remaining = M - s
        if remaining == 0:
            return len(covered) == need
        # each further delay adds at most (current size) new residues
        gain = sum(s + i for i in range(remaining))
        if need - len(covered) > gain:
            return False
        # leave room for the remaining delays
        for d in range(chosen[-1] + 1, N - remaining + 1):
            new = {residue(d, e) for e in chosen}
            chosen.append(d)
            if dfs(covered | new):
                return True
            chosen.pop()
        return False

    if dfs(frozenset({0})):
        return MulticosetPattern(N, tuple(chosen))
    return None


@functools.lru_cache(maxsize=64)
def minimal_pattern(N: int, max_n: int = DEFAULT_SEARCH_MAX_N) -> MulticosetPattern:
    """Valid pattern with the fewest delays (lexicographically first among them)."""
    for M in range(1, N + 1):
        p = search_pattern(N, M, max_n)
        if p is not None:
            return p
    raise AssertionError("full sampling is always valid")


@dataclass(frozen=True)
class CosetSamples:
    """Branch outputs ``y[m, l] = x[l*N + d_m]`` (shape ``M x L``)."""

    y: np.ndarray
    pattern: MulticosetPattern
    fs_channel_hz: float

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 2 or y.shape[0] != self.pattern.m or y.shape[1] < 1:
            raise ValueError(f"y must have shape (M={self.pattern.m}, L>=1), got {y.shape}")
        object.__setattr__(self, "y", y)

    @property
    def L(self) -> int:
        return self.y.shape[1]

    @property
    def fs_hz(self) -> float:
        return self.fs_channel_hz * self.pattern.n_factor


@dataclass(frozen=True)
class ZeroFilledCapture:
    """``h[n] = x[n] I[n]`` and ``I[n]`` over ``n = 0..L*N-1``."""

    h: np.ndarray
    indicator: np.ndarray
    pattern: MulticosetPattern
    L: int
    fs_hz: float = 1.0

    @property
    def length(self) -> int:
        return self.h.size


def sample(x, pattern: MulticosetPattern, L: int) -> CosetSamples:
    """Pick ``x[l*N + d_m]`` for ``l < L``; no arithmetic on the samples."""
    samples = getattr(x, "samples", x)
    fs = getattr(x, "fs_hz", 1.0)
    N = pattern.n_factor
    if L < 1:
        raise ValueError("L must be >= 1")
    if L * N > len(samples):
        raise ValueError(
            f"capture of {len(samples)} samples is shorter than L*N = {L * N}"
        )
    blocks = np.asarray(samples[: L * N]).reshape(L, N)
    y = blocks[:, list(pattern.delays)].T.copy()
    return CosetSamples(y, pattern, fs / N)


def zero_fill(y: CosetSamples) -> ZeroFilledCapture:
    p = y.pattern
    N, L = p.n_factor, y.L
    h = np.zeros((L, N), dtype=y.y.dtype)
    h[:, list(p.delays)] = y.y.T
    return ZeroFilledCapture(h.ravel(), p.indicator(L), p, L, y.fs_hz)


def brute_force_qk(pattern: MulticosetPattern, L: int) -> np.ndarray:
    """``Q_k`` for ``k = -L*N+1 .. L*N-1`` by enumerating sample pairs.

    Every ordered pair of sampled positions ``(n, n')`` contributes one
    count at lag ``n - n'``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    LN = L * pattern.n_factor
    pos = np.flatnonzero(pattern.indicator(L))
    diffs = np.subtract.outer(pos, pos).ravel()
    return np.bincount(diffs + LN - 1, minlength=2 * LN - 1).astype(np.int64)
