"""Prior-art compressed power spectrum estimators used for comparison.

* Time domain: ``vec(R_y) = (C x C) B r_x`` over ``L`` stacked blocks, solved
  by a precomputed left inverse after snapshot-averaging ``R_y``.
* Frequency domain (modulated wideband converter): per-frequency
  ``vec(R_y(f)) = (A* kr A) r_x(f)`` with slice stitching.

Kronecker products are never formed explicitly: the time-domain operator is
built directly in sparse form from the row cross-correlations of ``C``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft
from scipy import linalg as sla
from scipy import sparse

from .fastpsd import PowerSpectrum, Window, bin_frequencies, lag_window_psd
from .multicoset import MulticosetPattern

__all__ = [
    "MixingKind",
    "MixingMatrix",
    "TdRecoveryOperator",
    "FdRecoveryOperator",
    "RankDeficient",
    "IllConditioned",
    "build_selection_matrix",
    "selection_mixing",
    "pn_mixing",
    "draw_pn",
    "aic_sample",
    "build_td_operator",
    "td_estimate",
    "mwc_sample",
    "build_fd_operator",
    "fd_estimate",
    "flop_models",
    "save_operator",
    "load_operator",
    "operator_cache_path",
    "TD_MAX_L",
    "FD_MAX_COND",
]

TD_MAX_L = 40
FD_MAX_COND = 1e8
_RANK_TOL = 1e-12  # on eigenvalues of the Gram matrix


class RankDeficient(ValueError):
    pass


class IllConditioned(ValueError):
    pass


class MixingKind(str, enum.Enum):
    PN = "pn"
    SELECTION = "selection"


@dataclass(frozen=True)
class MixingMatrix:
    c: np.ndarray
    kind: MixingKind

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2:
            raise ValueError("mixing matrix must be 2-D")
        kind = MixingKind(self.kind)
        if kind is MixingKind.SELECTION:
            if not (np.all((c == 0) | (c == 1)) and np.all(c.sum(axis=1) == 1)):
                raise ValueError("selection rows need exactly one entry equal to 1")
        elif not np.all(np.abs(c) == 1):
            raise ValueError("PN entries must be +1 or -1")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "kind", kind)

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.c.shape[1]


def selection_mixing(pattern: MulticosetPattern) -> MixingMatrix:
    c = np.zeros((pattern.m, pattern.n_factor))
    c[np.arange(pattern.m), list(pattern.delays)] = 1.0
    return MixingMatrix(c, MixingKind.SELECTION)


def pn_mixing(M: int, N: int, rng) -> MixingMatrix:
    return MixingMatrix(2.0 * rng.integers(0, 2, (M, N)) - 1.0, MixingKind.PN)


def draw_pn(M: int, N: int, seed: int, accept=None, max_tries: int = 32) -> MixingMatrix:
    """Draw i.i.d. +-1 chips, redrawing until ``accept(C)`` holds."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        c = pn_mixing(M, N, rng)
        if accept is None or accept(c):
            return c
    raise IllConditioned(f"no acceptable PN set in {max_tries} draws (M={M}, N={N})")


def build_selection_matrix(N: int) -> sparse.csr_array:
    """``B`` with ``vec(R_x) = B r_x`` for a real symmetric Toeplitz ``R_x``.

    ``vec`` stacks columns, so entry ``(i, j)`` sits in row ``i + j*N`` and
    selects ``r_x[|i - j|]``.
    """
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    rows = (i + j * N).ravel()
    cols = np.abs(i - j).ravel()
    return sparse.csr_array((np.ones(N * N), (rows, cols)), shape=(N * N, N))


def aic_sample(x, C: MixingMatrix, L: int) -> np.ndarray:
    """``y[m, l] = c_m . x[l]`` with ``x[l]`` the ``l``-th block of ``N`` samples."""
    samples = np.asarray(getattr(x, "samples", x))
    N = C.n
    if L < 1 or L * N > samples.size:
        raise ValueError(f"need 1 <= L and L*N <= {samples.size}, got L={L}, N={N}")
    return C.c @ samples[: L * N].reshape(L, N).T


def _row_xcorr(c):
    """``k[m1, m2, d + N - 1] = sum_n c[m1, n + d] c[m2, n]``."""
    M, N = c.shape
    k = np.zeros((M, M, 2 * N - 1))
    for d in range(-(N - 1), N):
        a = c[:, max(d, 0) : N + min(d, 0)]
        b = c[:, max(-d, 0) : N - max(d, 0)]
        k[:, :, d + N - 1] = a @ b.T
    return k


@dataclass
class TdRecoveryOperator:
    """Left inverse of ``Phi = ((I_L kron C) x (I_L kron C)) B`` in factored form.

    ``phi`` maps lags ``0..n_lags-1`` to ``vec(R_y)`` (rows touching lags
    beyond ``n_lags - 1`` are zeroed, so a reduced lag model stays
    consistent).  The left inverse is applied as a Cholesky solve of the
    Gram matrix; :attr:`pinv` materialises it for small problems.
    """

    phi: sparse.csr_array
    gram_factor: tuple | None
    L: int
    M: int
    N: int
    n_lags: int
    rank_ok: bool
    mixing: MixingMatrix | None = None

    @property
    def pinv(self) -> np.ndarray:
        if not self.rank_ok:
            raise RankDeficient("operator is not full column rank")
        return sla.cho_solve(self.gram_factor, self.phi.T.toarray())

    def apply(self, vec_ry: np.ndarray) -> np.ndarray:
        if not self.rank_ok:
            raise RankDeficient("operator is not full column rank")
        return sla.cho_solve(self.gram_factor, self.phi.T @ vec_ry)


def build_td_operator(
    C: MixingMatrix, L: int, n_lags: int | None = None, max_L: int | None = TD_MAX_L
) -> TdRecoveryOperator:
    M, N = C.c.shape
    if max_L is not None and L > max_L:
        raise ValueError(f"time-domain baseline is capped at L <= {max_L}, got L={L}")
    LN, LM = L * N, L * M
    n_lags = LN if n_lags is None else int(n_lags)
    if not 1 <= n_lags <= LN:
        raise ValueError(f"n_lags must lie in [1, {LN}]")
    kern = _row_xcorr(C.c)
    l1, m1, l2, m2 = np.meshgrid(
        np.arange(L), np.arange(M), np.arange(L), np.arange(M), indexing="ij"
    )
    row = ((l1 * M + m1) + (l2 * M + m2) * LM).ravel()
    base = ((l1 - l2) * N).ravel()
    pair = (m1 * M + m2).ravel()
    kflat = kern.reshape(M * M, 2 * N - 1)
    rows, cols, vals = [], [], []
    for di, d in enumerate(range(-(N - 1), N)):
        v = kflat[pair, di]
        nz = v != 0
        rows.append(row[nz])
        cols.append(np.abs(base[nz] + d))
        vals.append(v[nz])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n_rows = LM * LM
    if n_lags < LN:
        too_far = np.zeros(n_rows, dtype=bool)
        too_far[rows[cols >= n_lags]] = True
        keep = ~too_far[rows]
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    phi = sparse.coo_array((vals, (rows, cols)), shape=(n_rows, n_lags)).tocsr()
    gram = (phi.T @ phi).toarray()
    eig = np.linalg.eigvalsh(gram)
    rank_ok = bool(eig[0] > _RANK_TOL * max(eig[-1], 1.0)) and n_rows >= n_lags
    factor = sla.cho_factor(gram) if rank_ok else None
    return TdRecoveryOperator(phi, factor, L, M, N, n_lags, rank_ok, C)


def td_estimate(
    y_stream,
    op: TdRecoveryOperator,
    P_snapshots: int | None = None,
    fs_hz: float = 1.0,
    K: int | None = None,
    window=Window.HAMMING,
    fft_len: int | None = None,
    clamp: bool = False,
) -> PowerSpectrum:
    """Snapshot-averaged ``R_y``, left-inverse recovery, then lag window + DFT.

    Snapshots are ``[y[p]; ...; y[p+L-1]]`` for ``p = 0..P-1`` (shift by one).
    ``P_snapshots`` defaults to every snapshot the stream affords.
    """
    y = np.asarray(y_stream, dtype=float)
    if y.ndim != 2 or y.shape[0] != op.M:
        raise ValueError(f"y_stream must have shape (M={op.M}, T)")
    if not op.rank_ok:
        raise RankDeficient("time-domain operator is rank deficient")
    L = op.L
    avail = y.shape[1] - L + 1
    P = avail if P_snapshots is None else int(P_snapshots)
    if P < 1 or P > avail:
        raise ValueError(
            f"stream of {y.shape[1]} samples affords {max(avail, 0)} snapshots, need {P}"
        )
    # (P, M, L) windows -> snapshot vectors ordered l-major, m-minor
    win = sliding_window_view(y[:, : P + L - 1], L, axis=1)
    snaps = win.transpose(1, 2, 0).reshape(P, L * op.M)
    ry = snaps.T @ snaps / P
    r = op.apply(ry.ravel(order="F"))
    K = op.n_lags - 1 if K is None else int(K)
    if K > op.n_lags - 1:
        raise ValueError(f"K={K} exceeds the recovered lags 0..{op.n_lags - 1}")
    meta = {"method": "time_domain", "L": L, "M": op.M, "N": op.N, "P": P}
    return lag_window_psd(r, K, fs_hz, window, fft_len, clamp, meta)


def mwc_sample(x, pn, N: int) -> np.ndarray:
    """Mix with ``N``-periodic chips, ideal low-pass at ``fs/(2N)``, decimate by ``N``.

    The low-pass filter is realised by zeroing transform bins above the
    cutoff over the whole record.  Returns an ``M x floor(len/N)`` array.
    """
    samples = np.asarray(getattr(x, "samples", x), dtype=float)
    chips = np.atleast_2d(np.asarray(getattr(pn, "c", pn), dtype=float))
    if chips.shape[1] != N:
        raise ValueError(f"PN period {chips.shape[1]} does not match N={N}")
    L = samples.size // N
    n = L * N
    if L < 1:
        raise ValueError("record shorter than one PN period")
    mixed = samples[:n] * np.tile(chips, (1, L))
    spec = sfft.rfft(mixed, axis=1)
    f = np.arange(spec.shape[1]) / n  # cycles per Nyquist sample
    spec[:, f > 1.0 / (2 * N)] = 0.0
    return sfft.irfft(spec, n, axis=1)[:, ::N]


def _slice_shifts(N):
    """Shift (in units of fs/N) of each spectral slice, slices ``n = 1..N``."""
    n = np.arange(1, N + 1)
    if N % 2:
        return (2 * n - N - 1) // 2
    return (2 * n - N - 2) // 2


@dataclass
class FdRecoveryOperator:
    a: np.ndarray
    kr_pinv: np.ndarray
    N: int
    L: int
    cond: float
    pn: MixingMatrix | None = None

    @property
    def M(self) -> int:
        return self.a.shape[0]

    def grid(self, fs_hz: float) -> np.ndarray:
        """``2L`` baseband frequencies ``f_l`` in ``(-fs/2N, fs/2N]``."""
        l = np.arange(1, 2 * self.L + 1)
        return (l - self.L) * fs_hz / (2 * self.L * self.N)


def mwc_mixing_coefficients(pn, N: int) -> np.ndarray:
    """``A[m, n]``: weight of spectral slice ``n`` in branch ``m``."""
    chips = np.atleast_2d(np.asarray(getattr(pn, "c", pn), dtype=float))
    coef = sfft.fft(chips, axis=1) / N  # chip Fourier-series coefficients
    return coef[:, (-_slice_shifts(N)) % N]


def build_fd_operator(pn: MixingMatrix, N: int, L: int) -> FdRecoveryOperator:
    M = pn.m
    if M * M < N:
        raise RankDeficient(f"frequency-domain recovery needs M^2 >= N (M={M}, N={N})")
    a = mwc_mixing_coefficients(pn, N)
    kr = sla.khatri_rao(np.conj(a), a)
    cond = float(np.linalg.cond(kr))
    if not np.isfinite(cond) or cond > FD_MAX_COND:
        raise IllConditioned(
            f"cond(A* kr A) = {cond:.3g} exceeds {FD_MAX_COND:g}; draw a new PN set"
        )
    return FdRecoveryOperator(a, np.linalg.pinv(kr), N, L, cond, pn)


def fd_estimate(
    streams, op: FdRecoveryOperator, P_snapshots: int | None = None, fs_hz: float = 1.0
) -> PowerSpectrum:
    """Block DFTs, per-frequency covariance, Khatri-Rao recovery, slice stitching.

    Each stream is cut into ``P`` disjoint blocks of ``2L`` samples.  The
    assembled spectrum has ``2NL`` bins; bin ``(n-1)*2L + l`` is slice ``n``
    at grid point ``f_l``.
    """
    z = np.asarray(streams, dtype=float)
    M, N, L = op.M, op.N, op.L
    if z.ndim != 2 or z.shape[0] != M:
        raise ValueError(f"streams must have shape (M={M}, T)")
    avail = z.shape[1] // (2 * L)
    P = avail if P_snapshots is None else int(P_snapshots)
    if P < 1 or P > avail:
        raise ValueError(f"streams afford {avail} blocks of {2 * L}, need {P}")
    blocks = z[:, : P * 2 * L].reshape(M, P, 2 * L)
    Y = sfft.fft(blocks, axis=2)
    # grid point f_l (l = 1..2L) sits at FFT bin (l - L) mod 2L
    Y = Y[:, :, (np.arange(1, 2 * L + 1) - L) % (2 * L)]
    ry = np.einsum("mpf,npf->fnm", Y, np.conj(Y)) / P  # ry[f] = R_y(f).T
    u = ry.reshape(2 * L, M * M) @ op.kr_pinv.T  # vec() stacks columns
    # E|DFT_2L(z)|^2 = (2L/N) * PSD for unit-DTFT scaling of the Nyquist process
    psd = np.real(u).T.reshape(N * 2 * L) * N / (2 * L)
    # bin index of each stitched value, wrapped onto [-fs/2, fs/2)
    n_bins = 2 * N * L
    k = (np.arange(1, 2 * L + 1) - L)[None, :] + 2 * L * _slice_shifts(N)[:, None]
    order = np.argsort((k.ravel() + N * L) % n_bins)
    psd = psd[order]
    grid = bin_frequencies(n_bins, fs_hz)
    meta = {
        "method": "freq_domain",
        "L": L,
        "M": M,
        "N": N,
        "P": P,
        "fs_hz": fs_hz,
        "fft_len": n_bins,
        "window": "none",
        "cond": op.cond,
    }
    return PowerSpectrum(grid, psd, meta)


def flop_models(M: int, N: int, L: int, P: int) -> dict:
    """Closed-form floating-point operation counts (base-2 logarithms)."""
    for name, v in (("M", M), ("N", N), ("L", L), ("P", P)):
        if v < 1:
            raise ValueError(f"{name} must be a positive integer")
    n = 2 * L * N - 1
    return {
        "proposed": (6 * L * N - 3) * math.log2(n) + n,
        "time_domain": P * L**2 * M**2 + L**3 * M**2 * N + n * math.log2(n),
        "freq_domain": 2 * M * L * P * math.log2(2 * L) + 2 * M**2 * (N + P) * L,
    }


def operator_cache_path(cache_dir, kind: str, M: int, N: int, L: int, seed: int) -> Path:
    return Path(cache_dir) / f"{kind}_M{M}_N{N}_L{L}_seed{seed}.npz"


def save_operator(op, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(op, TdRecoveryOperator):
        phi = op.phi.tocsr()
        np.savez(
            path,
            kind="td",
            data=phi.data,
            indices=phi.indices,
            indptr=phi.indptr,
            shape=np.array(phi.shape),
            dims=np.array([op.L, op.M, op.N, op.n_lags]),
            mixing=op.mixing.c if op.mixing is not None else np.zeros((0, 0)),
            mixing_kind=op.mixing.kind.value if op.mixing is not None else "",
        )
    elif isinstance(op, FdRecoveryOperator):
        np.savez(
            path,
            kind="fd",
            a=op.a,
            kr_pinv=op.kr_pinv,
            dims=np.array([op.N, op.L]),
            cond=op.cond,
            pn=op.pn.c if op.pn is not None else np.zeros((0, 0)),
        )
    else:
        raise TypeError(f"cannot serialise {type(op).__name__}")
    return path


def load_operator(path):
    with np.load(Path(path), allow_pickle=False) as f:
        kind = str(f["kind"])
        if kind == "td":
            L, M, N, n_lags = (int(v) for v in f["dims"])
            phi = sparse.csr_array(
                (f["data"], f["indices"], f["indptr"]), shape=tuple(f["shape"])
            )
            mix = None
            if f["mixing"].size:
                mix = MixingMatrix(f["mixing"], MixingKind(str(f["mixing_kind"])))
            gram = (phi.T @ phi).toarray()
            eig = np.linalg.eigvalsh(gram)
            rank_ok = bool(eig[0] > _RANK_TOL * max(eig[-1], 1.0))
            factor = sla.cho_factor(gram) if rank_ok else None
            return TdRecoveryOperator(phi, factor, L, M, N, n_lags, rank_ok, mix)
        N, L = (int(v) for v in f["dims"])
        pn = MixingMatrix(f["pn"], MixingKind.PN) if f["pn"].size else None
        return FdRecoveryOperator(f["a"], f["kr_pinv"], N, L, float(f["cond"]), pn)
