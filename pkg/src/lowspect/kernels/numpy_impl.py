"""Pure-numpy implementations of the hot kernels.

These are the fallback path (``LOWSPECT_BACKEND=numpy``) and the semantic
reference for the numba implementations: both follow the same operation
order so outputs agree bit-for-bit wherever accumulation order is defined
(PCG32 streams, CSR matvecs) and to float reproduction elsewhere.
"""

from __future__ import annotations

import math

import numpy as np

PCG_MULT = np.uint64(6364136223846793005)

_U18 = np.uint64(18)
_U27 = np.uint64(27)
_U59 = np.uint64(59)
_U32C = np.uint64(32)
_U31C = np.uint64(31)
_MASK32 = np.uint64(0xFFFFFFFF)

# Block tables for jumping the PCG32 state k steps ahead:
#   state_k = A^k * state_0 + inc * (A^{k-1} + ... + A + 1)
_BLOCK = 4096


def _build_jump_tables(block: int):
    apow = np.empty(block + 1, dtype=np.uint64)
    gsum = np.empty(block + 1, dtype=np.uint64)
    a, g = 1, 0
    for k in range(block + 1):
        apow[k] = a
        gsum[k] = g
        g = (g + a) & 0xFFFFFFFFFFFFFFFF
        a = (a * 6364136223846793005) & 0xFFFFFFFFFFFFFFFF
    return apow, gsum


_APOW, _GSUM = _build_jump_tables(_BLOCK)


def pcg32_fill(state_arr: np.ndarray, count: int) -> np.ndarray:
    """Draw ``count`` successive PCG32 outputs; advances state_arr[0]."""
    mod = 1 << 64
    s0 = int(state_arr[0])
    inc = int(state_arr[1])
    out = np.empty(count, dtype=np.uint32)
    pos = 0
    while pos < count:
        m = min(_BLOCK, count - pos)
        states = _APOW[:m] * np.uint64(s0) + np.uint64(inc) * _GSUM[:m]
        x = (((states >> _U18) ^ states) >> _U27) & _MASK32
        rot = states >> _U59
        out[pos : pos + m] = (
            ((x >> rot) | (x << ((_U32C - rot) & _U31C))) & _MASK32
        ).astype(np.uint32)
        s0 = (int(_APOW[m]) * s0 + inc * int(_GSUM[m])) % mod
        pos += m
    state_arr[0] = np.uint64(s0)
    return out


class _UnitStream:
    """Sequential [0,1) draws served from vectorized PCG32 blocks.

    Consumption order is identical to scalar next_unit() calls, so the
    numba loop and this fallback see the same uniforms.
    """

    __slots__ = ("state_arr", "buf", "pos")

    def __init__(self, state_arr: np.ndarray):
        self.state_arr = state_arr
        self.buf = np.empty(0, dtype=np.float64)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= self.buf.size:
            self.buf = pcg32_fill(self.state_arr, _BLOCK).astype(np.float64)
            self.buf *= 2.0**-32
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)

    def rewind_unused(self) -> None:
        # Unconsumed buffered draws must be handed back: rewind the state by
        # the number of buffered-but-unused outputs so the caller's stream
        # position matches scalar consumption.  k forward steps map
        # s -> A^k s + inc*G_k, so the inverse is s -> A^-k (s - inc*G_k).
        unused = self.buf.size - self.pos
        if unused > 0:
            mod = 1 << 64
            a_k_inv = pow(int(_APOW[unused]), -1, mod)
            s = int(self.state_arr[0])
            inc_g = int(self.state_arr[1]) * int(_GSUM[unused])
            self.state_arr[0] = np.uint64((a_k_inv * (s - inc_g)) % mod)
        self.buf = np.empty(0, dtype=np.float64)
        self.pos = 0


def _poisson_knuth(stream: _UnitStream, lam: float) -> float:
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= stream.next()
        if p <= limit:
            return float(k)
        k += 1


def _poisson_ptrs(stream: _UnitStream, lam: float) -> float:
    # Transformed rejection with squeeze (Hormann's PTRS).
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = stream.next() - 0.5
        v = stream.next()
        us = 0.5 - abs(u)
        if us <= 0.0:
            continue
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= v_r:
            return float(k)
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if (
            math.log(v * inv_alpha / (a / (us * us) + b))
            <= k * log_lam - lam - math.lgamma(k + 1.0)
        ):
            return float(k)


KNUTH_LAMBDA_MAX = 30.0


def poisson_fill(state_arr: np.ndarray, lam: np.ndarray, out: np.ndarray) -> None:
    """Poisson draws, one per element of ``lam``, in flat array order."""
    stream = _UnitStream(state_arr)
    flat_lam = lam.ravel()
    flat_out = out.ravel()
    for i in range(flat_lam.size):
        lam_i = flat_lam[i]
        if lam_i == 0.0:
            flat_out[i] = 0.0
        elif lam_i < KNUTH_LAMBDA_MAX:
            flat_out[i] = _poisson_knuth(stream, lam_i)
        else:
            flat_out[i] = _poisson_ptrs(stream, lam_i)
    stream.rewind_unused()


# ---------------------------------------------------------------------------
# Siddon ray tracing
# ---------------------------------------------------------------------------

_PARALLEL_EPS = 1e-12
_SEG_EPS = 1e-12


def siddon_padded(
    n: int,
    pixel_size: float,
    cos_t: np.ndarray,
    sin_t: np.ndarray,
    nr_bins: int,
    counts: np.ndarray,
    cols_pad: np.ndarray,
    w_pad: np.ndarray,
) -> None:
    """Exact line-length weights for every (angle, bin) ray.

    Rays are parallel per angle, spaced ``pixel_size`` apart and centered on
    the grid center.  Each row of ``cols_pad``/``w_pad`` receives that ray's
    pixels sorted by pixel index with duplicate indices merged; ``counts``
    receives the entry count.
    """
    half = 0.5 * n * pixel_size
    planes = -half + pixel_size * np.arange(n + 1)
    half_span = 0.5 * (nr_bins - 1)
    for ia in range(cos_t.size):
        c, s = cos_t[ia], sin_t[ia]
        for ib in range(nr_bins):
            row = ia * nr_bins + ib
            offset = (ib - half_span) * pixel_size
            p0x = -s * offset
            p0y = c * offset
            a_lo, a_hi = -np.inf, np.inf
            if abs(c) > _PARALLEL_EPS:
                ax0 = (planes[0] - p0x) / c
                ax1 = (planes[n] - p0x) / c
                a_lo = max(a_lo, min(ax0, ax1))
                a_hi = min(a_hi, max(ax0, ax1))
            elif not (-half < p0x < half):
                counts[row] = 0
                continue
            if abs(s) > _PARALLEL_EPS:
                ay0 = (planes[0] - p0y) / s
                ay1 = (planes[n] - p0y) / s
                a_lo = max(a_lo, min(ay0, ay1))
                a_hi = min(a_hi, max(ay0, ay1))
            elif not (-half < p0y < half):
                counts[row] = 0
                continue
            if not (a_hi - a_lo > _SEG_EPS):
                counts[row] = 0
                continue

            alphas = [np.array([a_lo, a_hi])]
            if abs(c) > _PARALLEL_EPS:
                ax = (planes - p0x) / c
                alphas.append(ax[(ax > a_lo + _SEG_EPS) & (ax < a_hi - _SEG_EPS)])
            if abs(s) > _PARALLEL_EPS:
                ay = (planes - p0y) / s
                alphas.append(ay[(ay > a_lo + _SEG_EPS) & (ay < a_hi - _SEG_EPS)])
            alpha = np.sort(np.concatenate(alphas))

            seg = np.diff(alpha)
            keep = seg > _SEG_EPS
            seg = seg[keep]
            mid = (0.5 * (alpha[:-1] + alpha[1:]))[keep]
            ix = np.floor((p0x + mid * c + half) / pixel_size).astype(np.int64)
            iy = np.floor((p0y + mid * s + half) / pixel_size).astype(np.int64)
            np.clip(ix, 0, n - 1, out=ix)
            np.clip(iy, 0, n - 1, out=iy)
            pix = (iy * n + ix).astype(np.int32)

            order = np.argsort(pix, kind="stable")
            pix = pix[order]
            seg_sorted = seg[order]
            m = 0
            for k in range(pix.size):
                if m > 0 and cols_pad[row, m - 1] == pix[k]:
                    w_pad[row, m - 1] += seg_sorted[k]
                else:
                    cols_pad[row, m] = pix[k]
                    w_pad[row, m] = seg_sorted[k]
                    m += 1
            counts[row] = m


# ---------------------------------------------------------------------------
# Sparse (CSR) projection operators
# ---------------------------------------------------------------------------


def csr_forward(
    row_ptr: np.ndarray, cols: np.ndarray, weights: np.ndarray, vec: np.ndarray
) -> np.ndarray:
    n_rows = row_ptr.size - 1
    row_ids = np.repeat(np.arange(n_rows), np.diff(row_ptr))
    return np.bincount(row_ids, weights=weights * vec[cols], minlength=n_rows)


def csr_back(
    row_ptr: np.ndarray,
    cols: np.ndarray,
    weights: np.ndarray,
    vec: np.ndarray,
    n_pix: int,
) -> np.ndarray:
    n_rows = row_ptr.size - 1
    row_ids = np.repeat(np.arange(n_rows), np.diff(row_ptr))
    return np.bincount(cols, weights=weights * vec[row_ids], minlength=n_pix)
