"""Numba-jitted hot kernels.

Mirrors :mod:`lowspect.kernels.numpy_impl` operation for operation; see the
equivalence tests and ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

PCG_MULT = np.uint64(6364136223846793005)

_U18 = np.uint64(18)
_U27 = np.uint64(27)
_U59 = np.uint64(59)
_U32C = np.uint64(32)
_U31C = np.uint64(31)
_MASK32 = np.uint64(0xFFFFFFFF)

KNUTH_LAMBDA_MAX = 30.0

_PARALLEL_EPS = 1e-12
_SEG_EPS = 1e-12


@njit(cache=True)
def _next_u32(state_arr):
    old = state_arr[0]
    state_arr[0] = old * PCG_MULT + state_arr[1]
    x = (((old >> _U18) ^ old) >> _U27) & _MASK32
    rot = old >> _U59
    return ((x >> rot) | (x << ((_U32C - rot) & _U31C))) & _MASK32


@njit(cache=True)
def pcg32_fill(state_arr, count):
    out = np.empty(count, dtype=np.uint32)
    for i in range(count):
        out[i] = _next_u32(state_arr)
    return out


@njit(cache=True)
def _next_unit(state_arr):
    return float(_next_u32(state_arr)) * 2.0**-32


@njit(cache=True)
def _poisson_knuth(state_arr, lam):
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= _next_unit(state_arr)
        if p <= limit:
            return float(k)
        k += 1


@njit(cache=True)
def _poisson_ptrs(state_arr, lam):
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = _next_unit(state_arr) - 0.5
        v = _next_unit(state_arr)
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


@njit(cache=True)
def poisson_fill(state_arr, lam, out):
    flat_lam = lam.ravel()
    flat_out = out.ravel()
    for i in range(flat_lam.size):
        lam_i = flat_lam[i]
        if lam_i == 0.0:
            flat_out[i] = 0.0
        elif lam_i < KNUTH_LAMBDA_MAX:
            flat_out[i] = _poisson_knuth(state_arr, lam_i)
        else:
            flat_out[i] = _poisson_ptrs(state_arr, lam_i)


@njit(cache=True)
def siddon_padded(n, pixel_size, cos_t, sin_t, nr_bins, counts, cols_pad, w_pad):
    half = 0.5 * n * pixel_size
    half_span = 0.5 * (nr_bins - 1)
    max_alpha = 2 * (n + 1) + 2
    alpha_buf = np.empty(max_alpha, dtype=np.float64)
    pix_buf = np.empty(max_alpha, dtype=np.int32)
    seg_buf = np.empty(max_alpha, dtype=np.float64)
    for ia in range(cos_t.size):
        c = cos_t[ia]
        s = sin_t[ia]
        for ib in range(nr_bins):
            row = ia * nr_bins + ib
            offset = (ib - half_span) * pixel_size
            p0x = -s * offset
            p0y = c * offset
            a_lo = -np.inf
            a_hi = np.inf
            if abs(c) > _PARALLEL_EPS:
                ax0 = (-half - p0x) / c
                ax1 = (half - p0x) / c
                a_lo = max(a_lo, min(ax0, ax1))
                a_hi = min(a_hi, max(ax0, ax1))
            elif not (-half < p0x < half):
                counts[row] = 0
                continue
            if abs(s) > _PARALLEL_EPS:
                ay0 = (-half - p0y) / s
                ay1 = (half - p0y) / s
                a_lo = max(a_lo, min(ay0, ay1))
                a_hi = min(a_hi, max(ay0, ay1))
            elif not (-half < p0y < half):
                counts[row] = 0
                continue
            if not (a_hi - a_lo > _SEG_EPS):
                counts[row] = 0
                continue

            m_alpha = 0
            alpha_buf[m_alpha] = a_lo
            m_alpha += 1
            alpha_buf[m_alpha] = a_hi
            m_alpha += 1
            if abs(c) > _PARALLEL_EPS:
                for i in range(n + 1):
                    a = ((-half + i * pixel_size) - p0x) / c
                    if a_lo + _SEG_EPS < a < a_hi - _SEG_EPS:
                        alpha_buf[m_alpha] = a
                        m_alpha += 1
            if abs(s) > _PARALLEL_EPS:
                for i in range(n + 1):
                    a = ((-half + i * pixel_size) - p0y) / s
                    if a_lo + _SEG_EPS < a < a_hi - _SEG_EPS:
                        alpha_buf[m_alpha] = a
                        m_alpha += 1
            alpha = np.sort(alpha_buf[:m_alpha])

            m_seg = 0
            for k in range(m_alpha - 1):
                seg = alpha[k + 1] - alpha[k]
                if seg <= _SEG_EPS:
                    continue
                mid = 0.5 * (alpha[k] + alpha[k + 1])
                ix = int(math.floor((p0x + mid * c + half) / pixel_size))
                iy = int(math.floor((p0y + mid * s + half) / pixel_size))
                if ix < 0:
                    ix = 0
                elif ix > n - 1:
                    ix = n - 1
                if iy < 0:
                    iy = 0
                elif iy > n - 1:
                    iy = n - 1
                pix_buf[m_seg] = iy * n + ix
                seg_buf[m_seg] = seg
                m_seg += 1

            # stable insertion sort by pixel index
            for k in range(1, m_seg):
                pk = pix_buf[k]
                sk = seg_buf[k]
                j = k - 1
                while j >= 0 and pix_buf[j] > pk:
                    pix_buf[j + 1] = pix_buf[j]
                    seg_buf[j + 1] = seg_buf[j]
                    j -= 1
                pix_buf[j + 1] = pk
                seg_buf[j + 1] = sk

            m = 0
            for k in range(m_seg):
                if m > 0 and cols_pad[row, m - 1] == pix_buf[k]:
                    w_pad[row, m - 1] += seg_buf[k]
                else:
                    cols_pad[row, m] = pix_buf[k]
                    w_pad[row, m] = seg_buf[k]
                    m += 1
            counts[row] = m


@njit(cache=True)
def csr_forward(row_ptr, cols, weights, vec):
    n_rows = row_ptr.size - 1
    out = np.zeros(n_rows, dtype=np.float64)
    for r in range(n_rows):
        acc = 0.0
        for k in range(row_ptr[r], row_ptr[r + 1]):
            acc += weights[k] * vec[cols[k]]
        out[r] = acc
    return out


@njit(cache=True)
def csr_back(row_ptr, cols, weights, vec, n_pix):
    n_rows = row_ptr.size - 1
    out = np.zeros(n_pix, dtype=np.float64)
    for r in range(n_rows):
        v = vec[r]
        for k in range(row_ptr[r], row_ptr[r + 1]):
            out[cols[k]] += weights[k] * v
    return out
