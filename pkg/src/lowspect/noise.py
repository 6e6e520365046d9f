"""Poisson randomization of noiseless sinograms.

A sinogram intensity y becomes Poisson(counts_scale * y) / counts_scale:
the scale maps intensities to expected photon counts, and dividing the
integer draw by the same scale returns the noisy measurement to the
original intensity units.  Sampling walks the bins in row-major order from
a single seeded stream, so a (sinogram, config) pair fixes the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import Rng


@dataclass(frozen=True)
class NoiseConfig:
    counts_scale: float
    seed: int

    def __post_init__(self):
        if not (self.counts_scale > 0 and math.isfinite(self.counts_scale)):
            raise ValueError("counts_scale must be positive and finite")


def sample_poisson(rng: Rng, lam: float) -> int:
    """One Poisson draw; Knuth's product method below the PTRS cutover."""
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValueError(f"Poisson rate must be finite and >= 0, got {lam}")
    state = np.array([rng.state, rng.inc], dtype=np.uint64)
    out = np.empty(1, dtype=np.float64)
    kernels.poisson_fill(state, np.array([lam], dtype=np.float64), out)
    rng.state = int(state[0])
    return int(out[0])


def poissonize(sinogram: np.ndarray, config: NoiseConfig) -> np.ndarray:
    """Independent per-bin Poisson noise, rescaled to input units."""
    sino = np.asarray(sinogram, dtype=np.float64)
    if np.any(sino < 0) or not np.all(np.isfinite(sino)):
        raise ValueError("sinogram must be nonnegative and finite")
    rng = Rng(config.seed)
    state = np.array([rng.state, rng.inc], dtype=np.uint64)
    lam = np.ascontiguousarray(sino * config.counts_scale)
    counts = np.empty_like(lam)
    kernels.poisson_fill(state, lam, counts)
    return counts / config.counts_scale


def scale_for_max_counts(sinogram: np.ndarray, max_expected_counts: float) -> float:
    """counts_scale that gives the brightest bin ``max_expected_counts``."""
    peak = float(np.max(sinogram))
    if peak <= 0:
        raise ValueError("sinogram has no positive bins")
    return max_expected_counts / peak
