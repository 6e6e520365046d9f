"""Image-quality metrics: MSE, SSIM, and Pearson correlation.

SSIM follows the two-signal formula

    SSIM(x, y) = (2 mx my + C1)(2 cxy + C2) / ((mx^2 + my^2 + C1)(vx + vy + C2))

with C1 = (k1 L)^2, C2 = (k2 L)^2 and population (divisor N) statistics.
Global mode applies it once to whole images; windowed mode averages it over
every uniform w x w window at stride 1 (valid positions only).  Windowed
mode with w equal to the image side reduces exactly to global mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class SsimConfig:
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = None  # L; None = max of both images' ranges
    mode: str = "window"  # "window" or "global"
    window: int = 8

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.dynamic_range is not None and self.dynamic_range <= 0:
            raise ValueError("dynamic range L must be positive")
        if self.mode not in ("window", "global"):
            raise ValueError(f"mode must be 'window' or 'global', got {self.mode!r}")
        if self.mode == "window" and self.window < 2:
            raise ValueError("window side must be >= 2")


def _check_same_shape(x: np.ndarray, y: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x, y = _check_same_shape(x, y)
    return float(np.mean((x - y) ** 2))


def pcc(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation with population statistics."""
    x, y = _check_same_shape(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.mean(dx * dx))
    sy = np.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        raise ValueError("correlation is undefined for constant images")
    return float(np.mean(dx * dy) / (sx * sy))


def resolve_dynamic_range(x: np.ndarray, y: np.ndarray, config: SsimConfig) -> float:
    if config.dynamic_range is not None:
        return config.dynamic_range
    span = max(float(x.max() - x.min()), float(y.max() - y.min()))
    if span <= 0:
        raise ValueError(
            "dynamic range is zero for constant images; set it explicitly"
        )
    return span


def window_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Sums over every w x w window at stride 1 (valid positions)."""
    return sliding_window_view(img, (w, w)).sum(axis=(-2, -1))


def ssim_map(x: np.ndarray, y: np.ndarray, config: SsimConfig | None = None):
    """(mean SSIM, per-window SSIM map).

    Global mode returns a 1x1 map holding the whole-image value.
    """
    config = config or SsimConfig()
    x, y = _check_same_shape(x, y)
    dyn_range = resolve_dynamic_range(x, y, config)
    w = min(x.shape) if config.mode == "global" else config.window
    if x.ndim != 2:
        raise ValueError("SSIM operates on 2-D images")
    if config.mode == "global" and x.shape[0] != x.shape[1]:
        raise ValueError("global mode requires square images")
    if w > min(x.shape):
        raise ValueError(f"window {w} exceeds image side {min(x.shape)}")
    c1 = (config.k1 * dyn_range) ** 2
    c2 = (config.k2 * dyn_range) ** 2
    n = float(w * w)
    mx = window_sums(x, w) / n
    my = window_sums(y, w) / n
    vx = window_sums(x * x, w) / n - mx * mx
    vy = window_sums(y * y, w) / n - my * my
    cxy = window_sums(x * y, w) / n - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    smap = num / den
    return float(smap.mean()), smap


def ssim(x: np.ndarray, y: np.ndarray, config: SsimConfig | None = None) -> float:
    value, _ = ssim_map(x, y, config)
    return value


@dataclass
class MetricsReport:
    mse: float
    ssim: float
    pcc: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "ssim": self.ssim,
            "pcc": self.pcc,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def evaluate_pair(
    reference: np.ndarray,
    test: np.ndarray,
    config: SsimConfig | None = None,
    metadata: dict | None = None,
) -> MetricsReport:
    """Normalize both images by the reference maximum, then score.

    Normalizing to the reference's unit scale keeps MSE magnitudes
    comparable across phantoms of different absolute activity.
    """
    reference, test = _check_same_shape(reference, test)
    peak = float(reference.max())
    if peak <= 0:
        raise ValueError("reference image has no positive values")
    ref_n = reference / peak
    test_n = test / peak
    config = config or SsimConfig(dynamic_range=1.0)
    meta = dict(metadata or {})
    meta["ssim_mode"] = (
        config.mode if config.mode == "global" else f"window:{config.window}"
    )
    meta["normalization"] = "reference-max"
    return MetricsReport(
        mse=mse(ref_n, test_n),
        ssim=ssim(ref_n, test_n, config),
        pcc=pcc(ref_n, test_n),
        metadata=meta,
    )
