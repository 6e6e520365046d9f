"""SSIM training loss (1 - mean windowed SSIM) with an analytic gradient.

Each w x w window contributes

    S = (2 mx my + C1)(2 cxy + C2) / ((mx^2 + my^2 + C1)(vx + vy + C2))

and the loss is 1 minus the average of S over all valid stride-1 windows.
The gradient with respect to a prediction pixel collects the quotient-rule
terms of every window containing it; because each term is affine in the
pixel value, the sum reduces to three window-coefficient maps spread back
onto the pixel grid (the adjoint of the box filter).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

@dataclass(frozen=True)
class SsimLossConfig:
    k1: float = 0.01
    k2: float = 0.03
    window: int = 8
    range_floor: float = 1e-3  # lower bound on L, guards blank targets

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window side must be >= 2")
        if self.range_floor <= 0:
            raise ValueError("range_floor must be positive")


def _box_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Valid w x w window sums via a summed-area table (O(N))."""
    h_in, w_in = img.shape
    table = np.zeros((h_in + 1, w_in + 1), dtype=np.float64)
    np.cumsum(img, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table[w:, w:] - table[:-w, w:] - table[w:, :-w] + table[:-w, :-w]


def _spread(window_map: np.ndarray, w: int) -> np.ndarray:
    """Adjoint of the valid box filter: pixel p gets the sum over windows
    containing p."""
    padded = np.pad(window_map, w - 1)
    return _box_sums(padded, w)


def _ssim_terms(pred, target, c1, c2, w):
    n = float(w * w)
    mx = _box_sums(pred, w) / n
    my = _box_sums(target, w) / n
    vx = _box_sums(pred * pred, w) / n - mx * mx
    vy = _box_sums(target * target, w) / n - my * my
    cxy = _box_sums(pred * target, w) / n - mx * my
    a1 = 2.0 * mx * my + c1
    a2 = 2.0 * cxy + c2
    b1 = mx * mx + my * my + c1
    b2 = vx + vy + c2
    return mx, my, a1, a2, b1, b2


def ssim_loss_single(pred: np.ndarray, target: np.ndarray, config: SsimLossConfig):
    """(loss, dloss/dpred) for one 2-D image pair."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2:
        raise ValueError("ssim_loss operates on 2-D images")
    w = config.window
    if w > min(pred.shape):
        raise ValueError(f"window {w} exceeds image side {min(pred.shape)}")
    dyn_range = max(float(target.max() - target.min()), config.range_floor)
    c1 = (config.k1 * dyn_range) ** 2
    c2 = (config.k2 * dyn_range) ** 2
    mx, my, a1, a2, b1, b2 = _ssim_terms(pred, target, c1, c2, w)
    s = (a1 * a2) / (b1 * b2)
    n_windows = s.size
    loss = 1.0 - float(s.mean())

    # dS/dx_p = (2/N) (alpha_w + beta_w x_p + gamma_w y_p) for p in window w
    inv_b1b2 = 1.0 / (b1 * b2)
    beta = -s / b2
    gamma = a1 * inv_b1b2
    alpha = my * (a2 - a1) * inv_b1b2 + s * mx * (1.0 / b2 - 1.0 / b1)
    scale = -2.0 / (float(w * w) * n_windows)
    grad = scale * (
        _spread(alpha, w) + pred * _spread(beta, w) + target * _spread(gamma, w)
    )
    return loss, grad


def ssim_loss(pred: np.ndarray, target: np.ndarray, config: SsimLossConfig | None = None):
    """Mean loss over a batch and its gradient.

    Accepts (H, W), (B, H, W) or (B, 1, H, W) arrays; the gradient matches
    the input shape.
    """
    config = config or SsimLossConfig()
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim == 2:
        return ssim_loss_single(pred, target, config)
    squeeze_channel = pred.ndim == 4
    if squeeze_channel:
        if pred.shape[1] != 1:
            raise ValueError("expected a single channel")
        pred = pred[:, 0]
        target = target[:, 0]
    if pred.ndim != 3:
        raise ValueError(f"unsupported rank {pred.ndim}")
    batch = pred.shape[0]
    grad = np.empty_like(pred)
    total = 0.0
    for i in range(batch):
        loss_i, grad_i = ssim_loss_single(pred[i], target[i], config)
        total += loss_i
        grad[i] = grad_i / batch
    loss = total / batch
    if squeeze_channel:
        grad = grad[:, None]
    return loss, grad
