"""Differentiable layers with explicit forward/backward passes.

Data layout is channels-first: images are (batch, channels, height, width)
and dense activations are (batch, features).  Convolutions go through
im2col + matmul so the heavy lifting lands in BLAS; every backward returns
the gradient with respect to the layer input and accumulates parameter
gradients on the layer.  All computation stays in the dtype of the
parameters (float64 by default) so finite-difference checks are meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..rng import Rng

DEFAULT_DTYPE = np.float64

LEAKY_SLOPE = 0.01


def _kaiming_uniform(rng: Rng, shape, fan_in, dtype, slope=LEAKY_SLOPE):
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * math.sqrt(3.0 / fan_in)
    flat = rng.fill_unit(int(np.prod(shape)))
    return ((flat * 2.0 - 1.0) * bound).astype(dtype).reshape(shape)


def im2col(x, k, pad=0):
    """(B, C, H, W) -> ((C*k*k, B*L) patch matrix, (out_h, out_w)).

    The patch matrix feeds one large GEMM per convolution, which is what
    keeps the conv layers BLAS-bound instead of per-sample-loop bound.
    Patches are gathered with k*k plain slice copies, which beats a strided
    6-D gather by a wide margin.
    """
    b, c = x.shape[:2]
    xcb = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    if pad:
        xcb = np.pad(xcb, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = xcb.shape[2:]
    oh, ow = hp - k + 1, wp - k + 1
    cols6 = np.empty((c, k, k, b, oh, ow), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            cols6[:, u, v] = xcb[:, :, u : u + oh, v : v + ow]
    return cols6.reshape(c * k * k, b * oh * ow), (oh, ow)


def col2im(cols, x_shape, k, pad=0):
    """Adjoint of im2col: scatter-add patches back onto the input grid."""
    b, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = hp - k + 1
    ow = wp - k + 1
    xp = np.zeros((c, b, hp, wp), dtype=cols.dtype)
    cols6 = cols.reshape(c, k, k, b, oh, ow)
    for u in range(k):
        for v in range(k):
            xp[:, :, u : u + oh, v : v + ow] += cols6[:, u, v]
    cropped = xp[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(cropped.transpose(1, 0, 2, 3))


class Layer:
    """Stateless base: subclasses fill params/grads dicts keyed by name."""

    name = ""

    def __init__(self):
        self._params = {}
        self._grads = {}
        self._bufs = {}

    def _buf(self, key, shape, dtype):
        # Scratch reused across steps; fresh multi-MB allocations every call
        # would dominate runtime through page faults.
        buf = self._bufs.get(key)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._bufs[key] = buf
        return buf

    def params(self):
        return self._params

    def grads(self):
        return self._grads

    def zero_grads(self):
        for key, g in self._grads.items():
            g[...] = 0.0

    def init_params(self, rng: Rng):
        pass

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError


class Conv2d(Layer):
    """Same-padded cross-correlation, kernel 3x3 or 1x1, stride 1."""

    def __init__(self, in_channels, out_channels, kernel=3, dtype=DEFAULT_DTYPE):
        super().__init__()
        if kernel not in (1, 3):
            raise ValueError("kernel must be 1 or 3")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = kernel // 2
        self.dtype = dtype
        self._params = {
            "weight": np.zeros((out_channels, in_channels, kernel, kernel), dtype),
            "bias": np.zeros(out_channels, dtype),
        }
        self._grads = {k: np.zeros_like(v) for k, v in self._params.items()}

    def init_params(self, rng):
        fan_in = self.in_channels * self.kernel * self.kernel
        self._params["weight"][...] = _kaiming_uniform(
            rng, self._params["weight"].shape, fan_in, self.dtype
        )
        self._params["bias"][...] = 0.0

    def forward(self, x, training=False):
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected {self.in_channels} channels, got {x.shape[1]}"
            )
        b, c, h, w = x.shape
        k, pad = self.kernel, self.pad
        hp, wp = h + 2 * pad, w + 2 * pad
        oh, ow = hp - k + 1, wp - k + 1
        xcb = self._buf("xcb", (c, b, hp, wp), x.dtype)
        if pad:
            xcb[:, :, :pad] = 0.0
            xcb[:, :, -pad:] = 0.0
            xcb[:, :, :, :pad] = 0.0
            xcb[:, :, :, -pad:] = 0.0
        xcb[:, :, pad : pad + h, pad : pad + w] = x.transpose(1, 0, 2, 3)
        cols6 = self._buf("cols", (c, k, k, b, oh, ow), x.dtype)
        for u in range(k):
            for v in range(k):
                cols6[:, u, v] = xcb[:, :, u : u + oh, v : v + ow]
        cols = cols6.reshape(c * k * k, b * oh * ow)
        w_mat = self._params["weight"].reshape(self.out_channels, -1)
        out_flat = self._buf("out_flat", (self.out_channels, b * oh * ow), x.dtype)
        np.matmul(w_mat, cols, out=out_flat)
        out_flat += self._params["bias"][:, None]
        self._cache = (cols, (b, c, h, w))
        out = self._buf("out", (b, self.out_channels, oh, ow), x.dtype)
        np.copyto(out, out_flat.reshape(self.out_channels, b, oh, ow).transpose(1, 0, 2, 3))
        return out

    def backward(self, grad_out):
        cols, (b, c, h, w) = self._cache
        k, pad = self.kernel, self.pad
        hp, wp = h + 2 * pad, w + 2 * pad
        oh, ow = hp - k + 1, wp - k + 1
        gflat = self._buf("gflat", (self.out_channels, b * oh * ow), grad_out.dtype)
        np.copyto(
            gflat.reshape(self.out_channels, b, oh, ow), grad_out.transpose(1, 0, 2, 3)
        )
        w_mat = self._params["weight"].reshape(self.out_channels, -1)
        dw = self._buf("dw", w_mat.shape, grad_out.dtype)
        np.matmul(gflat, cols.T, out=dw)
        self._grads["weight"] += dw.reshape(self._params["weight"].shape)
        self._grads["bias"] += gflat.sum(axis=1)
        dcols6 = self._buf("dcols", (c, k, k, b, oh, ow), grad_out.dtype)
        np.matmul(w_mat.T, gflat, out=dcols6.reshape(c * k * k, b * oh * ow))
        xp = self._buf("dxp", (c, b, hp, wp), grad_out.dtype)
        xp[...] = 0.0
        for u in range(k):
            for v in range(k):
                xp[:, :, u : u + oh, v : v + ow] += dcols6[:, u, v]
        dx = self._buf("dx", (b, c, h, w), grad_out.dtype)
        np.copyto(dx, xp[:, :, pad : pad + h, pad : pad + w].transpose(1, 0, 2, 3))
        return dx


class ConvTranspose2d(Layer):
    """Stride-2 transposed 3x3 convolution; spatial dims exactly double."""

    def __init__(self, in_channels, out_channels, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = 3
        self.dtype = dtype
        self._params = {
            "weight": np.zeros((in_channels, out_channels, 3, 3), dtype),
            "bias": np.zeros(out_channels, dtype),
        }
        self._grads = {k: np.zeros_like(v) for k, v in self._params.items()}

    def init_params(self, rng):
        fan_in = self.in_channels * 9
        self._params["weight"][...] = _kaiming_uniform(
            rng, self._params["weight"].shape, fan_in, self.dtype
        )
        self._params["bias"][...] = 0.0

    def _w_mat(self):
        # (Co*3*3, Ci): output patches from input channels
        return self._params["weight"].transpose(1, 2, 3, 0).reshape(
            self.out_channels * 9, self.in_channels
        )

    def forward(self, x, training=False):
        # Output pixel (2p+u-1, 2q+v-1) collects tap (u, v) of input pixel
        # (p, q); assembling by output parity avoids strided scatter-adds.
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"{self.name}: expected {self.in_channels} channels, got {x.shape[1]}"
            )
        b, _, h, w = x.shape
        x_flat = self._buf("x_flat", (self.in_channels, b, h, w), x.dtype)
        np.copyto(x_flat, x.transpose(1, 0, 2, 3))
        x_flat = x_flat.reshape(self.in_channels, b * h * w)
        cols = self._buf("cols", (self.out_channels * 9, b * h * w), x.dtype)
        np.matmul(self._w_mat(), x_flat, out=cols)
        c6 = cols.reshape(self.out_channels, 3, 3, b, h, w)
        rows = self._buf("rows", (3, self.out_channels, b, 2 * h, w), x.dtype)
        odd = self._buf("odd_rows", (self.out_channels, b, h, w), x.dtype)
        for v in range(3):
            rows[v, :, :, 0::2] = c6[:, 1, v]
            np.copyto(odd, c6[:, 2, v])
            odd[:, :, : h - 1] += c6[:, 0, v][:, :, 1:]
            rows[v, :, :, 1::2] = odd
        out_cb = self._buf("out_cb", (self.out_channels, b, 2 * h, 2 * w), x.dtype)
        out_cb[..., 0::2] = rows[1]
        odd_cols = self._buf("odd_cols", (self.out_channels, b, 2 * h, w), x.dtype)
        np.copyto(odd_cols, rows[2])
        odd_cols[..., : w - 1] += rows[0][..., 1:]
        out_cb[..., 1::2] = odd_cols
        out = self._buf("out", (b, self.out_channels, 2 * h, 2 * w), x.dtype)
        np.copyto(out, out_cb.transpose(1, 0, 2, 3))
        out += self._params["bias"][None, :, None, None]
        self._cache = (x_flat, (b, h, w))
        return out

    def backward(self, grad_out):
        x_flat, (b, h, w) = self._cache
        gt = self._buf("gt", (self.out_channels, b, 2 * h, 2 * w), grad_out.dtype)
        np.copyto(gt, grad_out.transpose(1, 0, 2, 3))
        dr = self._buf("dr", (3, self.out_channels, b, 2 * h, w), grad_out.dtype)
        dr[1] = gt[..., 0::2]
        g_odd_cols = gt[..., 1::2]
        dr[2] = g_odd_cols
        dr[0][..., 0] = 0.0
        dr[0][..., 1:] = g_odd_cols[..., : w - 1]
        dc6 = self._buf("dc6", (self.out_channels, 3, 3, b, h, w), grad_out.dtype)
        for v in range(3):
            dc6[:, 1, v] = dr[v][:, :, 0::2]
            g_odd_rows = dr[v][:, :, 1::2]
            dc6[:, 2, v] = g_odd_rows
            dc6[:, 0, v][:, :, 0] = 0.0
            dc6[:, 0, v][:, :, 1:] = g_odd_rows[:, :, : h - 1]
        dcols = dc6.reshape(self.out_channels * 9, b * h * w)
        w_mat = self._w_mat()
        dw_mat = self._buf("dw", (self.out_channels * 9, self.in_channels), grad_out.dtype)
        np.matmul(dcols, x_flat.T, out=dw_mat)
        self._grads["weight"] += dw_mat.reshape(
            self.out_channels, 3, 3, self.in_channels
        ).transpose(3, 0, 1, 2)
        self._grads["bias"] += grad_out.sum(axis=(0, 2, 3))
        dx_flat = self._buf("dx_flat", (self.in_channels, b * h * w), grad_out.dtype)
        np.matmul(w_mat.T, dcols, out=dx_flat)
        dx = self._buf("dx", (b, self.in_channels, h, w), grad_out.dtype)
        np.copyto(dx, dx_flat.reshape(self.in_channels, b, h, w).transpose(1, 0, 2, 3))
        return dx


class MaxPool2x2(Layer):
    """2x2, stride-2 max pooling; gradient goes to the block's first maximum
    in row-major order."""

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"{self.name}: spatial dims must be even, got {h}x{w}")
        blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = blocks.reshape(b, c, h // 2, w // 2, 4)
        self._argmax = flat.argmax(axis=-1)
        self._in_shape = x.shape
        return flat.max(axis=-1)

    def backward(self, grad_out):
        b, c, h, w = self._in_shape
        dflat = np.zeros((b, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
        np.put_along_axis(dflat, self._argmax[..., None], grad_out[..., None], axis=-1)
        dx = dflat.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(b, c, h, w)


class BatchNorm(Layer):
    """Per-channel batch normalization (eps 1e-5, running-average momentum 0.9).

    Accepts (B, C, H, W) tensors (statistics over B, H, W) or (B, F)
    activations (statistics over B).  Training mode uses batch statistics
    and updates the running averages; inference mode uses the averages.
    """

    EPS = 1e-5
    MOMENTUM = 0.9

    def __init__(self, channels, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.channels = channels
        self._params = {
            "gamma": np.ones(channels, dtype),
            "beta": np.zeros(channels, dtype),
        }
        self._grads = {k: np.zeros_like(v) for k, v in self._params.items()}
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)

    def _axes_and_shape(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, self.channels, 1, 1)
        if x.ndim == 2:
            return (0,), (1, self.channels)
        raise ValueError(f"{self.name}: expected 2-D or 4-D input, got {x.ndim}-D")

    def forward(self, x, training=False):
        if x.shape[0] == 0:
            raise ValueError(f"{self.name}: empty batch")
        if x.shape[1] != self.channels:
            raise ValueError(
                f"{self.name}: expected {self.channels} channels, got {x.shape[1]}"
            )
        axes, shape = self._axes_and_shape(x)
        gamma = self._params["gamma"].reshape(shape)
        beta = self._params["beta"].reshape(shape)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean *= self.MOMENTUM
            self.running_mean += (1.0 - self.MOMENTUM) * mean
            self.running_var *= self.MOMENTUM
            self.running_var += (1.0 - self.MOMENTUM) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (xhat, inv_std.reshape(shape), axes, training)
        return gamma * xhat + beta

    def backward(self, grad_out):
        xhat, inv_std, axes, training = self._cache
        shape = inv_std.shape
        gamma = self._params["gamma"].reshape(shape)
        self._grads["gamma"] += (grad_out * xhat).sum(axis=axes)
        self._grads["beta"] += grad_out.sum(axis=axes)
        dxhat = grad_out * gamma
        if not training:
            return dxhat * inv_std
        count = grad_out.size // self.channels
        mean_dxhat = dxhat.mean(axis=axes).reshape(shape)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=axes).reshape(shape)
        return inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


class LeakyReLU(Layer):
    def __init__(self, alpha=LEAKY_SLOPE):
        super().__init__()
        self.alpha = alpha

    def forward(self, x, training=False):
        self._mask = x >= 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, self.alpha * grad_out)


class Dropout(Layer):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""

    def __init__(self, p=0.3, rng: Rng | None = None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p
        self.rng = rng or Rng(0)
        # u32 threshold with u/2^32 < p  <=>  u < ceil(p * 2^32)
        self._threshold = np.uint32(min(math.ceil(p * 2.0**32), 2**32 - 1))

    def forward(self, x, training=False):
        if not training or self.p == 0.0:
            self._mask = None
            return x
        draws = self.rng.fill_u32(x.size).reshape(x.shape)
        mask = (draws >= self._threshold).astype(x.dtype)
        mask *= 1.0 / (1.0 - self.p)
        self._mask = mask
        return x * mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class Dense(Layer):
    def __init__(self, in_features, out_features, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.dtype = dtype
        self._params = {
            "weight": np.zeros((out_features, in_features), dtype),
            "bias": np.zeros(out_features, dtype),
        }
        self._grads = {k: np.zeros_like(v) for k, v in self._params.items()}

    def init_params(self, rng):
        self._params["weight"][...] = _kaiming_uniform(
            rng, self._params["weight"].shape, self.in_features, self.dtype
        )
        self._params["bias"][...] = 0.0

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"{self.name}: expected (B, {self.in_features}), got {x.shape}"
            )
        self._x = x
        return x @ self._params["weight"].T + self._params["bias"]

    def backward(self, grad_out):
        dw = self._buf("dw", self._params["weight"].shape, grad_out.dtype)
        np.matmul(grad_out.T, self._x, out=dw)
        self._grads["weight"] += dw
        self._grads["bias"] += grad_out.sum(axis=0)
        return grad_out @ self._params["weight"]


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, target):
        super().__init__()
        self.target = tuple(target)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)
