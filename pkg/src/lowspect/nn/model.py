"""The sinogram-to-image encoder-decoder reconstructor (CNNR).

Encoder: three [conv3x3 x2, batchnorm, maxpool2x2, dropout 0.3] blocks,
a fourth conv block without pooling that flattens, and a dense bottleneck
with batchnorm.  The bottleneck reshapes to a 4x4 feature map that five
(four at desk scale) decoder blocks of [conv3x3 x2, conv_transpose s2,
batchnorm] upsample back to the image grid; a linear 1x1 convolution forms
the output.  Leaky ReLU follows every learnable layer except the head.

Input handling: a sinogram is normalized by its own maximum and zero-padded
symmetrically along the angle axis to 32 rows; the inference wrapper
multiplies the network output by the same maximum (the forward model is
linear, so the map is learned scale-equivariantly) and clamps at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Rng, child_seed
from .layers import (
    BatchNorm,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool2x2,
    Reshape,
)

PADDED_ROWS = 32

PRESETS = {
    "paper-128": {
        "n_angles": 24,
        "n_bins": 128,
        "out_side": 128,
        "encoder_channels": (32, 64, 128),
        "block4_channels": 256,
        "bottleneck": 4096,
        "decoder_channels": (256, 128, 64, 32, 8),
        "output_gain": 64.0,
    },
    "desk-64": {
        "n_angles": 24,
        "n_bins": 64,
        "out_side": 64,
        "encoder_channels": (16, 32, 64),
        "block4_channels": 128,
        "bottleneck": 2048,
        "decoder_channels": (128, 64, 32, 8),
        "output_gain": 32.0,
    },
}

DROPOUT_P = 0.3


@dataclass
class CnnrModel:
    preset: str
    layers: list
    seed: int
    shape_table: list  # (layer name, output shape) pairs for one sample
    dtype: type = np.float32

    @property
    def n_angles(self):
        return PRESETS[self.preset]["n_angles"]

    @property
    def n_bins(self):
        return PRESETS[self.preset]["n_bins"]

    @property
    def out_side(self):
        return PRESETS[self.preset]["out_side"]

    @property
    def output_gain(self):
        # The network is trained on targets scaled to image * gain / sino_max,
        # which puts them at unit order; inference inverts the same factor.
        return PRESETS[self.preset]["output_gain"]

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self):
        out = {}
        for layer in self.layers:
            for key, value in layer.params().items():
                out[f"{layer.name}.{key}"] = value
        return out

    def named_grads(self):
        out = {}
        for layer in self.layers:
            for key, value in layer.grads().items():
                out[f"{layer.name}.{key}"] = value
        return out

    def named_state(self):
        """Parameters plus non-trainable state (batchnorm running stats)."""
        out = dict(self.named_params())
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                out[f"{layer.name}.running_mean"] = layer.running_mean
                out[f"{layer.name}.running_var"] = layer.running_var
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def param_count(self):
        return sum(v.size for v in self.named_params().values())

    def reseed_dropout(self, seed: int):
        """Restart every dropout stream; used to make runs reproducible."""
        idx = 0
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = Rng(child_seed(seed, 9000 + idx))
                idx += 1


def build_cnnr(preset: str = "desk-64", seed: int = 0, dtype=np.float32) -> CnnrModel:
    """Construct and deterministically initialize the network.

    float32 is the training default (the layers are memory-bound); pass
    float64 where finite-difference gradient verification is the point.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    cfg = PRESETS[preset]
    layers = []

    def add(name, layer):
        layer.name = name
        layers.append(layer)
        return layer

    in_ch = 1
    for i, ch in enumerate(cfg["encoder_channels"], start=1):
        add(f"enc{i}_conv1", Conv2d(in_ch, ch, 3, dtype))
        add(f"enc{i}_act1", LeakyReLU())
        add(f"enc{i}_conv2", Conv2d(ch, ch, 3, dtype))
        add(f"enc{i}_act2", LeakyReLU())
        add(f"enc{i}_bn", BatchNorm(ch, dtype))
        add(f"enc{i}_pool", MaxPool2x2())
        add(f"enc{i}_drop", Dropout(DROPOUT_P))
        in_ch = ch

    ch4 = cfg["block4_channels"]
    add("enc4_conv1", Conv2d(in_ch, ch4, 3, dtype))
    add("enc4_act1", LeakyReLU())
    add("enc4_conv2", Conv2d(ch4, ch4, 3, dtype))
    add("enc4_act2", LeakyReLU())
    add("enc4_bn", BatchNorm(ch4, dtype))
    add("enc4_drop", Dropout(DROPOUT_P))
    add("enc4_flatten", Flatten())

    rows4 = PADDED_ROWS // 8
    cols4 = cfg["n_bins"] // 8
    flat_features = ch4 * rows4 * cols4
    bottleneck = cfg["bottleneck"]
    add("enc5_dense", Dense(flat_features, bottleneck, dtype))
    add("enc5_act", LeakyReLU())
    add("enc5_bn", BatchNorm(bottleneck, dtype))

    dec_ch0 = cfg["decoder_channels"][0]
    side0 = 4
    if dec_ch0 * side0 * side0 != bottleneck:
        raise AssertionError("bottleneck does not factor into the decoder seed shape")
    add("reshape", Reshape((dec_ch0, side0, side0)))

    in_ch = dec_ch0
    for i, ch in enumerate(cfg["decoder_channels"], start=1):
        add(f"dec{i}_conv1", Conv2d(in_ch, ch, 3, dtype))
        add(f"dec{i}_act1", LeakyReLU())
        add(f"dec{i}_conv2", Conv2d(ch, ch, 3, dtype))
        add(f"dec{i}_act2", LeakyReLU())
        add(f"dec{i}_convt", ConvTranspose2d(ch, ch, dtype))
        add(f"dec{i}_actt", LeakyReLU())
        add(f"dec{i}_bn", BatchNorm(ch, dtype))
        in_ch = ch

    add("head", Conv2d(in_ch, 1, 1, dtype))

    model = CnnrModel(preset=preset, layers=layers, seed=seed, shape_table=[], dtype=dtype)
    for idx, layer in enumerate(layers):
        if layer.params():
            layer.init_params(Rng(child_seed(seed, idx)))
    model.reseed_dropout(seed)
    model.shape_table = _trace_shapes(model)
    return model


def _trace_shapes(model: CnnrModel) -> list:
    cfg = PRESETS[model.preset]
    x = np.zeros((1, 1, PADDED_ROWS, cfg["n_bins"]), dtype=np.float64)
    table = [("input", tuple(x.shape[1:]))]
    for layer in model.layers:
        x = layer.forward(x, training=False)
        table.append((layer.name, tuple(x.shape[1:])))
    return table


def normalize_and_pad(sinogram: np.ndarray, n_angles: int, n_bins: int):
    """(padded (1, 32, n_bins) input, normalization scale).

    The scale is the sinogram maximum; an all-zero sinogram keeps scale 0 so
    the de-normalized output is exactly zero.
    """
    sino = np.asarray(sinogram, dtype=np.float64)
    if sino.shape != (n_angles, n_bins):
        raise ValueError(
            f"sinogram shape {sino.shape} does not match model ({n_angles}, {n_bins})"
        )
    scale = float(sino.max())
    normalized = sino / scale if scale > 0 else np.zeros_like(sino)
    pad_total = PADDED_ROWS - n_angles
    if pad_total < 0:
        raise ValueError(f"cannot pad {n_angles} angle rows into {PADDED_ROWS}")
    top = pad_total // 2
    padded = np.zeros((1, PADDED_ROWS, n_bins), dtype=np.float64)
    padded[0, top : top + n_angles] = normalized
    return padded, scale


def cnnr_forward(model: CnnrModel, sinogram: np.ndarray) -> np.ndarray:
    """Inference: dropout off, batchnorm running stats, output clamped at 0
    and returned in the sinogram's intensity units."""
    padded, scale = normalize_and_pad(sinogram, model.n_angles, model.n_bins)
    out = model.forward(padded[None], training=False)
    img = out[0, 0] * (scale / model.output_gain)
    return np.maximum(img, 0.0)
