"""Software phantoms: random ellipse compositions and Shepp-Logan.

All phantoms are additive compositions of ellipses rasterized by pixel-center
point sampling on the normalized square [-1, 1]^2; pixel (r, c) has center
(x, y) = (((c + 0.5) / n) * 2 - 1, ((r + 0.5) / n) * 2 - 1).  Sums are
clamped below at zero since activity cannot be negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import Rng


@dataclass(frozen=True)
class EllipseSpec:
    """One additive ellipse in normalized coordinates."""

    cx: float
    cy: float
    a: float
    b: float
    phi: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        if abs(self.cx) > 1 or abs(self.cy) > 1:
            raise ValueError("ellipse center must lie in [-1, 1]^2")

    def contains(self, x: float, y: float) -> bool:
        dx, dy = x - self.cx, y - self.cy
        c, s = math.cos(self.phi), math.sin(self.phi)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


@dataclass(frozen=True)
class PhantomRecipe:
    shapes: tuple[EllipseSpec, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "shapes": [
                {
                    "cx": e.cx,
                    "cy": e.cy,
                    "a": e.a,
                    "b": e.b,
                    "phi": e.phi,
                    "intensity": e.intensity,
                }
                for e in self.shapes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomRecipe":
        shapes = tuple(EllipseSpec(**s) for s in d["shapes"])
        return cls(shapes=shapes, n=d["n"])


def rasterize(recipe: PhantomRecipe) -> np.ndarray:
    """Point-sampled additive rasterization, clamped below at zero."""
    n = recipe.n
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x = coords[None, :]
    y = coords[:, None]
    img = np.zeros((n, n), dtype=np.float64)
    for e in recipe.shapes:
        c, s = math.cos(e.phi), math.sin(e.phi)
        dx = x - e.cx
        dy = y - e.cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        img += e.intensity * (((u / e.a) ** 2 + (v / e.b) ** 2) <= 1.0)
    return np.maximum(img, 0.0)


@dataclass(frozen=True)
class PhantomConfig:
    """Parameter ranges for random training phantoms."""

    shape_count: tuple[int, int] = (1, 8)
    center_radius: float = 0.8
    semi_axis: tuple[float, float] = (0.05, 0.45)
    intensity: tuple[float, float] = (0.2, 1.0)

    def __post_init__(self):
        lo, hi = self.shape_count
        if lo < 1 or hi < lo:
            raise ValueError("shape_count range is empty")
        if self.semi_axis[1] < self.semi_axis[0] or self.semi_axis[0] <= 0:
            raise ValueError("semi_axis range is empty or nonpositive")
        if self.intensity[1] < self.intensity[0]:
            raise ValueError("intensity range is empty")
        if not 0 < self.center_radius <= 1:
            raise ValueError("center_radius must lie in (0, 1]")


def _draw_recipe(rng: Rng, n: int, config: PhantomConfig) -> PhantomRecipe:
    lo, hi = config.shape_count
    count = lo + rng.next_below(hi - lo + 1)
    shapes = []
    for _ in range(count):
        # uniform over the disk of radius center_radius
        r = config.center_radius * math.sqrt(rng.next_unit())
        theta = 2.0 * math.pi * rng.next_unit()
        shapes.append(
            EllipseSpec(
                cx=r * math.cos(theta),
                cy=r * math.sin(theta),
                a=rng.uniform(*config.semi_axis),
                b=rng.uniform(*config.semi_axis),
                phi=rng.uniform(0.0, math.pi),
                intensity=rng.uniform(*config.intensity),
            )
        )
    return PhantomRecipe(shapes=tuple(shapes), n=n)


def random_phantom(rng: Rng, n: int, config: PhantomConfig | None = None):
    """Deterministic-in-seed random phantom; never all-zero.

    Returns (recipe, image).  On the rare draw whose ellipses miss every
    pixel center (possible at coarse grids), the recipe is redrawn from the
    same stream, keeping the result a pure function of the generator state.
    """
    config = config or PhantomConfig()
    while True:
        recipe = _draw_recipe(rng, n, config)
        img = rasterize(recipe)
        if img.max() > 0.0:
            return recipe, img


# Canonical 10-ellipse head phantom tables: (intensity, a, b, cx, cy, phi_deg).
# "original" carries the published low-contrast intensities; "modified" the
# widely used high-contrast variant of the same geometry.
_SHEPP_GEOMETRY = [
    (0.69, 0.92, 0.0, 0.0, 0.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0),
    (0.11, 0.31, 0.22, 0.0, -18.0),
    (0.16, 0.41, -0.22, 0.0, 18.0),
    (0.21, 0.25, 0.0, 0.35, 0.0),
    (0.046, 0.046, 0.0, 0.1, 0.0),
    (0.046, 0.046, 0.0, -0.1, 0.0),
    (0.046, 0.023, -0.08, -0.605, 0.0),
    (0.023, 0.023, 0.0, -0.606, 0.0),
    (0.023, 0.046, 0.06, -0.605, 0.0),
]
_SHEPP_INTENSITY = {
    "original": [1.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
    "modified": [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
}

SHEPP_LOGAN_VARIANTS = tuple(_SHEPP_INTENSITY)


def shepp_logan_recipe(n: int, variant: str = "modified") -> PhantomRecipe:
    if variant not in _SHEPP_INTENSITY:
        raise ValueError(
            f"unknown variant {variant!r}; expected one of {SHEPP_LOGAN_VARIANTS}"
        )
    shapes = tuple(
        EllipseSpec(cx=cx, cy=cy, a=a, b=b, phi=math.radians(deg), intensity=inten)
        for inten, (a, b, cx, cy, deg) in zip(_SHEPP_INTENSITY[variant], _SHEPP_GEOMETRY)
    )
    return PhantomRecipe(shapes=shapes, n=n)


def shepp_logan(n: int, variant: str = "modified") -> np.ndarray:
    """Rasterized head phantom; negative summed regions clamp to zero."""
    if n < 16:
        raise ValueError("head phantom needs n >= 16")
    return rasterize(shepp_logan_recipe(n, variant))
