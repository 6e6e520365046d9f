"""Parallel-beam system matrix and matched forward/back projection.

The matrix entry for (ray i, pixel j) is the exact intersection length of
the ray with the pixel (Siddon tracing), so forward and back projection are
exact adjoints by construction.  Rays are parallel within each projection
angle, spaced one detector bin (= one pixel size) apart and centered on the
grid center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ScanGeometry:
    """Acquisition description: grid side, angle count, bins, angular span."""

    n: int
    np_angles: int
    nr_bins: int
    arc_degrees: float = 360.0
    pixel_size: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid side must be >= 1")
        if self.np_angles < 1 or self.nr_bins < 1:
            raise ValueError("need at least one angle and one bin")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")

    @property
    def angles_rad(self) -> np.ndarray:
        k = np.arange(self.np_angles, dtype=np.float64)
        return np.deg2rad(self.arc_degrees * k / self.np_angles)

    @property
    def n_rays(self) -> int:
        return self.np_angles * self.nr_bins


def parse_geometry(text: str) -> ScanGeometry:
    """Parse the CLI form ``n=128,angles=24,bins=128,arc=360``."""
    fields = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        if not value:
            raise ValueError(f"bad geometry field {part!r}")
        fields[key.strip()] = value.strip()
    try:
        n = int(fields.pop("n"))
        np_angles = int(fields.pop("angles"))
        nr_bins = int(fields.pop("bins", str(n)))
        arc = float(fields.pop("arc", "360"))
        pixel_size = float(fields.pop("pixel_size", "1"))
    except KeyError as exc:
        raise ValueError(f"geometry is missing required field {exc}") from exc
    if fields:
        raise ValueError(f"unknown geometry fields: {sorted(fields)}")
    return ScanGeometry(n, np_angles, nr_bins, arc, pixel_size)


class SystemMatrix:
    """Sparse nonnegative ray-pixel operator in CSR layout.

    For scanner-built matrices, row i covers ray (angle = i // nr_bins,
    bin = i % nr_bins) and entries are sorted by pixel index.  Ad-hoc
    matrices (from_dense, geometry=None) operate on flat vectors only.
    Immutable once built, safe to share.
    """

    def __init__(self, row_ptr, cols, weights, n_pixels, geometry=None):
        self.row_ptr = row_ptr
        self.cols = cols
        self.weights = weights
        self.n_pixels = n_pixels
        self.geometry = geometry

    @property
    def n_rays(self) -> int:
        return self.row_ptr.size - 1

    @property
    def nnz(self) -> int:
        return self.cols.size

    def row(self, i: int):
        """(pixel indices, weights) of ray i."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.cols[lo:hi], self.weights[lo:hi]

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Flat forward map: out_i = sum_j P_ij vec_j."""
        vec = np.ascontiguousarray(vec, dtype=np.float64)
        if vec.size != self.n_pixels:
            raise ValueError(f"vector size {vec.size} != {self.n_pixels} pixels")
        return kernels.csr_forward(self.row_ptr, self.cols, self.weights, vec.ravel())

    def apply_adjoint(self, vec: np.ndarray) -> np.ndarray:
        """Flat adjoint map: out_j = sum_i P_ij vec_i."""
        vec = np.ascontiguousarray(vec, dtype=np.float64)
        if vec.size != self.n_rays:
            raise ValueError(f"vector size {vec.size} != {self.n_rays} rays")
        return kernels.csr_back(
            self.row_ptr, self.cols, self.weights, vec.ravel(), self.n_pixels
        )

    def sensitivity(self) -> np.ndarray:
        """Per-pixel column sums (adjoint applied to a unit sinogram)."""
        return self.apply_adjoint(np.ones(self.n_rays, dtype=np.float64))

    @classmethod
    def from_dense(cls, dense: np.ndarray, geometry=None) -> "SystemMatrix":
        """Build from a dense (n_rays, n_pixels) array; zeros are dropped."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise ValueError("dense system matrix must be 2-D")
        if np.any(dense < 0):
            raise ValueError("system matrix weights must be nonnegative")
        n_rays, n_pixels = dense.shape
        row_ptr = np.zeros(n_rays + 1, dtype=np.int64)
        cols_list, w_list = [], []
        for i in range(n_rays):
            nz = np.flatnonzero(dense[i])
            cols_list.append(nz.astype(np.int32))
            w_list.append(dense[i, nz])
            row_ptr[i + 1] = row_ptr[i] + nz.size
        cols = np.concatenate(cols_list) if cols_list else np.empty(0, np.int32)
        weights = np.concatenate(w_list) if w_list else np.empty(0, np.float64)
        return cls(row_ptr, cols, weights, n_pixels, geometry=geometry)


def build_system_matrix(geometry: ScanGeometry) -> SystemMatrix:
    """Trace every (angle, bin) ray through the pixel grid."""
    n = geometry.n
    angles = geometry.angles_rad
    cos_t = np.cos(angles)
    sin_t = np.sin(angles)
    n_rays = geometry.n_rays
    max_per_row = 2 * n + 4
    counts = np.zeros(n_rays, dtype=np.int32)
    cols_pad = np.zeros((n_rays, max_per_row), dtype=np.int32)
    w_pad = np.zeros((n_rays, max_per_row), dtype=np.float64)
    kernels.siddon_padded(
        n, geometry.pixel_size, cos_t, sin_t, geometry.nr_bins, counts, cols_pad, w_pad
    )
    row_ptr = np.zeros(n_rays + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    mask = np.arange(max_per_row) < counts[:, None]
    cols = cols_pad[mask]
    weights = w_pad[mask]
    return SystemMatrix(row_ptr, cols, weights, n * n, geometry=geometry)


def forward_project(matrix: SystemMatrix, image: np.ndarray) -> np.ndarray:
    """Project an (n, n) image to an (np_angles, nr_bins) sinogram."""
    if matrix.geometry is None:
        raise ValueError("matrix has no scan geometry; use matrix.apply")
    image = np.asarray(image, dtype=np.float64)
    n = matrix.geometry.n
    if image.shape != (n, n):
        raise ValueError(f"image shape {image.shape} does not match grid side {n}")
    y = matrix.apply(image.ravel())
    return y.reshape(matrix.geometry.np_angles, matrix.geometry.nr_bins)


def back_project(matrix: SystemMatrix, sinogram: np.ndarray) -> np.ndarray:
    """Apply the exact adjoint to an (np_angles, nr_bins) sinogram."""
    if matrix.geometry is None:
        raise ValueError("matrix has no scan geometry; use matrix.apply_adjoint")
    sino = np.asarray(sinogram, dtype=np.float64)
    expected = (matrix.geometry.np_angles, matrix.geometry.nr_bins)
    if sino.shape != expected:
        raise ValueError(f"sinogram shape {sino.shape} does not match {expected}")
    img = matrix.apply_adjoint(sino.ravel())
    n = matrix.geometry.n
    return img.reshape(n, n)
