"""Maximum-likelihood expectation maximization baseline reconstruction.

Multiplicative update (Shepp-Vardi):

    f_j  <-  (f_j / s_j) * sum_i P_ij * y_i / (P f)_i,    s_j = sum_i P_ij

Bins where the model predicts zero contribute nothing when the measurement
is zero too (0/0 := 0); a positive measurement on a zero-prediction bin is
a genuine model mismatch and raises.  Pixels with zero sensitivity stay
exactly zero.  Every step appends the Poisson log-likelihood to the state's
history, which the EM theory guarantees is non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projector import SystemMatrix


class ModelMismatchError(Exception):
    """Measured counts are positive on a bin the system cannot produce."""


@dataclass
class MlemState:
    estimate: np.ndarray  # flat, nonnegative
    iteration: int
    sensitivity: np.ndarray  # flat, s_j = sum_i P_ij
    log_likelihood_history: list


def poisson_log_likelihood(
    matrix: SystemMatrix, sinogram: np.ndarray, image: np.ndarray
) -> float:
    """L = sum_i [y_i log (Pf)_i - (Pf)_i], constant log(y_i!) omitted.

    y_i log 0 is -inf for y_i > 0 and 0 for y_i = 0, so an estimate that
    cannot explain observed counts scores -inf.
    """
    y = np.asarray(sinogram, dtype=np.float64).ravel()
    f = np.asarray(image, dtype=np.float64).ravel()
    if np.any(f < 0):
        raise ValueError("image must be nonnegative")
    proj = matrix.apply(f)
    positive = proj > 0
    if np.any((~positive) & (y > 0)):
        return float("-inf")
    logs = np.log(proj, out=np.zeros_like(proj), where=positive)
    terms = np.where(positive & (y > 0), y * logs, 0.0)
    return float(np.sum(terms) - np.sum(proj))


def _flat_sinogram(matrix: SystemMatrix, sinogram: np.ndarray) -> np.ndarray:
    y = np.asarray(sinogram, dtype=np.float64)
    if y.size != matrix.n_rays:
        raise ValueError(f"sinogram size {y.size} != {matrix.n_rays} rays")
    if np.any(y < 0):
        raise ValueError("sinogram must be nonnegative")
    return y.ravel()


def mlem_init(
    matrix: SystemMatrix, sinogram: np.ndarray, init_value: float | None = None
) -> MlemState:
    """Uniform positive start on the sensitivity support.

    Default level is sum(y) / sum(s), which makes the start already satisfy
    the count-preservation identity.
    """
    y = _flat_sinogram(matrix, sinogram)
    sens = matrix.sensitivity()
    support = sens > 0
    if init_value is None:
        total_sens = float(np.sum(sens))
        if total_sens <= 0:
            raise ValueError("system matrix has empty sensitivity")
        init_value = float(np.sum(y)) / total_sens
        if init_value <= 0:
            # zero data: any positive level works and one step zeroes it
            init_value = 1.0
    if init_value <= 0:
        raise ValueError("init_value must be positive")
    estimate = np.where(support, float(init_value), 0.0)
    history = [poisson_log_likelihood(matrix, y, estimate)]
    return MlemState(
        estimate=estimate, iteration=0, sensitivity=sens, log_likelihood_history=history
    )


def mlem_step(matrix: SystemMatrix, sinogram: np.ndarray, state: MlemState) -> MlemState:
    """One multiplicative EM update; returns a new state."""
    y = _flat_sinogram(matrix, sinogram)
    f = state.estimate
    proj = matrix.apply(f)
    zero_pred = proj == 0
    bad = zero_pred & (y > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ModelMismatchError(
            f"bin {i} measured {y[i]:g} counts but the model predicts zero "
            "(ray outside the estimate's support)"
        )
    ratio = np.divide(y, proj, out=np.zeros_like(y), where=~zero_pred)
    back = matrix.apply_adjoint(ratio)
    sens = state.sensitivity
    update = np.divide(back, sens, out=np.zeros_like(back), where=sens > 0)
    estimate = f * update
    history = state.log_likelihood_history + [
        poisson_log_likelihood(matrix, y, estimate)
    ]
    return MlemState(
        estimate=estimate,
        iteration=state.iteration + 1,
        sensitivity=sens,
        log_likelihood_history=history,
    )


def mlem_reconstruct(
    matrix: SystemMatrix,
    sinogram: np.ndarray,
    n_iters: int,
    init_value: float | None = None,
):
    """Run ``n_iters`` EM steps from a uniform start.

    Returns (estimate, state); the estimate is shaped (n, n) when the matrix
    carries a scan geometry, flat otherwise.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    state = mlem_init(matrix, sinogram, init_value)
    for _ in range(n_iters):
        state = mlem_step(matrix, sinogram, state)
    estimate = state.estimate
    if matrix.geometry is not None:
        n = matrix.geometry.n
        estimate = estimate.reshape(n, n)
    return estimate, state
