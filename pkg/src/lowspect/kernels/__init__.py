"""Hot-kernel dispatch.

Imports the implementation selected by :mod:`lowspect.backend` and re-exports
its functions.  Both implementations remain importable directly (as
``kernels.numpy_impl`` / ``kernels.numba_impl``) for the equivalence tests
and the benchmark script.
"""

from ..backend import BACKEND
from . import numpy_impl

if BACKEND == "numba":
    from . import numba_impl as _impl
else:
    _impl = numpy_impl

pcg32_fill = _impl.pcg32_fill
poisson_fill = _impl.poisson_fill
siddon_padded = _impl.siddon_padded
csr_forward = _impl.csr_forward
csr_back = _impl.csr_back

KNUTH_LAMBDA_MAX = numpy_impl.KNUTH_LAMBDA_MAX

__all__ = [
    "BACKEND",
    "KNUTH_LAMBDA_MAX",
    "pcg32_fill",
    "poisson_fill",
    "siddon_padded",
    "csr_forward",
    "csr_back",
]
