"""lowspect: simulation and reconstruction toolkit for low-projection SPECT.

Pipeline pieces: random ellipse phantoms and the Shepp-Logan phantom,
a Siddon parallel-beam projector, Poisson projection noise, MLEM baseline
reconstruction, a from-scratch convolutional encoder-decoder reconstructor
(CNNR) trained with an SSIM loss, image-quality metrics, and a batch CLI.
"""

from .backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
