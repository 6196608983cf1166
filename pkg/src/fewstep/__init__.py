"""Few-step diffusion decoding of smooth trajectories, checked in the frequency domain.

Subpackages and modules:

* :mod:`fewstep.spectral` - orthonormal DCT, mode energies, band masks.
* :mod:`fewstep.schedule` - variance-preserving noise schedules and step grids.
* :mod:`fewstep.oracle` - closed-form Gaussian posterior and error bounds.
* :mod:`fewstep.synthdata` - synthetic trajectories with a controlled spectrum.
* :mod:`fewstep.autodiff` - a small reverse-mode autodiff engine.
* :mod:`fewstep.models` - CNN and mixer denoisers and their training loop.
* :mod:`fewstep.sampler` - DDIM / DDPM samplers and step ablations.
* :mod:`fewstep.evalx` - band-split error evaluation and report writers.
* :mod:`fewstep.cli` - command-line pipelines.
"""

__version__ = "0.1.0"

from .evalx import ExecFilter, error_breakdown, mean_breakdown
from .models import DiffusionDenoiser
from .oracle import GaussianFreqModel, GaussianPosteriorDenoiser
from .schedule import make_cosine, make_grid, make_linear
from .spectral import BandMask, DCTSpectrum, dct_forward, dct_inverse
from .synthdata import GeneratorSpec, TrajectoryStandardizer, generate

__all__ = [
    "BandMask",
    "DCTSpectrum",
    "DiffusionDenoiser",
    "ExecFilter",
    "GaussianFreqModel",
    "GaussianPosteriorDenoiser",
    "GeneratorSpec",
    "TrajectoryStandardizer",
    "dct_forward",
    "dct_inverse",
    "error_breakdown",
    "generate",
    "make_cosine",
    "make_grid",
    "make_linear",
    "mean_breakdown",
]
