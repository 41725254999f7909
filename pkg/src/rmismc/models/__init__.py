"""Forward models: 1D toy, 2D elliptic PDE and point-process models."""

from .base import BoxUniformMixin, ForwardModel, reflect_into_box
from .elliptic import Elliptic2DModel, synthesize_elliptic_data
from .fem import FEMError, fem_solve_1d, fem_solve_2d
from .point_process import PointPatternError, PointProcessModel, load_point_pattern, synthesize_point_pattern
from .spectral import SpectralGaussianPrior, sample_spectral_field, spectral_variance
from .toy import Toy1DModel, synthesize_toy_data

__all__ = [
    "BoxUniformMixin",
    "Elliptic2DModel",
    "FEMError",
    "ForwardModel",
    "PointPatternError",
    "PointProcessModel",
    "SpectralGaussianPrior",
    "Toy1DModel",
    "fem_solve_1d",
    "fem_solve_2d",
    "load_point_pattern",
    "reflect_into_box",
    "sample_spectral_field",
    "spectral_variance",
    "synthesize_elliptic_data",
    "synthesize_point_pattern",
    "synthesize_toy_data",
]
