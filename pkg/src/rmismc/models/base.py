"""Common interface for forward models evaluated at a resolution multi-index."""

from __future__ import annotations

import math

import numpy as np

from ..multiindex import MultiIndex, as_index


class ForwardModel:
    """A Bayesian model whose likelihood and QoI depend on a resolution index.

    Subclasses set ``dim`` (number of resolution directions), ``start_level``
    (coarsest admissible index) and ``gamma`` (per-direction cost exponents),
    and implement :meth:`sample_prior`, :meth:`log_likelihood`, :meth:`qoi`
    and :meth:`propose`.

    Particle states are numpy arrays with particles along axis 0.  A state
    drawn at index ``alpha`` is valid input at every index ``<= alpha``; this
    is how the Dirac coupling of sub-index coordinates is realized.
    """

    name = "model"
    dim = 1
    start_level: MultiIndex = (0,)
    gamma: tuple[float, ...] = (1.0,)
    #: "reflected_rw" for box-uniform priors, "pcn" for Gaussian priors
    default_kernel = "reflected_rw"

    def check_index(self, alpha) -> MultiIndex:
        alpha = as_index(alpha)
        if len(alpha) != self.dim:
            raise ValueError(f"{self.name}: expected a {self.dim}-dimensional index, got {alpha}")
        if any(a < s for a, s in zip(alpha, self.start_level)):
            raise ValueError(f"{self.name}: index {alpha} is below the starting level {self.start_level}")
        return alpha

    def cost(self, alpha) -> float:
        """Abstract cost units of one likelihood evaluation at ``alpha``."""
        alpha = as_index(alpha)
        return math.prod(2.0 ** (a * g) for a, g in zip(alpha, self.gamma))

    def sample_prior(self, alpha, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def state_nbytes(self, alpha) -> int:
        """Bytes of one particle state drawn at ``alpha``."""
        return self.sample_prior(alpha, 1, np.random.default_rng(0)).nbytes

    def log_likelihood(self, alpha, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def qoi(self, alpha, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood_and_qoi(self, alpha, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Both per-particle arrays; override when they share expensive work."""
        return self.log_likelihood(alpha, states), self.qoi(alpha, states)

    def propose(self, states: np.ndarray, step: float, rng: np.random.Generator) -> np.ndarray:
        """Prior-reversible proposal, so the MH ratio involves only the likelihood."""
        raise NotImplementedError


def reflect_into_box(x: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """Fold ``x`` back into ``[lower, upper]`` by repeated mirror reflection."""
    width = upper - lower
    y = np.mod(x - lower, 2.0 * width)
    return lower + np.where(y > width, 2.0 * width - y, y)


class BoxUniformMixin:
    """Uniform prior on ``[lower, upper]**n_params`` with a reflected random walk."""

    n_params = 1
    lower = -1.0
    upper = 1.0

    def sample_prior(self, alpha, n, rng):
        return rng.uniform(self.lower, self.upper, size=(int(n), self.n_params))

    def propose(self, states, step, rng):
        if step == 0.0:
            return states.copy()
        return reflect_into_box(states + step * rng.standard_normal(states.shape), self.lower, self.upper)
