"""1D elliptic toy problem: ``-u'' = x`` on [0, 1], ``u(0) = u(1) = 0``.

The exact solution is ``u(z; x) = -(x / 2) (z**2 - z)``.  Because the
forcing is the scalar ``x`` and the operator does not depend on it, the FEM
solution at level ``a`` is ``x`` times the unit-forcing response, which is
computed once per level and cached.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .base import BoxUniformMixin, ForwardModel
from .fem import fem_solve_1d

OBSERVATION_POINTS = np.arange(1, 11) / 10.0
NOISE_SD = 0.2


def exact_unit_response(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return -0.5 * (z**2 - z)


@lru_cache(maxsize=64)
def _unit_response(level: int, points: tuple[float, ...]) -> np.ndarray:
    nodes, values = fem_solve_1d(level, None, lambda z: np.ones_like(z))
    out = np.interp(np.asarray(points), nodes, values)
    out.setflags(write=False)
    return out


class Toy1DModel(BoxUniformMixin, ForwardModel):
    """Toy inverse problem with uniform prior on [-1, 1] and QoI ``x**2``.

    ``level=None`` (or ``inf``) in :meth:`observe` and :meth:`log_likelihood`
    uses the exact solution.
    """

    name = "toy1d"
    dim = 1
    start_level = (0,)
    gamma = (1.0,)
    n_params = 1

    def __init__(self, data, noise_sd: float = NOISE_SD, points=OBSERVATION_POINTS):
        self.points = tuple(float(p) for p in np.asarray(points, dtype=float))
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (len(self.points),):
            raise ValueError(f"need {len(self.points)} observations, got shape {self.data.shape}")
        self.noise_sd = float(noise_sd)

    @classmethod
    def synthetic(cls, x_true: float, rng: np.random.Generator | None, noise_sd: float = NOISE_SD):
        y = synthesize_toy_data(x_true, rng, noise_sd)
        return cls(y, noise_sd)

    def unit_response(self, level) -> np.ndarray:
        if level is None or np.isinf(level):
            return exact_unit_response(self.points)
        if isinstance(level, tuple):
            (level,) = level
        return _unit_response(int(level), self.points)

    def observe(self, level, states) -> np.ndarray:
        x = np.asarray(states, dtype=float).reshape(-1, 1)
        return x * self.unit_response(level)[None, :]

    def log_likelihood(self, alpha, states):
        resid = self.data[None, :] - self.observe(alpha, states)
        return -0.5 * np.sum(resid**2, axis=1) / self.noise_sd**2

    def qoi(self, alpha, states):
        return np.asarray(states, dtype=float).reshape(-1) ** 2


def synthesize_toy_data(x_true: float, rng: np.random.Generator | None, noise_sd: float = NOISE_SD):
    """``y_i = u(z_i; x_true) + noise``; ``rng=None`` gives noise-free data."""
    y = float(x_true) * exact_unit_response(OBSERVATION_POINTS)
    if rng is not None and noise_sd > 0:
        y = y + noise_sd * rng.standard_normal(y.shape)
    return y
