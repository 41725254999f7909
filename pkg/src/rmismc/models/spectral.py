"""Truncated Fourier (KL) expansion of a periodic Gaussian field on [0, 2]^2.

The field is ``x(z) = theta1 + sum_k zeta_k (xi_k phi_k(z) + conj(xi_k) phi_{-k}(z))``
with ``phi_k(z) = exp(i pi k . z)``, ``xi_k`` i.i.d. standard complex normal
and ``k`` ranging over the half lattice ``{k2 > 0} U {k2 = 0, k1 > 0}``.

Coefficients for resolution ``(a1, a2)`` live in a complex array of shape
``(2 K1 + 1, K2 + 1)`` indexed by ``[k1 + K1, k2]``; entries outside the half
lattice are kept at zero.  A coefficient array for a fine index contains the
arrays of every coarser index as a centred sub-block, which is how coarse
sub-indices of a coupled particle are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def spectral_variance(k1, k2, theta, smoothness: float):
    """``zeta_k**2 = theta2 / ((theta3 + k1**2)(theta3 + k2**2))**((beta + 1) / 2)``."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    _, theta2, theta3 = theta
    return theta2 / ((theta3 + k1**2) * (theta3 + k2**2)) ** ((smoothness + 1.0) / 2.0)


@dataclass(frozen=True)
class SpectralGaussianPrior:
    """Periodic Gaussian prior truncated per direction by resolution level.

    ``truncation="full"`` keeps ``|k_i| <= 2**a_i - 1``; ``"half"`` keeps
    ``|k_i| <= floor(2**(a_i / 2))``.  The FFT grid has ``M_i`` points on
    [0, 2), the smallest power of two exceeding ``2 K_i``.
    """

    theta: tuple[float, float, float] = (0.0, 1.0, (33.0 / math.pi) ** 2)
    smoothness: float = 1.6
    truncation: str = "full"

    def __post_init__(self):
        if self.truncation not in ("full", "half"):
            raise ValueError(f"truncation must be 'full' or 'half', got {self.truncation!r}")
        if self.theta[1] < 0 or self.theta[2] < 0:
            raise ValueError("theta2 and theta3 must be non-negative")

    def max_mode(self, level: int) -> int:
        if self.truncation == "full":
            return 2 ** int(level) - 1
        return int(math.floor(2.0 ** (level / 2.0)))

    def grid_size(self, level: int) -> int:
        k = self.max_mode(level)
        return max(2, 1 << int(math.ceil(math.log2(2 * k + 1))))

    def shape(self, levels) -> tuple[int, int]:
        k1, k2 = (self.max_mode(a) for a in levels)
        return 2 * k1 + 1, k2 + 1

    def mask(self, levels) -> np.ndarray:
        k1, k2 = (self.max_mode(a) for a in levels)
        kk1 = np.arange(-k1, k1 + 1)[:, None]
        kk2 = np.arange(k2 + 1)[None, :]
        return (kk2 > 0) | ((kk2 == 0) & (kk1 > 0))

    def scales(self, levels) -> np.ndarray:
        """``zeta_k`` on the coefficient array, zero outside the half lattice."""
        k1, k2 = (self.max_mode(a) for a in levels)
        kk1 = np.arange(-k1, k1 + 1)[:, None]
        kk2 = np.arange(k2 + 1)[None, :]
        return np.where(self.mask(levels), np.sqrt(spectral_variance(kk1, kk2, self.theta, self.smoothness)), 0.0)

    def sample_coefficients(self, levels, n: int, rng: np.random.Generator) -> np.ndarray:
        shape = (int(n),) + self.shape(levels)
        xi = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
        return xi * self.mask(levels)

    def restrict(self, xi: np.ndarray, levels) -> np.ndarray:
        """Centred sub-block of a (finer) coefficient array for ``levels``."""
        n1, n2 = self.shape(levels)
        c = (xi.shape[-2] - 1) // 2
        h = (n1 - 1) // 2
        if h > c or n2 > xi.shape[-1]:
            raise ValueError(f"coefficients of shape {xi.shape[-2:]} are coarser than level {tuple(levels)}")
        return xi[..., c - h : c + h + 1, :n2]

    def pointwise_variance(self, levels) -> float:
        """Variance of ``x(z)`` (the same at every z): ``sum_k 2 zeta_k**2``."""
        return float(2.0 * np.sum(self.scales(levels) ** 2))

    def grid_values(self, xi: np.ndarray, levels) -> np.ndarray:
        """Field on the periodic grid ``z_j = 2 j / M`` over [0, 2)^2.

        The half-plane layout of the coefficients is exactly the input
        layout of a real inverse FFT: columns ``k2 > 0`` carry their
        conjugate partners implicitly, and the ``k2 = 0`` column is filled
        with both ``c_k`` and ``conj(c_k)``.  Returns ``(n, M1, M2)``.
        """
        levels = tuple(int(a) for a in levels)
        xi = np.asarray(xi)
        if xi.ndim == 2:
            xi = xi[None]
        xi = self.restrict(xi, levels)
        k1, k2 = (self.max_mode(a) for a in levels)
        m1, m2 = (self.grid_size(a) for a in levels)
        coef = xi * self.scales(levels)
        spec = np.zeros((xi.shape[0], m1, m2 // 2 + 1), dtype=complex)
        rows = np.arange(-k1, k1 + 1) % m1
        spec[:, rows, : k2 + 1] = coef
        # Hermitian completion of the k2 = 0 column
        spec[:, (-np.arange(1, k1 + 1)) % m1, 0] = np.conj(coef[:, k1 + 1 :, 0])
        field = np.fft.irfft2(spec, s=(m1, m2), axes=(-2, -1))
        field *= m1 * m2
        return self.theta[0] + field


def sample_spectral_field(prior: SpectralGaussianPrior, levels, rng: np.random.Generator, n: int = 1):
    """Draw coefficients at ``levels`` and return ``(coefficients, grid values)``."""
    xi = prior.sample_coefficients(levels, n, rng)
    return xi, prior.grid_values(xi, levels)


def synthesis_cost(levels) -> float:
    """FFT work model ``(a1 + a2) 2**(a1 + a2)`` in abstract units."""
    s = sum(int(a) for a in levels)
    return float(max(s, 1) * 2.0**s)
