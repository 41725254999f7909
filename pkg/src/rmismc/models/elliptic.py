"""2D elliptic inverse problem on the unit square.

``-div(a(x) grad u) = 100`` with ``a(x)(z) = 3 + x1 cos(3 z1) sin(3 z2) + x2 cos(z1) sin(z2)``,
uniform prior on [-1, 1]**2, four point observations with noise sd 0.5 and
QoI ``x1**2 + x2**2``.

The coefficient is affine in ``x`` so the stiffness matrix splits as
``A0 + x1 A1 + x2 A2``; each term is assembled once per level.  Particle
batches are solved together by conjugate gradients preconditioned with the
constant-coefficient operator ``A0``, which is inverted exactly by fast
diagonalization of its Kronecker structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .base import BoxUniformMixin, ForwardModel
from .fem import (
    FEMError,
    Grid2D,
    assemble_load_2d,
    assemble_stiffness_2d,
    point_evaluation_matrix,
)

OBSERVATION_POINTS = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
NOISE_SD = 0.5
MEAN_COEFFICIENT = 3.0
FORCING = 100.0


def coefficient_terms(z1, z2):
    """Spatial functions multiplying ``x1`` and ``x2`` in the coefficient."""
    return np.cos(3 * z1) * np.sin(3 * z2), np.cos(z1) * np.sin(z2)


def coefficient(x, z1, z2):
    psi1, psi2 = coefficient_terms(z1, z2)
    return MEAN_COEFFICIENT + x[0] * psi1 + x[1] * psi2


def _interior_1d(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense interior P1 stiffness and mass matrices with ``2**level`` intervals."""
    k = 2**level
    h = 1.0 / k
    m = k - 1
    stiff = (2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h
    mass = (4.0 * np.eye(m) + np.eye(m, k=1) + np.eye(m, k=-1)) * h / 6.0
    return stiff, mass


@dataclass
class _LevelOperators:
    grid: Grid2D
    a0: sp.csr_matrix
    a1: sp.csr_matrix
    a2: sp.csr_matrix
    load: np.ndarray
    observe: sp.csr_matrix
    v1: np.ndarray
    v2: np.ndarray
    inv_eig: np.ndarray

    @classmethod
    def build(cls, levels, points) -> "_LevelOperators":
        grid = Grid2D(levels)
        z1, z2 = grid.quadrature_points()
        psi1, psi2 = coefficient_terms(z1, z2)
        a0 = assemble_stiffness_2d(grid, np.full_like(z1, MEAN_COEFFICIENT))
        a1 = assemble_stiffness_2d(grid, psi1)
        a2 = assemble_stiffness_2d(grid, psi2)
        load = assemble_load_2d(grid, np.full_like(z1, FORCING))
        obs = point_evaluation_matrix(grid, points)
        k1, m1 = _interior_1d(levels[0])
        k2, m2 = _interior_1d(levels[1])
        lam1, v1 = sla.eigh(k1, m1) if k1.size else (np.zeros(0), np.zeros((0, 0)))
        lam2, v2 = sla.eigh(k2, m2) if k2.size else (np.zeros(0), np.zeros((0, 0)))
        inv_eig = 1.0 / (MEAN_COEFFICIENT * (lam1[:, None] + lam2[None, :]))
        return cls(grid, a0, a1, a2, load, obs, v1, v2, inv_eig)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        """Exact ``A0^{-1} r`` for ``r`` of shape ``(n_dofs, batch)``."""
        m1, m2 = self.grid.interior_shape
        nb = r.shape[1]
        t = (self.v1.T @ r.reshape(m1, m2 * nb)).reshape(m1, m2, nb)
        t = (t.transpose(0, 2, 1).reshape(m1 * nb, m2) @ self.v2).reshape(m1, nb, m2)
        t *= self.inv_eig[:, None, :]
        t = (t.reshape(m1 * nb, m2) @ self.v2.T).reshape(m1, nb, m2).transpose(0, 2, 1)
        return (self.v1 @ t.reshape(m1, m2 * nb)).reshape(m1 * m2, nb)

    def matvec(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.a0 @ u + (self.a1 @ u) * x[:, 0] + (self.a2 @ u) * x[:, 1]

    def matrix(self, x) -> sp.csr_matrix:
        return self.a0 + x[0] * self.a1 + x[1] * self.a2


def batched_pcg(ops: _LevelOperators, x: np.ndarray, rtol: float = 1e-10, maxiter: int = 500) -> np.ndarray:
    """Solve ``A(x_i) u_i = f`` for every row of ``x``; returns ``(n_dofs, batch)``."""
    nb = x.shape[0]
    b = np.repeat(ops.load[:, None], nb, axis=1)
    bnorm = np.linalg.norm(ops.load)
    u = ops.precondition(b)
    r = b - ops.matvec(u, x)
    active = np.linalg.norm(r, axis=0) > rtol * bnorm
    if not active.any():
        return u
    z = ops.precondition(r)
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    for _ in range(maxiter):
        ap = ops.matvec(p, x)
        pap = np.einsum("ij,ij->j", p, ap)
        step = np.divide(rz, pap, out=np.zeros_like(rz), where=active & (pap > 0))
        u += step * p
        r -= step * ap
        active = np.linalg.norm(r, axis=0) > rtol * bnorm
        if not active.any():
            return u
        z = ops.precondition(r)
        rz_new = np.einsum("ij,ij->j", r, z)
        p = z + np.divide(rz_new, rz, out=np.zeros_like(rz), where=rz > 0) * p
        rz = rz_new
    worst = np.max(np.linalg.norm(r, axis=0)) / bnorm
    raise FEMError(f"CG did not reach rtol={rtol:.1e} in {maxiter} iterations (residual {worst:.3e})")


class Elliptic2DModel(BoxUniformMixin, ForwardModel):
    name = "elliptic2d"
    dim = 2
    start_level = (2, 2)
    gamma = (1.0, 1.0)
    n_params = 2

    def __init__(self, data, noise_sd: float = NOISE_SD, points=OBSERVATION_POINTS, chunk: int = 2048):
        self.points = np.asarray(points, dtype=float)
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (len(self.points),):
            raise ValueError(f"need {len(self.points)} observations, got shape {self.data.shape}")
        self.noise_sd = float(noise_sd)
        self.chunk = int(chunk)
        self._ops: dict[tuple[int, int], _LevelOperators] = {}

    @classmethod
    def synthetic(cls, x_true, rng, data_level=(7, 7), noise_sd: float = NOISE_SD):
        return cls(synthesize_elliptic_data(x_true, rng, data_level, noise_sd), noise_sd)

    def operators(self, levels) -> _LevelOperators:
        key = tuple(int(v) for v in levels)
        if key not in self._ops:
            self._ops[key] = _LevelOperators.build(key, self.points)
        return self._ops[key]

    def solve(self, levels, states) -> np.ndarray:
        """Interior nodal solutions, shape ``(n_particles, n_dofs)``."""
        ops = self.operators(levels)
        x = np.asarray(states, dtype=float).reshape(-1, 2)
        out = np.empty((x.shape[0], ops.grid.n_dofs))
        for start in range(0, x.shape[0], self.chunk):
            sl = slice(start, start + self.chunk)
            out[sl] = batched_pcg(ops, x[sl]).T
        return out

    def observe(self, levels, states) -> np.ndarray:
        ops = self.operators(levels)
        u = self.solve(levels, states)
        return (ops.observe @ u.T).T

    def log_likelihood(self, alpha, states):
        resid = self.data[None, :] - self.observe(alpha, states)
        return -0.5 * np.sum(resid**2, axis=1) / self.noise_sd**2

    def qoi(self, alpha, states):
        x = np.asarray(states, dtype=float).reshape(-1, 2)
        return np.sum(x**2, axis=1)


def synthesize_elliptic_data(x_true, rng, data_level=(7, 7), noise_sd: float = NOISE_SD):
    """Observations of the level-``data_level`` FEM solution plus Gaussian noise."""
    model = Elliptic2DModel(np.zeros(len(OBSERVATION_POINTS)))
    y = model.observe(tuple(data_level), np.asarray(x_true, dtype=float).reshape(1, 2))[0]
    if rng is not None and noise_sd > 0:
        y = y + noise_sd * rng.standard_normal(y.shape)
    return y
