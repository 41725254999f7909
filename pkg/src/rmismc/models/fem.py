"""Piecewise-linear (1D) and bilinear (2D) finite elements on uniform meshes.

Level ``a`` in a direction means ``2**a`` intervals on [0, 1], i.e. mesh
diameter ``2**-a``.  Dirichlet boundary values are zero, so only interior
nodes are unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# two-point Gauss rule on [0, 1]
_GAUSS_PTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_WTS = np.array([0.5, 0.5])


class FEMError(RuntimeError):
    """Raised for non-elliptic coefficients or failed linear solves."""


def _check_elliptic(values: np.ndarray) -> None:
    amin = float(np.min(values))
    if not amin > 0.0:
        raise FEMError(f"coefficient is not elliptic: min a(z) = {amin:.3g} on quadrature points")


# --------------------------------------------------------------------------
# 1D
# --------------------------------------------------------------------------


def stiffness_1d(n_intervals: int, coefficient=None) -> np.ndarray:
    """Banded (3, K-1) storage of the interior P1 stiffness matrix.

    ``coefficient`` is a callable ``a(z)``; ``None`` means ``a = 1``.  Row 0 is
    the super-diagonal, row 1 the diagonal, row 2 the sub-diagonal, as
    expected by :func:`scipy.linalg.solve_banded`.
    """
    k = int(n_intervals)
    h = 1.0 / k
    left = np.arange(k) * h
    zq = left[:, None] + h * _GAUSS_PTS[None, :]
    aq = np.ones_like(zq) if coefficient is None else np.asarray(coefficient(zq), dtype=float)
    _check_elliptic(aq)
    # per-element integral of a * phi_i' phi_j' = +-(mean a) / h
    a_elem = (aq * _GAUSS_WTS).sum(axis=1) / h
    n = k - 1
    ab = np.zeros((3, max(n, 0)))
    if n == 0:
        return ab
    ab[1] = a_elem[:-1] + a_elem[1:]
    ab[0, 1:] = -a_elem[1:-1]
    ab[2, :-1] = -a_elem[1:-1]
    return ab


def load_1d(n_intervals: int, forcing) -> np.ndarray:
    """Interior load vector ``int f phi_j`` with two-point Gauss per element."""
    k = int(n_intervals)
    h = 1.0 / k
    left = np.arange(k) * h
    zq = left[:, None] + h * _GAUSS_PTS[None, :]
    fq = np.broadcast_to(np.asarray(forcing(zq), dtype=float), zq.shape)
    # hat functions restricted to an element: rising (right node) and falling (left node)
    rising = (fq * _GAUSS_PTS * _GAUSS_WTS).sum(axis=1) * h
    falling = (fq * (1.0 - _GAUSS_PTS) * _GAUSS_WTS).sum(axis=1) * h
    return rising[:-1] + falling[1:]


def fem_solve_1d(level: int, coefficient=None, forcing=None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``-(a u')' = f`` on [0, 1] with zero Dirichlet data.

    Returns ``(nodes, values)`` over all ``2**level + 1`` nodes, boundary
    included.  The tridiagonal system is solved in O(K).
    """
    k = 2 ** int(level)
    nodes = np.linspace(0.0, 1.0, k + 1)
    values = np.zeros(k + 1)
    if k < 2:
        return nodes, values
    forcing = (lambda z: np.ones_like(z)) if forcing is None else forcing
    ab = stiffness_1d(k, coefficient)
    rhs = load_1d(k, forcing)
    values[1:-1] = sla.solve_banded((1, 1), ab, rhs)
    return nodes, values


# --------------------------------------------------------------------------
# 2D bilinear
# --------------------------------------------------------------------------

# reference bilinear shape functions on [0,1]^2, local node order
# (0,0), (1,0), (0,1), (1,1)
_S, _T = np.meshgrid(_GAUSS_PTS, _GAUSS_PTS, indexing="ij")
_S, _T = _S.ravel(), _T.ravel()
_WQ = np.outer(_GAUSS_WTS, _GAUSS_WTS).ravel()
_N = np.stack([(1 - _S) * (1 - _T), _S * (1 - _T), (1 - _S) * _T, _S * _T], axis=1)
_DS = np.stack([-(1 - _T), (1 - _T), -_T, _T], axis=1)
_DT = np.stack([-(1 - _S), -_S, (1 - _S), _S], axis=1)


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid with ``2**levels[i]`` intervals per direction."""

    levels: tuple[int, int]

    @property
    def n_intervals(self) -> tuple[int, int]:
        return 2 ** self.levels[0], 2 ** self.levels[1]

    @property
    def h(self) -> tuple[float, float]:
        k1, k2 = self.n_intervals
        return 1.0 / k1, 1.0 / k2

    @property
    def interior_shape(self) -> tuple[int, int]:
        k1, k2 = self.n_intervals
        return k1 - 1, k2 - 1

    @property
    def n_dofs(self) -> int:
        m1, m2 = self.interior_shape
        return max(m1, 0) * max(m2, 0)

    def quadrature_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical Gauss points, shape ``(n_elements, 4)`` each."""
        k1, k2 = self.n_intervals
        h1, h2 = self.h
        e1, e2 = np.meshgrid(np.arange(k1), np.arange(k2), indexing="ij")
        z1 = (e1.ravel()[:, None] + _S[None, :]) * h1
        z2 = (e2.ravel()[:, None] + _T[None, :]) * h2
        return z1, z2

    def element_dofs(self) -> np.ndarray:
        """Interior dof number of each local node, ``-1`` on the boundary."""
        k1, k2 = self.n_intervals
        m1, m2 = self.interior_shape
        e1, e2 = np.meshgrid(np.arange(k1), np.arange(k2), indexing="ij")
        e1, e2 = e1.ravel(), e2.ravel()
        corners = [(e1, e2), (e1 + 1, e2), (e1, e2 + 1), (e1 + 1, e2 + 1)]
        out = np.empty((e1.size, 4), dtype=np.int64)
        for j, (i1, i2) in enumerate(corners):
            inside = (i1 > 0) & (i1 < k1) & (i2 > 0) & (i2 < k2)
            out[:, j] = np.where(inside, (i1 - 1) * m2 + (i2 - 1), -1)
        return out

    def to_nodal(self, u: np.ndarray) -> np.ndarray:
        """Embed interior values ``(..., n_dofs)`` into a full nodal grid."""
        k1, k2 = self.n_intervals
        m1, m2 = self.interior_shape
        out = np.zeros(u.shape[:-1] + (k1 + 1, k2 + 1))
        if self.n_dofs:
            out[..., 1:-1, 1:-1] = u.reshape(u.shape[:-1] + (m1, m2))
        return out


def _local_stiffness_kernel(grid: Grid2D) -> np.ndarray:
    h1, h2 = grid.h
    g1 = _DS / h1
    g2 = _DT / h2
    b = g1[:, :, None] * g1[:, None, :] + g2[:, :, None] * g2[:, None, :]
    return b * (_WQ * h1 * h2)[:, None, None]


def _scatter(grid: Grid2D, local: np.ndarray) -> sp.csr_matrix:
    dofs = grid.element_dofs()
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    n = grid.n_dofs
    mat = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(n, n))
    return mat.tocsr()


def assemble_stiffness_2d(grid: Grid2D, coef_q: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix for coefficient values given at the Gauss points."""
    kernel = _local_stiffness_kernel(grid)
    local = np.einsum("eq,qij->eij", coef_q, kernel)
    return _scatter(grid, local)


def assemble_load_2d(grid: Grid2D, forcing_q: np.ndarray) -> np.ndarray:
    h1, h2 = grid.h
    local = np.einsum("eq,qi->ei", forcing_q * (_WQ * h1 * h2), _N)
    dofs = grid.element_dofs()
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local[keep], minlength=grid.n_dofs)


def point_evaluation_matrix(grid: Grid2D, points) -> sp.csr_matrix:
    """Sparse map from interior dofs to bilinear-interpolated point values."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k1, k2 = grid.n_intervals
    h1, h2 = grid.h
    e1 = np.clip(np.floor(points[:, 0] / h1).astype(int), 0, k1 - 1)
    e2 = np.clip(np.floor(points[:, 1] / h2).astype(int), 0, k2 - 1)
    s = points[:, 0] / h1 - e1
    t = points[:, 1] / h2 - e2
    weights = np.stack([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t], axis=1)
    dofs = grid.element_dofs()[e1 * k2 + e2]
    rows = np.repeat(np.arange(len(points)), 4).reshape(-1, 4)
    keep = dofs >= 0
    return sp.csr_matrix(
        (weights[keep], (rows[keep], dofs[keep])), shape=(len(points), grid.n_dofs)
    )


def fem_solve_2d(levels, coefficient, forcing, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``-div(a grad u) = f`` on the unit square with zero boundary.

    ``coefficient`` and ``forcing`` are callables of ``(z1, z2)``.  Returns the
    nodal solution on the ``(2**l1 + 1, 2**l2 + 1)`` grid.  The SPD system is
    solved by sparse LU and the relative residual checked against ``rtol``.
    """
    grid = Grid2D(tuple(int(v) for v in levels))
    if grid.n_dofs == 0:
        return grid.to_nodal(np.zeros(0))
    z1, z2 = grid.quadrature_points()
    aq = np.broadcast_to(np.asarray(coefficient(z1, z2), dtype=float), z1.shape)
    _check_elliptic(aq)
    fq = np.broadcast_to(np.asarray(forcing(z1, z2), dtype=float), z1.shape)
    a = assemble_stiffness_2d(grid, aq)
    b = assemble_load_2d(grid, fq)
    u = spla.spsolve(a.tocsc(), b)
    res = np.linalg.norm(a @ u - b)
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    if res > rtol * scale:
        raise FEMError(f"linear solve residual {res / scale:.3e} exceeds {rtol:.1e}")
    return grid.to_nodal(u)
