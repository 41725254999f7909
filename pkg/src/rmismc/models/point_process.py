"""Log-Gaussian Cox (LGC) and log-Gaussian density (LGP) point-process models.

The latent field is the spectral Gaussian field of :mod:`.spectral` on the
periodic domain [0, 2]^2; the data live in [0, 1]^2.  At resolution ``alpha``
the field is synthesized on its FFT grid, ``x_hat`` is the bilinear
interpolant of the grid values and ``Q`` the trapezoidal rule over the
[0, 1]^2 sub-grid.  Both reduce to fixed weight arrays on the grid, so a
likelihood evaluation is one inverse FFT plus two weighted sums.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .base import ForwardModel
from .spectral import SpectralGaussianPrior, synthesis_cost

LGC_THETA = (0.0, 1.0, (33.0 / math.pi) ** 2)
LGP_THETA = (0.0, 1.0, (33.0 / (2.0 * math.pi)) ** 2)
START_LEVEL = (5, 5)


class PointPatternError(ValueError):
    """Malformed or out-of-domain point pattern."""


def load_point_pattern(path) -> np.ndarray:
    """Read a ``z1,z2`` CSV of points in [0, 1]^2 into an ``(n, 2)`` array."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["z1", "z2"]:
            raise PointPatternError(f"{path}: expected header 'z1,z2', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise PointPatternError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise PointPatternError(f"{path}:{lineno}: {exc}") from None
    points = np.array(rows, dtype=float).reshape(-1, 2)
    check_points(points)
    return points


def save_point_pattern(path, points) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z1", "z2"])
        writer.writerows((repr(float(a)), repr(float(b))) for a, b in points)


def check_points(points: np.ndarray) -> None:
    if points.ndim != 2 or points.shape[1] != 2:
        raise PointPatternError(f"points must have shape (n, 2), got {points.shape}")
    bad = ~np.all(np.isfinite(points) & (points >= 0.0) & (points <= 1.0), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PointPatternError(f"point {i} = {points[i].tolist()} lies outside [0, 1]^2")


def bilinear_weights(points: np.ndarray, grid_shape, spacing) -> np.ndarray:
    """Grid array ``W`` with ``sum_i x_hat(z_i) = sum_g W_g x_g``."""
    m1, m2 = grid_shape
    h1, h2 = spacing
    w = np.zeros((m1, m2))
    if len(points) == 0:
        return w
    s1 = points[:, 0] / h1
    s2 = points[:, 1] / h2
    # the last cell of the [0, 1] sub-grid absorbs points on z = 1
    i1 = np.clip(np.floor(s1).astype(int), 0, int(round(1.0 / h1)) - 1)
    i2 = np.clip(np.floor(s2).astype(int), 0, int(round(1.0 / h2)) - 1)
    t1 = s1 - i1
    t2 = s2 - i2
    for d1, f1 in ((0, 1.0 - t1), (1, t1)):
        for d2, f2 in ((0, 1.0 - t2), (1, t2)):
            np.add.at(w, ((i1 + d1) % m1, (i2 + d2) % m2), f1 * f2)
    return w


def trapezoid_weights(grid_shape, spacing) -> np.ndarray:
    """Trapezoid weights over the nodes of [0, 1]^2, zero elsewhere on the grid."""
    w = np.zeros(grid_shape)
    axes = []
    for m, h in zip(grid_shape, spacing):
        n = int(round(1.0 / h))
        if n >= m:
            raise ValueError("grid does not extend beyond [0, 1]")
        a = np.full(n + 1, h)
        a[[0, -1]] = 0.5 * h
        axes.append(a)
    w[: axes[0].size, : axes[1].size] = np.outer(*axes)
    return w


class PointProcessModel(ForwardModel):
    """LGC (``kind="lgc"``) or LGP (``kind="lgp"``) posterior over field coefficients.

    States are complex coefficient arrays ``(N, 2 K1 + 1, K2 + 1)`` at the
    finest index in use.  The default kernel is preconditioned Crank-Nicolson.

    Parameters
    ----------
    kind : {"lgc", "lgp"}
    points : array_like, shape (n, 2)
        Observed locations in [0, 1]^2.
    prior : SpectralGaussianPrior, optional
        Defaults to the kind-specific ``theta`` with smoothness 1.6.
    start_level : tuple of int
        Coarsest resolution used by estimators.
    chunk_bytes : int
        Memory bound for one batch of synthesized grids.
    """

    dim = 2
    gamma = (1.0, 1.0)
    default_kernel = "pcn"

    def __init__(
        self,
        kind: str,
        points,
        prior: SpectralGaussianPrior | None = None,
        start_level=START_LEVEL,
        chunk_bytes: int = 64 * 2**20,
    ):
        kind = kind.lower()
        if kind not in ("lgc", "lgp"):
            raise ValueError(f"kind must be 'lgc' or 'lgp', got {kind!r}")
        self.kind = kind
        self.name = kind
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        check_points(self.points)
        if prior is None:
            prior = SpectralGaussianPrior(theta=LGC_THETA if kind == "lgc" else LGP_THETA)
        self.prior = prior
        self.start_level = tuple(int(a) for a in start_level)
        self.chunk_bytes = int(chunk_bytes)
        self._weights: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    @property
    def n_points(self) -> int:
        return len(self.points)

    def cost(self, alpha) -> float:
        return synthesis_cost(alpha)

    def grid_weights(self, levels):
        """``(W_interp, W_quad)`` on the FFT grid of ``levels``."""
        key = tuple(int(a) for a in levels)
        if key not in self._weights:
            shape = tuple(self.prior.grid_size(a) for a in key)
            spacing = tuple(2.0 / m for m in shape)
            self._weights[key] = (
                bilinear_weights(self.points, shape, spacing),
                trapezoid_weights(shape, spacing),
            )
        return self._weights[key]

    def sample_prior(self, alpha, n, rng):
        return self.prior.sample_coefficients(alpha, n, rng)

    def state_nbytes(self, alpha) -> int:
        return math.prod(self.prior.shape(alpha)) * np.dtype(complex).itemsize

    def propose(self, states, step, rng):
        """pCN move ``sqrt(1 - step**2) xi + step w``, reversible for the prior."""
        if step == 0.0:
            return states.copy()
        if not 0.0 < step <= 1.0:
            raise ValueError(f"pCN step must lie in (0, 1], got {step}")
        shape = states.shape
        w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
        mask = self.prior.mask(self._levels_of(states))
        return math.sqrt(1.0 - step**2) * states + step * (w * mask)

    def _levels_of(self, states) -> tuple[int, int]:
        n1, n2 = states.shape[-2:]
        for l1 in range(0, 40):
            if 2 * self.prior.max_mode(l1) + 1 == n1:
                break
        else:
            raise ValueError(f"cannot infer resolution from shape {states.shape}")
        for l2 in range(0, 40):
            if self.prior.max_mode(l2) + 1 == n2:
                break
        else:
            raise ValueError(f"cannot infer resolution from shape {states.shape}")
        return l1, l2

    def _reduce(self, alpha, states):
        """Per-particle ``(sum_i x_hat(z_i), Q(exp x))``."""
        alpha = tuple(int(a) for a in alpha)
        states = np.asarray(states)
        if states.ndim == 2:
            states = states[None]
        w_int, w_quad = self.grid_weights(alpha)
        # both weight arrays vanish outside the [0, 1]^2 corner of the grid
        c1, c2 = w_int.shape[0] // 2 + 1, w_int.shape[1] // 2 + 1
        w_int, w_quad = w_int[:c1, :c2], w_quad[:c1, :c2]
        per = 4 * c1 * c2 * 8 * 3
        step = max(1, self.chunk_bytes // per)
        s_obs = np.empty(states.shape[0])
        q = np.empty(states.shape[0])
        for start in range(0, states.shape[0], step):
            sl = slice(start, start + step)
            x = self.prior.grid_values(states[sl], alpha)[:, :c1, :c2]
            s_obs[sl] = np.einsum("nij,ij->n", x, w_int)
            q[sl] = np.einsum("nij,ij->n", np.exp(x), w_quad)
        return s_obs, q

    def log_likelihood(self, alpha, states):
        s_obs, q = self._reduce(alpha, states)
        if self.kind == "lgc":
            return s_obs - q
        return s_obs - self.n_points * np.log(q)

    def qoi(self, alpha, states):
        return self._reduce(alpha, states)[1]

    def log_likelihood_and_qoi(self, alpha, states):
        s_obs, q = self._reduce(alpha, states)
        ll = s_obs - q if self.kind == "lgc" else s_obs - self.n_points * np.log(q)
        return ll, q

    @classmethod
    def synthetic(cls, kind, rng, data_level=(7, 7), prior=None, n_points=126,
                  intensity_shift=math.log(126.0), **kwargs):
        """Model with a point pattern simulated from a prior draw of the field."""
        probe = cls(kind, np.zeros((0, 2)), prior=prior, **kwargs)
        pts = synthesize_point_pattern(kind, probe.prior, rng, data_level, n_points, intensity_shift)
        return cls(kind, pts, prior=probe.prior, **kwargs)


def _bilinear_field(grid: np.ndarray, z: np.ndarray) -> np.ndarray:
    m1, m2 = grid.shape
    h1, h2 = 2.0 / m1, 2.0 / m2
    s1, s2 = z[:, 0] / h1, z[:, 1] / h2
    i1 = np.minimum(np.floor(s1).astype(int), m1 // 2 - 1)
    i2 = np.minimum(np.floor(s2).astype(int), m2 // 2 - 1)
    t1, t2 = s1 - i1, s2 - i2
    return (
        grid[i1, i2] * (1 - t1) * (1 - t2)
        + grid[i1 + 1, i2] * t1 * (1 - t2)
        + grid[i1, i2 + 1] * (1 - t1) * t2
        + grid[i1 + 1, i2 + 1] * t1 * t2
    )


def poisson_thinning(log_intensity, log_bound: float, rng: np.random.Generator) -> np.ndarray:
    """Inhomogeneous Poisson process on [0, 1]^2 by thinning a homogeneous one.

    ``log_intensity`` maps ``(m, 2)`` points to log-intensities bounded by ``log_bound``.
    """
    count = rng.poisson(math.exp(log_bound))
    cand = rng.uniform(size=(count, 2))
    keep = np.log(rng.uniform(size=count)) < log_intensity(cand) - log_bound
    return cand[keep]


def sample_from_log_density(log_density, log_bound: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. points on [0, 1]^2 with density proportional to ``exp(log_density)``."""
    out = np.empty((0, 2))
    while len(out) < n:
        m = max(2 * (n - len(out)), 16)
        cand = rng.uniform(size=(m, 2))
        keep = np.log(rng.uniform(size=m)) < log_density(cand) - log_bound
        out = np.vstack([out, cand[keep]])
    return out[:n]


def synthesize_point_pattern(kind, prior: SpectralGaussianPrior, rng, data_level=(7, 7),
                             n_points: int = 126, intensity_shift: float = 0.0) -> np.ndarray:
    """Simulate data from a prior draw of the field at ``data_level``.

    LGC: Poisson process with intensity ``exp(x + intensity_shift)`` by
    thinning.  LGP: ``n_points`` i.i.d. draws from the density proportional
    to ``exp(x)``.  The field is bilinear on the grid, so its maximum over
    [0, 1]^2 is attained at a node and gives an exact thinning bound.
    """
    xi = prior.sample_coefficients(data_level, 1, rng)
    grid = prior.grid_values(xi, data_level)[0]
    m1, m2 = grid.shape
    top = float(grid[: m1 // 2 + 1, : m2 // 2 + 1].max())
    if kind == "lgc":
        return poisson_thinning(lambda z: _bilinear_field(grid, z) + intensity_shift,
                                top + intensity_shift, rng)
    if kind == "lgp":
        return sample_from_log_density(lambda z: _bilinear_field(grid, z), top, int(n_points), rng)
    raise ValueError(f"kind must be 'lgc' or 'lgp', got {kind!r}")
