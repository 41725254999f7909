"""Multi-index arithmetic.

Multi-indices are plain tuples of non-negative ints, one resolution exponent
per direction (mesh diameter ``2**-alpha[i]`` in direction ``i``).  Index sets
and allocation distributions carry an explicit ``offset``: the coarsest index
the model supports.  The mixed-difference boundary rule applies at the offset,
so estimator code never needs to know a model's physical starting level.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

MultiIndex = tuple[int, ...]

_TD_TOL = 1e-12


def as_index(alpha: Iterable[int] | int) -> MultiIndex:
    """Coerce ``alpha`` to a validated multi-index tuple."""
    if isinstance(alpha, (int, np.integer)):
        alpha = (alpha,)
    out = tuple(int(a) for a in alpha)
    if len(out) == 0:
        raise ValueError("multi-index must have at least one component")
    if any(a < 0 for a in out):
        raise ValueError(f"multi-index components must be >= 0, got {out}")
    return out


def _offset_for(alpha: MultiIndex, offset: Sequence[int] | None) -> MultiIndex:
    if offset is None:
        return (0,) * len(alpha)
    off = as_index(offset)
    if len(off) != len(alpha):
        raise ValueError(f"offset {off} and index {alpha} differ in dimension")
    return off


class SignedSubIndex(NamedTuple):
    index: MultiIndex
    sign: int
    position: int


def subindex_expansion(alpha, offset=None) -> list[SignedSubIndex]:
    """Terms of the first-order mixed difference applied at ``alpha``.

    Every subset of the directions with ``alpha[i] > offset[i]`` is subtracted
    once, with sign ``(-1)**|S|``.  Directions sitting at the offset contribute
    only the identity term.  The first element is always ``(alpha, +1)``.

    >>> [(s.index, s.sign) for s in subindex_expansion((1, 1))]
    [((1, 1), 1), ((0, 1), -1), ((1, 0), -1), ((0, 0), 1)]
    """
    alpha = as_index(alpha)
    off = _offset_for(alpha, offset)
    if any(a < o for a, o in zip(alpha, off)):
        raise ValueError(f"index {alpha} lies below offset {off}")
    active = [i for i, (a, o) in enumerate(zip(alpha, off)) if a > o]
    terms = []
    for mask in range(1 << len(active)):
        sub = list(alpha)
        nbits = 0
        for bit, direction in enumerate(active):
            if mask >> bit & 1:
                sub[direction] -= 1
                nbits += 1
        terms.append(SignedSubIndex(tuple(sub), -1 if nbits % 2 else 1, mask + 1))
    return terms


def mixed_difference(values: Callable[[MultiIndex], float], alpha, offset=None) -> float:
    """Apply the mixed difference to a level-indexed scalar ``values``."""
    return sum(t.sign * values(t.index) for t in subindex_expansion(alpha, offset))


# --------------------------------------------------------------------------
# Index sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexSet:
    """A finite, downward-closed set of multi-indices.

    Build through :meth:`tensor_product`, :meth:`total_degree` or
    :meth:`explicit` rather than directly.
    """

    kind: str
    offset: MultiIndex
    levels: tuple[int, ...] = ()
    total: float = 0.0
    weights: tuple[float, ...] = ()
    items: tuple[MultiIndex, ...] = field(default=(), repr=False)

    @classmethod
    def tensor_product(cls, levels, offset=None) -> "IndexSet":
        levels = as_index(levels)
        return cls("tensor_product", _offset_for(levels, offset), levels=levels)

    @classmethod
    def total_degree(cls, total: float, weights: Sequence[float], offset=None) -> "IndexSet":
        weights = tuple(float(w) for w in weights)
        if not weights:
            raise ValueError("weights: at least one direction required")
        if any(not (0.0 < w <= 1.0) for w in weights):
            raise ValueError(f"weights: each weight must lie in (0, 1], got {weights}")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"weights: must sum to 1, got sum {sum(weights):.6g}")
        if total < 0:
            raise ValueError("total: must be non-negative")
        off = _offset_for((0,) * len(weights), offset)
        return cls("total_degree", off, total=float(total), weights=weights)

    @classmethod
    def explicit(cls, indices: Iterable[Sequence[int]], offset=None) -> "IndexSet":
        items = sorted({as_index(a) for a in indices})
        if not items:
            raise ValueError("explicit index set is empty")
        off = _offset_for(items[0], offset)
        members = set(items)
        for a in items:
            if len(a) != len(off) or any(x < o for x, o in zip(a, off)):
                raise ValueError(f"index {a} lies below offset {off}")
            for i in range(len(a)):
                if a[i] > off[i]:
                    down = a[:i] + (a[i] - 1,) + a[i + 1 :]
                    if down not in members:
                        raise ValueError(f"index set not downward closed: {a} present, {down} missing")
        return cls("explicit", off, items=tuple(items))

    @property
    def dim(self) -> int:
        return len(self.offset)

    @property
    def members(self) -> list[MultiIndex]:
        return enumerate_index_set(self)

    def __contains__(self, alpha) -> bool:
        alpha = as_index(alpha)
        rel = [a - o for a, o in zip(alpha, self.offset)]
        if len(alpha) != self.dim or min(rel) < 0:
            return False
        if self.kind == "tensor_product":
            return all(r <= lv for r, lv in zip(rel, self.levels))
        if self.kind == "total_degree":
            return sum(w * r for w, r in zip(self.weights, rel)) <= self.total + _TD_TOL
        return alpha in self.items

    def __len__(self) -> int:
        return len(self.members)


def enumerate_index_set(index_set: IndexSet) -> list[MultiIndex]:
    """Lexicographically ordered members of ``index_set``."""
    off = index_set.offset
    if index_set.kind == "tensor_product":
        ranges = [range(o, o + lv + 1) for o, lv in zip(off, index_set.levels)]
        return [tuple(a) for a in itertools.product(*ranges)]
    if index_set.kind == "total_degree":
        bounds = [int(math.floor(index_set.total / w + _TD_TOL)) for w in index_set.weights]
        ranges = [range(o, o + b + 1) for o, b in zip(off, bounds)]
        return [tuple(a) for a in itertools.product(*ranges) if a in index_set]
    if index_set.kind == "explicit":
        return list(index_set.items)
    raise ValueError(f"unknown index set kind {index_set.kind!r}")


# --------------------------------------------------------------------------
# Randomized allocation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AllocationDistribution:
    """Product-geometric distribution over multi-indices at or above ``offset``.

    ``p_alpha`` is proportional to ``prod_i 2**(-(alpha_i - offset_i) * (beta_i + gamma_i) / 2)``,
    which balances expected cost against the variance sum when ``beta_i > gamma_i``.
    """

    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    offset: MultiIndex

    def __post_init__(self):
        if not (len(self.beta) == len(self.gamma) == len(self.offset)):
            raise ValueError("beta, gamma and offset must share one dimension")
        for b, g in zip(self.beta, self.gamma):
            if not g > 0:
                raise ValueError(f"gamma must be positive, got {self.gamma}")
            if not b > g:
                raise ValueError(f"need beta_i > gamma_i in every direction, got beta={self.beta}, gamma={self.gamma}")

    @classmethod
    def from_rates(cls, beta, gamma, offset=None) -> "AllocationDistribution":
        beta = tuple(float(b) for b in np.atleast_1d(beta))
        gamma = tuple(float(g) for g in np.atleast_1d(gamma))
        if len(gamma) == 1 and len(beta) > 1:
            gamma = gamma * len(beta)
        if len(beta) == 1 and len(gamma) > 1:
            beta = beta * len(gamma)
        off = _offset_for((0,) * len(beta), offset)
        return cls(beta, gamma, off)

    @classmethod
    def point_mass(cls, alpha) -> "AllocationDistribution":
        """Degenerate distribution that always selects ``alpha``."""
        alpha = as_index(alpha)
        d = len(alpha)
        return cls((math.inf,) * d, (1.0,) * d, alpha)

    @property
    def dim(self) -> int:
        return len(self.offset)

    @property
    def ratios(self) -> np.ndarray:
        """Per-direction geometric ratios ``2**(-(beta + gamma) / 2)``."""
        return np.array([2.0 ** (-(b + g) / 2.0) for b, g in zip(self.beta, self.gamma)])

    @property
    def normalizer(self) -> float:
        return float(np.prod(1.0 / (1.0 - self.ratios)))

    def probability(self, alpha) -> float:
        return allocation_probability(self, alpha)

    def expected_cost_per_sample(self, gamma=None) -> float:
        """Closed form of ``sum_alpha p_alpha prod_i 2**((alpha_i - offset_i) gamma_i)``."""
        gamma = self.gamma if gamma is None else tuple(np.broadcast_to(gamma, (self.dim,)))
        out = 1.0
        for r, g in zip(self.ratios, gamma):
            q = r * 2.0**g
            if q >= 1.0:
                return math.inf
            out *= (1.0 - r) / (1.0 - q)
        return out


def allocation_probability(dist: AllocationDistribution, alpha) -> float:
    alpha = as_index(alpha)
    if len(alpha) != dist.dim:
        raise ValueError(f"index {alpha} has wrong dimension for distribution of dim {dist.dim}")
    rel = [a - o for a, o in zip(alpha, dist.offset)]
    if min(rel) < 0:
        raise ValueError(f"index {alpha} lies below offset {dist.offset}")
    p = 1.0
    for r, k in zip(dist.ratios, rel):
        p *= (1.0 - r) * (r**k if k else 1.0)
    return p


def sample_allocation(
    dist: AllocationDistribution, n: int, n_min: int, rng: np.random.Generator
) -> dict[MultiIndex, int]:
    """Draw ``n // n_min`` i.i.d. indices from ``dist`` and return scaled counts.

    The distribution factorizes over directions, so each draw is a vector of
    independent geometric variates.  Returned mapping is ordered
    lexicographically and sums to ``n``.
    """
    n, n_min = int(n), int(n_min)
    if n_min < 1:
        raise ValueError(f"n_min must be >= 1, got {n_min}")
    if n < n_min or n % n_min:
        raise ValueError(f"n={n} must be a positive multiple of n_min={n_min}")
    draws = n // n_min
    cols = []
    for r, o in zip(dist.ratios, dist.offset):
        # numpy's geometric counts trials to first success, support {1, 2, ...}
        cols.append(rng.geometric(1.0 - r, size=draws) - 1 + o)
    levels = np.stack(cols, axis=1)
    uniq, counts = np.unique(levels, axis=0, return_counts=True)
    return {tuple(int(v) for v in row): int(c) * n_min for row, c in zip(uniq, counts)}
