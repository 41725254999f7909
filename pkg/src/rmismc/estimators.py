"""Ratio estimators assembled from SMC increment estimates.

Each estimator returns ``numerator / max(denominator, z_min)`` where the
numerator and denominator are sums of unnormalized increment estimates of
the QoI and of 1.  Supported kinds:

* single-level SMC at one index,
* deterministic multi-index SMC over a downward-closed index set (the
  multilevel method is the case ``D = 1``),
* randomized multi-index SMC, whose index counts are multinomial draws and
  whose unnormalized parts carry no discretization bias.

Per-index runs use their own random streams derived from the estimator's
seed and the index, so results do not depend on execution order.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .multiindex import (
    AllocationDistribution,
    IndexSet,
    MultiIndex,
    allocation_probability,
    as_index,
    enumerate_index_set,
    sample_allocation,
)
from .smc import DegeneratePopulationError, IncrementEstimate, SMCConfig, expected_smc_cost, run_smc

N_FLOOR = 50


class InfeasibleBudgetError(ValueError):
    """The budget cannot give every index its minimum sample size."""

    def __init__(self, message: str, minimum_budget: float):
        super().__init__(message)
        self.minimum_budget = minimum_budget


@dataclass
class EstimateResult:
    kind: str
    value: float
    numerator: float
    denominator_raw: float
    clamped: bool
    z_min: float
    total_cost: float
    populated_indices: dict[MultiIndex, int]
    increments: list[IncrementEstimate] = field(default_factory=list, repr=False)
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to run and its sample sizes.

    ``kind`` is ``"single_level"`` (uses ``alpha`` and ``n``), ``"mismc"``
    (uses ``index_set`` and ``sample_sizes``) or ``"rmismc"`` (uses
    ``allocation``, ``n`` and ``n_min``).
    """

    kind: str
    z_min: float
    alpha: MultiIndex | None = None
    n: int | None = None
    index_set: IndexSet | None = None
    sample_sizes: dict | None = None
    allocation: AllocationDistribution | None = None
    n_min: int = 1

    def __post_init__(self):
        if not self.z_min > 0:
            raise ValueError(f"z_min must be positive, got {self.z_min}")
        if self.kind == "single_level":
            if self.alpha is None or self.n is None:
                raise ValueError("single_level needs alpha and n")
        elif self.kind == "mismc":
            if self.index_set is None or self.sample_sizes is None:
                raise ValueError("mismc needs index_set and sample_sizes")
        elif self.kind == "rmismc":
            if self.allocation is None or self.n is None:
                raise ValueError("rmismc needs allocation and n")
        else:
            raise ValueError(f"unknown estimator kind {self.kind!r}")


def _ratio(kind, num, den, z_min, cost, populated, incs, t0) -> EstimateResult:
    clamped = bool(den < z_min)
    value = num / max(den, z_min)
    return EstimateResult(
        kind=kind,
        value=float(value),
        numerator=float(num),
        denominator_raw=float(den),
        clamped=clamped,
        z_min=float(z_min),
        total_cost=float(cost),
        populated_indices=populated,
        increments=incs,
        wall_seconds=time.perf_counter() - t0,
    )


def _run_at(model, alpha, n, smc_config, seed) -> IncrementEstimate:
    rng = seeding.generator(seeding.child(seed, tuple(alpha)))
    try:
        return run_smc(model, alpha, n, smc_config, rng)
    except DegeneratePopulationError as exc:
        if exc.alpha is None:
            exc.alpha = tuple(alpha)
        raise


def single_level_estimate(model, alpha, n: int, smc_config: SMCConfig, seed, z_min: float) -> EstimateResult:
    """Plain SMC ratio at one resolution (no mixed difference)."""
    t0 = time.perf_counter()
    alpha = model.check_index(alpha)
    rng = seeding.generator(seeding.child(seed, tuple(alpha)))
    inc = run_smc(model, alpha, n, smc_config, rng, offset=alpha)
    return _ratio("single_level", inc.F_phi, inc.F_one, z_min, inc.cost, {alpha: int(n)}, [inc], t0)


def mismc_estimate(model, index_set: IndexSet, sample_sizes: dict, smc_config: SMCConfig, seed,
                   z_min: float) -> EstimateResult:
    """Deterministic multi-index ratio over ``index_set`` with ``N_alpha`` particles each."""
    t0 = time.perf_counter()
    members = enumerate_index_set(index_set)
    if tuple(index_set.offset) != tuple(model.start_level):
        raise ValueError(f"index set offset {index_set.offset} differs from model start {model.start_level}")
    sizes = {as_index(k): int(v) for k, v in sample_sizes.items()}
    missing = [a for a in members if a not in sizes]
    if missing:
        raise ValueError(f"no sample size for indices {missing}")
    small = [a for a in members if sizes[a] < 2]
    if small:
        raise ValueError(f"need N_alpha >= 2, got {[(a, sizes[a]) for a in small]}")
    num = den = cost = 0.0
    incs = []
    for a in members:
        inc = _run_at(model, a, sizes[a], smc_config, seed)
        num += inc.F_phi
        den += inc.F_one
        cost += inc.cost
        incs.append(inc)
    return _ratio("mismc", num, den, z_min, cost, {a: sizes[a] for a in members}, incs, t0)


def mlsmc_estimate(model, max_level: int, sample_sizes: dict, smc_config: SMCConfig, seed,
                   z_min: float) -> EstimateResult:
    """Multilevel SMC: the multi-index estimator with one direction."""
    if model.dim != 1:
        raise ValueError("the multilevel estimator needs a one-directional model")
    iset = IndexSet.tensor_product((max_level - model.start_level[0],), model.start_level)
    return mismc_estimate(model, iset, sample_sizes, smc_config, seed, z_min)


def rmismc_estimate(model, allocation: AllocationDistribution, n: int, n_min: int, smc_config: SMCConfig,
                    seed, z_min: float) -> EstimateResult:
    """Randomized multi-index ratio with ``N / N_min`` multinomial index draws."""
    t0 = time.perf_counter()
    if tuple(allocation.offset) != tuple(model.start_level):
        raise ValueError(f"allocation offset {allocation.offset} differs from model start {model.start_level}")
    if n_min < 2:
        raise ValueError("n_min must be >= 2 so every populated index runs at least 2 particles")
    counts = sample_allocation(allocation, n, n_min, seeding.generator(seeding.child(seed, "allocation")))
    num = den = cost = 0.0
    incs = []
    for a, n_a in counts.items():
        inc = _run_at(model, a, n_a, smc_config, seed)
        w = n_a / (n * allocation_probability(allocation, a))
        num += w * inc.F_phi
        den += w * inc.F_one
        cost += inc.cost
        incs.append(inc)
    return _ratio("rmismc", num, den, z_min, cost, counts, incs, t0)


def estimate(config: EstimatorConfig, model, smc_config: SMCConfig, seed) -> EstimateResult:
    """Dispatch on ``config.kind``."""
    if config.kind == "single_level":
        return single_level_estimate(model, config.alpha, config.n, smc_config, seed, config.z_min)
    if config.kind == "mismc":
        return mismc_estimate(model, config.index_set, config.sample_sizes, smc_config, seed, config.z_min)
    return rmismc_estimate(model, config.allocation, config.n, config.n_min, smc_config, seed, config.z_min)


# --------------------------------------------------------------------------
# sample sizes and costs
# --------------------------------------------------------------------------


def allocate_samples_deterministic(index_set: IndexSet, beta, gamma, budget: float, unit_cost,
                                   n_floor: int = N_FLOOR) -> dict[MultiIndex, int]:
    """``N_alpha`` proportional to ``prod_i 2**(-(alpha_i - o_i)(beta_i + gamma_i) / 2)``.

    ``unit_cost(alpha)`` is the cost of one particle at ``alpha``; the
    proportionality constant is chosen so that ``sum N_alpha unit_cost``
    matches ``budget`` before rounding up and flooring at ``n_floor``.
    """
    members = enumerate_index_set(index_set)
    d = index_set.dim
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (d,))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (d,))
    off = np.asarray(index_set.offset)
    shape = {a: float(np.prod(2.0 ** (-(np.asarray(a) - off) * (beta + gamma) / 2.0))) for a in members}
    costs = {a: float(unit_cost(a)) for a in members}
    minimum = sum(n_floor * costs[a] for a in members)
    if budget < minimum:
        raise InfeasibleBudgetError(
            f"budget {budget:.4g} is below the minimum feasible budget {minimum:.4g} "
            f"({n_floor} particles at each of {len(members)} indices)",
            minimum,
        )
    scale = budget / sum(shape[a] * costs[a] for a in members)
    return {a: max(int(n_floor), int(math.ceil(scale * shape[a] - 1e-9))) for a in members}


def per_particle_cost(model, smc_config: SMCConfig, offset=None):
    """``alpha -> `` abstract cost of one particle of a coupled run at ``alpha``."""
    return lambda alpha: expected_smc_cost(model, alpha, 1, smc_config, offset)


def _shell(offset, s: int):
    """Indices with ``sum(alpha - offset) == s``."""
    d = len(offset)
    for bars in itertools.combinations(range(s + d - 1), d - 1):
        parts = np.diff((-1,) + bars + (s + d - 1,)) - 1
        yield tuple(int(o + p) for o, p in zip(offset, parts))


def rmismc_expected_cost(model, allocation: AllocationDistribution, n: int, smc_config: SMCConfig,
                         rtol: float = 1e-15, max_shells: int = 2000) -> float:
    """``N * E_p[per-particle cost]``, summed shell by shell over ``|alpha - offset|_1``.

    Summation stops once ten consecutive shells each add less than ``rtol``
    of the running total; non-convergence (``beta <= gamma`` in effect)
    raises ``ValueError``.
    """
    unit = per_particle_cost(model, smc_config)
    total = 0.0
    quiet = 0
    for s in range(max_shells):
        shell = sum(allocation_probability(allocation, a) * unit(a) for a in _shell(allocation.offset, s))
        total += shell
        quiet = quiet + 1 if shell < rtol * total else 0
        if quiet >= 10:
            return float(n) * total
    raise ValueError("expected cost per sample does not converge; need beta > gamma in every direction")


def pilot_z_min(model, smc_config: SMCConfig, seed, n: int = 100, factor: float = 1e-8) -> float:
    """``factor`` times a cheap single-level estimate of the normalizer."""
    rng = seeding.generator(seeding.child(seed, "pilot"))
    alpha = tuple(model.start_level)
    inc = run_smc(model, alpha, n, smc_config, rng, offset=alpha)
    return factor * inc.Z_hat
