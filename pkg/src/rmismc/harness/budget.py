"""Translate a target cost into estimator parameters.

For a target cost ``C`` and base cost ``c0`` write ``t = log2(C / c0)``.

* Single level: the bias ``2**(-s_i L_i)`` is balanced against the sampling
  error, giving ``log2(1/eps) = t / (2 + sum_i gamma_i / s_i)``,
  ``L_i = round(log2(1/eps) / s_i)`` and ``N = C / cost(one particle)``.
* Deterministic multi-index: canonical complexity ``C ~ eps**-2`` gives
  ``log2(1/eps) = t / 2`` and ``L_i = ceil(log2(1/eps) / s_i)`` (tensor
  product); the total-degree bound is the smallest one that contains the
  same axis levels.  Sample sizes follow
  :func:`~rmismc.estimators.allocate_samples_deterministic`; levels are
  lowered until the budget is feasible.
* Randomized: ``N = C / E_p[cost of one particle]``, rounded down to a
  multiple of ``N_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..estimators import (
    EstimatorConfig,
    InfeasibleBudgetError,
    allocate_samples_deterministic,
    per_particle_cost,
    rmismc_expected_cost,
)
from ..multiindex import IndexSet
from ..smc import SMCConfig, expected_smc_cost
from .config import ConfigError, MethodBlock


@dataclass
class Plan:
    method: str
    kind: str
    budget: float
    expected_cost: float
    estimator: EstimatorConfig
    summary: dict = field(default_factory=dict)


def base_cost(model, smc_config: SMCConfig, method: MethodBlock) -> float:
    if method.c0 is not None:
        return float(method.c0)
    start = tuple(model.start_level)
    return expected_smc_cost(model, start, 1, smc_config, offset=start)


def _levels_key(alpha) -> str:
    return "-".join(str(a) for a in alpha)


def plan_single_level(model, smc_config, method: MethodBlock, budget: float, z_min: float) -> Plan:
    s = np.asarray(method.rates.s, dtype=float)
    g = np.asarray(method.rates.gamma, dtype=float)
    t = max(0.0, math.log2(budget / base_cost(model, smc_config, method)))
    log_eps = t / (2.0 + float(np.sum(g / s)))
    rel = np.maximum(0, np.round(log_eps / s)).astype(int)
    if method.max_level is not None:
        rel = np.minimum(rel, np.asarray(method.max_level) - np.asarray(model.start_level))
    alpha = tuple(int(o + r) for o, r in zip(model.start_level, rel))
    unit = expected_smc_cost(model, alpha, 1, smc_config, offset=alpha)
    n = int(budget // unit)
    if n < 2:
        raise InfeasibleBudgetError(
            f"{method.name}: budget {budget:.4g} buys fewer than 2 particles at {alpha}", 2 * unit
        )
    est = EstimatorConfig("single_level", z_min, alpha=alpha, n=n)
    return Plan(method.name, "single_level", budget, n * unit, est, {"alpha": _levels_key(alpha), "N": n})


def _index_set(model, method: MethodBlock, rel_levels: np.ndarray) -> IndexSet:
    off = tuple(model.start_level)
    if method.index_set == "tensor_product":
        return IndexSet.tensor_product(tuple(int(v) for v in rel_levels), off)
    d = len(off)
    w = np.asarray(method.weights if method.weights is not None else [1.0 / d] * d)
    total = float(np.max(w * rel_levels))
    return IndexSet.total_degree(total, tuple(w), off)


def plan_mismc(model, smc_config, method: MethodBlock, budget: float, z_min: float) -> Plan:
    s = np.asarray(method.rates.s, dtype=float)
    t = max(0.0, math.log2(budget / base_cost(model, smc_config, method)))
    rel = np.maximum(0, np.ceil(t / 2.0 / s - 1e-9)).astype(int)
    if method.max_level is not None:
        rel = np.minimum(rel, np.asarray(method.max_level) - np.asarray(model.start_level))
    unit = per_particle_cost(model, smc_config)
    while True:
        iset = _index_set(model, method, rel)
        try:
            sizes = allocate_samples_deterministic(iset, method.rates.beta, method.rates.gamma, budget, unit,
                                                   method.n_floor)
            break
        except InfeasibleBudgetError:
            if not np.any(rel > 0):
                raise
            rel = np.maximum(rel - 1, 0)
    cost = sum(n * unit(a) for a, n in sizes.items())
    est = EstimatorConfig("mismc", z_min, index_set=iset, sample_sizes=sizes)
    summary = {
        "index_set": method.index_set,
        "levels": _levels_key(rel),
        "n_indices": len(sizes),
        "N": ";".join(f"{_levels_key(a)}:{n}" for a, n in sizes.items()),
    }
    return Plan(method.name, "mismc", budget, cost, est, summary)


def plan_rmismc(model, smc_config, method: MethodBlock, budget: float, z_min: float) -> Plan:
    dist = method.allocation(tuple(model.start_level))
    try:
        per = rmismc_expected_cost(model, dist, 1, smc_config)
    except ValueError as exc:
        raise ConfigError(f"{method.name}: {exc}") from None
    n = int(budget / per) // method.n_min * method.n_min
    if n < method.n_min:
        raise InfeasibleBudgetError(
            f"{method.name}: budget {budget:.4g} is below one batch of N_min={method.n_min} samples",
            method.n_min * per,
        )
    est = EstimatorConfig("rmismc", z_min, allocation=dist, n=n, n_min=method.n_min)
    return Plan(method.name, "rmismc", budget, n * per, est, {"N": n, "N_min": method.n_min})


def plan(model, smc_config: SMCConfig, method: MethodBlock, budget: float, z_min: float) -> Plan:
    if len(method.rates.s) != model.dim:
        raise ConfigError(f"{method.name}: rates have {len(method.rates.s)} directions, model has {model.dim}")
    if method.kind == "single_level":
        return plan_single_level(model, smc_config, method, budget, z_min)
    if method.kind == "mismc":
        return plan_mismc(model, smc_config, method, budget, z_min)
    return plan_rmismc(model, smc_config, method, budget, z_min)
