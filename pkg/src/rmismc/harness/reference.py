"""Reference values of the posterior expectation of the QoI.

Low-dimensional uniform priors are handled by deterministic Gauss-Legendre
quadrature (exact forward solution for the toy model, a fine FEM level for
the 2D PDE).  Otherwise the reference is an average of independent SMC or
randomized multi-index runs, reported with a standard error.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .. import seeding
from ..estimators import rmismc_estimate, single_level_estimate
from ..models.toy import Toy1DModel
from .config import ConfigError, ExperimentConfig


@dataclass
class Reference:
    value: float
    std_error: float
    method: str
    details: dict = field(default_factory=dict)


def toy_quadrature(model: Toy1DModel, n_nodes: int = 400, level=None) -> float:
    """Posterior mean of the QoI by Gauss-Legendre quadrature over [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(n_nodes))
    states = x[:, None]
    ll = model.log_likelihood(level, states)
    lik = np.exp(ll - ll.max())
    return float(np.sum(w * lik * model.qoi(level, states)) / np.sum(w * lik))


def toy_trapezoid(model: Toy1DModel, n_points: int = 2**16 + 1, level=None) -> float:
    x = np.linspace(-1.0, 1.0, int(n_points))
    states = x[:, None]
    ll = model.log_likelihood(level, states)
    lik = np.exp(ll - ll.max())
    return float(trapezoid(lik * model.qoi(level, states), x) / trapezoid(lik, x))


def tensor_quadrature(model, level, n_nodes: int = 400) -> float:
    """Gauss-Legendre tensor rule over ``[-1, 1]**d`` at a fixed resolution."""
    d = model.n_params
    m = max(2, int(math.ceil(n_nodes ** (1.0 / d))))
    x, w = np.polynomial.legendre.leggauss(m)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    states = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=0), axis=0).ravel()
    ll, q = model.log_likelihood_and_qoi(tuple(level), states)
    lik = np.exp(ll - ll.max())
    return float(np.sum(weights * lik * q) / np.sum(weights * lik))


def compute_reference(cfg: ExperimentConfig, model, smc_config, z_min: float) -> Reference:
    block = cfg.reference
    fam = cfg.model.family
    if block.method == "value":
        return Reference(float(block.value), 0.0, "value")
    if block.method == "quadrature":
        if fam == "toy1d":
            level = None if block.level is None else tuple(block.level)
            v = toy_quadrature(model, block.n_nodes, level)
            check = toy_trapezoid(model, level=level)
            return Reference(v, 0.0, "quadrature", {"nodes": block.n_nodes, "trapezoid_check": check,
                                                     "level": "exact" if level is None else list(level)})
        if fam == "elliptic2d":
            level = tuple(block.level or (7, 7))
            v = tensor_quadrature(model, level, block.n_nodes)
            return Reference(v, 0.0, "quadrature", {"nodes": block.n_nodes, "level": list(level)})
        raise ConfigError(f"reference.method: quadrature is not available for {fam}; use smc or rmismc")

    root = seeding.child(cfg.seed, "reference")
    nums, dens = [], []
    if block.method == "smc":
        level = tuple(block.level or tuple(a + 2 for a in model.start_level))
        for r in range(block.n_seeds):
            res = single_level_estimate(model, level, block.n_particles, smc_config, seeding.child(root, r), z_min)
            nums.append(res.numerator)
            dens.append(res.denominator_raw)
        details = {"level": list(level), "n_particles": block.n_particles}
    else:
        methods = [m for m in cfg.methods if m.kind == "rmismc"]
        if not methods:
            raise ConfigError("reference.method: rmismc reference needs an rmismc method block")
        mb = methods[0]
        dist = mb.allocation(tuple(model.start_level))
        n = max(mb.n_min, block.n_particles // mb.n_min * mb.n_min)
        for r in range(block.n_seeds):
            res = rmismc_estimate(model, dist, n, mb.n_min, smc_config, seeding.child(root, r), z_min)
            nums.append(res.numerator)
            dens.append(res.denominator_raw)
        details = {"method_block": mb.name, "N": n}
    nums, dens = np.array(nums), np.array(dens)
    value = float(nums.mean() / dens.mean())
    # delta-method standard error of a ratio of means
    resid = (nums - value * dens) / dens.mean()
    se = float(resid.std(ddof=1) / math.sqrt(len(nums)))
    details["n_seeds"] = block.n_seeds
    return Reference(value, se, block.method, details)


def fingerprint(cfg: ExperimentConfig) -> str:
    blob = json.dumps(
        {"model": cfg.model.model_dump(), "reference": cfg.reference.model_dump(), "smc": cfg.smc.model_dump(),
         "seed": cfg.seed, "methods": [m.model_dump() for m in cfg.methods] if cfg.reference.method == "rmismc" else []},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_reference(path: Path, ref: Reference, key: str) -> None:
    path.write_text(json.dumps({"fingerprint": key, **asdict(ref)}, indent=2, sort_keys=True) + "\n")


def load_cached_reference(path: Path, key: str) -> Reference | None:
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    if data.pop("fingerprint", None) != key:
        return None
    return Reference(**data)
