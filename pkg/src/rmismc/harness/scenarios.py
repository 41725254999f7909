"""Build forward models from a configuration block."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import seeding
from ..models import elliptic, toy
from ..models.point_process import (
    LGC_THETA,
    LGP_THETA,
    PointProcessModel,
    load_point_pattern,
    synthesize_point_pattern,
)
from ..models.spectral import SpectralGaussianPrior
from .config import ConfigError, ModelBlock


@dataclass
class Scenario:
    model: object
    data: np.ndarray
    provenance: str
    x_true: object = None


def _x_true(block: ModelBlock, dim: int, rng) -> np.ndarray:
    if block.x_true is None:
        return rng.uniform(-1.0, 1.0, size=dim)
    x = np.atleast_1d(np.asarray(block.x_true, dtype=float))
    if x.shape != (dim,):
        raise ConfigError(f"model.x_true: expected {dim} value(s), got {x.size}")
    return x


def prior_for(block: ModelBlock) -> SpectralGaussianPrior:
    theta = block.theta
    if theta is None:
        theta = LGC_THETA if block.family == "lgc" else LGP_THETA
    return SpectralGaussianPrior(tuple(float(t) for t in theta), block.smoothness, block.truncation)


def simulate_data(block: ModelBlock, seed=None) -> tuple[np.ndarray, object]:
    """Synthetic observations (or point pattern) and the true parameter used."""
    ss = seeding.child(block.data_seed if seed is None else seed, "data")
    rng = seeding.generator(ss)
    if block.family == "toy1d":
        x = _x_true(block, 1, rng)
        noise = toy.NOISE_SD if block.noise_sd is None else block.noise_sd
        return toy.synthesize_toy_data(float(x[0]), rng, noise), x
    if block.family == "elliptic2d":
        x = _x_true(block, 2, rng)
        noise = elliptic.NOISE_SD if block.noise_sd is None else block.noise_sd
        level = tuple(block.data_level or (7, 7))
        return elliptic.synthesize_elliptic_data(x, rng, level, noise), x
    prior = prior_for(block)
    level = tuple(block.data_level or (7, 7))
    shift = block.intensity_shift
    if shift is None:
        shift = math.log(block.n_points) if block.family == "lgc" else 0.0
    pts = synthesize_point_pattern(block.family, prior, rng, level, block.n_points, shift)
    return pts, None


def build_scenario(block: ModelBlock, base_dir: Path | None = None) -> Scenario:
    """Model with its data, synthesized unless supplied."""
    fam = block.family
    if fam in ("toy1d", "elliptic2d"):
        noise = (toy.NOISE_SD if fam == "toy1d" else elliptic.NOISE_SD) if block.noise_sd is None else block.noise_sd
        if block.data is not None:
            data, x_true, prov = np.asarray(block.data, dtype=float), None, "supplied"
        else:
            data, x_true = simulate_data(block)
            prov = f"synthetic (data_seed={block.data_seed})"
        cls = toy.Toy1DModel if fam == "toy1d" else elliptic.Elliptic2DModel
        try:
            model = cls(data, noise)
        except ValueError as exc:
            raise ConfigError(f"model.data: {exc}") from None
        return Scenario(model, data, prov, x_true)

    prior = prior_for(block)
    start = tuple(block.start_level or (5, 5))
    path = None
    if block.data_file is not None:
        path = Path(block.data_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
    if path is not None and path.exists():
        points = load_point_pattern(path)
        prov = f"file {path.name}"
    else:
        points, _ = simulate_data(block)
        prov = f"synthetic {fam} pattern (data_seed={block.data_seed})"
        if path is not None:
            prov += f"; {path.name} not found"
    model = PointProcessModel(fam, points, prior=prior, start_level=start)
    return Scenario(model, points, prov)
