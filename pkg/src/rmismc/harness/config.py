"""Experiment configuration: a strict YAML schema.

Unknown keys anywhere in the file are errors, so a typo in a rate parameter
cannot silently fall back to a default.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..multiindex import AllocationDistribution, IndexSet
from ..smc import MutationConfig, SMCConfig, TemperingSchedule


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelBlock(_Strict):
    family: Literal["toy1d", "elliptic2d", "lgc", "lgp"]
    # toy1d / elliptic2d
    x_true: Optional[Union[float, list[float]]] = None
    noise_sd: Optional[float] = None
    data: Optional[list[float]] = None
    data_level: Optional[list[int]] = None
    data_seed: int = 0
    # lgc / lgp
    theta: Optional[list[float]] = None
    smoothness: float = 1.6
    truncation: Literal["full", "half"] = "full"
    start_level: Optional[list[int]] = None
    data_file: Optional[str] = None
    n_points: int = 126
    intensity_shift: Optional[float] = None

    @field_validator("noise_sd")
    @classmethod
    def _positive_noise(cls, v):
        if v is not None and not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("theta")
    @classmethod
    def _theta_len(cls, v):
        if v is not None and len(v) != 3:
            raise ValueError("theta needs three entries (theta1, theta2, theta3)")
        return v


class SMCBlock(_Strict):
    n_temperatures: int = Field(5, ge=2)
    schedule: Literal["linear", "geometric"] = "linear"
    n_mcmc: int = Field(2, ge=0)
    step: float = Field(0.3, ge=0.0)
    resampling: Literal["systematic", "multinomial"] = "systematic"
    resample_threshold: Optional[float] = None
    adaptive_ess: Optional[float] = None
    max_memory_gb: Optional[float] = Field(None, gt=0.0)

    def build(self) -> SMCConfig:
        sched = (TemperingSchedule.linear if self.schedule == "linear" else TemperingSchedule.geometric)(
            self.n_temperatures
        )
        return SMCConfig(sched, MutationConfig(self.n_mcmc, self.step), self.resampling,
                         self.resample_threshold, self.adaptive_ess,
                         None if self.max_memory_gb is None else self.max_memory_gb * 2**30)


class RatesBlock(_Strict):
    """Weak rate ``s``, strong rate ``beta`` and cost rate ``gamma`` per direction."""

    s: list[float]
    beta: list[float]
    gamma: list[float]

    @field_validator("s", "beta", "gamma")
    @classmethod
    def _positive(cls, v):
        if not v or any(not x > 0 for x in v):
            raise ValueError("rates must be non-empty and positive")
        return v


class MethodBlock(_Strict):
    name: str
    kind: Literal["single_level", "mismc", "rmismc"]
    rates: RatesBlock
    # base cost in the budget-to-parameters mapping (defaults to one particle at the start level)
    c0: Optional[float] = None
    index_set: Literal["tensor_product", "total_degree"] = "tensor_product"
    weights: Optional[list[float]] = None
    n_floor: int = Field(50, ge=2)
    n_min: int = Field(10, ge=2)
    max_level: Optional[list[int]] = None
    budgets: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check(self):
        d = len(self.rates.s)
        if not (len(self.rates.beta) == len(self.rates.gamma) == d):
            raise ValueError("rates.s, rates.beta and rates.gamma must have equal length")
        if self.kind == "rmismc" and any(b <= g for b, g in zip(self.rates.beta, self.rates.gamma)):
            raise ValueError("rates.beta must exceed rates.gamma in every direction for rmismc")
        if self.weights is not None:
            # raises a message naming the field
            IndexSet.total_degree(1.0, self.weights)
            if len(self.weights) != d:
                raise ValueError("weights: length must match the number of directions")
        if self.budgets is not None:
            _check_ladder(self.budgets)
        return self

    def allocation(self, offset) -> AllocationDistribution:
        return AllocationDistribution.from_rates(self.rates.beta, self.rates.gamma, offset)


def _check_ladder(budgets):
    if len(budgets) < 1 or any(not b > 0 for b in budgets):
        raise ValueError("budgets must be positive")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be strictly increasing")


class ReferenceBlock(_Strict):
    method: Literal["quadrature", "smc", "rmismc", "value"] = "quadrature"
    value: Optional[float] = None
    level: Optional[list[int]] = None
    n_nodes: int = Field(400, ge=8)
    n_particles: int = Field(10000, ge=2)
    n_seeds: int = Field(10, ge=2)

    @model_validator(mode="after")
    def _check(self):
        if self.method == "value" and self.value is None:
            raise ValueError("reference.value is required when reference.method is 'value'")
        return self


class RatesAuditBlock(_Strict):
    directions: Optional[list[Union[int, Literal["diagonal"]]]] = None
    n_levels: int = Field(4, ge=3)
    replications: int = Field(20, ge=2)
    n_samples: int = Field(1000, ge=2)
    method: Literal["prior", "smc"] = "prior"
    quantity: Literal["phi", "one"] = "phi"


class ExperimentConfig(_Strict):
    name: str
    seed: int = 0
    realizations: int = Field(..., ge=2)
    budgets: list[float]
    model: ModelBlock
    smc: SMCBlock = SMCBlock()
    methods: list[MethodBlock]
    reference: ReferenceBlock = ReferenceBlock()
    rates: RatesAuditBlock = RatesAuditBlock()
    z_min: Optional[float] = None
    failure_threshold: float = Field(0.05, ge=0.0, le=1.0)
    output_dir: str = "results"

    @field_validator("budgets")
    @classmethod
    def _ladder(cls, v):
        _check_ladder(v)
        return v

    @field_validator("z_min")
    @classmethod
    def _zmin(cls, v):
        if v is not None and not v > 0:
            raise ValueError("must be positive")
        return v

    @model_validator(mode="after")
    def _unique_methods(self):
        names = [m.name for m in self.methods]
        if not names:
            raise ValueError("methods: at least one method required")
        if len(set(names)) != len(names):
            raise ValueError("methods: names must be unique")
        return self

    def budgets_for(self, method: MethodBlock) -> list[float]:
        return list(method.budgets if method.budgets is not None else self.budgets)

    def smc_config(self) -> SMCConfig:
        return self.smc.build()


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        lines.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)
