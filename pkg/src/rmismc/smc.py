"""Tempered SMC on the coupled mixed-difference target.

For an index ``alpha`` with sub-indices ``alpha_k`` and signs ``iota_k``,
one latent state ``x`` stands for all coordinates of the coupling.  The
coupled likelihood is ``L_alpha(x) = max_k L_{alpha_k}(x)`` and

    psi_zeta(x) = sum_k iota_k * exp(logL_k - logL_max) * zeta_{alpha_k}(x)

so that ``Z * E_Pi[psi_zeta]`` equals the mixed difference of the
unnormalized integrals ``int zeta_{alpha_k} L_{alpha_k} dpi_0``.  The sampler
tempers ``L_alpha**tau`` from ``tau = 0`` to ``1``, multiplies stage-wise
normalizer increments into ``Z`` and mutates with Metropolis-Hastings moves
whose proposals are reversible for the prior.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .multiindex import MultiIndex, SignedSubIndex, as_index, subindex_expansion

log = logging.getLogger(__name__)

# live copies of the state array during a mutation sweep: current, proposal, noise, resampled
STATE_COPIES = 4


class MemoryLimitError(RuntimeError):
    """The particle population at an index would exceed ``SMCConfig.max_state_bytes``."""


class DegeneratePopulationError(RuntimeError):
    """All particle weights vanished at some tempering stage."""

    def __init__(self, message: str, alpha: MultiIndex | None = None, stage: int | None = None):
        super().__init__(message)
        self.alpha = alpha
        self.stage = stage


@dataclass(frozen=True)
class TemperingSchedule:
    """Inverse temperatures ``0 = tau_1 < ... < tau_J = 1``."""

    taus: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=float)
        if t.size < 2:
            raise ValueError("a tempering schedule needs at least two temperatures")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError(f"schedule must start at 0 and end at 1, got {t[0]} and {t[-1]}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("schedule must be strictly increasing")

    @classmethod
    def linear(cls, n_temperatures: int) -> "TemperingSchedule":
        """``J`` equally spaced temperatures, ``tau_j = (j - 1) / (J - 1)``."""
        n = int(n_temperatures)
        if n < 2:
            raise ValueError("n_temperatures must be >= 2")
        taus = [j / (n - 1) for j in range(n)]
        taus[-1] = 1.0
        return cls(tuple(taus))

    @classmethod
    def geometric(cls, n_temperatures: int, first: float = 1e-3) -> "TemperingSchedule":
        n = int(n_temperatures)
        if n < 2:
            raise ValueError("n_temperatures must be >= 2")
        if n == 2:
            return cls((0.0, 1.0))
        inner = np.geomspace(first, 1.0, n - 1)
        return cls((0.0,) + tuple(float(v) for v in inner[:-1]) + (1.0,))

    def __len__(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class MutationConfig:
    """Metropolis-Hastings mutation settings.

    ``kernel`` is ``"reflected_rw"`` or ``"pcn"``; the proposal itself is
    supplied by the model, so the name is recorded for bookkeeping and
    validated against the model's default.  ``step`` is the random-walk
    scale or the pCN parameter in (0, 1].
    """

    n_mcmc: int = 5
    step: float = 0.3
    kernel: str | None = None

    def __post_init__(self):
        if self.n_mcmc < 0:
            raise ValueError("n_mcmc must be >= 0")
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if self.kernel not in (None, "reflected_rw", "pcn"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass(frozen=True)
class SMCConfig:
    """Sampler settings beyond the schedule and the mutation kernel.

    ``resampling`` is ``"systematic"`` or ``"multinomial"``.
    ``resample_threshold=None`` resamples at every stage; a float ``r`` in
    (0, 1] resamples only when ESS < ``r * N``.  ``adaptive_ess`` replaces
    the fixed schedule by one chosen on the fly (bisection on the ESS of the
    incremental weights); the result is then no longer exactly unbiased.
    ``max_state_bytes`` bounds the estimated working set of a run (about
    ``STATE_COPIES`` copies of the particle states); a run above it raises
    :class:`MemoryLimitError` before allocating anything.
    """

    schedule: TemperingSchedule = field(default_factory=lambda: TemperingSchedule.linear(5))
    mutation: MutationConfig = field(default_factory=MutationConfig)
    resampling: str = "systematic"
    resample_threshold: float | None = None
    adaptive_ess: float | None = None
    max_state_bytes: float | None = None

    def __post_init__(self):
        if self.resampling not in ("systematic", "multinomial"):
            raise ValueError(f"unknown resampling scheme {self.resampling!r}")
        if self.resample_threshold is not None and not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.adaptive_ess is not None and not 0.0 < self.adaptive_ess < 1.0:
            raise ValueError("adaptive_ess must lie in (0, 1)")
        if self.max_state_bytes is not None and self.max_state_bytes <= 0:
            raise ValueError("max_state_bytes must be positive")


@dataclass
class IncrementEstimate:
    """Output of one SMC run at one multi-index.

    ``F_phi`` and ``F_one`` estimate the mixed differences of the
    unnormalized integrals of the QoI and of 1.  ``cost`` is in abstract
    model-evaluation units.
    """

    alpha: MultiIndex
    F_phi: float
    F_one: float
    Z_hat: float
    log_Z: float
    n_particles: int
    cost: float
    n_evaluations: int = 0
    wall_seconds: float = 0.0
    diagnostics: dict[str, Any] = field(default_factory=dict)


# --------------------------------------------------------------------------
# coupled likelihood and psi
# --------------------------------------------------------------------------


class CoupledEvaluator:
    """Evaluates a model at every sub-index of ``alpha`` for a particle batch."""

    def __init__(self, model, alpha, offset=None):
        self.model = model
        self.alpha = model.check_index(alpha) if hasattr(model, "check_index") else as_index(alpha)
        self.offset = tuple(model.start_level) if offset is None else as_index(offset)
        self.terms: list[SignedSubIndex] = subindex_expansion(self.alpha, self.offset)
        self.signs = np.array([t.sign for t in self.terms], dtype=float)
        self.unit_cost = float(sum(model.cost(t.index) for t in self.terms))
        self.n_evaluations = 0

    def __call__(self, states) -> tuple[np.ndarray, np.ndarray]:
        """Per-sub-index ``(log L, zeta)``, each of shape ``(N, K)``."""
        lls, qs = [], []
        for t in self.terms:
            ll, q = self.model.log_likelihood_and_qoi(t.index, states)
            lls.append(np.asarray(ll, dtype=float))
            qs.append(np.asarray(q, dtype=float))
        self.n_evaluations += len(states)
        return np.stack(lls, axis=1), np.stack(qs, axis=1)


def coupled_log_likelihood(per_subindex) -> tuple[np.ndarray, np.ndarray]:
    """``(logL_max, per_subindex)`` from per-sub-index log-likelihoods.

    Accepts a ``(K,)`` vector for one particle or ``(N, K)`` for a batch.
    """
    per = np.asarray(per_subindex, dtype=float)
    if np.any(np.isnan(per)):
        raise FloatingPointError("NaN log-likelihood in coupled evaluation")
    return per.max(axis=-1), per


def psi_evaluate(signs, per_subindex_logl, zeta) -> np.ndarray:
    """``sum_k iota_k omega_k zeta_k`` with ``omega_k = exp(logL_k - max_j logL_j)``."""
    signs = np.asarray(signs, dtype=float)
    ll = np.asarray(per_subindex_logl, dtype=float)
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), ll.shape)
    omega = np.exp(ll - ll.max(axis=-1, keepdims=True))
    return np.sum(signs * omega * zeta, axis=-1)


# --------------------------------------------------------------------------
# resampling and mutation
# --------------------------------------------------------------------------


def resample(weights, rng: np.random.Generator, scheme: str = "systematic", n: int | None = None) -> np.ndarray:
    """Ancestor indices with expected multiplicity ``n * w_i``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if not total > 0:
        raise DegeneratePopulationError("cannot resample: all weights are zero")
    w = w / total
    n = w.size if n is None else int(n)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    if scheme == "systematic":
        u = (rng.uniform() + np.arange(n)) / n
    elif scheme == "multinomial":
        u = np.sort(rng.uniform(size=n))
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)


@dataclass
class Population:
    """Particles with cached coupled evaluations and normalized log-weights."""

    states: np.ndarray
    logl: np.ndarray
    zeta: np.ndarray
    logw: np.ndarray

    @property
    def logl_max(self) -> np.ndarray:
        return self.logl.max(axis=1)

    def take(self, idx) -> "Population":
        n = len(idx)
        return Population(self.states[idx], self.logl[idx], self.zeta[idx], np.full(n, -math.log(n)))

    def ess(self) -> float:
        return float(math.exp(-logsumexp(2.0 * self.logw)))


def mutate(population: Population, evaluator, model, tau: float, mutation: MutationConfig,
           rng: np.random.Generator) -> tuple[Population, float]:
    """``n_mcmc`` MH sweeps targeting ``L_alpha(x)**tau pi_0(dx)``.

    Returns the new population and the mean acceptance rate.  Step size 0
    leaves the population unchanged (every move accepted).
    """
    pop = population
    if mutation.n_mcmc == 0:
        return pop, float("nan")
    if mutation.step == 0.0:
        return pop, 1.0
    accepted = 0
    for _ in range(mutation.n_mcmc):
        prop = model.propose(pop.states, mutation.step, rng)
        ll, q = evaluator(prop)
        log_ratio = tau * (ll.max(axis=1) - pop.logl_max)
        acc = np.log(rng.uniform(size=len(log_ratio))) < log_ratio
        if acc.any():
            states = pop.states.copy()
            states[acc] = prop[acc]
            logl = pop.logl.copy()
            logl[acc] = ll[acc]
            zeta = pop.zeta.copy()
            zeta[acc] = q[acc]
            pop = Population(states, logl, zeta, pop.logw)
        accepted += int(acc.sum())
    return pop, accepted / (mutation.n_mcmc * len(pop.logw))


def _next_tau_adaptive(logl_max: np.ndarray, logw: np.ndarray, tau: float, target: float) -> float:
    n = len(logw)

    def ess(t):
        lw = logw + (t - tau) * logl_max
        return math.exp(2 * logsumexp(lw) - logsumexp(2 * lw)) / n

    if ess(1.0) >= target:
        return 1.0
    lo, hi = tau, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ess(mid) >= target:
            lo = mid
        else:
            hi = mid
    return max(lo, tau + 1e-12)


# --------------------------------------------------------------------------
# the sampler
# --------------------------------------------------------------------------


def run_smc(model, alpha, n_particles: int, config: SMCConfig | None = None,
            rng: np.random.Generator | None = None, offset=None) -> IncrementEstimate:
    """Run the coupled tempered SMC sampler at ``alpha``.

    Parameters
    ----------
    model : ForwardModel
    alpha : multi-index
        Index at or above the model's starting level.
    n_particles : int
        Number of particles, at least 2.
    config : SMCConfig, optional
    rng : numpy.random.Generator
    offset : multi-index, optional
        Boundary of the mixed difference; defaults to ``model.start_level``.

    Returns
    -------
    IncrementEstimate
    """
    config = SMCConfig() if config is None else config
    rng = np.random.default_rng() if rng is None else rng
    n = int(n_particles)
    if n < 2:
        raise ValueError(f"need at least 2 particles, got {n}")
    mut = config.mutation
    if mut.kernel is not None and mut.kernel != getattr(model, "default_kernel", mut.kernel):
        raise ValueError(f"kernel {mut.kernel!r} does not match the prior of model {model.name!r}")
    t0 = time.perf_counter()
    ev = CoupledEvaluator(model, alpha, offset)
    alpha = ev.alpha
    if config.max_state_bytes is not None:
        need = STATE_COPIES * n * model.state_nbytes(alpha)
        if need > config.max_state_bytes:
            raise MemoryLimitError(f"{n} particles at {alpha} need about {need / 2**30:.2f} GiB "
                                   f"(limit {config.max_state_bytes / 2**30:.2f} GiB)")

    states = model.sample_prior(alpha, n, rng)
    logl, zeta = ev(states)
    pop = Population(states, logl, zeta, np.full(n, -math.log(n)))

    log_z = 0.0
    taus = [0.0]
    ess_trace, acc_trace, logz_trace = [], [], []
    schedule = config.schedule.taus
    stage = 0
    tau = 0.0
    while tau < 1.0:
        if config.adaptive_ess is None:
            new_tau = schedule[stage + 1]
        else:
            new_tau = _next_tau_adaptive(pop.logl_max, pop.logw, tau, config.adaptive_ess)
        lmax = pop.logl_max
        if np.any(np.isnan(lmax)):
            raise DegeneratePopulationError(f"NaN log-likelihood at stage {stage}", alpha, stage)
        incr = pop.logw + (new_tau - tau) * lmax
        log_incr = logsumexp(incr)
        if not np.isfinite(log_incr):
            raise DegeneratePopulationError(
                f"all particle weights vanished at stage {stage} (tau {tau:.4g} -> {new_tau:.4g}) "
                f"for index {alpha}; max log-likelihood {np.max(lmax):.4g}",
                alpha,
                stage,
            )
        log_z += log_incr
        pop = Population(pop.states, pop.logl, pop.zeta, incr - log_incr)
        ess = pop.ess()
        ess_trace.append(ess)
        if config.resample_threshold is None or ess < config.resample_threshold * n:
            idx = resample(np.exp(pop.logw), rng, config.resampling)
            pop = pop.take(idx)
        pop, acc = mutate(pop, ev, model, new_tau, mut, rng)
        acc_trace.append(acc)
        logz_trace.append(log_z)
        tau = new_tau
        taus.append(tau)
        stage += 1

    w = np.exp(pop.logw)
    psi_phi = psi_evaluate(ev.signs, pop.logl, pop.zeta)
    psi_one = psi_evaluate(ev.signs, pop.logl, 1.0)
    z_hat = math.exp(log_z)
    f_phi = z_hat * float(np.dot(w, psi_phi))
    f_one = z_hat * float(np.dot(w, psi_one))
    diagnostics = {
        "taus": taus,
        "ess": ess_trace,
        "acceptance": acc_trace,
        "log_z": logz_trace,
        "adaptive": config.adaptive_ess is not None,
    }
    return IncrementEstimate(
        alpha=alpha,
        F_phi=f_phi,
        F_one=f_one,
        Z_hat=z_hat,
        log_Z=log_z,
        n_particles=n,
        cost=ev.n_evaluations * ev.unit_cost,
        n_evaluations=ev.n_evaluations,
        wall_seconds=time.perf_counter() - t0,
        diagnostics=diagnostics,
    )


def expected_smc_cost(model, alpha, n_particles: int, config: SMCConfig, offset=None) -> float:
    """Abstract cost of :func:`run_smc` with a fixed schedule (deterministic)."""
    alpha = as_index(alpha)
    off = tuple(model.start_level) if offset is None else as_index(offset)
    unit = sum(model.cost(t.index) for t in subindex_expansion(alpha, off))
    n_stages = len(config.schedule) - 1
    per = 1 + n_stages * (config.mutation.n_mcmc if config.mutation.step > 0 else 0)
    return float(n_particles) * per * unit
