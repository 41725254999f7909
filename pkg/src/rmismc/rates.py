"""Empirical convergence rates.

Weak and strong rates are fitted from increment statistics by least squares
of ``log2(value)`` against the level; MSE-versus-cost slopes are fitted on
log-log axes.  Increment statistics come either from direct prior Monte
Carlo of ``Delta(L_alpha zeta_alpha)`` or from replicated SMC runs.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import seeding
from .multiindex import MultiIndex, as_index, subindex_expansion
from .smc import SMCConfig, run_smc

R2_THRESHOLD = 0.9


@dataclass(frozen=True)
class RateFit:
    """Least-squares line ``log2(value) = intercept + slope * x``.

    When the fit over all points has ``r_squared`` below 0.9, leading points
    are dropped (keeping at least three) and ``full`` holds the original fit.
    """

    slope: float
    intercept: float
    r_squared: float
    direction: str = ""
    n_points: int = 0
    n_dropped: int = 0
    full: "RateFit | None" = None


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("rate fit needs at least two distinct abscissae")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return slope, intercept, r2


def fit_rate(points: Iterable[tuple[float, float]], direction: str = "", drop_preasymptotic: bool = True) -> RateFit:
    """Slope of ``log2(value)`` against the level.

    Parameters
    ----------
    points : iterable of (level, value)
        At least three points with strictly positive values.
    direction : str
        Label stored on the result.
    drop_preasymptotic : bool
        Drop leading points while ``r_squared < 0.9``.
    """
    pts = sorted((float(a), float(v)) for a, v in points)
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("rate fit needs finite, strictly positive values")
    y = np.log2(v)
    slope, icpt, r2 = _ols(x, y)
    full = RateFit(slope, icpt, r2, direction, len(x), 0)
    if not drop_preasymptotic or r2 >= R2_THRESHOLD:
        return full
    best = full
    for k in range(1, len(x) - 2):
        s, i, r = _ols(x[k:], y[k:])
        best = RateFit(s, i, r, direction, len(x) - k, k, full)
        if r >= R2_THRESHOLD:
            break
    return best


def fit_mse_cost(records, min_levels: int = 2) -> RateFit:
    """Slope of log MSE against log mean cost, one point per budget level.

    ``records`` holds ``(level, cost, squared_error)`` triples; with
    ``(cost, squared_error)`` pairs each distinct cost is its own level.
    """
    groups: dict = defaultdict(lambda: ([], []))
    for rec in records:
        if len(rec) == 2:
            key, cost, err = rec[0], rec[0], rec[1]
        else:
            key, cost, err = rec
        if err < 0:
            raise ValueError("squared errors must be non-negative")
        groups[key][0].append(float(cost))
        groups[key][1].append(float(err))
    if len(groups) < min_levels:
        raise ValueError(f"need at least {min_levels} budget levels, got {len(groups)}")
    cost = np.array([np.mean(c) for c, _ in groups.values()])
    mse = np.array([np.mean(e) for _, e in groups.values()])
    if np.any(mse <= 0) or np.any(cost <= 0):
        raise ValueError("mean cost and MSE must be positive at every level")
    slope, icpt, r2 = _ols(np.log2(cost), np.log2(mse))
    return RateFit(slope, icpt, r2, "cost", len(cost), 0)


@dataclass
class IncrementStatistics:
    """Per-index mean and second moment of increments of ``L zeta`` (QoI) and ``L`` (one)."""

    alphas: list[MultiIndex]
    levels: np.ndarray
    mean_phi: np.ndarray
    mean_one: np.ndarray
    second_phi: np.ndarray
    second_one: np.ndarray
    replications: int
    method: str
    extra: dict = field(default_factory=dict)

    def as_rows(self) -> list[dict]:
        return [
            {
                "alpha": "-".join(str(v) for v in a),
                "level": float(lv),
                "mean_phi": float(mp),
                "mean_one": float(mo),
                "second_phi": float(sp),
                "second_one": float(so),
            }
            for a, lv, mp, mo, sp, so in zip(
                self.alphas, self.levels, self.mean_phi, self.mean_one, self.second_phi, self.second_one
            )
        ]


def prior_increment_samples(model, alpha, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Samples of ``Delta(L zeta)`` and ``Delta(L)`` under the prior at ``alpha``."""
    alpha = model.check_index(alpha)
    states = model.sample_prior(alpha, n, rng)
    d_phi = np.zeros(n)
    d_one = np.zeros(n)
    for t in subindex_expansion(alpha, model.start_level):
        ll, q = model.log_likelihood_and_qoi(t.index, states)
        lik = np.exp(ll)
        d_phi += t.sign * lik * q
        d_one += t.sign * lik
    return d_phi, d_one


def sweep(model, direction: int | str, n_levels: int, start: Sequence[int] | None = None) -> list[MultiIndex]:
    """Consecutive indices along one direction or along the diagonal.

    The sweep begins one step above the starting level so that every index
    carries a genuine difference in the swept directions.
    """
    base = np.asarray(model.start_level if start is None else as_index(start))
    out = []
    for j in range(1, n_levels + 1):
        a = base.copy()
        if direction == "diagonal":
            a = a + j
        else:
            a[int(direction)] += j
        out.append(tuple(int(v) for v in a))
    return out


def increment_statistics(model, alphas, replications: int, seed, method: str = "prior",
                         n_samples: int = 1000, smc_config: SMCConfig | None = None) -> IncrementStatistics:
    """Means and second moments of increments at each ``alpha``.

    ``method="prior"`` draws ``n_samples * replications`` prior samples and
    reports sample moments of ``Delta(L zeta)``.  ``method="smc"`` runs
    ``replications`` independent SMC samplers with ``n_samples`` particles
    and reports the mean and variance of ``F_phi`` and ``F_one``.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications")
    alphas = [model.check_index(a) for a in alphas]
    off = np.asarray(model.start_level)
    levels = np.array([float(np.sum(np.asarray(a) - off)) for a in alphas])
    mp, mo, sp, so = [], [], [], []
    for a in alphas:
        if method == "prior":
            rng = seeding.generator(seeding.child(seed, "prior", a))
            d_phi, d_one = prior_increment_samples(model, a, n_samples * replications, rng)
            mp.append(d_phi.mean())
            mo.append(d_one.mean())
            sp.append(np.mean(d_phi**2))
            so.append(np.mean(d_one**2))
        elif method == "smc":
            fp, fo = [], []
            for r in range(replications):
                rng = seeding.generator(seeding.child(seed, "smc", r, a))
                inc = run_smc(model, a, n_samples, smc_config, rng)
                fp.append(inc.F_phi)
                fo.append(inc.F_one)
            fp, fo = np.array(fp), np.array(fo)
            mp.append(fp.mean())
            mo.append(fo.mean())
            sp.append(fp.var(ddof=1))
            so.append(fo.var(ddof=1))
        else:
            raise ValueError(f"unknown method {method!r}")
    return IncrementStatistics(alphas, levels, np.array(mp), np.array(mo), np.array(sp), np.array(so),
                               int(replications), method)


@dataclass
class RateReport:
    """Fitted weak (``s``) and strong (``beta``) rates for one sweep."""

    direction: str
    stats: IncrementStatistics
    weak: RateFit
    strong: RateFit

    @property
    def s(self) -> float:
        return -self.weak.slope

    @property
    def beta(self) -> float:
        return -self.strong.slope


def estimate_increment_rates(model, directions=None, n_levels: int = 4, replications: int = 20,
                             seed=0, method: str = "prior", n_samples: int = 1000,
                             smc_config: SMCConfig | None = None, quantity: str = "phi") -> list[RateReport]:
    """Weak and strong rates per direction sweep.

    ``quantity`` selects the increments of ``L * phi`` (``"phi"``) or of
    ``L`` (``"one"``).  Weak rates come from ``|mean|``, strong rates from
    the second moment (prior method) or variance (SMC method).
    """
    if directions is None:
        directions = ["diagonal"] if model.dim == 1 else list(range(model.dim))
    reports = []
    for d in directions:
        alphas = sweep(model, d, n_levels)
        stats = increment_statistics(model, alphas, replications, seeding.child(seed, str(d)), method,
                                     n_samples, smc_config)
        # sweeps along one direction fit against that direction's level
        x = stats.levels if d == "diagonal" else np.array([a[int(d)] - model.start_level[int(d)] for a in alphas])
        if d == "diagonal" and model.dim > 1:
            x = x / model.dim
        mean = np.abs(stats.mean_phi if quantity == "phi" else stats.mean_one)
        second = stats.second_phi if quantity == "phi" else stats.second_one
        label = str(d)
        weak = fit_rate(zip(x, mean), label)
        strong = fit_rate(zip(x, second), label)
        reports.append(RateReport(label, stats, weak, strong))
    return reports
