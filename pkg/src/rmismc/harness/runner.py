"""Run an experiment: every method x budget x realization, then summarize.

Each task draws its randomness from ``child(seed, method, budget index,
realization)``, and per-index SMC runs extend that key by the index, so the
records depend only on the configuration and the master seed.  Results are
sorted by task key before anything is written.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import seeding
from ..estimators import InfeasibleBudgetError, estimate, pilot_z_min
from ..models.fem import FEMError
from ..rates import fit_mse_cost
from ..smc import DegeneratePopulationError, MemoryLimitError
from .budget import Plan, plan
from .config import ConfigError, ExperimentConfig
from .plotting import plot_mse_vs_cost
from .reference import Reference, compute_reference, fingerprint, load_cached_reference, save_reference
from .scenarios import build_scenario

log = logging.getLogger(__name__)

RECORD_COLUMNS = ["method", "budget", "realization", "estimate", "squared_error", "cost", "clamped"]
NUMERICAL_ERRORS = (DegeneratePopulationError, MemoryLimitError, FEMError, FloatingPointError, np.linalg.LinAlgError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass
class RunResult:
    exit_code: int
    records: list[dict]
    table: list[dict]
    slopes: dict
    summary: dict
    out_dir: Path
    failures: list[dict] = field(default_factory=list)


def fmt(x) -> str:
    """Shortest round-trip text for a float, stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# --------------------------------------------------------------------------
# task execution
# --------------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(model, smc_config):
    _WORKER["model"] = model
    _WORKER["smc"] = smc_config


def _execute(task):
    key, est_cfg, seed = task
    model, smc = _WORKER["model"], _WORKER["smc"]
    t0 = time.perf_counter()
    try:
        res = estimate(est_cfg, model, smc, seed)
    except NUMERICAL_ERRORS as exc:
        return key, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    return key, (res.value, res.total_cost, res.clamped), None, time.perf_counter() - t0


def _run_tasks(tasks, model, smc, threads: int):
    if threads <= 1 or len(tasks) < 2:
        _init_worker(model, smc)
        return [_execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(model, smc)) as pool:
        return list(pool.map(_execute, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def resolve_z_min(cfg: ExperimentConfig, model, smc) -> float:
    if cfg.z_min is not None:
        return float(cfg.z_min)
    try:
        return pilot_z_min(model, smc, seeding.child(cfg.seed, "z_min"))
    except MemoryLimitError as exc:
        raise ConfigError(f"smc.max_memory_gb too small for the z_min pilot: {exc}") from None


def get_reference(cfg: ExperimentConfig, model, smc, z_min: float, out_dir: Path, use_cache: bool = True) -> Reference:
    key = fingerprint(cfg)
    path = out_dir / "reference.json"
    if use_cache:
        ref = load_cached_reference(path, key)
        if ref is not None:
            return ref
    ref = compute_reference(cfg, model, smc, z_min)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_reference(path, ref, key)
    return ref


def make_plans(cfg: ExperimentConfig, model, smc, z_min: float) -> dict[tuple[int, int], Plan]:
    plans = {}
    for mi, method in enumerate(cfg.methods):
        for bi, budget in enumerate(cfg.budgets_for(method)):
            try:
                plans[mi, bi] = plan(model, smc, method, budget, z_min)
            except InfeasibleBudgetError as exc:
                raise ConfigError(f"methods.{method.name}: {exc}") from None
    return plans


def write_table(rows: list[dict], path_stem: Path, fmt_name: str) -> Path:
    if fmt_name == "json":
        path = path_stem.with_suffix(".json")
        path.write_text(json.dumps(rows, indent=2, sort_keys=False) + "\n")
        return path
    path = path_stem.with_suffix(".csv")
    cols = list(rows[0].keys()) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], (float, int, np.floating, np.integer)) else r[c] for c in cols])
    return path


def mse_table(records: list[dict], methods: list[str]) -> list[dict]:
    rows = []
    for name in methods:
        budgets = sorted({r["budget"] for r in records if r["method"] == name})
        for b in budgets:
            rs = [r for r in records if r["method"] == name and r["budget"] == b]
            ok = [r for r in rs if r["ok"]]
            if not ok:
                continue
            se2 = np.array([r["squared_error"] for r in ok])
            rows.append({
                "method": name,
                "budget": b,
                "mean_cost": float(np.mean([r["cost"] for r in ok])),
                "mse": float(se2.mean()),
                "mse_std_error": float(se2.std(ddof=1) / math.sqrt(len(se2))) if len(se2) > 1 else float("nan"),
                "n_ok": len(ok),
                "n_failed": len(rs) - len(ok),
                "n_clamped": int(sum(r["clamped"] for r in ok)),
            })
    return rows


def fit_slopes(records: list[dict], methods: list[str]) -> dict:
    out = {}
    for name in methods:
        rows = [(r["budget"], r["cost"], r["squared_error"]) for r in records if r["method"] == name and r["ok"]]
        try:
            fit = fit_mse_cost(rows)
        except ValueError:
            continue
        out[name] = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
                     "n_levels": fit.n_points}
    return out


# --------------------------------------------------------------------------
# the experiment
# --------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1, fmt_name: str = "csv",
                   base_dir: Path | None = None, plot: bool = True) -> RunResult:
    """Run all tasks of ``cfg`` and write records, tables, summary and plot to ``out_dir``."""
    t_start = time.perf_counter()
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scen = build_scenario(cfg.model, base_dir)
    model = scen.model
    smc = cfg.smc_config()
    z_min = resolve_z_min(cfg, model, smc)
    ref = get_reference(cfg, model, smc, z_min, out_dir)
    plans = make_plans(cfg, model, smc, z_min)
    log.info("%s: reference %.10g (se %.3g), z_min %.3g, %d plans", cfg.name, ref.value, ref.std_error, z_min,
             len(plans))

    tasks = []
    for (mi, bi), p in sorted(plans.items()):
        name = cfg.methods[mi].name
        for r in range(cfg.realizations):
            tasks.append(((mi, bi, r), p.estimator, seeding.child(cfg.seed, name, bi, r)))
    results = sorted(_run_tasks(tasks, model, smc, threads), key=lambda t: t[0])

    records, failures, timings = [], [], []
    for (mi, bi, r), out, err, wall in results:
        p = plans[mi, bi]
        rec = {"method": p.method, "budget": p.budget, "realization": r}
        if out is None:
            rec.update(estimate=float("nan"), squared_error=float("nan"), cost=float("nan"), clamped=False, ok=False)
            failures.append({"method": p.method, "budget": p.budget, "realization": r, "error": err})
        else:
            value, cost, clamped = out
            rec.update(estimate=value, squared_error=(value - ref.value) ** 2, cost=cost, clamped=clamped, ok=True)
        records.append(rec)
        timings.append({"method": p.method, "budget": p.budget, "realization": r, "wall_seconds": wall})

    with (out_dir / "records.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for rec in records:
            w.writerow([rec["method"], fmt(rec["budget"]), rec["realization"], fmt(rec["estimate"]),
                        fmt(rec["squared_error"]), fmt(rec["cost"]), fmt(rec["clamped"])])
    write_table(timings, out_dir / "timings", "csv")
    if failures:
        write_table(failures, out_dir / "failures", "csv")

    names = [m.name for m in cfg.methods]
    table = mse_table(records, names)
    slopes = fit_slopes(records, names)
    write_table(table, out_dir / "mse", fmt_name)
    write_table([{"method": k, **v} for k, v in slopes.items()], out_dir / "slopes", fmt_name)
    if plot and table:
        plot_mse_vs_cost(table, slopes, out_dir / "mse_vs_cost.png", cfg.name)

    n_fail = len(failures)
    frac = n_fail / max(1, len(records))
    warnings = []
    rmse_min = min((math.sqrt(r["mse"]) for r in table if r["mse"] > 0), default=float("inf"))
    if ref.std_error > 0.1 * rmse_min:
        warnings.append(f"reference standard error {ref.std_error:.3g} exceeds 10% of the smallest RMSE "
                        f"{rmse_min:.3g}")
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "data": scen.provenance,
        "reference": {"value": ref.value, "std_error": ref.std_error, "method": ref.method, **ref.details},
        "z_min": z_min,
        "plans": [{"method": p.method, "budget": p.budget, "expected_cost": p.expected_cost, **p.summary}
                  for _, p in sorted(plans.items())],
        "slopes": slopes,
        "total_cost": float(sum(r["cost"] for r in records if r["ok"])),
        "n_records": len(records),
        "n_failed": n_fail,
        "failure_fraction": frac,
        "warnings": warnings,
        "wall_seconds": time.perf_counter() - t_start,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for w in warnings:
        log.warning(w)
    code = EXIT_NUMERICAL if frac > cfg.failure_threshold else EXIT_OK
    if code != EXIT_OK:
        log.error("%d of %d realizations failed (threshold %.0f%%)", n_fail, len(records), 100 * cfg.failure_threshold)
    return RunResult(code, records, table, slopes, summary, out_dir, failures)
