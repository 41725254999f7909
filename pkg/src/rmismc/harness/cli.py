"""Command-line interface: ``rmismc {run,rates,reference,simulate-data,validate} CONFIG``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..estimators import InfeasibleBudgetError
from ..models.point_process import PointPatternError, save_point_pattern
from ..rates import estimate_increment_rates
from .config import ConfigError, load_config
from .plotting import plot_rates
from .runner import EXIT_CONFIG, EXIT_OK, get_reference, make_plans, resolve_z_min, run_experiment, write_table
from .scenarios import build_scenario, simulate_data

log = logging.getLogger("rmismc")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("config", type=Path, help="YAML experiment configuration")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out-dir", type=Path, default=None, help="output directory (default: config output_dir)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="format of summary tables")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmismc", description="Multi-index SMC experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("run", parents=[common], help="run the full MSE-versus-cost experiment")
    rates = sub.add_parser("rates", parents=[common], help="fit weak/strong increment rates")
    rates.add_argument("--no-plot", action="store_true")
    ref = sub.add_parser("reference", parents=[common], help="compute and cache the reference value")
    ref.add_argument("--force", action="store_true", help="ignore a cached reference")
    sub.add_parser("simulate-data", parents=[common], help="write synthetic observations or a point pattern")
    sub.add_parser("validate", parents=[common], help="check schema and budget feasibility")
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = args.out_dir if args.out_dir is not None else Path(cfg.output_dir)
    return cfg, out


def cmd_run(args) -> int:
    cfg, out = _load(args)
    res = run_experiment(cfg, out, args.threads, args.format, base_dir=args.config.parent)
    for name, fit in res.slopes.items():
        print(f"{name}: slope {fit['slope']:.3f} (R^2 {fit['r_squared']:.3f})")
    print(f"records written to {out / 'records.csv'}")
    return res.exit_code


def cmd_rates(args) -> int:
    cfg, out = _load(args)
    out.mkdir(parents=True, exist_ok=True)
    scen = build_scenario(cfg.model, args.config.parent)
    model = scen.model
    rb = cfg.rates
    reports = estimate_increment_rates(model, rb.directions, rb.n_levels, rb.replications, cfg.seed, rb.method,
                                       rb.n_samples, cfg.smc_config(), rb.quantity)
    gamma = list(getattr(model, "gamma", ()))
    rows = []
    for rep in reports:
        d = rep.direction
        g = gamma[int(d)] if d.isdigit() and int(d) < len(gamma) else (sum(gamma) if gamma else float("nan"))
        rows.append({"direction": d, "s": rep.s, "beta": rep.beta, "gamma": float(g),
                     "r_squared_weak": rep.weak.r_squared, "r_squared_strong": rep.strong.r_squared,
                     "dropped_weak": rep.weak.n_dropped, "dropped_strong": rep.strong.n_dropped})
    write_table(rows, out / "rates", args.format)
    stats = [dict(direction=rep.direction, **row) for rep in reports for row in rep.stats.as_rows()]
    write_table(stats, out / "increments", args.format)
    if not args.no_plot:
        plot_rates(reports, out / "rates.png", cfg.name)
    for r in rows:
        print(f"direction {r['direction']}: s = {r['s']:.3f}, beta = {r['beta']:.3f}, gamma = {r['gamma']:.3f}")
    return EXIT_OK


def cmd_reference(args) -> int:
    cfg, out = _load(args)
    scen = build_scenario(cfg.model, args.config.parent)
    smc = cfg.smc_config()
    z_min = resolve_z_min(cfg, scen.model, smc)
    ref = get_reference(cfg, scen.model, smc, z_min, out, use_cache=not args.force)
    print(f"reference {ref.value:.12g} (standard error {ref.std_error:.3g}, {ref.method})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, out = _load(args)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.model.data_seed if args.seed is None else args.seed
    data, x_true = simulate_data(cfg.model, seed)
    if cfg.model.family in ("lgc", "lgp"):
        path = out / "points.csv"
        save_point_pattern(path, data)
    else:
        path = out / "observations.csv"
        np.savetxt(path, np.asarray(data)[:, None], delimiter=",", header="y", comments="", fmt="%.17g")
    if x_true is not None:
        (out / "truth.json").write_text(json.dumps({"x_true": np.asarray(x_true).tolist()}) + "\n")
    print(f"wrote {len(data)} {'points' if cfg.model.family in ('lgc', 'lgp') else 'observations'} to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg, _ = _load(args)
    scen = build_scenario(cfg.model, args.config.parent)
    plans = make_plans(cfg, scen.model, cfg.smc_config(), z_min=1.0)
    for (_, _), p in sorted(plans.items()):
        print(f"{p.method:>12s}  budget {p.budget:<12.6g} expected cost {p.expected_cost:<12.6g} {p.summary}")
    print(f"{cfg.name}: configuration valid ({len(plans)} method/budget plans, data: {scen.provenance})")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "rates": cmd_rates,
    "reference": cmd_reference,
    "simulate-data": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InfeasibleBudgetError, PointPatternError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
