"""Command line front end: ``vexgame {solve,converge,simulate,check}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 check failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics
from .config import ConfigError, ExperimentConfig
from .convergence import ReferenceCache, run_studies
from .feedback import belief_drift, simulate_many, write_trajectories_csv
from .grid import DomainError
from .io import read_field_csv, write_eoc_script, write_error_table, write_field_csv, write_surface_script
from .solver import NumericalError, ValueField, restore_field, solve

log = logging.getLogger("vexgame")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


def _workers(cfg: ExperimentConfig) -> int:
    return int(cfg.workers) if cfg.workers else (os.cpu_count() or 1)


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _field(cfg: ExperimentConfig, reference: Optional[str]) -> ValueField:
    problem = cfg.problem()
    if reference:
        meta, values = read_field_csv(reference)
        if meta.get("config_hash") not in (None, cfg.hash()):
            raise ConfigError(f"{reference} was written for a different configuration")
        if np.isnan(values).any():
            raise ConfigError(f"{reference} does not hold every level")
        try:
            return restore_field(problem, values, bool(cfg.convexify))
        except ValueError as exc:
            raise ConfigError(f"{reference}: {exc}") from None
    return solve(problem, convexify=bool(cfg.convexify), workers=_workers(cfg))


def run_solve(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg)
    t0 = time.perf_counter()
    field = solve(cfg.problem(), convexify=bool(cfg.convexify), workers=_workers(cfg))
    name = "field.csv" if cfg.convexify else "field_unconvexified.csv"
    write_field_csv(out / name, field, None, meta={"config_hash": cfg.hash(), "model": cfg.model})
    write_surface_script(out / "plot_surface.py", name)
    log.info("solved in %.2fs; wrote %s", time.perf_counter() - t0, out / name)
    return {"field": str(out / name), "sup": float(np.abs(field.values).max())}


def run_convergence(cfg: ExperimentConfig, reference: Optional[str] = None) -> dict:
    out = _outdir(cfg)
    which = {"converge-dx": ["dx"], "converge-dp": ["dp"], "converge-dt": ["dt"]}.get(
        cfg.mode, list(cfg.convergence.get("studies", ["dx", "dp", "dt"])))
    plan = cfg.study_plan()
    cache_dir = reference or cfg.convergence.get("cache") or out / "refs"
    cache = ReferenceCache(cache_dir, _workers(cfg))
    tables = run_studies(cfg.factory(), plan, which, workers=_workers(cfg), cache=cache)
    paths = {}
    for name, tab in tables.items():
        path = out / f"error_{name}.csv"
        write_error_table(path, tab)
        paths[name] = path.name
        print(tab)
    write_eoc_script(out / "plot_convergence.py", paths)
    return {k: {"mean_eoc": v.mean_eoc, "monotone": v.monotone} for k, v in tables.items()}


def run_simulate(cfg: ExperimentConfig, reference: Optional[str] = None) -> dict:
    out = _outdir(cfg)
    field = _field(cfg, reference)
    sim = cfg.simulate
    K = int(sim.get("K", 100))
    if K < 1:
        raise ConfigError("simulate.K must be >= 1")
    x0 = sim.get("x0", [float(v) for v in 0.5 * (field.space.lower + field.space.upper)])
    p0 = sim.get("p0", [1.0 / field.simplex.I] * field.simplex.I)
    trajs = simulate_many(field, x0, p0, int(cfg.seed), K)
    write_trajectories_csv(out / "trajectories.csv", trajs)
    mean, se = belief_drift(trajs)
    I = field.simplex.I
    with open(out / "belief_drift.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"drift_p{i}" for i in range(I)] + [f"se_p{i}" for i in range(I)])
        for n in range(field.time.N):
            w.writerow([n] + [repr(float(v)) for v in mean[n]] + [repr(float(v)) for v in se[n]])
    # the terminal revelation row is excluded: it is not a feedback step
    z = np.abs(mean[:field.time.N]) / np.where(se[:field.time.N] > 0, se[:field.time.N], np.inf)
    return {"K": K, "max_drift_in_se": float(z.max()) if z.size else 0.0}


def run_check(cfg: ExperimentConfig, reference: Optional[str] = None) -> tuple[bool, list]:
    problem = cfg.problem()
    field = _field(cfg, reference) if reference else None
    chk = cfg.check
    results, _ = diagnostics.run_suite(
        problem, seed=int(cfg.seed), convexify=bool(cfg.convexify), workers=_workers(cfg),
        oracle_instances=int(chk.get("oracle_instances", 200)),
        vex_instances=int(chk.get("vex_instances", 100)),
        contexts=int(chk.get("contexts", 10_000)), field=field)
    for r in results:
        print(r.line())
    out = _outdir(cfg)
    with open(out / "check_report.json", "w") as fh:
        json.dump([dict(name=r.name, status=r.status, value=r.value, tol=r.tol, detail=r.detail,
                        seconds=r.seconds) for r in results], fh, indent=1)
    return all(r.passed or r.warning_only for r in results), results


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vexgame", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("solve", "solve and export the value field"),
                       ("converge", "run convergence studies"),
                       ("simulate", "sample (state, belief) trajectories"),
                       ("check", "run the property suite")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML experiment file (defaults reproduce the reference setup)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker threads (default: CPU count)")
        p.add_argument("--seed", type=int)
        p.add_argument("--no-convexify", action="store_true", help="skip the envelope step")
        p.add_argument("--reference", help="reference cache directory (converge) or field CSV (simulate, check)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _configure(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    if args.out:
        cfg.output = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_convexify:
        cfg.convexify = False
    if args.command == "converge" and not cfg.mode.startswith("converge"):
        cfg.mode = "converge"
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _configure(args)
        if args.command == "solve":
            print(json.dumps(run_solve(cfg)))
        elif args.command == "converge":
            print(json.dumps(run_convergence(cfg, args.reference)))
        elif args.command == "simulate":
            print(json.dumps(run_simulate(cfg, args.reference)))
        else:
            ok, _ = run_check(cfg, args.reference)
            return EXIT_OK if ok else EXIT_CHECK
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
