"""Property suite run by ``vexgame check`` on a configured instance."""
from __future__ import annotations

import time
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .envelope import (convexity_defect, envelope_lp_oracle, lower_convex_envelope,
                       vex_properties_check)
from .feedback import dpp_residuals, unconditional_feedback
from .grid import SimplexPartition
from .hamiltonian import MinimaxHamiltonian, isaacs_check
from .solver import GameProblem, ValueField, estimate_moduli, solve

ORACLE_TOL = 1e-10
VEX_TOL = 1e-10
CONVEXITY_TOL = 1e-10
DPP_TOL = 1e-10
MARTINGALE_TOL = 1e-12
MAX_ORACLE_BASES = 200_000


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""
    warning_only: bool = False
    seconds: float = 0.0

    @property
    def status(self) -> str:
        if self.passed:
            return "PASS"
        return "WARN" if self.warning_only else "FAIL"

    def line(self) -> str:
        msg = f"{self.status} {self.name}: {self.value:.3e} (tol {self.tol:.0e})"
        return msg + (f" {self.detail}" if self.detail else "") + f" [{self.seconds:.1f}s]"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_instances(rng: np.random.Generator, count: int, shapes=((2, 4), (2, 20), (2, 49), (3, 2), (3, 4))):
    """Seeded ``(partition, values)`` pairs cycling over ``(I, k)`` shapes."""
    parts = [SimplexPartition.uniform(I, k) for I, k in shapes]
    for j in range(count):
        part = parts[j % len(parts)]
        yield part, rng.uniform(-1.0, 1.0, part.M)


def oracle_gap(partition: SimplexPartition, values) -> float:
    env = lower_convex_envelope(partition, values)
    ref = envelope_lp_oracle(partition.nodes, values, partition.nodes)
    return float(np.abs(env.values - ref).max())


@_timed
def check_oracle(rng, count: int = 200, field: Optional[ValueField] = None, columns: int = 20) -> CheckResult:
    """Hull envelope against the basis-enumeration oracle on random data and on solver columns."""
    worst = 0.0
    for part, y in random_instances(rng, count):
        worst = max(worst, oracle_gap(part, y))
    note = f"{count} random instances"
    if field is not None:
        part = field.simplex
        if comb(part.M, part.I) <= MAX_ORACLE_BASES:
            from .solver import backward_step
            N = field.time.N
            for _ in range(columns):
                n = int(rng.integers(0, N))
                ell = int(rng.integers(0, field.space.L))
                _, _, Y = backward_step(field.problem, field.values[n + 1], n, field.convexified)
                worst = max(worst, oracle_gap(part, Y[:, ell]))
            note += f" + {columns} solver columns"
        else:
            note += " (solver columns skipped: too many bases)"
    return CheckResult("envelope oracle equivalence", worst <= ORACLE_TOL, worst, ORACLE_TOL, note)


@_timed
def check_vex_properties(rng, partition: SimplexPartition, count: int = 100) -> CheckResult:
    worst = 0.0
    for _ in range(count):
        u = rng.uniform(-1.0, 1.0, partition.M)
        v = u + np.abs(rng.normal(0.0, 0.3, partition.M))
        theta = float(rng.uniform(-5.0, 5.0))
        rep = vex_properties_check(partition, u, v, theta)
        worst = max(worst, rep.monotonicity_violation, rep.shift_violation)
    return CheckResult("vex monotonicity and constant shift", worst <= VEX_TOL, worst, VEX_TOL,
                       f"{count} instances")


@_timed
def check_convexity(field: ValueField) -> CheckResult:
    worst = 0.0
    N1, _, L = field.values.shape
    for n in range(N1):
        for ell in range(L):
            worst = max(worst, convexity_defect(field.simplex, field.values[n, :, ell]))
    return CheckResult("convexity preservation", worst <= CONVEXITY_TOL, worst, CONVEXITY_TOL,
                       f"{N1 * L} slices")


def interior_nodes(partition: SimplexPartition) -> np.ndarray:
    return np.flatnonzero(np.all(partition.nodes > 0, axis=1))


@_timed
def check_dpp(field: ValueField) -> CheckResult:
    ms = interior_nodes(field.simplex)
    worst = 0.0
    for n in range(field.time.N):
        for ell in range(field.space.L):
            worst = max(worst, float(dpp_residuals(field, n, ell, ms).max(initial=0.0)))
    return CheckResult("dpp representation", worst <= DPP_TOL, worst, DPP_TOL,
                       f"{field.time.N * field.space.L * len(ms)} nodes")


def sample_contexts(rng, field: ValueField, count: int, off_grid: float = 0.1):
    """Random ``(n, x, p)`` with ``p`` uniform on the simplex; a fraction of ``x`` off the grid."""
    N, space = field.time.N, field.space
    I = field.simplex.I
    for _ in range(count):
        n = int(rng.integers(0, N + 1))
        if rng.random() < off_grid:
            x = space.lower + rng.random(space.d) * (space.upper - space.lower)
        else:
            x = space.nodes[int(rng.integers(0, space.L))]
        p = rng.dirichlet(np.ones(I))
        yield n, x, p


@_timed
def check_martingale(rng, field: ValueField, count: int = 10_000) -> CheckResult:
    worst = 0.0
    for n, x, p in sample_contexts(rng, field, count):
        law = unconditional_feedback(field, n, x, p)
        if n == field.time.N:
            continue
        worst = max(worst, float(np.abs(law.mean() - law.p).max()), abs(float(law.probs.sum()) - 1.0))
    return CheckResult("feedback martingale", worst <= MARTINGALE_TOL, worst, MARTINGALE_TOL,
                       f"{count} contexts")


def _isaacs_samples(rng, problem: GameProblem, count: int):
    d, I = problem.space.d, problem.simplex.I
    corners = [np.ones(d), -np.ones(d)]
    for j in range(count):
        x = problem.space.lower + rng.random(d) * (problem.space.upper - problem.space.lower)
        z = corners[j] if j < 2 else rng.uniform(-1.0, 1.0, d)
        yield float(rng.uniform(0, problem.time.T)), x, z, rng.dirichlet(np.ones(I))


@_timed
def check_isaacs(rng, problem: GameProblem, count: int = 200) -> CheckResult:
    rep = isaacs_check(problem.hamiltonian, _isaacs_samples(rng, problem, count))
    return CheckResult("isaacs condition", rep.ok, rep.residual, rep.tol,
                       f"inf-sup {rep.inf_sup:.3g} vs sup-inf {rep.sup_inf:.3g}", warning_only=True)


@_timed
def check_moduli(field: ValueField) -> CheckResult:
    mod = estimate_moduli(field)
    vals = (mod.L_p, mod.L_x, mod.holder_C, mod.sup_norm)
    ok = all(np.isfinite(vals))
    return CheckResult("regularity moduli finite", ok, max(vals), float("inf"),
                       f"L_p={mod.L_p:.4g} L_x={mod.L_x:.4g} C_t={mod.holder_C:.4g} sup={mod.sup_norm:.4g}")


def run_suite(problem: GameProblem, seed: int = 0, convexify: bool = True, workers: int = 1,
              oracle_instances: int = 200, vex_instances: int = 100, contexts: int = 10_000,
              field: Optional[ValueField] = None) -> tuple[list[CheckResult], Optional[ValueField]]:
    """Run every check. A solver failure is reported as a failed check."""
    rng = np.random.default_rng(seed)
    results = []
    if field is None:
        t0 = time.perf_counter()
        try:
            field = solve(problem, convexify=convexify, workers=workers)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            results.append(CheckResult("solve", False, float("nan"), 0.0, f"aborted: {exc}",
                                       seconds=time.perf_counter() - t0))
            return results, None
        results.append(CheckResult("solve", True, 0.0, 0.0, "completed", seconds=time.perf_counter() - t0))
    results.append(check_oracle(rng, oracle_instances, field))
    results.append(check_vex_properties(rng, problem.simplex, vex_instances))
    if convexify:
        results.append(check_convexity(field))
        results.append(check_dpp(field))
        results.append(check_martingale(rng, field, contexts))
    if isinstance(problem.hamiltonian, MinimaxHamiltonian):
        results.append(check_isaacs(rng, problem))
    results.append(check_moduli(field))
    return results, field
