"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a ``PASS``/``FAIL`` line; the lines are printed at the
end of the pytest run (see ``conftest.py``) and when this file is run as a
script. The full-resolution convergence study is opt-in through
``VEXGAME_FULL_STUDY=1``; the reduced study always runs.
"""
import os
import time
from itertools import product

import numpy as np
import pytest

from conftest import logistic_problem
from vexgame import diagnostics
from vexgame.convergence import FULL_PLAN, REDUCED_PLAN, run_studies
from vexgame.config import ExperimentConfig
from vexgame.dynamics import constant_diffusion
from vexgame.envelope import convexity_defect
from vexgame.feedback import dpp_residuals
from vexgame.grid import SimplexPartition, build_partitions
from vexgame.hamiltonian import ClosedFormHamiltonian, zero_hamiltonian
from vexgame.solver import (GameProblem, TerminalPayoff, coincidence_mask, constant_payoff,
                            estimate_moduli, solve)

SEED = 20240611
RESULTS: list[str] = []


def record(k: int, ok: bool, text: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {text}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def instance():
    """The sigma0 = 0.5, T = 0.5, N = 25, L = M = 100, g = 0 solve on one worker, timed."""
    prob = logistic_problem()
    t0 = time.perf_counter()
    field = solve(prob, workers=1)
    return field, time.perf_counter() - t0


def test_c01_envelope_oracle():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = max(diagnostics.oracle_gap(part, y) for part, y in diagnostics.random_instances(rng, 200))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-10 and dt < 10.0,
           f"hull vs enumeration oracle, 200 instances: max gap {worst:.2e} (tol 1e-10), {dt:.1f}s (< 10s)")


def test_c02_vex_properties():
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for part in (SimplexPartition.uniform(2, 20), SimplexPartition.uniform(3, 4)):
        worst = max(worst, diagnostics.check_vex_properties(rng, part, 100).value)
    record(2, worst <= 1e-10, f"monotonicity and constant shift, 100 instances per shape: {worst:.2e} (tol 1e-10)")


def test_c03_convexity(instance):
    field, dt = instance
    N1, _, L = field.values.shape
    worst = max(convexity_defect(field.simplex, field.values[n, :, l]) for n in range(N1) for l in range(L))
    record(3, worst <= 1e-10 and dt < 30.0 and (N1, L) == (26, 101),
           f"convexity defect over {N1}x{L} slices: {worst:.2e} (tol 1e-10); solve {dt:.1f}s single worker (< 30s)")


def test_c04_dpp(instance):
    field, _ = instance
    ms = diagnostics.interior_nodes(field.simplex)
    worst = max(float(dpp_residuals(field, n, l, ms).max()) for n in range(field.time.N)
                for l in range(field.space.L))
    record(4, worst <= 1e-10, f"max DPP residual over interior nodes: {worst:.2e} (tol 1e-10)")


def test_c05_martingale(instance):
    field, _ = instance
    res = diagnostics.check_martingale(np.random.default_rng(SEED + 2), field, 10_000)
    record(5, res.value <= 1e-12, f"|E[pi] - p| over 10^4 contexts: {res.value:.2e} (tol 1e-12)")


def test_c06_path_equivalence():
    prob = logistic_problem(N=10, M=50, L=50)
    assert prob.fast_path_ok
    fast = solve(prob, method="fast")
    general = solve(prob, method="general")
    gap = float(np.abs(fast.values - general.values).max())
    record(6, gap <= 1e-12, f"fast vs general path, N=10 L=M=50: {gap:.2e} (tol 1e-12)")


def _obstacle_gaps(field):
    raw = solve(field.problem, convexify=False)
    below = float((field.values - raw.values).max())
    mask = coincidence_mask(field.problem, raw)
    n, l = np.nonzero(mask)
    gap = float(np.abs(raw.values[n, :, l] - field.values[n, :, l]).max())
    spread = float(np.abs(raw.values - field.values).max())
    return below, gap, int(mask.sum()), spread


def test_c07_obstacle_comparison(instance):
    field, _ = instance
    # a second game, concave in p only for x > 0.6, has a non-trivial coincidence region
    H = ClosedFormHamiltonian(lambda t, x, z, p: (x[:, 0] > 0.6) * p[:, 0] * p[:, 1], depends_on_z=False)
    local = solve(logistic_problem(hamiltonian=H))
    parts, ok = [], True
    for name, f in (("reference game", field), ("local-H game", local)):
        below, gap, count, spread = _obstacle_gaps(f)
        ok &= below <= 1e-12 and gap <= 1e-12
        parts.append(f"{name}: max(V_vex - V_raw) {below:.2e}, coincidence gap {gap:.2e} on {count} "
                     f"slices (max raw-vex spread {spread:.3g})")
    record(7, ok, "; ".join(parts) + "; tol 1e-12")


def _study_line(tabs, dt):
    return ", ".join(f"{k} mean EOC {v.mean_eoc:.3f}" for k, v in tabs.items()) + f" [{dt:.0f}s]"


def _check_orders(tabs):
    return (0.7 <= tabs["dt"].mean_eoc <= 1.3 and tabs["dx"].mean_eoc >= 0.8 and tabs["dp"].mean_eoc >= 0.8)


def test_c08_convergence_reduced(tmp_path):
    fac = ExperimentConfig.from_dict({}).factory()
    t0 = time.perf_counter()
    tabs = run_studies(fac, REDUCED_PLAN, workers=os.cpu_count() or 1, cache_dir=tmp_path)
    dt = time.perf_counter() - t0
    for tab in tabs.values():
        print(tab)
    record(8, _check_orders(tabs) and dt <= 300,
           "reduced study (dt in [0.7,1.3], dx >= 0.8, dp >= 0.8, <= 300s): " + _study_line(tabs, dt))


@pytest.mark.skipif(os.environ.get("VEXGAME_FULL_STUDY") != "1", reason="set VEXGAME_FULL_STUDY=1")
def test_c08_convergence_full(tmp_path):
    fac = ExperimentConfig.from_dict({}).factory()
    t0 = time.perf_counter()
    tabs = run_studies(fac, FULL_PLAN, workers=os.cpu_count() or 1, cache_dir=tmp_path)
    dt = time.perf_counter() - t0
    for tab in tabs.values():
        print(tab)
    record(8, _check_orders(tabs) and dt <= 7200,
           "full study (dt in [0.7,1.3], dx >= 0.8, dp >= 0.8, <= 2h): " + _study_line(tabs, dt))


def _walk_expectation(g, x, step, lo, hi, steps):
    """Mean of g over all 2^steps clamped +-step walks started at each x."""
    signs = np.array(list(product((1.0, -1.0), repeat=steps))) if steps else np.zeros((1, 0))
    pos = np.repeat(np.asarray(x, float)[:, None], len(signs), axis=1)
    for j in range(steps):
        pos = np.clip(pos + signs[:, j] * step, lo, hi)
    return g(pos).mean(axis=1)


def test_c09_degenerate_solves():
    prob = logistic_problem(N=12, M=20, L=40, hamiltonian=zero_hamiltonian(), payoff=constant_payoff([0.7, -1.3]))
    V = solve(prob).values
    const_gap = float(np.abs(V - (prob.simplex.nodes @ [0.7, -1.3])[None, :, None]).max())

    N, L, lo, hi = 12, 24, -1.0, 1.0
    dx = (hi - lo) / L
    g = (lambda x: np.sin(3 * x) + x, lambda x: np.abs(x - 0.3))
    pay = TerminalPayoff(lambda x: np.column_stack([g[0](x[:, 0]), g[1](x[:, 0])]), 2)
    # sigma sqrt(tau) = dx, so every walk stays on the grid
    tg, sp, xg = build_partitions(2, 6, [[lo, hi]], L, N * dx ** 2, N)
    field = solve(GameProblem(tg, sp, xg, constant_diffusion([[1.0]]), zero_hamiltonian(), pay))
    walk_gap = 0.0
    for n in range(N + 1):
        Eg = np.column_stack([_walk_expectation(gi, xg.nodes[:, 0], dx, lo, hi, N - n) for gi in g])
        walk_gap = max(walk_gap, float(np.abs(field.values[n] - sp.nodes @ Eg.T).max()))
    record(9, const_gap <= 1e-15 and walk_gap <= 1e-12,
           f"constant payoff gap {const_gap:.2e} (machine precision); 2^(N-n) walk enumeration, N=12: "
           f"{walk_gap:.2e} (tol 1e-12)")


def test_c10_regularity(instance):
    field, _ = instance
    fine_p = estimate_moduli(solve(logistic_problem(M=200)))
    fine_t = estimate_moduli(solve(logistic_problem(N=50)))
    base = estimate_moduli(field)
    rp = max(base.L_p, fine_p.L_p) / min(base.L_p, fine_p.L_p)
    rt = max(base.holder_C, fine_t.holder_C) / min(base.holder_C, fine_t.holder_C)
    ok = np.isfinite([base.holder_C, fine_t.holder_C]).all() and rp <= 1.5 and rt <= 1.5
    record(10, ok, f"L_p {base.L_p:.4g} (M=100) vs {fine_p.L_p:.4g} (M=200), ratio {rp:.3f}; "
                   f"Hoelder C {base.holder_C:.4g} (N=25) vs {fine_t.holder_C:.4g} (N=50), ratio {rt:.3f}; "
                   f"tol 1.5")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
