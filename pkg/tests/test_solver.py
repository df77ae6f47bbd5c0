from itertools import product

import numpy as np
import pytest

from conftest import logistic_problem
from vexgame.dynamics import DiffusionModel, constant_diffusion
from vexgame.envelope import convexity_defect
from vexgame.grid import DomainError, build_partitions, interpolate_time
from vexgame.hamiltonian import ClosedFormHamiltonian, constant_hamiltonian, zero_hamiltonian
from vexgame.solver import (GameProblem, NumericalError, SingularityError, TerminalPayoff,
                            backward_step, coincidence_mask, compute_Y, compute_Z, constant_payoff,
                            estimate_moduli, eval_solution, restore_field, solve, terminal_values,
                            zero_payoff)


def problem(bounds=((-5.0, 5.0),), L=100, M=4, T=0.25, N=1, sigma=2.0, H=None, g=None, I=2):
    tg, sp, xg = build_partitions(I, M, list(bounds), L, T, N)
    d = len(bounds)
    diff = constant_diffusion(np.eye(d) * sigma)
    return GameProblem(tg, sp, xg, diff, H or zero_hamiltonian(), g or zero_payoff(I))


def test_terminal_values():
    p = problem()
    assert np.all(terminal_values(zero_payoff(), p.simplex, p.space) == 0)
    tv = terminal_values(constant_payoff([1.0, 0.0]), p.simplex, p.space)
    m = int(np.flatnonzero(np.isclose(p.simplex.nodes[:, 0], 0.25))[0])
    assert np.all(tv[m] == 0.25)
    g = TerminalPayoff(lambda x: np.column_stack([np.sin(x[:, 0]), x[:, 0] ** 2]), 2)
    tv = terminal_values(g, p.simplex, p.space)
    assert max(convexity_defect(p.simplex, tv[:, l]) for l in range(p.space.L)) <= 1e-12


def test_z_examples():
    p = problem()
    V = np.tile(p.space.nodes[:, 0], (p.simplex.M, 1))
    # V(y) = y, sigma = 2, tau = 0.25: slope recovered exactly
    np.testing.assert_allclose(compute_Z(p, V, 0, [0.3]), 1.0, atol=1e-12)
    np.testing.assert_allclose(compute_Z(p, np.full_like(V, 3.0), 0, [0.3]), 0.0, atol=1e-15)
    p1 = problem(sigma=1.0)
    Vsq = np.tile(p1.space.nodes[:, 0] ** 2, (p1.simplex.M, 1))
    np.testing.assert_allclose(compute_Z(p1, Vsq, 0, [0.0]), 0.0, atol=1e-12)


def test_z_degenerate_and_singular():
    lp = logistic_problem(N=2, M=4, L=10, hamiltonian=ClosedFormHamiltonian(lambda t, x, z, p: z[:, 0]))
    V = np.random.default_rng(1).normal(size=(lp.simplex.M, lp.space.L))
    assert np.all(compute_Z(lp, V, 0, [0.0]) == 0.0)
    assert np.all(compute_Z(lp, V, 0, [1.0]) == 0.0)
    sing = DiffusionModel(2, lambda t, x: np.broadcast_to([[1.0, 0.0], [0.0, 0.0]], (len(x), 2, 2)))
    tg, sp, xg = build_partitions(2, 2, [[0, 1], [0, 1]], 4, 1.0, 2)
    prob = GameProblem(tg, sp, xg, sing, zero_hamiltonian(), zero_payoff())
    with pytest.raises(SingularityError):
        compute_Z(prob, np.zeros((sp.M, xg.L)), 0, [0.5, 0.5])


def test_y_examples():
    p = problem()
    V = np.full((p.simplex.M, p.space.L), 1.7)
    np.testing.assert_allclose(compute_Y(p, V, 0, [0.1]), 1.7)
    p2 = problem(T=0.02, H=constant_hamiltonian(1.0))
    np.testing.assert_allclose(compute_Y(p2, np.zeros_like(V), 0, [0.1]), 0.02)
    lp = logistic_problem()
    Y = compute_Y(lp, np.zeros((lp.simplex.M, lp.space.L)), lp.time.N - 1, [0.5], m=50)
    assert Y == pytest.approx(0.0, abs=1e-16)


def test_constants_are_fixed_points():
    lp = logistic_problem(N=5, M=10, L=10, hamiltonian=zero_hamiltonian(), payoff=constant_payoff([2.0, -1.0]))
    V = terminal_values(lp.payoff, lp.simplex, lp.space)
    Vn, _, _ = backward_step(lp, V, 4)
    np.testing.assert_array_equal(Vn, V)


def walk_oracle(g, x0, step, lo, hi, steps):
    """E[g(X_N)] over all 2^steps clamped walk outcomes, by enumeration."""
    total = 0.0
    for signs in product((1, -1), repeat=steps):
        x = x0
        for s in signs:
            x = min(max(x + s * step, lo), hi)
        total += g(x)
    return total / 2 ** steps


@pytest.mark.parametrize("N", [3, 8])
def test_zero_hamiltonian_matches_walk_enumeration(N):
    L, lo, hi = 20, -1.0, 1.0
    dx = (hi - lo) / L
    g = [lambda x: np.sin(3 * x) + x, lambda x: np.abs(x - 0.3)]
    pay = TerminalPayoff(lambda x: np.column_stack([g[0](x[:, 0]), g[1](x[:, 0])]), 2)
    # sigma sqrt(tau) = dx keeps every successor on a node
    tg, sp, xg = build_partitions(2, 6, [[lo, hi]], L, N * dx ** 2, N)
    prob = GameProblem(tg, sp, xg, constant_diffusion([[1.0]]), zero_hamiltonian(), pay)
    field = solve(prob)
    for n in (0, N // 2):
        for ell in (0, 3, 10, 17, 20):
            x0 = xg.nodes[ell, 0]
            Eg = [walk_oracle(gi, x0, dx, lo, hi, N - n) for gi in g]
            np.testing.assert_allclose(field.values[n, :, ell], sp.nodes @ Eg, atol=1e-12)


def test_one_step_bounded_and_convex():
    lp = logistic_problem()
    V0 = terminal_values(lp.payoff, lp.simplex, lp.space)
    V, _, Y = backward_step(lp, V0, lp.time.N - 1)
    assert np.abs(V).max() <= lp.time.tau * 2.0
    assert max(convexity_defect(lp.simplex, V[:, l]) for l in range(lp.space.L)) <= 1e-10
    assert np.all(V <= Y + 1e-15)


def test_single_step_identity():
    p = problem(g=constant_payoff([1.0, 0.0]))
    f = solve(p)
    np.testing.assert_allclose(f.values[0], np.tile(p.simplex.nodes[:, :1], (1, p.space.L)), atol=1e-15)


def test_paths_agree_and_workers(small_field):
    prob = small_field.problem
    general = solve(prob, method="general")
    assert np.abs(general.values - small_field.values).max() <= 1e-12
    threaded = solve(prob, workers=3)
    np.testing.assert_array_equal(threaded.values, small_field.values)
    np.testing.assert_array_equal(threaded.active, small_field.active)
    with pytest.raises(ValueError):
        solve(problem(bounds=((0, 1), (0, 1)), L=2), method="fast")


def test_unconvexified_dominates(small_field):
    raw = solve(small_field.problem, convexify=False)
    assert np.all(raw.values >= small_field.values - 1e-12)
    mask = coincidence_mask(small_field.problem, raw)
    n, ell = np.nonzero(mask)
    np.testing.assert_allclose(raw.values[n, :, ell], small_field.values[n, :, ell], atol=1e-12)


def test_non_finite_aborts_with_location():
    bad = ClosedFormHamiltonian(lambda t, x, z, p: np.where(x[:, 0] > 0.5, np.nan, 0.0), depends_on_z=False)
    lp = logistic_problem(N=3, M=4, L=4, hamiltonian=bad)
    with pytest.raises(NumericalError, match="level n=2"):
        solve(lp)
    with pytest.raises(NumericalError, match="spatial node l=3"):
        solve(lp, method="general")


def test_eval_solution(small_field):
    f = small_field
    tg, sp, xg = f.time, f.simplex, f.space
    for n, m, ell in [(0, 0, 0), (3, 17, 25), (10, 50, 50), (6, 25, 11)]:
        assert eval_solution(f, tg.nodes[n], xg.nodes[ell], sp.nodes[m]) == f.values[n, m, ell]
    # a chord of the hull: any inactive node lies between two support nodes
    n, ell = 0, 20
    env = f.envelope(n, ell)
    m = int(np.flatnonzero(~env.active)[0])
    a, b = env.support[m]
    q = 0.3 * sp.nodes[a] + 0.7 * sp.nodes[b]
    chord = 0.3 * f.values[n, a, ell] + 0.7 * f.values[n, b, ell]
    assert eval_solution(f, 0.0, xg.nodes[ell], q) == pytest.approx(chord, abs=1e-13)
    t = 0.5 * (tg.nodes[2] + tg.nodes[3])
    x, p = [0.437], [0.31, 0.69]
    expect = interpolate_time(eval_solution(f, tg.nodes[2], x, p), eval_solution(f, tg.nodes[3], x, p),
                              t, tg.nodes[2], tg.tau)
    assert eval_solution(f, t, x, p) == pytest.approx(expect, abs=1e-14)
    with pytest.raises(DomainError):
        eval_solution(f, 0.0, [1.5], p)


def test_p_slice_convex_between_nodes(small_field):
    f = small_field
    ps = np.linspace(0, 1, 203)
    vals = [eval_solution(f, 0.1, [0.41], [q, 1 - q]) for q in ps]
    assert np.min(np.diff(vals, 2)) >= -1e-12


def test_moduli_trivial():
    p = problem(g=constant_payoff([3.0, 3.0]), N=3)
    mod = estimate_moduli(solve(p))
    assert (mod.L_p, mod.L_x, mod.holder_C) == (0.0, 0.0, 0.0)
    p = problem(g=constant_payoff([1.0, 0.0]), N=1)
    # a single-level view of the terminal slice is affine in p with slope 1
    assert estimate_moduli(solve(p)).L_p == pytest.approx(1.0)


def test_comparison_and_shift():
    g1 = TerminalPayoff(lambda x: np.column_stack([np.sin(4 * x[:, 0]), x[:, 0]]), 2)
    g2 = TerminalPayoff(lambda x: np.column_stack([np.sin(4 * x[:, 0]) + 0.1, x[:, 0] + x[:, 0] ** 2]), 2)
    a = solve(logistic_problem(N=8, M=20, L=20, payoff=g1))
    b = solve(logistic_problem(N=8, M=20, L=20, payoff=g2))
    assert np.all(a.values <= b.values + 1e-9)
    g3 = TerminalPayoff(lambda x: g1(x) + 0.75, 2)
    c = solve(logistic_problem(N=8, M=20, L=20, payoff=g3))
    np.testing.assert_allclose(c.values - a.values, 0.75, atol=1e-12)


def test_boundedness(reference_field):
    f = reference_field
    assert np.abs(f.values).max() <= 0.0 + f.time.T * 2.0


def test_restore_field(small_field):
    r = restore_field(small_field.problem, small_field.values)
    np.testing.assert_array_equal(r.active, small_field.active)
    with pytest.raises(ValueError):
        restore_field(small_field.problem, small_field.values + 1e-6)
