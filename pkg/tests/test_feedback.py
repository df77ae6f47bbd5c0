import csv

import numpy as np
import pytest

from conftest import logistic_problem
from vexgame.dynamics import constant_diffusion
from vexgame.feedback import (belief_drift, dpp_residual, dpp_residuals, feedback_distribution,
                              simulate_many, simulate_trajectory, unconditional_feedback,
                              write_trajectories_csv)
from vexgame.grid import DomainError, build_partitions
from vexgame.hamiltonian import zero_hamiltonian
from vexgame.solver import GameProblem, ValueField, constant_payoff, solve


@pytest.fixture
def bump_field():
    """One level whose p-slice has the chord from (1/4, 3/4) to (3/4, 1/4) at p = (1/2, 1/2)."""
    tg, sp, xg = build_partitions(2, 4, [[0.0, 1.0]], 1, 1.0, 1)
    prob = GameProblem(tg, sp, xg, constant_diffusion([[0.0]]), zero_hamiltonian(), constant_payoff([0.0, 0.0]))
    values = np.zeros((2, sp.M, xg.L))
    values[0] = np.array([1.0, 0.0, 0.0, 0.0, 1.0])[:, None]
    active = np.ones(values.shape, dtype=bool)
    active[0, 2, :] = False
    return ValueField(prob, values, active)


def test_conditional_law_example(bump_field):
    law = feedback_distribution(bump_field, 0, [0.0], [0.5, 0.5], 0)
    got = {tuple(a): q for a, q in zip(law.atoms.tolist(), law.probs)}
    assert got[(0.25, 0.75)] == pytest.approx(0.25)
    assert got[(0.75, 0.25)] == pytest.approx(0.75)
    law2 = feedback_distribution(bump_field, 0, [0.0], [0.5, 0.5], 1)
    assert law2.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_unconditional_example(bump_field):
    law = unconditional_feedback(bump_field, 0, [0.0], [0.5, 0.5])
    np.testing.assert_allclose(sorted(law.probs), [0.5, 0.5])
    np.testing.assert_allclose(law.mean(), [0.5, 0.5], atol=1e-12)
    assert law.jump_second_moment() == pytest.approx(0.25)


def test_point_masses(bump_field):
    law = feedback_distribution(bump_field, 0, [0.0], [0.25, 0.75], 0)
    assert law.probs.tolist() == [1.0]
    np.testing.assert_array_equal(law.atoms[0], [0.25, 0.75])
    law = feedback_distribution(bump_field, 1, [0.0], [0.5, 0.5], 1)
    np.testing.assert_array_equal(law.atoms, [[0.0, 1.0]])
    law = feedback_distribution(bump_field, 0, [0.0], [0.0, 1.0], 0)
    np.testing.assert_array_equal(law.atoms, [[0.0, 1.0]])
    law = unconditional_feedback(bump_field, 0, [0.0], [0.75, 0.25])
    np.testing.assert_array_equal(law.atoms, [[0.75, 0.25]])


def test_context_errors(bump_field):
    with pytest.raises(DomainError):
        feedback_distribution(bump_field, 2, [0.0], [0.5, 0.5], 0)
    with pytest.raises(DomainError):
        feedback_distribution(bump_field, 0, [0.0], [0.5, 0.5], 2)
    with pytest.raises(DomainError):
        feedback_distribution(bump_field, 0, [1.5], [0.5, 0.5], 0)
    with pytest.raises(DomainError):
        feedback_distribution(bump_field, 0, [0.0], [0.7, 0.5], 0)


def test_martingale_and_normalization(small_field, rng):
    f = small_field
    for _ in range(300):
        n = int(rng.integers(0, f.time.N))
        x = [rng.random()] if rng.random() < 0.3 else f.space.nodes[int(rng.integers(0, f.space.L))]
        p = rng.dirichlet([1.0, 1.0])
        law = unconditional_feedback(f, n, x, p)
        np.testing.assert_allclose(law.mean(), law.p, atol=1e-12)
        for i in range(2):
            cond = feedback_distribution(f, n, x, p, i)
            assert cond.probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert cond.probs.min() >= 0.0


def test_dpp_small_instance(small_field):
    f = small_field
    ms = np.arange(1, f.simplex.M - 1)
    worst = max(dpp_residuals(f, n, ell, ms).max() for n in range(f.time.N) for ell in range(f.space.L))
    assert worst <= 1e-10


def test_dpp_inactive_and_constant(small_field):
    f = small_field
    n, ell = 3, 17
    act = np.flatnonzero(f.active[n, :, ell])
    assert all(dpp_residual(f, n, ell, int(m)) <= 1e-12 for m in act)
    p = logistic_problem(N=4, M=8, L=8, hamiltonian=zero_hamiltonian(), payoff=constant_payoff([1.0, -2.0]))
    g = solve(p)
    assert max(dpp_residuals(g, n, ell).max() for n in range(4) for ell in range(p.space.L)) == 0.0


def test_trajectories_reproducible(small_field):
    a = simulate_trajectory(small_field, [0.5], [0.3, 0.7], seed=11, index=4)
    b = simulate_trajectory(small_field, [0.5], [0.3, 0.7], seed=11, index=4)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.p, b.p)
    assert a.i == b.i
    np.testing.assert_array_equal(a.p[-1], np.eye(2)[a.i])


def test_trivial_dynamics_keep_belief():
    p = logistic_problem(N=6, M=10, L=10, sigma0=0.0, hamiltonian=zero_hamiltonian(),
                         payoff=constant_payoff([0.0, 1.0]))
    f = solve(p)
    for k in range(5):
        tr = simulate_trajectory(f, [0.3], [0.4, 0.6], seed=2, index=k)
        assert np.all(tr.X == 0.3)
        np.testing.assert_allclose(tr.p[:-1], np.tile([0.4, 0.6], (7, 1)))
        np.testing.assert_array_equal(tr.p[-1], np.eye(2)[tr.i])


def test_sampled_one_step_mean(small_field):
    law = unconditional_feedback(small_field, 2, small_field.space.nodes[20], [0.5, 0.5])
    assert len(law.probs) > 1
    rng = np.random.default_rng(5)
    draws = law.sample(rng, size=100_000)
    var = law.probs @ (law.atoms - law.p) ** 2
    se = np.sqrt(var / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - law.p) <= 4 * se)


def test_csv_and_drift(small_field, tmp_path):
    trajs = simulate_many(small_field, [0.5], [0.5, 0.5], seed=1, K=20)
    mean, se = belief_drift(trajs)
    assert mean.shape == (small_field.time.N + 1, 2)
    path = tmp_path / "traj.csv"
    write_trajectories_csv(path, trajs)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["k", "n", "t", "x0", "p0", "p1", "i"]
    assert len(rows) == 20 * (small_field.time.N + 2)
    assert float(rows[3]["x0"]) == trajs[0].X[3, 0]
