import numpy as np
import pytest

from vexgame.hamiltonian import (MinimaxHamiltonian, ModelError, constant_hamiltonian,
                                 eval_hamiltonian, growth_diagnostic, isaacs_check, trig_hamiltonian,
                                 zero_hamiltonian)


def minimax(b, ell, U=(-1.0, 1.0), V=(-1.0, 1.0), I=2):
    def drift(t, x, u, v):
        return np.full((len(x), 1), b(u, v))

    def costs(t, x, u, v):
        return np.tile(np.asarray(ell(u, v), dtype=float), (len(x), 1)).reshape(len(x), I)

    return MinimaxHamiltonian(drift, costs, list(U), list(V))


def test_trig_at_center():
    H = trig_hamiltonian()
    assert eval_hamiltonian(H, 0.0, [0.5], [0.0], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    expected = np.sin(2 * np.pi * 0.3) * np.cos(5 * np.pi * 0.2) - np.cos(5 * np.pi * 0.3) * np.sin(3 * np.pi * 0.2)
    assert eval_hamiltonian(H, 0.0, [0.2], [9.0], [0.3, 0.7]) == pytest.approx(expected)


def test_minimax_sum_controls():
    H = minimax(lambda u, v: u + v, lambda u, v: [0.0, 0.0])
    assert eval_hamiltonian(H, 0.0, [0.1], [1.0], [0.5, 0.5]) == pytest.approx(0.0)


def test_constant_costs_give_constant(rng):
    H = minimax(lambda u, v: 0.0, lambda u, v: [2.5, 2.5])
    for p in rng.dirichlet([1, 1], 10):
        assert eval_hamiltonian(H, 0.0, [0.0], [3.0], p) == pytest.approx(2.5)
    assert eval_hamiltonian(constant_hamiltonian(1.5), 0.0, [0.0], [0.0], [1, 0]) == 1.5


def test_empty_controls():
    with pytest.raises(ModelError):
        minimax(lambda u, v: 0.0, lambda u, v: [0, 0], U=())


def _samples(rng, n=50):
    return [(rng.random(), rng.random(1), rng.uniform(-2, 2, 1), rng.dirichlet([1, 1])) for _ in range(n)]


def test_isaacs_separable(rng):
    H = minimax(lambda u, v: u - 2 * v, lambda u, v: [u * u, v])
    assert isaacs_check(H, _samples(rng)).residual <= 1e-12


def test_isaacs_product_fails():
    H = minimax(lambda u, v: u * v, lambda u, v: [0.0, 0.0])
    rep = isaacs_check(H, [(0.0, [0.5], [1.0], [0.5, 0.5])])
    assert rep.inf_sup == 1.0 and rep.sup_inf == -1.0 and rep.residual == 2.0
    assert not rep.ok


def test_isaacs_singletons(rng):
    H = minimax(lambda u, v: u * v, lambda u, v: [u, v], U=(0.3,), V=(-0.2,))
    assert isaacs_check(H, _samples(rng)).residual == 0.0


def test_isaacs_needs_minimax():
    with pytest.raises(ModelError):
        isaacs_check(trig_hamiltonian(), [(0.0, [0.5], [0.0], [0.5, 0.5])])


def test_weak_duality(rng):
    H = minimax(lambda u, v: np.sin(3 * u + v), lambda u, v: [u * v, u - v],
                U=np.linspace(-1, 1, 5), V=np.linspace(-1, 1, 4))
    for t, x, z, p in _samples(rng, 100):
        xb, zb, pb = np.atleast_2d(x), np.atleast_2d(z), np.atleast_2d(p)
        assert H(t, xb, zb, pb)[0] >= H.lower_value(t, xb, zb, pb)[0]


def test_lipschitz_in_z(rng):
    H = minimax(lambda u, v: u + 0.5 * v, lambda u, v: [u, v])
    B = H.drift_bound(0.0, np.zeros((1, 1)))
    for _ in range(100):
        z1, z2 = rng.normal(size=(2, 1, 1))
        x, p = np.zeros((1, 1)), np.array([[0.4, 0.6]])
        assert abs(H(0.0, x, z1, p)[0] - H(0.0, x, z2, p)[0]) <= B * abs(z1 - z2).sum() + 1e-14


def test_payoff_affine_in_p(rng):
    H = minimax(lambda u, v: u * v, lambda u, v: [u + v, u - v])
    x, z = np.zeros((1, 1)), np.ones((1, 1))
    p, q = np.array([[0.2, 0.8]]), np.array([[0.9, 0.1]])
    mid = 0.3 * p + 0.7 * q
    T = H.payoffs(0.0, x, z, mid)
    np.testing.assert_allclose(T, 0.3 * H.payoffs(0.0, x, z, p) + 0.7 * H.payoffs(0.0, x, z, q), atol=1e-12)


def test_growth_diagnostic(rng):
    samples = _samples(rng, 200)
    assert growth_diagnostic(zero_hamiltonian(), samples) == 0.0
    assert growth_diagnostic(trig_hamiltonian(), samples) <= 2.0
    H = minimax(lambda u, v: 1.5 * u, lambda u, v: [0.0, 0.0], V=(0.0,))
    assert growth_diagnostic(H, samples) <= 1.5
