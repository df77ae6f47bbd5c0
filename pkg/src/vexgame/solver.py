"""Backward induction for the convexity-constrained value function.

Each step computes, at every spatial node, the exact one-step expectation of
the next level over the binomial increments, a gradient estimate ``Z``, the
unconstrained update ``Y = E[V] + tau H(t, x, Z, p)`` and finally the lower
convex envelope of ``Y`` in ``p``.

Two code paths share the same output contract: a general one (any ``d``,
``I`` in {2, 3}) that processes spatial nodes one at a time, and a vectorized
fast path for ``I = 2``, ``d = 1``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .dynamics import DiffusionModel, increment_law, outcome_points
from .envelope import EnvelopeResult, envelope_1d, envelope_from_active, lower_convex_envelope
from .grid import SimplexPartition, SpatialGrid, TemporalGrid, combine

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


class SingularityError(NumericalError):
    pass


@dataclass(frozen=True)
class TerminalPayoff:
    """Terminal payoffs ``g_i``; ``func`` maps points ``(n, d)`` to ``(n, I)``."""

    func: Callable[[np.ndarray], np.ndarray]
    I: int
    name: str = "custom"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.func(x), dtype=float).reshape(len(x), self.I)


def constant_payoff(values) -> TerminalPayoff:
    g = np.asarray(values, dtype=float)
    return TerminalPayoff(lambda x: np.broadcast_to(g, (len(x), len(g))), len(g),
                          name=f"constant{tuple(g.tolist())}")


def zero_payoff(I: int = 2) -> TerminalPayoff:
    return constant_payoff(np.zeros(I))


@dataclass(frozen=True)
class GameProblem:
    time: TemporalGrid
    simplex: SimplexPartition
    space: SpatialGrid
    diffusion: DiffusionModel
    hamiltonian: Callable
    payoff: TerminalPayoff

    def __post_init__(self):
        if self.payoff.I != self.simplex.I:
            raise ValueError(f"payoff has {self.payoff.I} configurations, simplex has {self.simplex.I}")
        if self.diffusion.d != self.space.d:
            raise ValueError("diffusion and spatial grid dimensions differ")

    @property
    def fast_path_ok(self) -> bool:
        return self.simplex.I == 2 and self.space.d == 1

    @property
    def uses_z(self) -> bool:
        return getattr(self.hamiltonian, "depends_on_z", True)


@dataclass(eq=False)
class ValueField:
    """Nodal values ``values[n, m, l]`` over (time level, simplex node, spatial node).

    ``active[n, m, l]`` records which nodes carried the envelope at that
    level; together with the values it determines the hull facets used for
    convex interpolation in ``p`` and for the feedback laws.
    """

    problem: GameProblem
    values: np.ndarray
    active: np.ndarray
    convexified: bool = True
    _envelopes: dict = field(default_factory=dict, repr=False)

    @property
    def time(self) -> TemporalGrid:
        return self.problem.time

    @property
    def simplex(self) -> SimplexPartition:
        return self.problem.simplex

    @property
    def space(self) -> SpatialGrid:
        return self.problem.space

    def envelope(self, n: int, ell: int) -> EnvelopeResult:
        key = (n, ell)
        if key not in self._envelopes:
            self._envelopes[key] = envelope_from_active(
                self.simplex, self.values[n, :, ell], self.active[n, :, ell])
        return self._envelopes[key]


def terminal_values(payoff: TerminalPayoff, simplex: SimplexPartition, space: SpatialGrid) -> np.ndarray:
    """``V_N[m, l] = <p_m, g(x_l)>``."""
    return simplex.nodes @ payoff(space.nodes).T


def _successor_values(problem: GameProblem, V_next: np.ndarray, n: int, x: np.ndarray):
    """Values of the next level at the Euler successors of one point ``x``.

    Returns ``(vals, law, S)`` with ``vals`` of shape ``(n_p, 2^d)``.
    """
    t = problem.time.nodes[n]
    tau = problem.time.tau
    pts, law = outcome_points(problem.diffusion, t, x, tau)
    idx, w = problem.space.locate_many(pts[0])
    vals = combine(V_next, idx, w)
    return vals, law, problem.diffusion.matrix(t, x)[0]


def _z_from(problem: GameProblem, vals, law, S, n: int, x) -> np.ndarray:
    tau = problem.time.tau
    n_p, d = vals.shape[0], problem.space.d
    if not S.any():
        # all outcomes coincide and E[xi] = 0
        return np.zeros((n_p, d))
    if abs(np.linalg.det(S)) == 0.0:
        raise SingularityError(f"sigma is singular at t={problem.time.nodes[n]}, x={np.ravel(x)}")
    SiT = problem.diffusion.inverse_transpose(problem.time.nodes[n], x)[0]
    if not np.all(np.isfinite(SiT)):
        raise SingularityError(f"sigma^-T is not finite at x={np.ravel(x)}")
    dirs = law.xi @ SiT.T * np.sqrt(tau)  # (K, d): sigma^-T xi sqrt(tau)
    Z = np.zeros((n_p, d))
    for k in range(len(law.prob)):
        Z = Z + law.prob[k] * vals[:, k, None] * dirs[k]
    return Z / tau


def compute_Z(problem: GameProblem, V_next: np.ndarray, n: int, x, m: Optional[int] = None) -> np.ndarray:
    """Gradient estimate ``(1/tau) E[V_{n+1}(X) sigma^-T xi sqrt(tau)]`` at the point ``x``."""
    x = np.asarray(x, dtype=float).reshape(problem.space.d)
    vals, law, S = _successor_values(problem, V_next, n, x)
    Z = _z_from(problem, vals, law, S, n, x)
    return Z if m is None else Z[m]


def compute_Y(problem: GameProblem, V_next: np.ndarray, n: int, x, m: Optional[int] = None):
    """Unconstrained update ``E[V_{n+1}(X)] + tau H(t_n, x, Z, p_m)`` at the point ``x``."""
    x = np.asarray(x, dtype=float).reshape(problem.space.d)
    Y = _column_Y(problem, V_next, n, x)
    return Y if m is None else float(Y[m])


def _column_Y(problem: GameProblem, V_next: np.ndarray, n: int, x: np.ndarray) -> np.ndarray:
    tau = problem.time.tau
    vals, law, S = _successor_values(problem, V_next, n, x)
    EV = np.zeros(vals.shape[0])
    for k in range(len(law.prob)):
        EV = EV + law.prob[k] * vals[:, k]
    P = problem.simplex.nodes
    if problem.uses_z:
        Z = _z_from(problem, vals, law, S, n, x)
    else:
        Z = np.zeros((len(P), problem.space.d))
    X = np.broadcast_to(x, (len(P), problem.space.d))
    H = np.asarray(problem.hamiltonian(problem.time.nodes[n], X, Z, P), dtype=float)
    return EV + tau * H


def _general_level(problem, V_next, n, convexify, workers):
    space = problem.space
    n_p = problem.simplex.M
    Y = np.empty((n_p, space.L))
    V = np.empty_like(Y)
    active = np.ones(Y.shape, dtype=bool)

    def work(cols):
        for ell in cols:
            Y[:, ell] = _column_Y(problem, V_next, n, space.nodes[ell])
            _check_finite(Y[:, ell], n, ell)
            if convexify:
                env = lower_convex_envelope(problem.simplex, Y[:, ell])
                V[:, ell] = env.values
                active[:, ell] = env.active
            else:
                V[:, ell] = Y[:, ell]

    chunks = np.array_split(np.arange(space.L), max(1, workers))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(work, chunks))
    else:
        work(chunks[0])
    return V, active, Y


def _fast_level(problem, V_next, n, convexify, workers):
    space, tau = problem.space, problem.time.tau
    t = problem.time.nodes[n]
    x = space.nodes[:, 0]
    S = problem.diffusion.matrix(t, space.nodes)[:, 0, 0]
    step = S * np.sqrt(tau)
    ip, wp = space.locate_many(x + step)
    im, wm = space.locate_many(x - step)
    Vp = combine(V_next, ip, wp)
    Vm = combine(V_next, im, wm)
    EV = 0.5 * Vp + 0.5 * Vm
    P = problem.simplex.nodes
    n_p, n_x = EV.shape
    if problem.uses_z:
        zero = S == 0
        inv = problem.diffusion.inverse_transpose(t, space.nodes[~zero])[:, 0, 0]
        Z = np.zeros_like(EV)
        r = np.sqrt(tau) * inv
        Z[:, ~zero] = (0.5 * Vp[:, ~zero] * r + 0.5 * Vm[:, ~zero] * -r) / tau
    else:
        Z = np.zeros_like(EV)
    Xf = np.broadcast_to(x[None, :], (n_p, n_x)).reshape(-1, 1)
    Pf = np.broadcast_to(P[:, None, :], (n_p, n_x, 2)).reshape(-1, 2)
    H = np.asarray(problem.hamiltonian(t, Xf, Z.reshape(-1, 1), Pf), dtype=float).reshape(n_p, n_x)
    Y = EV + tau * H
    if not np.all(np.isfinite(Y)):
        m, ell = np.argwhere(~np.isfinite(Y))[0]
        _check_finite(Y[:, ell], n, ell)
    V = Y.copy()
    active = np.ones(Y.shape, dtype=bool)
    if convexify:
        def work(cols):
            for ell in cols:
                V[:, ell], active[:, ell] = envelope_1d(Y[:, ell])

        chunks = np.array_split(np.arange(n_x), max(1, workers))
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                list(ex.map(work, chunks))
        else:
            work(chunks[0])
    return V, active, Y


def _check_finite(col, n, ell):
    bad = np.flatnonzero(~np.isfinite(col))
    if len(bad):
        raise NumericalError(f"non-finite value at level n={n}, simplex node m={bad[0]}, spatial node l={ell}")


def backward_step(problem: GameProblem, V_next: np.ndarray, n: int, convexify: bool = True,
                  method: str = "auto", workers: int = 1):
    """Compute level ``n`` from level ``n + 1``.

    Returns ``(V_n, active_n, Y_n)``; ``Y_n`` is the unconstrained update
    before convexification.
    """
    if method == "auto":
        method = "fast" if problem.fast_path_ok else "general"
    if method == "fast":
        if not problem.fast_path_ok:
            raise ValueError("the fast path needs I = 2 and d = 1")
        return _fast_level(problem, V_next, n, convexify, workers)
    if method != "general":
        raise ValueError(f"unknown method {method!r}")
    return _general_level(problem, V_next, n, convexify, workers)


def sweep(problem: GameProblem, convexify: bool = True, method: str = "auto",
          workers: int = 1) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(n, V_n, active_n)`` for ``n = N, N-1, ..., 0``, keeping one level in memory."""
    V = terminal_values(problem.payoff, problem.simplex, problem.space)
    active = np.ones(V.shape, dtype=bool)
    N = problem.time.N
    yield N, V, active
    for n in range(N - 1, -1, -1):
        V, active, _ = backward_step(problem, V, n, convexify, method, workers)
        yield n, V, active


def solve(problem: GameProblem, convexify: bool = True, method: str = "auto",
          workers: int = 1) -> ValueField:
    N = problem.time.N
    shape = (N + 1, problem.simplex.M, problem.space.L)
    values = np.empty(shape)
    active = np.empty(shape, dtype=bool)
    for n, V, act in sweep(problem, convexify, method, workers):
        values[n], active[n] = V, act
        log.debug("level %d done", n)
    return ValueField(problem, values, active, convexified=convexify)


def restore_field(problem: GameProblem, values, convexify: bool = True, tol: float = 1e-12) -> ValueField:
    """Rebuild a field from stored values, recovering the hull supports level by level.

    Each level is recomputed from the stored level above it and must agree
    with the stored values within ``tol`` (relative to the level's sup norm).
    """
    values = np.asarray(values, dtype=float)
    N = problem.time.N
    shape = (N + 1, problem.simplex.M, problem.space.L)
    if values.shape != shape:
        raise ValueError(f"stored field has shape {values.shape}, the problem needs {shape}")
    active = np.empty(shape, dtype=bool)
    active[N] = True
    term = terminal_values(problem.payoff, problem.simplex, problem.space)
    gap = float(np.abs(term - values[N]).max())
    if not gap <= tol * max(1.0, float(np.abs(term).max())):
        raise ValueError(f"stored terminal level differs from the payoff by {gap:.3e}")
    for n in range(N - 1, -1, -1):
        V, active[n], _ = backward_step(problem, values[n + 1], n, convexify)
        gap = float(np.abs(V - values[n]).max())
        if not gap <= tol * max(1.0, float(np.abs(V).max())):
            raise ValueError(f"stored level {n} differs from its recomputation by {gap:.3e}")
    return ValueField(problem, values.copy(), active, convexified=convexify)


def _p_interp(field: ValueField, n: int, ell: int, p) -> float:
    return field.envelope(n, ell).evaluate(p)


def eval_level(field: ValueField, n: int, x, p) -> float:
    """Value at level ``n``: convex interpolation in ``p``, then linear in ``x``."""
    loc = field.space.locate(x)
    return float(sum(w * _p_interp(field, n, int(ell), p)
                     for ell, w in zip(loc.vertices, loc.weights) if w != 0.0))


def eval_solution(field: ValueField, t: float, x, p) -> float:
    n, theta = field.time.bracket(t)
    v0 = eval_level(field, n, x, p)
    if theta == 0.0:
        return v0
    v1 = eval_level(field, n + 1, x, p)
    if theta == 1.0:
        return v1
    return float((1.0 - theta) * v0 + theta * v1)


@dataclass(frozen=True)
class Moduli:
    L_p: float
    L_x: float
    holder_C: float
    sup_norm: float


def _simplex_edges(simplex: SimplexPartition) -> np.ndarray:
    e = set()
    for s in simplex.simplices:
        for a in range(len(s)):
            for b in range(a + 1, len(s)):
                e.add((min(s[a], s[b]), max(s[a], s[b])))
    return np.array(sorted(e), dtype=np.intp)


def _space_edges(space: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(space.L).reshape([s + 1 for s in space.shape])
    a, b, h = [], [], []
    for ax in range(space.d):
        lo = np.take(idx, np.arange(space.shape[ax]), axis=ax).ravel()
        hi = np.take(idx, np.arange(1, space.shape[ax] + 1), axis=ax).ravel()
        a.append(lo)
        b.append(hi)
        h.append(np.full(len(lo), space.spacing[ax]))
    return np.stack([np.concatenate(a), np.concatenate(b)], axis=1), np.concatenate(h)


def estimate_moduli(field: ValueField) -> Moduli:
    """Measured Lipschitz constants in p and x, and the fitted almost-Hoelder constant in t.

    Distances in ``p`` use the l1 norm of the first ``I - 1`` components, the
    usual parametrization of the simplex. The time constant is the smallest
    ``C`` with ``|V(t_a) - V(t_b)| <= C (|t_a - t_b|^(1/2) + tau^(1/2))``
    over all pairs of levels and nodes.
    """
    V = field.values
    E = _simplex_edges(field.simplex)
    dp = np.abs(field.simplex.coords[E[:, 0]] - field.simplex.coords[E[:, 1]]).sum(axis=1)
    L_p = float((np.abs(V[:, E[:, 0], :] - V[:, E[:, 1], :]) / dp[None, :, None]).max())
    ES, hx = _space_edges(field.space)
    L_x = float((np.abs(V[:, :, ES[:, 0]] - V[:, :, ES[:, 1]]) / hx[None, None, :]).max())
    t = field.time.nodes
    sq_tau = np.sqrt(field.time.tau)
    C = 0.0
    flat = V.reshape(len(t), -1)
    for a in range(len(t) - 1):
        diff = np.abs(flat[a + 1:] - flat[a]).max(axis=1)
        C = max(C, float((diff / (np.sqrt(t[a + 1:] - t[a]) + sq_tau)).max()))
    return Moduli(L_p, L_x, C, float(np.abs(V).max()))


def coincidence_mask(problem: GameProblem, unconstrained: ValueField, tol: float = 0.0) -> np.ndarray:
    """Levels and spatial nodes where convexification provably changes nothing.

    ``mask[n, l]`` holds when the unconstrained slice at ``(n, l)`` is
    discretely convex in ``p`` and the same holds at every node of level
    ``n + 1`` that the Euler successors of ``x_l`` interpolate from.
    """
    from .envelope import convexity_defect

    N, L = problem.time.N, problem.space.L
    mask = np.zeros((N + 1, L), dtype=bool)
    mask[N] = True
    for n in range(N - 1, -1, -1):
        t = problem.time.nodes[n]
        pts, _ = outcome_points(problem.diffusion, t, problem.space.nodes, problem.time.tau)
        for ell in range(L):
            idx, w = problem.space.locate_many(pts[ell])
            deps = idx[w > 0]
            mask[n, ell] = bool(mask[n + 1, deps].all()) and \
                convexity_defect(problem.simplex, unconstrained.values[n, :, ell]) <= tol
    return mask

