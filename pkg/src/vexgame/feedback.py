"""One-step feedback laws of the informed player and trajectory sampling.

Given the hull facet of the level-``n`` envelope that contains the current
belief ``p`` (vertices ``pi^j``, barycentric weights ``psi^j``), the informed
player who knows configuration ``i`` moves the belief to ``pi^j`` with
probability ``(pi^j)_i / p_i * psi^j``. Averaged over ``i ~ p`` the belief
is a martingale and the envelope value is recovered as an expectation
(the dynamic-programming representation checked by :func:`dpp_residual`).

Configurations are indexed from 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import increment_law
from .envelope import lower_convex_envelope
from .grid import DomainError
from .solver import ValueField, compute_Y


@dataclass(frozen=True)
class FeedbackLaw:
    n: int
    x: np.ndarray
    p: np.ndarray
    i: Optional[int]      # None for the unconditional law
    atoms: np.ndarray     # (k, I) belief vectors
    nodes: np.ndarray     # (k,) simplex node index of each atom, -1 if not a node
    probs: np.ndarray     # (k,)

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    def jump_second_moment(self) -> float:
        """``E|p - p_next|^2`` with the l1 norm."""
        d = np.abs(self.atoms - self.p).sum(axis=1)
        return float(self.probs @ d ** 2)

    def sample(self, rng: np.random.Generator, size=None):
        k = rng.choice(len(self.probs), size=size, p=self.probs)
        return self.atoms[k]


def _node_index(field: ValueField, x) -> Optional[int]:
    loc = field.space.locate(x)
    j = int(np.argmax(loc.weights))
    return int(loc.vertices[j]) if loc.weights[j] > 1.0 - 1e-12 else None


def _facet(field: ValueField, n: int, x, p):
    """Vertices and weights of the level-``n`` hull facet containing ``p`` at ``x``."""
    ell = _node_index(field, x)
    if ell is not None:
        env = field.envelope(n, ell)
    else:
        Y = compute_Y(field.problem, field.values[n + 1], n, x)
        env = lower_convex_envelope(field.simplex, Y) if field.convexified else None
        if env is None:
            raise DomainError("an unconvexified field has no feedback off the grid")
    verts, w = env.locate(p)
    keep = w > 0
    return verts[keep], w[keep]


def _check_context(field: ValueField, n: int, x, p, i):
    N = field.time.N
    if not 0 <= n <= N:
        raise DomainError(f"level n={n} outside 0..{N}")
    x = np.asarray(x, dtype=float).reshape(field.space.d)
    field.space.locate(x)
    p = field.simplex.project(p)
    if i is not None and not 0 <= i < field.simplex.I:
        raise DomainError(f"configuration index {i} outside 0..{field.simplex.I - 1}")
    return x, p


def _conditional(field: ValueField, n: int, x, p, i: int, verts, psi) -> FeedbackLaw:
    I = field.simplex.I
    if n == field.time.N:
        e = np.eye(I)[i]
        return FeedbackLaw(n, x, p, i, e[None, :], np.array([_which_node(field, e)]), np.ones(1))
    if p[i] == 0.0:
        return FeedbackLaw(n, x, p, i, p[None, :], np.array([_which_node(field, p)]), np.ones(1))
    atoms = field.simplex.nodes[verts]
    probs = atoms[:, i] / p[i] * psi
    return FeedbackLaw(n, x, p, i, atoms, verts, probs)


def feedback_distribution(field: ValueField, n: int, x, p, i: int) -> FeedbackLaw:
    """Law of the next belief given level ``n``, state ``x``, belief ``p`` and configuration ``i``."""
    x, p = _check_context(field, n, x, p, i)
    verts = psi = None
    if n < field.time.N and p[i] > 0.0:
        verts, psi = _facet(field, n, x, p)
    return _conditional(field, n, x, p, i, verts, psi)


def _mixture(field: ValueField, n: int, x, p, verts, psi) -> FeedbackLaw:
    acc: dict = {}
    for i in range(field.simplex.I):
        if p[i] == 0.0:
            continue
        law = _conditional(field, n, x, p, i, verts, psi)
        for a, node, q in zip(law.atoms, law.nodes, law.probs):
            key = int(node) if node >= 0 else tuple(a)
            if key in acc:
                acc[key][1] += p[i] * q
            else:
                acc[key] = [a, p[i] * q, node]
    atoms = np.array([v[0] for v in acc.values()])
    probs = np.array([v[1] for v in acc.values()])
    nodes = np.array([v[2] for v in acc.values()], dtype=np.intp)
    return FeedbackLaw(n, x, p, None, atoms, nodes, probs)


def unconditional_feedback(field: ValueField, n: int, x, p) -> FeedbackLaw:
    """Mixture of the conditional laws over ``i ~ p``."""
    x, p = _check_context(field, n, x, p, None)
    verts = psi = None
    if n < field.time.N:
        verts, psi = _facet(field, n, x, p)
    return _mixture(field, n, x, p, verts, psi)


def _which_node(field: ValueField, q) -> int:
    hit = np.flatnonzero(np.abs(field.simplex.nodes - q).max(axis=1) < 1e-12)
    return int(hit[0]) if len(hit) else -1


def dpp_residuals(field: ValueField, n: int, ell: int, ms=None) -> np.ndarray:
    """``|E[Y_n(x, p_next)] - V_n(x, p_m)|`` with ``p_next`` the unconditional feedback.

    ``Y_n(x, pi)`` is recomputed from level ``n + 1``, so this checks the
    representation of each envelope value as an expectation over the belief
    jump and the increments. Evaluated for the simplex nodes ``ms`` (default:
    all) at spatial node ``ell``.
    """
    if not 0 <= n < field.time.N:
        raise DomainError(f"level n={n} has no successor")
    x = field.space.nodes[ell]
    Y = compute_Y(field.problem, field.values[n + 1], n, x)
    env = field.envelope(n, ell)
    ms = range(field.simplex.M) if ms is None else ms
    out = []
    for m in ms:
        keep = env.weights[m] > 0
        law = _mixture(field, n, x, field.simplex.nodes[m], env.support[m][keep], env.weights[m][keep])
        out.append(abs(float(law.probs @ Y[law.nodes]) - float(field.values[n, m, ell])))
    return np.array(out)


def dpp_residual(field: ValueField, n: int, ell: int, m: int) -> float:
    return float(dpp_residuals(field, n, ell, [m])[0])


@dataclass(frozen=True)
class Trajectory:
    """Sampled path. ``X`` and ``t`` have ``N + 1`` rows; ``p`` has ``N + 2``,
    the last being the terminal revelation ``e_i``."""

    t: np.ndarray
    X: np.ndarray
    p: np.ndarray
    i: int


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_trajectory(field: ValueField, x0, p0, seed: int, index: int = 0) -> Trajectory:
    """Sample ``i ~ p0`` and alternate belief feedbacks with binomial Euler steps."""
    rng = trajectory_rng(seed, index)
    prob = field.problem
    N, tau = field.time.N, field.time.tau
    d, I = field.space.d, field.simplex.I
    p = field.simplex.project(p0)
    x = np.asarray(x0, dtype=float).reshape(d)
    field.space.locate(x)
    i = int(rng.choice(I, p=p))
    law_xi = increment_law(d)
    X = np.empty((N + 1, d))
    P = np.empty((N + 2, I))
    X[0], P[0] = x, p
    for n in range(N):
        P[n + 1] = feedback_distribution(field, n, X[n], P[n], i).sample(rng)
        xi = law_xi.xi[rng.integers(len(law_xi.prob))]
        S = prob.diffusion.matrix(field.time.nodes[n], X[n])[0]
        X[n + 1] = field.space.clamp(X[n] + S @ xi * np.sqrt(tau))
    P[N + 1] = np.eye(I)[i]
    return Trajectory(field.time.nodes.copy(), X, P, i)


def simulate_many(field: ValueField, x0, p0, seed: int, K: int) -> list[Trajectory]:
    return [simulate_trajectory(field, x0, p0, seed, k) for k in range(K)]


def belief_drift(trajs: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Per-level empirical mean of ``p_{n+1} - p_n`` and its standard error."""
    D = np.stack([tr.p[1:] - tr.p[:-1] for tr in trajs])  # (K, N+1, I)
    K = len(trajs)
    mean = D.mean(axis=0)
    se = D.std(axis=0, ddof=1) / np.sqrt(K) if K > 1 else np.full_like(mean, np.inf)
    return mean, se


def write_trajectories_csv(path, trajs: list[Trajectory]) -> None:
    """Columns ``k, n, t, x..., p..., i``; row ``n = N + 1`` holds the terminal belief."""
    if not trajs:
        raise ValueError("no trajectories")
    d, I = trajs[0].X.shape[1], trajs[0].p.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "n", "t"] + [f"x{j}" for j in range(d)] + [f"p{j}" for j in range(I)] + ["i"])
        for k, tr in enumerate(trajs):
            N = len(tr.t) - 1
            for n in range(N + 2):
                row_t = tr.t[min(n, N)]
                row_x = tr.X[min(n, N)]
                w.writerow([k, n, repr(float(row_t))] + [repr(float(v)) for v in row_x]
                           + [repr(float(v)) for v in tr.p[n]] + [tr.i])
