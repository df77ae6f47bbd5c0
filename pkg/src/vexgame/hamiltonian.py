"""Hamiltonians: closed-form maps and finite inf-sup games with an Isaacs check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ISAACS_TOL = 1e-9


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ClosedFormHamiltonian:
    """``H(t, x, z, p)`` given as a vectorized function.

    The function receives ``x`` of shape ``(n, d)``, ``z`` of shape ``(n, d)``
    and ``p`` of shape ``(n, I)`` and returns ``n`` values.
    ``depends_on_z`` is a declaration used by diagnostics and by the solver to
    skip the gradient estimate when it cannot matter.
    """

    func: Callable
    depends_on_z: bool = True
    name: str = "custom"

    def __call__(self, t, x, z, p):
        return np.asarray(self.func(t, x, z, p), dtype=float)


@dataclass(frozen=True)
class MinimaxHamiltonian:
    """``inf_u sup_v { <b(t,x,u,v), z> + sum_i p_i l_i(t,x,u,v) }`` over finite sets.

    ``drift(t, x, u, v)`` returns shape ``(n, d)`` for ``x`` of shape
    ``(n, d)``; ``costs(t, x, u, v)`` returns shape ``(n, I)``.
    """

    drift: Callable
    costs: Callable
    U: Sequence
    V: Sequence
    name: str = "minimax"
    depends_on_z: bool = field(default=True)

    def __post_init__(self):
        if len(self.U) == 0 or len(self.V) == 0:
            raise ModelError("control sets U and V must be nonempty")

    def payoffs(self, t, x, z, p) -> np.ndarray:
        """Payoff table of shape ``(n, |U|, |V|)``."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.empty((len(x), len(self.U), len(self.V)))
        for a, u in enumerate(self.U):
            for b, v in enumerate(self.V):
                bv = np.asarray(self.drift(t, x, u, v), dtype=float).reshape(len(x), -1)
                lv = np.asarray(self.costs(t, x, u, v), dtype=float).reshape(len(x), -1)
                out[:, a, b] = np.einsum("nd,nd->n", bv, z) + np.einsum("ni,ni->n", lv, p)
        return out

    def __call__(self, t, x, z, p):
        return self.payoffs(t, x, z, p).max(axis=2).min(axis=1)

    def lower_value(self, t, x, z, p):
        return self.payoffs(t, x, z, p).min(axis=1).max(axis=1)

    def drift_bound(self, t, x) -> float:
        x = np.asarray(x, dtype=float)
        return max(float(np.abs(np.asarray(self.drift(t, x, u, v), dtype=float)).sum(axis=-1).max())
                   for u in self.U for v in self.V)


def _as_batch(x, z, p, d=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = max(len(x), len(z), len(p))
    return (np.broadcast_to(x, (n, x.shape[1])), np.broadcast_to(z, (n, z.shape[1])),
            np.broadcast_to(p, (n, p.shape[1])))


def eval_hamiltonian(model, t, x, z, p):
    """Evaluate ``H`` at a single point or a batch; scalars in, scalar out."""
    single = np.ndim(p) <= 1 and np.ndim(x) <= 1 and np.ndim(z) <= 1
    xb, zb, pb = _as_batch(x, z, p)
    val = model(t, xb, zb, pb)
    return float(val[0]) if single else val


def trig_hamiltonian() -> ClosedFormHamiltonian:
    """``H(x, p) = sin(2 pi p) cos(5 pi x) - cos(5 pi p) sin(3 pi x)`` with ``p = p_1``."""

    def H(t, x, z, p):
        x1, p1 = x[:, 0], p[:, 0]
        return np.sin(2 * np.pi * p1) * np.cos(5 * np.pi * x1) - np.cos(5 * np.pi * p1) * np.sin(3 * np.pi * x1)

    return ClosedFormHamiltonian(H, depends_on_z=False, name="trig-H")


def zero_hamiltonian() -> ClosedFormHamiltonian:
    return ClosedFormHamiltonian(lambda t, x, z, p: np.zeros(len(p)), depends_on_z=False, name="zero")


def constant_hamiltonian(c: float) -> ClosedFormHamiltonian:
    return ClosedFormHamiltonian(lambda t, x, z, p: np.full(len(p), float(c)), depends_on_z=False,
                                 name=f"constant({c})")


@dataclass(frozen=True)
class IsaacsReport:
    inf_sup: float
    sup_inf: float
    residual: float
    worst: tuple
    tol: float = ISAACS_TOL

    @property
    def ok(self) -> bool:
        return self.residual <= self.tol


def isaacs_check(model: MinimaxHamiltonian, samples, tol: float = ISAACS_TOL) -> IsaacsReport:
    """Compare inf-sup and sup-inf on sample points ``(t, x, z, p)``."""
    if not isinstance(model, MinimaxHamiltonian):
        raise ModelError("the Isaacs check needs a minimax Hamiltonian")
    best = None
    for t, x, z, p in samples:
        xb, zb, pb = _as_batch(x, z, p)
        table = model.payoffs(t, xb, zb, pb)[0]
        upper = float(table.max(axis=1).min())
        lower = float(table.min(axis=0).max())
        res = abs(upper - lower)
        if best is None or res > best[2]:
            best = (upper, lower, res, (t, tuple(np.ravel(x)), tuple(np.ravel(z)), tuple(np.ravel(p))))
    if best is None:
        raise ValueError("no samples given")
    return IsaacsReport(*best, tol=tol)


def growth_diagnostic(model, samples) -> float:
    """Smallest ``C`` with ``|H(t,x,z,p)| <= C (1 + |z|)`` on the samples (l1 norm of z)."""
    C = None
    for t, x, z, p in samples:
        h = abs(eval_hamiltonian(model, t, x, z, p))
        c = h / (1.0 + float(np.abs(np.ravel(z)).sum()))
        C = c if C is None else max(C, c)
    if C is None:
        raise ValueError("no samples given")
    return C
