"""Driftless diffusion, its binomial weak Euler step, and exact one-step expectations.

The drift of the controlled game only enters through the Hamiltonian, so the
state process here is ``dX = sigma(t, X) dB`` and the Wiener increment is
replaced by a vector of independent fair coin flips.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

import numpy as np

MAX_INCREMENT_DIM = 20


@dataclass(frozen=True)
class DiffusionModel:
    """Diffusion coefficient ``sigma(t, x)`` on R^d.

    ``sigma`` maps ``t`` and points of shape ``(n, d)`` to matrices of shape
    ``(n, d, d)``. ``sigma_inv_T`` does the same for ``(sigma^T)^{-1}``; when
    omitted it is obtained by numerical inversion.
    """

    d: int
    sigma: Callable[[float, np.ndarray], np.ndarray]
    sigma_inv_T: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def matrix(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        return np.asarray(self.sigma(t, x), dtype=float).reshape(len(x), self.d, self.d)

    def inverse_transpose(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        if self.sigma_inv_T is not None:
            return np.asarray(self.sigma_inv_T(t, x), dtype=float).reshape(len(x), self.d, self.d)
        return np.linalg.inv(np.swapaxes(self.matrix(t, x), 1, 2))

    def bounds(self, t: float, x) -> tuple[float, float]:
        """Sup-norms of sigma and of its inverse transpose over sample points."""
        S = self.matrix(t, x)
        s_max = float(np.abs(S).max()) if S.size else 0.0
        nonsingular = np.abs(np.linalg.det(S)) > 0
        if not np.any(nonsingular):
            return s_max, float("inf")
        Si = self.inverse_transpose(t, np.asarray(x, dtype=float).reshape(-1, self.d)[nonsingular])
        return s_max, float(np.abs(Si).max())


def logistic_diffusion(sigma0: float) -> DiffusionModel:
    """``sigma(x) = sigma0 x (1 - x)`` on [0, 1]; vanishes on the boundary."""

    def sigma(t, x):
        return (sigma0 * x * (1.0 - x))[:, :, None]

    def inv_T(t, x):
        s = sigma0 * x * (1.0 - x)
        with np.errstate(divide="ignore"):
            return np.where(s != 0, 1.0 / np.where(s != 0, s, 1.0), np.inf)[:, :, None]

    return DiffusionModel(1, sigma, inv_T, name=f"logistic(sigma0={sigma0})")


def constant_diffusion(matrix) -> DiffusionModel:
    S = np.atleast_2d(np.asarray(matrix, dtype=float))
    d = S.shape[0]
    singular = np.linalg.matrix_rank(S) < d if S.any() else True
    SiT = None if singular else np.linalg.inv(S.T)

    def sigma(t, x):
        return np.broadcast_to(S, (len(x), d, d))

    def inv_T(t, x):
        if SiT is None:
            raise np.linalg.LinAlgError("constant diffusion matrix is singular")
        return np.broadcast_to(SiT, (len(x), d, d))

    return DiffusionModel(d, sigma, inv_T, name="constant")


@dataclass(frozen=True)
class IncrementLaw:
    xi: np.ndarray    # (2^d, d) sign vectors
    prob: np.ndarray  # (2^d,)

    @property
    def d(self) -> int:
        return self.xi.shape[1]

    def mean(self) -> np.ndarray:
        return self.prob @ self.xi

    def second_moment(self) -> np.ndarray:
        return np.einsum("k,ki,kj->ij", self.prob, self.xi, self.xi)


def increment_law(d: int) -> IncrementLaw:
    """Law of the d-dimensional binomial random walk step."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d > MAX_INCREMENT_DIM:
        raise ValueError(f"d={d} would enumerate 2^{d} outcomes (limit {MAX_INCREMENT_DIM})")
    xi = np.array(list(product((1.0, -1.0), repeat=d)))
    prob = np.full(len(xi), 0.5 ** d)
    xi.setflags(write=False)
    prob.setflags(write=False)
    return IncrementLaw(xi, prob)


def euler_step(model: DiffusionModel, t_n: float, x, xi, tau: float) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(model.d)
    S = model.matrix(t_n, x)[0]
    return x + S @ np.asarray(xi, dtype=float).reshape(model.d) * np.sqrt(tau)


def outcome_points(model: DiffusionModel, t_n: float, x, tau: float, law: IncrementLaw | None = None):
    """All Euler successors of the points ``x`` (shape ``(n, d)``).

    Returns an array of shape ``(n, 2^d, d)`` together with the law.
    """
    x = np.asarray(x, dtype=float).reshape(-1, model.d)
    law = law or increment_law(model.d)
    S = model.matrix(t_n, x)
    steps = np.einsum("nij,kj->nki", S, law.xi) * np.sqrt(tau)
    return x[:, None, :] + steps, law


def one_step_expectation(model: DiffusionModel, t_n: float, x, tau: float, f: Callable):
    """Exact ``E[f(x + sigma xi sqrt(tau))]`` as a finite sum over the 2^d outcomes."""
    pts, law = outcome_points(model, t_n, x, tau)
    total = 0.0
    for k in range(len(law.prob)):
        total = total + law.prob[k] * np.asarray(f(pts[0, k]), dtype=float)
    return total
