"""Experimental order of convergence for the two-player, one-dimensional setup.

Three studies vary one discretization parameter with the others held fixed:

* ``dx``: spatial mesh ``1/L``; error is the max over spatial nodes of
  ``|V(0, x, 1/2) - V_ref(0, x, 1/2)|``.
* ``dp``: simplex mesh ``1/M``; error is the max over simplex nodes of
  ``|V(0, 1/2, p) - V_ref(0, 1/2, p)|``.
* ``dt``: time step ``T/N``; error is the max over levels ``n = 1..N`` of
  ``|V(t_n, 1/2, 1/2) - V_ref(t_n, 1/2, 1/2)|`` (the initial level is not
  part of the maximum; the terminal level carries no error).

For the ``dx`` and ``dp`` studies the reference shares the study's time step
and refines only the mesh that is varied; the ``dt`` reference is refined in
all three parameters. References are cached on disk keyed by a hash of every
parameter that affects their values.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import build_partitions
from .solver import GameProblem, sweep

log = logging.getLogger(__name__)

PROBE = 0.5


def eoc(r, e) -> np.ndarray:
    """``log(e_k / e_{k+1}) / log(r_k / r_{k+1})`` for consecutive rows."""
    r = np.asarray(r, dtype=float)
    e = np.asarray(e, dtype=float)
    if len(r) != len(e):
        raise ValueError("resolution and error sequences differ in length")
    if len(r) < 2:
        return np.empty(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / np.log(r[:-1] / r[1:])


@dataclass(frozen=True)
class ErrorTable:
    """Errors against a reference, rows ordered from coarse to fine mesh.

    ``resolution`` holds the integer count (``L``, ``M`` or ``N``) and
    ``mesh`` the corresponding step size used in the EOC.
    """

    study: str
    resolution: np.ndarray
    mesh: np.ndarray
    error: np.ndarray

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.mesh, dtype=float), kind="stable")
        for name in ("resolution", "mesh", "error"):
            object.__setattr__(self, name, np.asarray(getattr(self, name))[order])

    @property
    def eoc(self) -> np.ndarray:
        return eoc(self.mesh, self.error)

    @property
    def mean_eoc(self) -> float:
        k = self.eoc
        return float(np.mean(k)) if len(k) else float("nan")

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.error) < 0))

    def rows(self):
        """``(param, error, eoc)`` with ``eoc`` empty on the first row."""
        k = self.eoc
        for j in range(len(self.error)):
            yield float(self.mesh[j]), float(self.error[j]), (float(k[j - 1]) if j else None)

    def __str__(self) -> str:
        lines = [f"{self.study}: {'res':>6} {'mesh':>12} {'error':>12} {'eoc':>7}"]
        for (h, e, k), n in zip(self.rows(), self.resolution):
            lines.append(f"{'':{len(self.study) + 1}} {int(n):>6} {h:12.5e} {e:12.5e} "
                         + (f"{k:7.3f}" if k is not None else f"{'':>7}"))
        lines.append(f"{'':{len(self.study) + 1}} mean eoc {self.mean_eoc:.3f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class StudyPlan:
    """Resolutions of one full convergence experiment."""

    resolutions: tuple = (15, 30, 60, 150, 300, 600)
    time_steps: tuple = (3, 6, 12, 24, 48, 86)
    N: int = 25                # steps used by the dx and dp studies
    ref_mesh: int = 1024       # L = M of every reference
    ref_N: int = 192           # steps of the dt reference

    def validate(self):
        if max(self.resolutions) >= self.ref_mesh:
            raise ValueError(f"reference mesh {self.ref_mesh} must be finer than {max(self.resolutions)}")
        if max(self.time_steps) >= self.ref_N:
            raise ValueError(f"reference step count {self.ref_N} must exceed {max(self.time_steps)}")
        if min(self.resolutions) < 1 or min(self.time_steps) < 1 or self.N < 1:
            raise ValueError("resolutions must be positive")
        return self


FULL_PLAN = StudyPlan()
REDUCED_PLAN = StudyPlan(resolutions=(15, 30, 60, 150), time_steps=(3, 6, 12, 24), N=25,
                         ref_mesh=256, ref_N=48)


@dataclass(frozen=True)
class ProblemFactory:
    """Builds the game on a one-dimensional box for given ``(N, M, L)``.

    ``key`` must describe every model ingredient that affects values; it is
    folded into the reference cache hash.
    """

    make: Callable[[int, int, int], GameProblem]
    key: dict = field(default_factory=dict)
    convexify: bool = True

    def __call__(self, N: int, M: int, L: int) -> GameProblem:
        return self.make(N, M, L)


def game_factory(T, bounds, diffusion, hamiltonian, payoff, key: dict, convexify=True) -> ProblemFactory:
    def make(N, M, L):
        tg, sp, xg = build_partitions(2, M, bounds, L, T, N)
        return GameProblem(tg, sp, xg, diffusion, hamiltonian, payoff)

    full = dict(key, T=float(T), bounds=np.asarray(bounds, dtype=float).tolist())
    return ProblemFactory(make, full, convexify)


@dataclass(frozen=True)
class Snapshot:
    """Data a study needs from one solve: the ``t = 0`` slice and the probe trace."""

    x: np.ndarray        # (L,)
    p: np.ndarray        # (M,) first belief component
    V0: np.ndarray       # (M, L)
    t: np.ndarray        # (N + 1,)
    trace: np.ndarray    # (N + 1,) value at (x, p) = (PROBE, PROBE)


def _bilinear(x, p, V, xq, pq):
    """``V`` on the tensor grid ``p x x``; linear in each direction."""
    col = np.array([np.interp(pq, p, V[:, l]) for l in range(len(x))]) if np.ndim(pq) == 0 else None
    if col is not None:
        return np.interp(xq, x, col)
    row = np.array([np.interp(xq, x, V[m]) for m in range(len(p))])
    return np.interp(pq, p, row)


def _probe(x, p, V) -> float:
    """Value at ``(PROBE, PROBE)`` through the two bracketing lines of each axis."""
    jx = int(np.clip(np.searchsorted(x, PROBE) - 1, 0, len(x) - 2))
    jp = int(np.clip(np.searchsorted(p, PROBE) - 1, 0, len(p) - 2))
    wx = (PROBE - x[jx]) / (x[jx + 1] - x[jx])
    wp = (PROBE - p[jp]) / (p[jp + 1] - p[jp])
    c = V[jp:jp + 2, jx:jx + 2]
    return float((1 - wp) * ((1 - wx) * c[0, 0] + wx * c[0, 1]) + wp * ((1 - wx) * c[1, 0] + wx * c[1, 1]))


def snapshot(factory: ProblemFactory, N: int, M: int, L: int, workers: int = 1) -> Snapshot:
    prob = factory(N, M, L)
    if prob.simplex.I != 2 or prob.space.d != 1:
        raise ValueError("convergence studies need I = 2 and d = 1")
    x = prob.space.axes[0]
    # simplex nodes run from p_1 = 0 upward
    p = prob.simplex.nodes[:, 0]
    trace = np.empty(N + 1)
    V0 = None
    for n, V, _ in sweep(prob, factory.convexify, workers=workers):
        trace[n] = _probe(x, p, V)
        if n == 0:
            V0 = V.copy()
    return Snapshot(x.copy(), p.copy(), V0, prob.time.nodes.copy(), trace)


def reference_hash(factory: ProblemFactory, N: int, M: int, L: int) -> str:
    payload = dict(factory.key, N=int(N), M=int(M), L=int(L), convexify=bool(factory.convexify),
                   probe=PROBE, fmt=1)
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


class ReferenceCache:
    """Directory of binary reference snapshots named by parameter hash."""

    def __init__(self, root, workers: int = 1):
        self.root = Path(root) if root is not None else None
        self.workers = workers
        self._mem: dict = {}

    def get(self, factory: ProblemFactory, N: int, M: int, L: int) -> Snapshot:
        from .io import read_reference, write_reference

        key = reference_hash(factory, N, M, L)
        if key in self._mem:
            return self._mem[key]
        path = self.root / f"ref-{key}.bin" if self.root is not None else None
        snap = None
        if path is not None and path.exists():
            meta, snap = read_reference(path)
            if meta.get("hash") != key:
                log.warning("ignoring %s: hash mismatch", path)
                snap = None
        if snap is None:
            log.info("computing reference N=%d M=%d L=%d", N, M, L)
            snap = snapshot(factory, N, M, L, self.workers)
            if path is not None:
                self.root.mkdir(parents=True, exist_ok=True)
                write_reference(path, snap, dict(factory.key, hash=key, N=N, M=M, L=L,
                                                 convexify=factory.convexify))
        self._mem[key] = snap
        return snap


def study_dx(factory, plan: StudyPlan, cache: ReferenceCache, workers=1) -> ErrorTable:
    ref = cache.get(factory, plan.N, plan.ref_mesh, plan.ref_mesh)
    errs = []
    for L in plan.resolutions:
        s = snapshot(factory, plan.N, plan.ref_mesh, L, workers)
        mine = np.array([np.interp(PROBE, s.p, s.V0[:, l]) for l in range(len(s.x))])
        theirs = _bilinear(ref.x, ref.p, ref.V0, s.x, PROBE)
        errs.append(np.abs(mine - theirs).max())
    res = np.array(plan.resolutions)
    return ErrorTable("dx", res, 1.0 / res, np.array(errs))


def study_dp(factory, plan: StudyPlan, cache: ReferenceCache, workers=1) -> ErrorTable:
    ref = cache.get(factory, plan.N, plan.ref_mesh, plan.ref_mesh)
    errs = []
    for M in plan.resolutions:
        s = snapshot(factory, plan.N, M, plan.ref_mesh, workers)
        mine = np.array([np.interp(PROBE, s.x, s.V0[m]) for m in range(len(s.p))])
        theirs = _bilinear(ref.x, ref.p, ref.V0, PROBE, s.p)
        errs.append(np.abs(mine - theirs).max())
    res = np.array(plan.resolutions)
    return ErrorTable("dp", res, 1.0 / res, np.array(errs))


def study_dt(factory, plan: StudyPlan, cache: ReferenceCache, workers=1) -> ErrorTable:
    ref = cache.get(factory, plan.ref_N, plan.ref_mesh, plan.ref_mesh)
    errs = []
    for N in plan.time_steps:
        s = snapshot(factory, N, plan.ref_mesh, plan.ref_mesh, workers)
        errs.append(np.abs(s.trace - np.interp(s.t, ref.t, ref.trace))[1:].max())
    res = np.array(plan.time_steps)
    T = float(ref.t[-1])
    return ErrorTable("dt", res, T / res, np.array(errs))


STUDIES = {"dx": study_dx, "dp": study_dp, "dt": study_dt}


def run_studies(factory: ProblemFactory, plan: StudyPlan, which: Sequence[str] = ("dx", "dp", "dt"),
                cache_dir=None, workers: int = 1, cache: Optional[ReferenceCache] = None) -> dict:
    plan.validate()
    cache = cache or ReferenceCache(cache_dir, workers)
    out = {}
    for name in which:
        if name not in STUDIES:
            raise ValueError(f"unknown study {name!r}; choose from {sorted(STUDIES)}")
        out[name] = STUDIES[name](factory, plan, cache, workers)
        log.info("%s", out[name])
    return out


def with_resolutions(plan: StudyPlan, **kw) -> StudyPlan:
    return replace(plan, **kw)
