"""Discretization grids: time levels, the probability simplex and the spatial box.

All grids are regular and uniform, so point location is arithmetic rather
than a mesh walk. Objects are immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, permutations

import numpy as np

CLAMP_TOL = 1e-9


class DomainError(ValueError):
    """A query point lies outside the computational domain."""


class UnsupportedDimensionError(NotImplementedError):
    pass


@dataclass(frozen=True)
class TemporalGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0) or self.N < 1:
            raise ValueError(f"need T > 0 and N >= 1, got T={self.T}, N={self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.tau
        t[-1] = self.T
        return t

    def bracket(self, t: float) -> tuple[int, float]:
        """Return ``(n, theta)`` with ``t = (1 - theta) t_n + theta t_{n+1}``."""
        if t < -CLAMP_TOL or t > self.T + CLAMP_TOL:
            raise DomainError(f"t={t} outside [0, {self.T}]")
        s = min(max(t / self.tau, 0.0), float(self.N))
        r = round(s)
        if abs(s - r) < 1e-12 * max(1.0, s):
            s = float(r)
        n = min(int(math.floor(s)), self.N - 1)
        return n, s - n


@dataclass(frozen=True)
class BarycentricLocation:
    simplex: int
    vertices: np.ndarray  # node indices
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class SimplexPartition:
    """Uniform simplicial partition of the closed simplex Delta(I).

    ``k`` is the number of subdivisions per edge. Nodes are the lattice
    points ``a / k`` with integer ``a >= 0`` and ``sum(a) == k``. For
    ``I = 2`` node ``m`` is ``(m/k, 1 - m/k)``, so the first component
    is the usual scalar parametrization of Delta(2).
    """

    I: int
    k: int
    nodes: np.ndarray = field(repr=False)
    simplices: np.ndarray = field(repr=False)

    @classmethod
    def uniform(cls, I: int, k: int) -> "SimplexPartition":
        if I < 2 or k < 1:
            raise ValueError(f"need I >= 2 and k >= 1, got I={I}, k={k}")
        if I == 2:
            m = np.arange(k + 1)
            nodes = np.stack([m / k, (k - m) / k], axis=1)
            simplices = np.stack([m[:-1], m[1:]], axis=1)
        elif I == 3:
            nodes, simplices = _triangular_lattice(k)
        else:
            raise UnsupportedDimensionError(
                f"simplex meshing for I={I} is not implemented (I must be 2 or 3)")
        nodes.setflags(write=False)
        simplices.setflags(write=False)
        return cls(I, k, nodes, simplices)

    @property
    def M(self) -> int:
        """Number of nodes."""
        return len(self.nodes)

    @property
    def h(self) -> float:
        # every edge of the uniform lattice has l1 length 2/k, and so does each diameter
        return 2.0 / self.k

    @cached_property
    def coords(self) -> np.ndarray:
        """Reduced coordinates: the first ``I - 1`` components of each node."""
        return np.ascontiguousarray(self.nodes[:, :-1])

    @cached_property
    def volumes(self) -> np.ndarray:
        """Volumes of the simplices in reduced coordinates."""
        P = self.coords[self.simplices]
        E = P[:, 1:, :] - P[:, :1, :]
        return np.abs(np.linalg.det(E)) / math.factorial(self.I - 1)

    def diameters(self) -> np.ndarray:
        P = self.nodes[self.simplices]
        d = np.zeros(len(P))
        for a, b in combinations(range(self.I), 2):
            d = np.maximum(d, np.abs(P[:, a] - P[:, b]).sum(axis=1))
        return d

    def node_index(self, lattice: tuple[int, ...]) -> int:
        if self.I == 2:
            return int(lattice[0])
        a, b = int(lattice[0]), int(lattice[1])
        return _tri_index(a, b, self.k)

    def project(self, p) -> np.ndarray:
        """Validate a probability vector and clamp rounding noise."""
        p = np.asarray(p, dtype=float)
        if p.shape == () and self.I == 2:
            p = np.array([float(p), 1.0 - float(p)])
        if p.shape != (self.I,):
            raise ValueError(f"expected a probability vector of length {self.I}, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or p.min() < -CLAMP_TOL or abs(p.sum() - 1.0) > CLAMP_TOL:
            raise DomainError(f"{p} is not in the closed simplex")
        p = np.clip(p, 0.0, None)
        return p / p.sum()

    def locate(self, p) -> BarycentricLocation:
        p = self.project(p)
        k = self.k
        if self.I == 2:
            s = _snap(p[0] * k)
            j = min(int(math.floor(s)), k - 1)
            w = s - j
            return BarycentricLocation(j, np.array([j, j + 1]), np.array([1.0 - w, w]))
        a, b = _snap(p[0] * k), _snap(p[1] * k)
        i, j = int(math.floor(a)), int(math.floor(b))
        i, j = min(i, k - 1), min(j, k - 1)
        if i + j > k - 1:
            # only reachable on the outer edge a + b = k
            if i > 0 and a - i < 1e-12:
                i -= 1
            else:
                j -= 1
        fa, fb = a - i, b - j
        if fa + fb <= 1.0 or i + j == k - 1:
            verts = [(i, j), (i + 1, j), (i, j + 1)]
            w = np.array([1.0 - fa - fb, fa, fb])
            tri = _lower_triangle_id(i, j, k)
        else:
            verts = [(i + 1, j + 1), (i, j + 1), (i + 1, j)]
            w = np.array([fa + fb - 1.0, 1.0 - fa, 1.0 - fb])
            tri = _upper_triangle_id(i, j, k)
        idx = np.array([_tri_index(u, v, k) for u, v in verts])
        return BarycentricLocation(tri, idx, _clean_weights(w))


def _snap(s: float) -> float:
    r = round(s)
    return float(r) if abs(s - r) < 1e-12 * max(1.0, abs(s)) else s


def _clean_weights(w: np.ndarray) -> np.ndarray:
    w = np.where(np.abs(w) < 1e-15, 0.0, w)
    return w / w.sum()


def _tri_index(a: int, b: int, k: int) -> int:
    # rows of constant a hold b = 0..k-a
    return a * (k + 1) - a * (a - 1) // 2 + b


def _lower_triangle_id(i: int, j: int, k: int) -> int:
    # lower triangles first, enumerated in the same (i, j) order as nodes
    return _tri_index(i, j, k - 1)


def _upper_triangle_id(i: int, j: int, k: int) -> int:
    return k * (k + 1) // 2 + _tri_index(i, j, k - 2)


def _triangular_lattice(k: int) -> tuple[np.ndarray, np.ndarray]:
    nodes = []
    for a in range(k + 1):
        for b in range(k + 1 - a):
            nodes.append((a / k, b / k, (k - a - b) / k))
    lower, upper = [], []
    for i in range(k):
        for j in range(k - i):
            lower.append((_tri_index(i, j, k), _tri_index(i + 1, j, k), _tri_index(i, j + 1, k)))
            if i + j <= k - 2:
                upper.append((_tri_index(i + 1, j + 1, k), _tri_index(i, j + 1, k),
                              _tri_index(i + 1, j, k)))
    return np.array(nodes), np.array(lower + upper, dtype=np.intp)


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Uniform grid on an axis-aligned box with the Kuhn triangulation.

    ``shape`` counts cells per axis, so axis ``j`` carries ``shape[j] + 1``
    nodes. Nodes are ordered C-style (last axis fastest). In one dimension
    the simplices are the grid intervals.
    """

    lower: np.ndarray
    upper: np.ndarray
    shape: tuple[int, ...]

    @classmethod
    def box(cls, bounds, shape) -> "SpatialGrid":
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        if bounds.shape != (len(shape), 2):
            raise ValueError(f"bounds {bounds.tolist()} do not match shape {shape}")
        if any(s < 1 for s in shape) or np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("need positive cell counts and nonempty intervals")
        lo, hi = bounds[:, 0].copy(), bounds[:, 1].copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        return cls(lo, hi, shape)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / np.array(self.shape)

    @property
    def dx(self) -> float:
        """Largest element diameter (the cell diagonal of the Kuhn simplices)."""
        return float(np.sqrt(np.sum(self.spacing ** 2)))

    @property
    def L(self) -> int:
        """Number of nodes."""
        return int(np.prod([s + 1 for s in self.shape]))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, hi, s in zip(self.lower, self.upper, self.shape):
            a = lo + (hi - lo) * np.arange(s + 1) / s
            a[-1] = hi
            out.append(a)
        return out

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def _strides(self) -> np.ndarray:
        dims = [s + 1 for s in self.shape]
        st = np.ones(self.d, dtype=np.intp)
        for j in range(self.d - 2, -1, -1):
            st[j] = st[j + 1] * dims[j + 1]
        return st

    @cached_property
    def simplices(self) -> np.ndarray:
        if self.d == 1:
            i = np.arange(self.shape[0])
            return np.stack([i, i + 1], axis=1)
        cells = np.stack(np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij"),
                         axis=-1).reshape(-1, self.d)
        out = []
        for perm in permutations(range(self.d)):
            verts = [cells]
            cur = cells.copy()
            for ax in perm:
                cur = cur.copy()
                cur[:, ax] += 1
                verts.append(cur)
            out.append(np.stack([v @ self._strides for v in verts], axis=1))
        return np.concatenate(out, axis=0)

    def clamp(self, x: np.ndarray) -> np.ndarray:
        """Project points onto the box (constant extrapolation)."""
        return np.clip(x, self.lower, self.upper)

    def locate_many(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized barycentric location.

        Points are clamped to the box first; use :meth:`locate` for the
        checked variant.

        Returns
        -------
        idx : (n, d+1) int array of node indices
        w : (n, d+1) float array of barycentric weights
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        x = self.clamp(x)
        s = (x - self.lower) / self.spacing
        r = np.rint(s)
        s = np.where(np.abs(s - r) < 1e-12 * np.maximum(1.0, np.abs(s)), r, s)
        shape = np.array(self.shape)
        cell = np.minimum(np.floor(s).astype(np.intp), shape - 1)
        u = s - cell
        base = cell @ self._strides
        if self.d == 1:
            u = u[:, 0]
            return np.stack([base, base + 1], axis=1), np.stack([1.0 - u, u], axis=1)
        order = np.argsort(-u, axis=1, kind="stable")
        us = np.take_along_axis(u, order, axis=1)
        n = len(x)
        idx = np.empty((n, self.d + 1), dtype=np.intp)
        w = np.empty((n, self.d + 1))
        idx[:, 0] = base
        w[:, 0] = 1.0 - us[:, 0]
        cur = base.copy()
        for j in range(self.d):
            cur = cur + self._strides[order[:, j]]
            idx[:, j + 1] = cur
            nxt = us[:, j + 1] if j + 1 < self.d else 0.0
            w[:, j + 1] = us[:, j] - nxt
        return idx, w

    def locate(self, x) -> BarycentricLocation:
        x = np.asarray(x, dtype=float).reshape(self.d)
        if (not np.all(np.isfinite(x)) or np.any(x < self.lower - CLAMP_TOL)
                or np.any(x > self.upper + CLAMP_TOL)):
            raise DomainError(f"x={x} outside the box [{self.lower}, {self.upper}]")
        idx, w = self.locate_many(x)
        return BarycentricLocation(-1, idx[0], _clean_weights(w[0]))

    def node_of(self, x, tol: float = 1e-9) -> int:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        loc = self.locate(x)
        j = int(np.argmax(loc.weights))
        if abs(loc.weights[j] - 1.0) > tol:
            raise DomainError(f"x={x} is not a grid node")
        return int(loc.vertices[j])


def combine(values: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_k w[:, k] values[..., idx[:, k]]`` written as ``v_0 + sum_j u_j (v_j - v_{j-1})``.

    ``idx, w`` come from :meth:`SpatialGrid.locate_many`, whose vertices form
    a monotone path, so the telescoped form holds and reproduces constant
    data exactly.
    """
    u = np.cumsum(w[:, :0:-1], axis=1)[:, ::-1]  # u_j = w_j + ... + w_d
    v = values[..., idx]
    out = v[..., 0]
    for j in range(1, idx.shape[1]):
        out = out + u[:, j - 1] * (v[..., j] - v[..., j - 1])
    return out


def build_partitions(I: int, M: int, bounds, L, T: float, N: int):
    """Construct the time grid, the simplex partition and the spatial grid.

    ``M`` is the number of subdivisions per simplex edge and ``L`` the number
    of cells per spatial axis (an int or one int per axis).
    """
    if M < 1 or N < 1 or np.any(np.atleast_1d(L) < 1):
        raise ValueError("all counts must be >= 1")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    shape = np.broadcast_to(np.atleast_1d(L), (len(bounds),))
    return (TemporalGrid(float(T), int(N)),
            SimplexPartition.uniform(int(I), int(M)),
            SpatialGrid.box(bounds, shape))


def barycentric_locate(partition, point) -> BarycentricLocation:
    return partition.locate(point)


def interpolate_space(grid: SpatialGrid, values, x):
    """Piecewise linear interpolant of nodal ``values`` at ``x``.

    ``values`` may carry extra leading axes (shape ``(..., L)``); ``x`` may
    be one point or an ``(n, d)`` array.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.L:
        raise ValueError(f"got {values.shape[-1]} nodal values for {grid.L} nodes")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 0 or (pts.ndim == 1 and grid.d > 1) or (pts.ndim == 1 and len(pts) == 1 and grid.d == 1)
    pts = pts.reshape(-1, grid.d)
    if (not np.all(np.isfinite(pts)) or np.any(pts < grid.lower - CLAMP_TOL)
            or np.any(pts > grid.upper + CLAMP_TOL)):
        raise DomainError("interpolation point outside the spatial domain")
    idx, w = grid.locate_many(pts)
    out = combine(values, idx, w)
    return out[..., 0] if single else out


def interpolate_time(v_n, v_next, t: float, t_n: float, tau: float):
    if t < t_n - CLAMP_TOL * max(1.0, tau) or t > t_n + tau + CLAMP_TOL * max(1.0, tau):
        raise DomainError(f"t={t} outside [{t_n}, {t_n + tau}]")
    theta = min(max((t - t_n) / tau, 0.0), 1.0)
    return (1.0 - theta) * np.asarray(v_n) + theta * np.asarray(v_next)
