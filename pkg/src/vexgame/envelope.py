"""Discrete lower convex envelope of nodal data on a simplex partition.

For ``I = 2`` the envelope is a lower-hull sweep over the uniform nodes
(monotone chain). For ``I = 3`` the data are lifted to R^3 and the lower
facets of the convex hull are taken. Nodes lying on the envelope (within
``ENVELOPE_TOL``) are kept as hull vertices, so every node's support is as
small as possible and a node where the envelope is inactive is supported by
itself alone.

``envelope_lp_oracle`` evaluates the same minimization by enumerating all
bases of the linear program and shares no code with the hull path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .grid import SimplexPartition

ENVELOPE_TOL = 1e-12


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Envelope values with the data-dependent partition that carries them.

    ``support[m]`` and ``weights[m]`` give node ``m``'s envelope value as a
    convex combination of input values; unused slots repeat the first index
    with weight 0. ``facets`` lists the hull simplices as node-index tuples
    and ``active[m]`` marks nodes where the envelope touches the data.
    """

    partition: SimplexPartition = field(repr=False)
    values: np.ndarray
    support: np.ndarray
    weights: np.ndarray
    facets: np.ndarray
    active: np.ndarray

    @cached_property
    def _hull_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def locate(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Hull facet vertices and barycentric weights of the point ``p``."""
        part = self.partition
        p = part.project(p)
        m = _lattice_node(part, p)
        if m is not None:
            return self.support[m].copy(), self.weights[m].copy()
        if part.I == 2:
            verts = self._hull_nodes
            s = p[0] * part.k
            j = int(np.searchsorted(verts, s, side="right")) - 1
            j = min(max(j, 0), len(verts) - 2)
            a, b = verts[j], verts[j + 1]
            w = (s - a) / (b - a)
            return np.array([a, b]), np.array([1.0 - w, w])
        lam = _barycentric(part.coords[self.facets], p[None, :-1])[:, 0, :]
        inside = np.flatnonzero(lam.min(axis=1) >= -1e-11)
        if len(inside) == 0:
            raise InfeasibleError(f"{p} not covered by the hull facets")
        f = min(inside, key=lambda j: _span(self.facets[j]))
        w = np.clip(lam[f], 0.0, None)
        return self.facets[f].copy(), w / w.sum()

    def evaluate(self, p) -> float:
        verts, w = self.locate(p)
        return float(w @ self.values[verts])


def _lattice_node(part: SimplexPartition, p: np.ndarray):
    """Index of the node at ``p``, or None."""
    s = p[:-1] * part.k
    r = np.rint(s)
    if np.all(np.abs(s - r) < 1e-12 * np.maximum(1.0, s)):
        return part.node_index(tuple(int(v) for v in r))
    return None


def _span(idx) -> tuple:
    idx = np.asarray(idx)
    return (int(idx.max() - idx.min()), tuple(sorted(int(i) for i in idx)))


def _barycentric(tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``pts`` (Q, 2) in triangles ``tri`` (F, 3, 2) -> (F, Q, 3)."""
    a = tri[:, 0, :]
    T = np.stack([tri[:, 1, :] - a, tri[:, 2, :] - a], axis=2)  # (F, 2, 2)
    det = T[:, 0, 0] * T[:, 1, 1] - T[:, 0, 1] * T[:, 1, 0]
    rel = pts[None, :, :] - a[:, None, :]
    l1 = (rel[..., 0] * T[:, None, 1, 1] - rel[..., 1] * T[:, None, 0, 1]) / det[:, None]
    l2 = (rel[..., 1] * T[:, None, 0, 0] - rel[..., 0] * T[:, None, 1, 0]) / det[:, None]
    return np.stack([1.0 - l1 - l2, l1, l2], axis=2)


def _check_values(partition: SimplexPartition, values) -> np.ndarray:
    y = np.asarray(values, dtype=float)
    if y.shape != (partition.M,):
        raise ValueError(f"expected {partition.M} nodal values, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("envelope input contains non-finite values")
    return y


def lower_hull_1d(y) -> np.ndarray:
    """Indices of the lower hull of ``(m, y[m])`` over uniform nodes ``m``.

    Points within ``ENVELOPE_TOL`` (relative) of a hull chord are kept.
    """
    ys = y.tolist() if isinstance(y, np.ndarray) else list(y)
    tol = ENVELOPE_TOL * max(1.0, max(abs(v) for v in ys))
    hull: list[int] = []
    for c, yc in enumerate(ys):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            ya = ys[a]
            # height of b above the chord a-c, times (c - a)
            if (ys[b] - ya) * (c - a) - (yc - ya) * (b - a) > tol * (c - a):
                hull.pop()
            else:
                break
        hull.append(c)
    return np.array(hull, dtype=np.intp)


def envelope_1d(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Envelope values and active mask for uniform 1-d data."""
    hull = lower_hull_1d(y)
    M = len(y)
    m = np.arange(M)
    j = np.minimum(np.searchsorted(hull, m, side="right") - 1, len(hull) - 2)
    if len(hull) == 1:
        return y.copy(), np.ones(M, dtype=bool)
    a, b = hull[j], hull[j + 1]
    wb = (m - a) / (b - a)
    vals = (1.0 - wb) * y[a] + wb * y[b]
    active = np.zeros(M, dtype=bool)
    active[hull] = True
    vals[hull] = y[hull]
    return vals, active


def _envelope_2(partition: SimplexPartition, y: np.ndarray) -> EnvelopeResult:
    vals, active = envelope_1d(y)
    hull = np.flatnonzero(active)
    M = partition.M
    m = np.arange(M)
    j = np.minimum(np.searchsorted(hull, m, side="right") - 1, len(hull) - 2)
    a, b = hull[j], hull[j + 1]
    wb = (m - a) / (b - a)
    support = np.stack([a, b], axis=1)
    weights = np.stack([1.0 - wb, wb], axis=1)
    support[active] = np.stack([m[active], m[active]], axis=1)
    weights[active] = (1.0, 0.0)
    facets = np.stack([hull[:-1], hull[1:]], axis=1)
    return EnvelopeResult(partition, vals, support, weights, facets, active)


def _lower_facets_3(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = len(P)
    spread = float(y.max() - y.min())
    apex = np.array([[P[:, 0].mean(), P[:, 1].mean(), y.max() + 1.0 + spread]])
    hull = ConvexHull(np.vstack([np.column_stack([P, y]), apex]))
    nz = hull.equations[:, 2]
    keep = (nz < -1e-12) & ~np.any(hull.simplices == n, axis=1)
    return hull.simplices[keep]


def _refine(P: np.ndarray, facets: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Split each hull facet so that every active node inside it becomes a vertex."""
    act = np.flatnonzero(active)
    lam = _barycentric(P[facets], P[act])  # (F, A, 3)
    out = []
    for f, tri in enumerate(facets):
        inside = act[lam[f].min(axis=1) >= -1e-11]
        if len(inside) <= 3:
            out.append(tri)
            continue
        area = _area(P[tri])
        try:
            dl = Delaunay(P[inside])
            sub = inside[dl.simplices]
            sub = sub[np.array([_area(P[s]) for s in sub]) > 1e-14 * max(area, 1.0)]
            if abs(sum(_area(P[s]) for s in sub) - area) <= 1e-10 * max(area, 1.0) and \
                    len(np.unique(sub)) == len(inside):
                out.extend(sub)
                continue
        except QhullError:
            pass
        out.append(tri)
    return np.array(out, dtype=np.intp)


def _area(t: np.ndarray) -> float:
    u, v = t[1] - t[0], t[2] - t[0]
    return 0.5 * abs(u[0] * v[1] - u[1] * v[0])


def _envelope_3(partition: SimplexPartition, y: np.ndarray) -> EnvelopeResult:
    P = partition.coords
    n = len(P)
    facets = _lower_facets_3(P, y)
    lam = _barycentric(P[facets], P)  # (F, n, 3)
    inside = lam.min(axis=2) >= -1e-11
    planes = np.einsum("fnk,fk->fn", lam, y[facets])
    vex = np.where(inside, planes, np.inf).min(axis=0)
    tol = ENVELOPE_TOL * max(1.0, float(np.abs(y).max()))
    active = y - vex <= tol
    facets = _refine(P, facets, active)
    facets = np.sort(facets, axis=1)
    facets = facets[np.lexsort(facets.T[::-1])]

    lam = _barycentric(P[facets], P)
    inside = lam.min(axis=2) >= -1e-11
    support = np.empty((n, 3), dtype=np.intp)
    weights = np.zeros((n, 3))
    vals = np.empty(n)
    spans = facets.max(axis=1) - facets.min(axis=1)
    for m in range(n):
        if active[m]:
            support[m] = m
            weights[m] = (1.0, 0.0, 0.0)
            vals[m] = y[m]
            continue
        cand = np.flatnonzero(inside[:, m])
        f = cand[np.argmin(spans[cand])]
        w = np.clip(lam[f, m], 0.0, None)
        w /= w.sum()
        support[m] = facets[f]
        weights[m] = w
        vals[m] = w @ y[facets[f]]
    return EnvelopeResult(partition, vals, support, weights, facets, active)


def lower_convex_envelope(partition: SimplexPartition, values) -> EnvelopeResult:
    y = _check_values(partition, values)
    if partition.I == 2:
        return _envelope_2(partition, y)
    if partition.I == 3:
        return _envelope_3(partition, y)
    raise NotImplementedError(f"no envelope for I={partition.I}")


def envelope_from_active(partition: SimplexPartition, values, active) -> EnvelopeResult:
    """Rebuild the hull structure of already-convexified values from the active mask.

    Inactive nodes are lifted strictly above the envelope, which leaves the
    envelope and its vertex set unchanged.
    """
    v = np.asarray(values, dtype=float)
    active = np.asarray(active, dtype=bool)
    lift = 1.0 + float(np.abs(v).max())
    res = lower_convex_envelope(partition, np.where(active, v, v + lift))
    return EnvelopeResult(partition, v.copy(), res.support, res.weights, res.facets, res.active)


def envelope_lp_oracle(nodes, values, p) -> np.ndarray | float:
    """Minimum of ``sum_k lam_k y_k`` s.t. ``lam >= 0, sum lam = 1, sum lam_k p_k = p``.

    Enumerates every basis of ``I`` nodes; the optimum of a bounded feasible
    linear program is attained at one of them. ``p`` may be one probability
    vector or an array of them.
    """
    nodes = np.asarray(nodes, dtype=float)
    y = np.asarray(values, dtype=float)
    q = np.asarray(p, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    n, I = nodes.shape
    subsets = np.array(list(combinations(range(n), I)), dtype=np.intp)
    A = np.concatenate([np.swapaxes(nodes[subsets][:, :, :-1], 1, 2),
                        np.ones((len(subsets), 1, I))], axis=1)  # (S, I, I)
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-14
    subsets, A = subsets[ok], A[ok]
    Ainv = np.linalg.inv(A)
    rhs = np.concatenate([q[:, :-1], np.ones((len(q), 1))], axis=1)  # (Q, I)
    lam = np.einsum("sij,qj->sqi", Ainv, rhs)
    val = np.einsum("sqi,si->sq", lam, y[subsets])
    feasible = lam.min(axis=2) >= -1e-12
    val = np.where(feasible, val, np.inf).min(axis=0)
    if np.any(np.isinf(val)):
        raise InfeasibleError("query point outside the convex hull of the nodes")
    return float(val[0]) if single else val


def convexity_defect(partition: SimplexPartition, values) -> float:
    """Size of the worst violation of discrete convexity; zero for convex data.

    For ``I = 2`` this is the most negative second difference. For ``I = 3``
    it is the largest gap between the data and their envelope.
    """
    y = np.asarray(values, dtype=float)
    if partition.I == 2:
        if len(y) < 3:
            return 0.0
        return max(0.0, -float(np.min(y[:-2] - 2.0 * y[1:-1] + y[2:])))
    return max(0.0, float(np.max(y - lower_convex_envelope(partition, y).values)))


@dataclass(frozen=True)
class VexPropertiesReport:
    monotonicity_violation: float
    shift_violation: float
    tol: float = 1e-10

    @property
    def ok(self) -> bool:
        return self.monotonicity_violation <= self.tol and self.shift_violation <= self.tol


def vex_properties_check(partition: SimplexPartition, u, v, theta: float) -> VexPropertiesReport:
    """Check ``Vex[u] <= Vex[v]`` for ``u <= v`` and ``Vex[v + theta] = Vex[v] + theta``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u > v):
        raise ValueError("vex_properties_check needs u <= v at every node")
    eu = lower_convex_envelope(partition, u).values
    ev = lower_convex_envelope(partition, v).values
    es = lower_convex_envelope(partition, v + theta).values
    mono = max(0.0, float(np.max(eu - ev)))
    shift = float(np.max(np.abs(es - (ev + theta))))
    return VexPropertiesReport(mono, shift)
