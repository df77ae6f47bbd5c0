"""File formats: field CSV, error-table CSV, binary reference snapshots, plot scripts."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .convergence import ErrorTable, Snapshot
from .solver import ValueField

REF_MAGIC = "VEXGAME-REF 1"


def _meta_lines(meta: dict):
    for k in sorted(meta):
        yield f"# {k}={json.dumps(meta[k], default=_jsonable)}"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return str(v)


def grid_metadata(field: ValueField) -> dict:
    tg, sp, xg = field.time, field.simplex, field.space
    return {"T": tg.T, "N": tg.N, "I": sp.I, "M": sp.k, "L": list(xg.shape),
            "domain": np.stack([xg.lower, xg.upper], axis=1).tolist(),
            "convexified": bool(field.convexified)}


def write_field_csv(path, field: ValueField, levels=None, meta: dict | None = None) -> None:
    """Columns ``n, t, m, p..., l, x..., V`` with ``# key=value`` header lines.

    Floats are written with ``repr`` so a read returns the same doubles.
    """
    sp, xg = field.simplex, field.space
    levels = range(field.time.N + 1) if levels is None else levels
    P = [[repr(float(v)) for v in row] for row in sp.nodes]
    X = [[repr(float(v)) for v in row] for row in xg.nodes]
    with open(path, "w", newline="") as fh:
        for line in _meta_lines(dict(grid_metadata(field), **(meta or {}))):
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(["n", "t", "m"] + [f"p{i}" for i in range(sp.I)] + ["l"]
                   + [f"x{j}" for j in range(xg.d)] + ["V"])
        for n in levels:
            t = repr(float(field.time.nodes[n]))
            V = field.values[n]
            for m in range(sp.M):
                for ell in range(xg.L):
                    w.writerow([n, t, m] + P[m] + [ell] + X[ell] + [repr(float(V[m, ell]))])


def read_field_csv(path):
    """Returns ``(meta, values)`` with ``values[n, m, l]`` (NaN for levels not in the file)."""
    meta = {}
    with open(path) as fh:
        pos = 0
        while True:
            line = fh.readline()
            if not line.startswith("#"):
                break
            k, _, v = line[1:].strip().partition("=")
            meta[k] = json.loads(v)
            pos = fh.tell()
        fh.seek(pos)
        data = np.genfromtxt(fh, delimiter=",", names=True, dtype=None, encoding=None)
    N = int(meta["N"])
    n, m, ell = (np.asarray(data[c], dtype=int) for c in ("n", "m", "l"))
    values = np.full((N + 1, m.max() + 1, ell.max() + 1), np.nan)
    # genfromtxt parses with float(), which round-trips repr output
    values[n, m, ell] = np.asarray(data["V"], dtype=float)
    return meta, values


def write_error_table(path, table: ErrorTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "error", "eoc"])
        for h, e, k in table.rows():
            w.writerow([repr(h), repr(e), "" if k is None else repr(k)])


def read_error_table(path, study: str = "") -> ErrorTable:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    h = np.array([float(r["param"]) for r in rows])
    e = np.array([float(r["error"]) for r in rows])
    return ErrorTable(study, np.rint(1.0 / h).astype(int), h, e)


def write_reference(path, snap: Snapshot, meta: dict) -> None:
    """Text header (one ``key=value`` per line, ended by ``END``) then float64 little-endian data.

    The data block is ``x, p, V0 (row-major M x L), t, trace`` with sizes in the header.
    """
    head = dict(meta, L=len(snap.x), M=len(snap.p), levels=len(snap.t), dtype="<f8", byteorder="little")
    with open(path, "wb") as fh:
        fh.write((REF_MAGIC + "\n").encode())
        for k in sorted(head):
            fh.write(f"{k}={json.dumps(head[k], default=_jsonable)}\n".encode())
        fh.write(b"END\n")
        for arr in (snap.x, snap.p, snap.V0, snap.t, snap.trace):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_reference(path):
    with open(path, "rb") as fh:
        if fh.readline().decode().strip() != REF_MAGIC:
            raise ValueError(f"{path} is not a reference file")
        meta = {}
        while True:
            line = fh.readline().decode()
            if not line:
                raise ValueError(f"{path}: truncated header")
            if line.strip() == "END":
                break
            k, _, v = line.strip().partition("=")
            meta[k] = json.loads(v)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    L, M, K = int(meta["L"]), int(meta["M"]), int(meta["levels"])
    sizes = [L, M, M * L, K, K]
    if raw.size != sum(sizes):
        raise ValueError(f"{path}: expected {sum(sizes)} values, found {raw.size}")
    parts = np.split(raw.astype(float), np.cumsum(sizes)[:-1])
    return meta, Snapshot(parts[0], parts[1], parts[2].reshape(M, L), parts[3], parts[4])


SURFACE_SCRIPT = '''"""Render the value field written by `vexgame solve`. Needs matplotlib."""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
rows = [r for r in csv.DictReader(l for l in open(path) if not l.startswith("#"))]

def level(n):
    sub = [r for r in rows if int(r["n"]) == n]
    x = np.array(sorted({{float(r["x0"]) for r in sub}}))
    p = np.array(sorted({{float(r["p0"]) for r in sub}}))
    V = np.empty((len(p), len(x)))
    xi = {{v: j for j, v in enumerate(x)}}
    pi = {{v: j for j, v in enumerate(p)}}
    for r in sub:
        V[pi[float(r["p0"])], xi[float(r["x0"])]] = float(r["V"])
    return float(sub[0]["t"]), x, p, V


times = sorted({{(int(r["n"]), float(r["t"])) for r in rows}})
_, x, p, V = level(0)
# cross-sections at t = T_CUT, linear in t between the bracketing levels
T_CUT = {t_cut!r}
below = max((n for n, t in times if t <= T_CUT), default=times[0][0])
above = min((n for n, t in times if t >= T_CUT), default=times[-1][0])
ta, _, _, Va = level(below)
tb, _, _, Vb = level(above)
w = 0.0 if tb == ta else (T_CUT - ta) / (tb - ta)
Vcut = (1 - w) * Va + w * Vb

fig = plt.figure(figsize=(11, 4.5))
ax = fig.add_subplot(1, 2, 1, projection="3d")
X, P = np.meshgrid(x, p)
ax.plot_surface(X, P, V, cmap="viridis", linewidth=0)
ax.set_xlabel("x")
ax.set_ylabel("p")
ax.set_title("V(0, x, p)")
ax = fig.add_subplot(1, 2, 2)
for xc in (0.25, 0.5, 0.75):
    ax.plot(p, [np.interp(xc, x, Vcut[m]) for m in range(len(p))], label=f"x = {{xc}}")
ax.set_xlabel("p")
ax.legend()
ax.set_title(f"cross-sections at t = {{T_CUT}}")
fig.tight_layout()
fig.savefig({png_name!r}, dpi=150)
'''

EOC_SCRIPT = '''"""Log-log plot of error tables written by `vexgame converge`. Needs matplotlib."""
import csv

import matplotlib.pyplot as plt

tables = {tables!r}
fig, ax = plt.subplots(figsize=(5, 4))
for label, path in tables.items():
    rows = list(csv.DictReader(open(path)))
    h = [float(r["param"]) for r in rows]
    e = [float(r["error"]) for r in rows]
    ax.loglog(h, e, "o-", label=label)
if tables:
    h0 = h[0]
    ax.loglog([h0, h0 / 10], [e[0], e[0] / 10], "k--", lw=0.8, label="order 1")
ax.set_xlabel("mesh size")
ax.set_ylabel("max error")
ax.legend()
fig.tight_layout()
fig.savefig("convergence.png", dpi=150)
'''


def write_surface_script(path, csv_name: str, t_cut: float = 0.23) -> None:
    Path(path).write_text(SURFACE_SCRIPT.format(csv_name=csv_name, png_name=Path(csv_name).stem + ".png",
                                                t_cut=t_cut))


def write_eoc_script(path, tables: dict) -> None:
    Path(path).write_text(EOC_SCRIPT.format(tables=tables))
