"""Experiment configuration read from YAML.

Schema (all keys optional unless noted; defaults reproduce the
one-dimensional two-configuration experiment)::

    mode: solve            # solve | converge-dx | converge-dp | converge-dt | converge | simulate | check
    seed: 0
    convexify: true
    workers: null         # default: CPU count
    output: out            # directory
    grid:
      I: 2
      T: 0.5
      N: 25
      M: 100               # subdivisions per simplex edge
      L: 100               # cells per spatial axis (int or list)
      domain: [[0, 1]]
    model:
      sigma: logistic-sigma          # or {constant: [[...]]} or {expression: "..."}
      sigma0: 0.5
      hamiltonian: trig-H            # zero | {constant: c} | {expression: "..."} | {minimax: {...}}
      payoff: zero                   # or [g_1, ..., g_I], numbers or expressions in x
    convergence:
      preset: reduced                # reduced | full
      resolutions: [15, 30, 60, 150]
      time_steps: [3, 6, 12, 24]
      N: 25
      ref_mesh: 256
      ref_N: 48
      cache: refs                    # directory for reference snapshots
    simulate:
      K: 100
      x0: [0.5]
      p0: [0.5, 0.5]
    check:
      oracle_instances: 200
      contexts: 10000

Expressions are evaluated with numpy and may use ``t``, ``x`` (first
coordinate), ``x1..xd``, ``p`` (first belief component), ``p1..pI``, ``z``
(first gradient component), ``z1..zd`` and ``u``, ``v`` in minimax tables.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .convergence import FULL_PLAN, REDUCED_PLAN, ProblemFactory, StudyPlan, game_factory
from .dynamics import DiffusionModel, constant_diffusion, logistic_diffusion
from .grid import build_partitions
from .hamiltonian import (ClosedFormHamiltonian, MinimaxHamiltonian, constant_hamiltonian,
                          trig_hamiltonian, zero_hamiltonian)
from .solver import GameProblem, TerminalPayoff, constant_payoff

MODES = ("solve", "converge", "converge-dx", "converge-dp", "converge-dt", "simulate", "check")

_FUNCS = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign", "minimum", "maximum",
    "sinh", "cosh", "tanh", "arctan", "where", "clip")}
_FUNCS.update(pi=np.pi, e=np.e)


class ConfigError(ValueError):
    pass


def _expr(src: str):
    try:
        return compile(str(src), "<config>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {src!r}: {exc.msg}") from None


def _names(t=None, x=None, p=None, z=None, **extra) -> dict:
    env = dict(_FUNCS)
    env["t"] = t
    for sym, arr in (("x", x), ("p", p), ("z", z)):
        if arr is None:
            continue
        env[sym] = arr[:, 0]
        for j in range(arr.shape[1]):
            env[f"{sym}{j + 1}"] = arr[:, j]
    env.update(extra)
    return env


def _evaluate(code, n: int, **names) -> np.ndarray:
    try:
        val = eval(code, {"__builtins__": {}}, _names(**names))
    except Exception as exc:  # noqa: BLE001 - any evaluation failure is a config error
        raise ConfigError(f"cannot evaluate expression: {exc}") from None
    return np.broadcast_to(np.asarray(val, dtype=float), (n,))


@dataclass
class ExperimentConfig:
    mode: str = "solve"
    seed: int = 0
    convexify: bool = True
    workers: Optional[int] = None
    output: str = "out"
    grid: dict = field(default_factory=lambda: dict(I=2, T=0.5, N=25, M=100, L=100, domain=[[0.0, 1.0]]))
    model: dict = field(default_factory=lambda: dict(sigma="logistic-sigma", sigma0=0.5,
                                                     hamiltonian="trig-H", payoff="zero"))
    convergence: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)

    # ---- construction -------------------------------------------------
    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "ExperimentConfig":
        data = dict(data or {})
        cfg = cls()
        unknown = set(data) - set(cfg.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("grid", "model"):
            merged = dict(getattr(cfg, key))
            sub = data.pop(key, None) or {}
            if not isinstance(sub, dict):
                raise ConfigError(f"'{key}' must be a mapping")
            merged.update(sub)
            setattr(cfg, key, merged)
        for key, val in data.items():
            setattr(cfg, key, val if val is not None else getattr(cfg, key))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        g = self.grid
        try:
            I, N, M = int(g["I"]), int(g["N"]), int(g["M"])
            T = float(g["T"])
            L = [int(v) for v in np.atleast_1d(g["L"])]
            dom = np.atleast_2d(np.asarray(g["domain"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid section: {exc}") from None
        if I < 2 or N < 1 or M < 1 or min(L) < 1:
            raise ConfigError("grid counts must be positive and I >= 2")
        if not T > 0:
            raise ConfigError("T must be positive")
        if dom.shape != (len(L), 2) and not (len(L) == 1 and dom.shape[1] == 2):
            raise ConfigError(f"domain {dom.tolist()} does not match L={L}")
        if np.any(dom[:, 1] <= dom[:, 0]):
            raise ConfigError("domain intervals must have lower < upper")
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if self.mode == "simulate" and "p0" in self.simulate and len(self.simulate["p0"]) != I:
            raise ConfigError(f"simulate.p0 needs {I} entries")

    # ---- derived quantities -------------------------------------------
    @property
    def d(self) -> int:
        return np.atleast_2d(np.asarray(self.grid["domain"], dtype=float)).shape[0]

    @property
    def bounds(self) -> np.ndarray:
        dom = np.atleast_2d(np.asarray(self.grid["domain"], dtype=float))
        return dom

    @property
    def L(self):
        L = [int(v) for v in np.atleast_1d(self.grid["L"])]
        return L * self.d if len(L) == 1 else L

    def value_key(self) -> dict:
        """Every field that affects computed values."""
        return {"grid": self.grid, "model": self.model, "convexify": bool(self.convexify)}

    def hash(self) -> str:
        blob = json.dumps(self.value_key(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)

    # ---- models -------------------------------------------------------
    def diffusion(self) -> DiffusionModel:
        spec = self.model.get("sigma", "logistic-sigma")
        d = self.d
        if spec in ("logistic-sigma", "logistic"):
            if d != 1:
                raise ConfigError("the logistic diffusion is one-dimensional")
            return logistic_diffusion(float(self.model.get("sigma0", 0.5)))
        if isinstance(spec, dict) and "constant" in spec:
            S = np.atleast_2d(np.asarray(spec["constant"], dtype=float))
            if S.shape != (d, d):
                raise ConfigError(f"constant sigma must be {d}x{d}")
            return constant_diffusion(S)
        if isinstance(spec, dict) and "expression" in spec:
            if d != 1:
                raise ConfigError("sigma expressions are supported for d = 1")
            code = _expr(spec["expression"])

            def sigma(t, x):
                return _evaluate(code, len(x), t=t, x=x)[:, None, None]

            return DiffusionModel(1, sigma, name=f"sigma={spec['expression']}")
        raise ConfigError(f"unknown sigma model {spec!r}")

    def hamiltonian(self):
        spec = self.model.get("hamiltonian", "trig-H")
        if spec == "trig-H":
            return trig_hamiltonian()
        if spec == "zero":
            return zero_hamiltonian()
        if isinstance(spec, (int, float)):
            return constant_hamiltonian(float(spec))
        if isinstance(spec, dict) and "constant" in spec:
            return constant_hamiltonian(float(spec["constant"]))
        if isinstance(spec, dict) and "expression" in spec:
            src = str(spec["expression"])
            code = _expr(src)
            uses_z = any(n == "z" or (n[0] == "z" and n[1:].isdigit()) for n in code.co_names)

            def H(t, x, z, p):
                return _evaluate(code, len(p), t=t, x=x, z=z, p=p)

            return ClosedFormHamiltonian(H, depends_on_z=uses_z, name=f"H={src}")
        if isinstance(spec, dict) and "minimax" in spec:
            return self._minimax(spec["minimax"])
        raise ConfigError(f"unknown hamiltonian {spec!r}")

    def _minimax(self, mm: dict) -> MinimaxHamiltonian:
        try:
            U, V = list(mm["U"]), list(mm["V"])
            drift = [_expr(s) for s in np.atleast_1d(mm["drift"])]
            costs = [_expr(s) for s in np.atleast_1d(mm["costs"])]
        except KeyError as exc:
            raise ConfigError(f"minimax table needs {exc}") from None
        if len(drift) != self.d:
            raise ConfigError(f"minimax drift needs {self.d} components")
        if len(costs) != int(self.grid["I"]):
            raise ConfigError(f"minimax costs need {self.grid['I']} components")

        def b(t, x, u, v):
            return np.stack([_evaluate(c, len(x), t=t, x=x, u=u, v=v) for c in drift], axis=1)

        def ell(t, x, u, v):
            return np.stack([_evaluate(c, len(x), t=t, x=x, u=u, v=v) for c in costs], axis=1)

        try:
            return MinimaxHamiltonian(b, ell, U, V, name="minimax")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def payoff(self) -> TerminalPayoff:
        spec = self.model.get("payoff", "zero")
        I = int(self.grid["I"])
        if spec == "zero":
            return constant_payoff(np.zeros(I))
        items = list(np.atleast_1d(spec)) if not isinstance(spec, list) else spec
        if len(items) != I:
            raise ConfigError(f"payoff needs {I} entries, got {len(items)}")
        if all(isinstance(v, (int, float)) for v in items):
            return constant_payoff(np.asarray(items, dtype=float))
        codes = [_expr(v) for v in items]

        def g(x):
            return np.stack([_evaluate(c, len(x), x=x) for c in codes], axis=1)

        return TerminalPayoff(g, I, name=f"g={items}")

    def problem(self, N: Optional[int] = None, M: Optional[int] = None, L=None) -> GameProblem:
        g = self.grid
        tg, sp, xg = build_partitions(int(g["I"]), int(M or g["M"]), self.bounds, L or self.L,
                                      float(g["T"]), int(N or g["N"]))
        try:
            return GameProblem(tg, sp, xg, self.diffusion(), self.hamiltonian(), self.payoff())
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    # ---- convergence --------------------------------------------------
    def study_plan(self) -> StudyPlan:
        c = dict(self.convergence)
        preset = c.pop("preset", "reduced")
        base = {"reduced": REDUCED_PLAN, "full": FULL_PLAN}.get(preset)
        if base is None:
            raise ConfigError(f"unknown convergence preset {preset!r}")
        c.pop("cache", None)
        c.pop("studies", None)
        kw: dict[str, Any] = {}
        for k, v in c.items():
            if k not in ("resolutions", "time_steps", "N", "ref_mesh", "ref_N"):
                raise ConfigError(f"unknown convergence key {k!r}")
            kw[k] = tuple(int(a) for a in v) if k in ("resolutions", "time_steps") else int(v)
        plan = StudyPlan(**{**asdict(base), **kw})
        try:
            return plan.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def factory(self) -> ProblemFactory:
        if int(self.grid["I"]) != 2 or self.d != 1:
            raise ConfigError("convergence studies need I = 2 and a one-dimensional domain")
        return game_factory(float(self.grid["T"]), self.bounds, self.diffusion(), self.hamiltonian(),
                            self.payoff(), {"model": self.model, "I": 2}, bool(self.convexify))
