"""Run configuration: JSON loading, validation and defaults.

Schema (matrices are row-major nested lists, vectors flat lists)::

    {
      "plant":      {"A": [[..]], "B": [[..]]},
      "input_set":  {"R": [[..]], "u_bar": [..]},
      "safe_set":   {"Psi": [[..]], "psi_bar": [..]},
      "normal_set": {"Xi_p": [[..]], "xi_bar_p": [..]},          (optional)
      "selection":  {"gamma_f": [..], "gamma_c": [..]},
      "scalars":    {"alpha", "lambda", "delta", "gamma", "epsilon",
                     "beta" (optional pin), "alpha_analysis" (optional)},
      "solver":     {"tol", "max_iter", "backend"},
      "sim":        {"dt", "t_end", "seed", "n_runs"}
    }

Centers default to zero, ``gamma_c`` to ``1 - gamma_f``.
"""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ellipsoid import Ellipsoid, SafetySets
from .errors import ConfigError
from .lti import StateSpaceModel
from .synthesis import SynthesisConfig

TOP_KEYS = ("plant", "input_set", "safe_set", "normal_set", "selection", "scalars", "solver",
            "sim")
REQUIRED = ("plant", "input_set", "safe_set", "scalars")
SCALAR_KEYS = ("alpha", "lambda", "delta", "gamma", "epsilon", "beta", "alpha_analysis")
SOLVER_DEFAULTS = {"tol": 1e-8, "max_iter": 100, "backend": "cvxopt"}
SIM_DEFAULTS = {"dt": 1e-4, "t_end": 5.0, "seed": 0, "n_runs": 1}
DEFAULT_ANALYSIS_ALPHA = 0.5


@dataclass(frozen=True)
class RunConfig:
    plant: StateSpaceModel
    sets: SafetySets
    gamma_f: np.ndarray
    gamma_c: np.ndarray
    scalars: dict
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    sim: dict = field(default_factory=lambda: dict(SIM_DEFAULTS))
    source: Optional[str] = None

    @property
    def stealthy(self):
        return self.sets.normal is not None

    @property
    def alpha_analysis(self):
        return self.scalars.get("alpha_analysis", DEFAULT_ANALYSIS_ALPHA)

    def synthesis_config(self, **overrides):
        s = self.scalars
        kw = dict(alpha=s["alpha"], lam=s["lambda"], delta=s["delta"], gamma=s["gamma"],
                  epsilon=s.get("epsilon", 1e-8), beta=s.get("beta"),
                  solver=self.solver["backend"], tol=self.solver["tol"],
                  max_iter=self.solver["max_iter"])
        kw.update(overrides)
        return SynthesisConfig(**kw)


def _matrix(obj, field_name, rows=None, cols=None):
    try:
        M = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field_name}: expected a matrix of numbers") from None
    if M.ndim != 2:
        raise ConfigError(f"{field_name}: expected a rectangular matrix (list of rows)")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{field_name}: entries must be finite")
    if rows is not None and M.shape[0] != rows:
        raise ConfigError(f"{field_name}: expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise ConfigError(f"{field_name}: expected {cols} columns, got {M.shape[1]}")
    return M


def _vector(obj, field_name, size, default=0.0):
    if obj is None:
        return np.full(size, default)
    try:
        v = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{field_name}: expected a list of numbers") from None
    if v.ndim != 1 or v.size != size:
        raise ConfigError(f"{field_name}: expected a flat list of {size} numbers")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{field_name}: entries must be finite")
    return v


def _section(doc, key, required=()):
    sec = doc.get(key)
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected an object")
    for r in required:
        if r not in sec:
            raise ConfigError(f"{key}.{r}: missing")
    return sec


def _ellipsoid(Q, c, field_name, psd):
    try:
        return Ellipsoid(Q, c, "psd" if psd else "pd")
    except ValueError as exc:
        raise ConfigError(f"{field_name}: {exc}") from None


def _number(sec, key, field_name, kind=float, minimum=None, positive=False):
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{field_name}: expected a number")
    if kind is int and float(v) != int(v):
        raise ConfigError(f"{field_name}: expected an integer")
    v = kind(v)
    if not np.isfinite(v):
        raise ConfigError(f"{field_name}: must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{field_name}: must be positive")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{field_name}: must be >= {minimum}")
    return v


def parse_config(doc, source=None):
    """Validate a decoded JSON document into a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    unknown = sorted(set(doc) - set(TOP_KEYS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level key")
    for k in REQUIRED:
        if k not in doc:
            raise ConfigError(f"{k}: missing")

    pl = _section(doc, "plant", ("A", "B"))
    A = _matrix(pl["A"], "plant.A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ConfigError("plant.A: must be square")
    B = _matrix(pl["B"], "plant.B", rows=n)
    m = B.shape[1]
    plant = StateSpaceModel(A, B)

    ins = _section(doc, "input_set", ("R",))
    R = _matrix(ins["R"], "input_set.R", m, m)
    inp = _ellipsoid(R, _vector(ins.get("u_bar"), "input_set.u_bar", m), "input_set.R", False)
    ss = _section(doc, "safe_set", ("Psi",))
    Psi = _matrix(ss["Psi"], "safe_set.Psi", n, n)
    safe = _ellipsoid(Psi, _vector(ss.get("psi_bar"), "safe_set.psi_bar", n), "safe_set.Psi",
                      True)
    normal = None
    if doc.get("normal_set") is not None:
        ns = _section(doc, "normal_set", ("Xi_p",))
        Xi = _matrix(ns["Xi_p"], "normal_set.Xi_p", n, n)
        normal = _ellipsoid(Xi, _vector(ns.get("xi_bar_p"), "normal_set.xi_bar_p", n),
                            "normal_set.Xi_p", True)

    sel = doc.get("selection") or {}
    if not isinstance(sel, dict):
        raise ConfigError("selection: expected an object")
    gf = _vector(sel.get("gamma_f"), "selection.gamma_f", m, default=1.0)
    gc = _vector(sel.get("gamma_c"), "selection.gamma_c", m) if "gamma_c" in sel else 1.0 - gf
    for name, g in (("selection.gamma_f", gf), ("selection.gamma_c", gc)):
        if not np.all(np.isin(g, (0.0, 1.0))):
            raise ConfigError(f"{name}: entries must be 0 or 1")
    bad = np.flatnonzero(gf + gc != 1.0)
    if bad.size:
        raise ConfigError(f"selection: gamma_f + gamma_c must be 1 on every channel "
                          f"(channel {bad[0] + 1} sums to {gf[bad[0]] + gc[bad[0]]:g})")

    sc = _section(doc, "scalars", ("alpha", "lambda", "delta", "gamma"))
    unknown = sorted(set(sc) - set(SCALAR_KEYS))
    if unknown:
        raise ConfigError(f"scalars.{unknown[0]}: unknown key")
    scalars = {"epsilon": 1e-8}
    for k in SCALAR_KEYS:
        if k in sc and sc[k] is not None:
            scalars[k] = _number(sc, k, f"scalars.{k}", minimum=0.0)

    solver = dict(SOLVER_DEFAULTS)
    if doc.get("solver") is not None:
        so = _section(doc, "solver")
        for k in so:
            if k not in SOLVER_DEFAULTS:
                raise ConfigError(f"solver.{k}: unknown key")
        if "tol" in so:
            solver["tol"] = _number(so, "tol", "solver.tol", positive=True)
        if "max_iter" in so:
            solver["max_iter"] = _number(so, "max_iter", "solver.max_iter", int, positive=True)
        if "backend" in so:
            from .lmi.solve import BACKENDS
            if so["backend"] not in BACKENDS:
                raise ConfigError(f"solver.backend: unknown backend {so['backend']!r}")
            solver["backend"] = so["backend"]

    sim = dict(SIM_DEFAULTS)
    if doc.get("sim") is not None:
        si = _section(doc, "sim")
        for k in si:
            if k not in SIM_DEFAULTS:
                raise ConfigError(f"sim.{k}: unknown key")
        if "dt" in si:
            sim["dt"] = _number(si, "dt", "sim.dt", positive=True)
        if "t_end" in si:
            sim["t_end"] = _number(si, "t_end", "sim.t_end", positive=True)
        if "seed" in si:
            sim["seed"] = _number(si, "seed", "sim.seed", int, minimum=0)
        if "n_runs" in si:
            sim["n_runs"] = _number(si, "n_runs", "sim.n_runs", int, positive=True)

    return RunConfig(plant, SafetySets(inp, safe, normal), np.diag(gf), np.diag(gc), scalars,
                     solver, sim, source)


def load_config(path):
    """Read and validate a JSON run configuration.

    Raises :class:`ConfigError` with line and column on malformed JSON and
    with the offending field otherwise.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    return parse_config(doc, source=str(path))


def load_grid(path):
    """Grid file ``{"alpha": [..], "lambda": [..], "delta": [..], "gamma": [..]}``
    mapped to the keyword names used by :func:`grid_search`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read grid {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("grid: expected a nonempty object")
    out = {}
    for k, vals in doc.items():
        key = {"lambda": "lam"}.get(k, k)
        if key not in ("alpha", "lam", "delta", "gamma"):
            raise ConfigError(f"grid.{k}: unknown key")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"grid.{k}: expected a nonempty list")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in vals):
            raise ConfigError(f"grid.{k}: values must be nonnegative numbers")
        out[key] = [float(v) for v in vals]
    return out
