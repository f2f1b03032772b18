"""End-to-end pipelines: reachable-set analysis, filter synthesis, filter
extraction from the linearizing variables and a scalar grid search."""
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as la

from .ellipsoid import Ellipsoid, SafetySets, is_contained, project
from .errors import ExtractionError, InfeasibleError, StabilityError
from .lmi.blocks import assemble_lemma1, assemble_theorem1
from .lmi.certificates import min_eigenvalues, theorem1_matrices
from .lmi.solve import SolverResult, solve
from .lti import (FilterRealization, StateSpaceModel, build_extended_system,
                  controllability_rank, hinf_norm, is_hurwitz)

__all__ = [
    "FilterRealization",
    "SynthesisConfig",
    "SynthesisOutcome",
    "ReachableSetAnalysis",
    "GridSearchResult",
    "analyze_reachable_set",
    "synthesize_filter",
    "extract_filter",
    "hatted_from_filter",
    "reconstruct_Q",
    "grid_search",
]

EXTRACTION_MAX_COND = 1e12
CONTAINMENT_TOL = 1e-6
GRID_KEYS = ("alpha", "lam", "delta", "gamma")


@dataclass(frozen=True)
class SynthesisConfig:
    """Scalars and solver settings for one synthesis run.

    ``stealthy=None`` follows the sets (stealthy iff a normal set is given);
    ``False`` drops the normal-set term even when one is available. ``beta``
    pins the input-set multiplier instead of leaving it free. ``grid`` maps
    any of ``alpha, lam, delta, gamma`` to a list of values for
    :func:`grid_search`.
    """

    alpha: float
    lam: float
    delta: float
    gamma: float
    epsilon: float = 1e-8
    stealthy: Optional[bool] = None
    beta: Optional[float] = None
    grid: Optional[Dict[str, Sequence[float]]] = None
    solver: str = "cvxopt"
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        for name in ("alpha", "lam", "delta", "gamma", "epsilon"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a nonnegative number, got {v}")
            object.__setattr__(self, name, v)
        if self.beta is not None and (not np.isfinite(self.beta) or self.beta < 0):
            raise ValueError(f"beta must be a nonnegative number, got {self.beta}")
        if self.grid is not None:
            grid = {}
            for k, vals in self.grid.items():
                if k not in GRID_KEYS:
                    raise ValueError(f"unknown grid key {k!r}; expected one of {GRID_KEYS}")
                vals = [float(v) for v in vals]
                if not vals:
                    raise ValueError(f"grid for {k!r} is empty")
                if any(not np.isfinite(v) or v < 0 for v in vals):
                    raise ValueError(f"grid for {k!r} must hold nonnegative numbers")
                grid[k] = vals
            object.__setattr__(self, "grid", grid)

    def scalars(self):
        return {k: getattr(self, k) for k in ("alpha", "lam", "delta", "gamma", "epsilon")}


@dataclass
class SynthesisOutcome:
    """Solved synthesis variables, the extracted filter and post-hoc checks.

    ``Q`` is the invariant-set shape in ``[x_p; x_f]`` coordinates; the
    plant-coordinate safety ellipsoid is ``E(X^{-1})``.
    """

    filter: FilterRealization
    X: np.ndarray
    Y: np.ndarray
    Ah: np.ndarray
    Bh: np.ndarray
    Ch: np.ndarray
    Dh: np.ndarray
    Q: np.ndarray
    objective: float
    beta: float
    config: SynthesisConfig
    solver_result: SolverResult
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def hatted(self):
        return {"X": self.X, "Y": self.Y, "Ah": self.Ah, "Bh": self.Bh,
                "Ch": self.Ch, "Dh": self.Dh, "beta": np.array([[self.beta]])}


@dataclass
class ReachableSetAnalysis:
    """Result of the invariant-ellipsoid analysis of the unfiltered plant.

    When infeasible, ``Q`` and ``projection`` are None, ``safe`` is False and
    ``guidance`` gives the open interval of decay rates worth trying.
    """

    feasible: bool
    status: str
    alpha: float
    Q: Optional[np.ndarray]
    projection: Optional[Ellipsoid]
    safe: bool
    guidance: tuple
    solver_result: SolverResult
    diagnostics: Dict[str, object] = field(default_factory=dict)


def _alpha_range(A):
    return (0.0, 2.0 * float(np.min(np.abs(la.eigvals(A).real))))


def analyze_reachable_set(plant, sets, alpha, stealthy=None, solver="cvxopt", tol=1e-8,
                          max_iter=100):
    """Smallest invariant ellipsoid of the plant driven directly by the
    (attacked) input and its containment in the safe set.

    No filter is present (``D_f = I``), so the ellipsoid already lives in
    plant coordinates. ``alpha = 0`` is accepted and flagged as degenerate in
    the diagnostics.
    """
    if not is_hurwitz(plant.A):
        raise StabilityError("plant matrix is not Hurwitz")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    normal = _normal_set(sets, stealthy)
    prob = assemble_lemma1(plant.A, plant.B, sets.input, normal, alpha=alpha)
    res = solve(prob, solver=solver, tol=tol, max_iter=max_iter)
    guidance = _alpha_range(plant.A)
    diag = {"degenerate_alpha": alpha == 0, "stealthy": normal is not None,
            "residuals": res.residuals, "min_eigs": res.min_eigs,
            "solve_time": res.solve_time, "iterations": res.iterations,
            "tol_used": res.tol_used}
    if not res.ok:
        return ReachableSetAnalysis(False, res.status, alpha, None, None, False, guidance,
                                    res, diag)
    Q = 0.5 * (res.values["Q"] + res.values["Q"].T)
    diag["beta"] = float(res.values["beta"][0, 0])
    if normal is not None:
        diag["lam"] = float(res.values["lam"][0, 0])
    diag["trace_Q"] = float(np.trace(Q))
    proj = project(Ellipsoid(Q), plant.n)
    safe = is_contained(proj, sets.safe, tol=CONTAINMENT_TOL)
    diag["containment_margin"] = _margin(proj, sets.safe)
    return ReachableSetAnalysis(True, res.status, alpha, Q, proj, safe, guidance, res, diag)


def _margin(inner, outer):
    # meaningful for coincident centers only
    return float(la.eigvalsh(inner.Q - outer.Q)[0])


def _normal_set(sets, stealthy):
    if stealthy is None:
        return sets.normal
    if stealthy and sets.normal is None:
        raise ValueError("stealthy mode needs a normal-operation set")
    return sets.normal if stealthy else None


def _selections(plant, gamma_f, gamma_c):
    m = plant.m
    gf = np.ones(m) if gamma_f is None else np.asarray(gamma_f, dtype=float)
    gf = np.diag(gf) if gf.ndim == 1 else gf
    gc = np.eye(m) - gf if gamma_c is None else np.asarray(gamma_c, dtype=float)
    gc = np.diag(gc) if gc.ndim == 1 else gc
    return gf, gc


def extract_filter(X, Y, Ah, Bh, Ch, Dh, plant, gamma_f=None, gamma_c=None):
    """Filter matrices from the linearizing variables with ``M = I``,
    ``N = I - Y X``.

    Raises :class:`ExtractionError` when ``N`` is (nearly) singular.
    """
    Gf, Gc = _selections(plant, gamma_f, gamma_c)
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    n = plant.n
    N = np.eye(n) - Y @ X
    # N = 0 up to roundoff can still look well conditioned, so the smallest
    # singular value is also measured against the size of I and Y X
    sv = la.svdvals(N)
    scale = 1.0 + la.norm(Y, 2) * la.norm(X, 2)
    cond = np.inf if sv[-1] == 0 else float(max(sv[0], scale) / sv[-1])
    if not np.isfinite(cond) or cond > EXTRACTION_MAX_COND:
        raise ExtractionError(
            f"I - YX is ill-conditioned (cond={cond:.3g}); retry hint: rescale X by "
            f"(1 + 1e-6) and re-solve", cond)
    Ap, Bp = plant.A, plant.B
    D_f = np.array(Dh, dtype=float)
    C_f = np.array(Ch, dtype=float)
    lu = la.lu_factor(N)
    B_f = la.lu_solve(lu, Bh - Y @ Bp @ Gf @ D_f)
    A_f = la.lu_solve(lu, Ah - Y @ Ap @ X - Y @ Bp @ Gf @ C_f)
    return FilterRealization(A_f, B_f, C_f, D_f, Gf, Gc)


def hatted_from_filter(filt, X, Y, plant):
    """Inverse of :func:`extract_filter`: the linearizing variables of a
    given filter for the factorization ``M = I``, ``N = I - Y X``."""
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    N = np.eye(plant.n) - Y @ X
    Ap, Bp, Gf = plant.A, plant.B, filt.gamma_f
    return {
        "Ah": Y @ Ap @ X + Y @ Bp @ Gf @ filt.C_f + N @ filt.A_f,
        "Bh": Y @ Bp @ Gf @ filt.D_f + N @ filt.B_f,
        "Ch": np.array(filt.C_f),
        "Dh": np.array(filt.D_f),
    }


def reconstruct_Q(X, Y):
    """Invariant-set shape in ``[x_p; x_f]`` coordinates for ``M = I``.

    With ``P1 = [[X, I], [I, 0]]`` and ``P2 = [[I, Y], [0, N^T]]`` the shape
    satisfies ``Q P1 = P2``, giving ``Q = [[Y, N], [N^T, -N^T X]]``. Returns
    ``(Q, N)``.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    n = X.shape[0]
    N = np.eye(n) - Y @ X
    P1 = np.block([[X, np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    P2 = np.block([[np.eye(n), Y], [np.zeros((n, n)), N.T]])
    Q = la.solve(P1.T, P2.T).T
    return 0.5 * (Q + Q.T), N


def _block_inverse_residual(X, Y, Q, N):
    n = X.shape[0]
    Ytil = Q[n:, n:]
    lhs = la.inv(X)
    rhs = Y - N @ la.solve(Ytil, N.T)
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs))))


def synthesize_filter(plant, sets, config, gamma_f=None, gamma_c=None):
    """Solve the filter-synthesis problem, extract the filter and check it.

    Raises :class:`InfeasibleError` when the LMI problem is infeasible or
    the solver fails, :class:`ExtractionError` when the filter cannot be
    recovered. The post-hoc checks (safe-set containment of ``E(X^{-1})``,
    H-infinity norm of the distortion channel, stability, certificate
    replay) are reported in ``diagnostics``.
    """
    if not is_hurwitz(plant.A):
        raise StabilityError("plant matrix is not Hurwitz")
    Gf, Gc = _selections(plant, gamma_f, gamma_c)
    normal = _normal_set(sets, config.stealthy)
    used = SafetySets(sets.input, sets.safe, normal)
    prob = assemble_theorem1(plant, Gf, Gc, used, alpha=config.alpha, lam=config.lam,
                             delta=config.delta, gamma=config.gamma,
                             epsilon=config.epsilon, beta=config.beta)
    res = solve(prob, solver=config.solver, tol=config.tol, max_iter=config.max_iter)
    if not res.ok:
        raise InfeasibleError(f"synthesis problem {res.status} ({res.message})", res)

    vals = dict(res.values)
    if config.beta is not None:
        vals["beta"] = np.array([[config.beta]])
    X = 0.5 * (vals["X"] + vals["X"].T)
    Y = 0.5 * (vals["Y"] + vals["Y"].T)
    vals["X"], vals["Y"] = X, Y
    filt = extract_filter(X, Y, vals["Ah"], vals["Bh"], vals["Ch"], vals["Dh"], plant,
                          Gf, Gc)
    Q, N = reconstruct_Q(X, Y)
    beta = float(vals["beta"][0, 0])

    diag = {
        "status": res.status,
        "residuals": res.residuals,
        "solver_min_eigs": res.min_eigs,
        "solve_time": res.solve_time,
        "iterations": res.iterations,
        "tol_used": res.tol_used,
        "backend": res.backend,
        "beta": beta,
        "stealthy": normal is not None,
    }
    diag.update(_posthoc(plant, used, filt, vals, Q, N, config, Gf, Gc))
    return SynthesisOutcome(filt, X, Y, vals["Ah"], vals["Bh"], vals["Ch"], vals["Dh"], Q,
                            float(np.trace(X)), beta, config, res, diag)


def _posthoc(plant, sets, filt, vals, Q, N, config, Gf, Gc):
    X, Y = vals["X"], vals["Y"]
    out = {}
    cert = theorem1_matrices(plant, Gf, Gc, sets, vals, config.alpha, config.lam,
                             config.delta, config.gamma, config.epsilon)
    out["certificate_min_eigs"] = min_eigenvalues(cert)
    Xinv = la.inv(X)
    safety_set = Ellipsoid(0.5 * (Xinv + Xinv.T))
    out["containment"] = bool(is_contained(safety_set, sets.safe, tol=CONTAINMENT_TOL))
    out["containment_margin"] = _margin(safety_set, sets.safe)
    ext = build_extended_system(plant, filt)
    out["filter_hurwitz"] = is_hurwitz(filt.A_f)
    out["extended_hurwitz"] = is_hurwitz(ext.A)
    out["hinf"] = float(hinf_norm(ext)) if out["extended_hurwitz"] else float("inf")
    out["hinf_ok"] = out["hinf"] <= config.gamma + 1e-4
    out["controllability_rank"] = controllability_rank(ext.A, ext.B)
    out["Q_min_eig"] = float(la.eigvalsh(Q)[0])
    out["block_inverse_residual"] = _block_inverse_residual(X, Y, Q, N)
    back = hatted_from_filter(filt, X, Y, plant)
    rel = {k: float(np.max(np.abs(back[k] - vals[k]), initial=0.0)
                    / max(1.0, np.max(np.abs(vals[k]), initial=0.0))) for k in back}
    out["extraction_consistency"] = max(rel.values())
    return out


@dataclass
class GridSearchResult:
    """Best feasible outcome (None if none) and one table row per grid point."""

    best: Optional[SynthesisOutcome]
    best_index: Optional[int]
    table: List[Dict[str, object]]

    columns = ("index", "alpha", "lam", "delta", "gamma", "epsilon", "status", "objective",
               "beta")

    def to_csv(self, path=None):
        lines = [",".join(self.columns)]
        for row in self.table:
            cells = []
            for c in self.columns:
                v = row.get(c)
                cells.append("" if v is None else (repr(float(v)) if isinstance(v, float)
                                                   else str(v)))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _grid_point(args):
    plant, sets, config, gamma_f, gamma_c = args
    try:
        out = synthesize_filter(plant, sets, config, gamma_f, gamma_c)
    except InfeasibleError as exc:
        return exc.result.status if exc.result is not None else "infeasible", None
    except ExtractionError:
        return "extraction-failed", None
    return out.diagnostics["status"], out


def grid_search(plant, sets, config, grids=None, gamma_f=None, gamma_c=None,
                max_workers=None):
    """Solve the synthesis problem at every point of the Cartesian grid.

    ``grids`` (default ``config.grid``) maps ``alpha, lam, delta, gamma`` to
    value lists; unlisted scalars keep their ``config`` value and
    ``epsilon`` is never swept. Points are enumerated in the order
    ``alpha, lam, delta, gamma`` and solved concurrently; the best outcome is
    the feasible one with the smallest ``trace(X)``, ties broken by index.
    """
    grids = dict(config.grid or {}) if grids is None else dict(grids)
    for k, vals in grids.items():
        if k not in GRID_KEYS:
            raise ValueError(f"unknown grid key {k!r}")
        if len(vals) == 0:
            raise ValueError(f"grid for {k!r} is empty")
    axes = [[float(v) for v in grids.get(k, [getattr(config, k)])] for k in GRID_KEYS]
    points = [replace(config, grid=None, **dict(zip(GRID_KEYS, p)))
              for p in itertools.product(*axes)]
    jobs = [(plant, sets, cfg, gamma_f, gamma_c) for cfg in points]

    if max_workers == 1 or len(jobs) == 1:
        results = [_grid_point(j) for j in jobs]
    else:
        workers = min(len(jobs), max_workers or os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_point, jobs))

    table, best, best_index = [], None, None
    for i, (cfg, (status, out)) in enumerate(zip(points, results)):
        row = {"index": i, **cfg.scalars(), "status": status,
               "objective": None if out is None else out.objective,
               "beta": None if out is None else out.beta}
        table.append(row)
        if out is not None and (best is None or out.objective < best.objective):
            best, best_index = out, i
    return GridSearchResult(best, best_index, table)
