"""Solver backends and the ``solve`` entry point.

A backend receives a :class:`StandardForm` (objective vector, per-block
triplet matrices, cone sizes) and returns a :class:`BackendOutput`. Two
interior-point backends ship here: cvxopt (default) and Clarabel.
"""
import contextlib
import io
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg as la

from .problem import equilibrate, to_standard_form

__all__ = ["SolverResult", "BackendOutput", "solve", "BACKENDS", "register_backend"]

_STDOUT_LOCK = threading.Lock()


@dataclass
class BackendOutput:
    status: str  # optimal | infeasible | unbounded | stalled
    x: Optional[np.ndarray]
    iterations: int = 0
    message: str = ""
    trace: str = ""


@dataclass
class SolverResult:
    status: str  # optimal | feasible | infeasible | numerical-failure
    values: Dict[str, np.ndarray]
    objective: Optional[float]
    residuals: Dict[str, float]
    solve_time: float
    iterations: int = 0
    backend: str = ""
    message: str = ""
    trace: str = ""
    min_eigs: Dict[str, float] = field(default_factory=dict)
    var_min_eigs: Dict[str, float] = field(default_factory=dict)
    tol_used: Optional[float] = None

    @property
    def ok(self):
        return self.status in ("optimal", "feasible")


def _cvxopt_backend(sf, tol, max_iter):
    from cvxopt import matrix, solvers, spmatrix

    N = sf.n_scalars
    Gs, hs = [], []
    for blk in sf.blocks:
        s = blk.size
        # cvxopt: G x + s = h, s in S+; vec is column-major
        Gs.append(spmatrix((-blk.val).tolist(), (blk.row + blk.col * s).tolist(),
                           blk.var.tolist(), (s * s, N)))
        hs.append(matrix(np.asfortranarray(blk.const)))
    opts = {"show_progress": True, "maxiters": int(max_iter),
            "abstol": tol, "reltol": tol, "feastol": tol}
    buf = io.StringIO()
    try:
        with _STDOUT_LOCK, contextlib.redirect_stdout(buf):
            sol = solvers.sdp(matrix(sf.c), Gs=Gs, hs=hs, options=opts)
    except (ValueError, ArithmeticError) as exc:
        return BackendOutput("stalled", None, 0, f"cvxopt: {exc}", buf.getvalue())
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(sol["status"], "stalled")
    x = None if sol["x"] is None else np.array(sol["x"]).reshape(-1)
    return BackendOutput(status, x, int(sol.get("iterations", 0)),
                         f"cvxopt status: {sol['status']}", buf.getvalue())


def _upper_colmajor(blk):
    # Clarabel's PSD triangle: upper triangle, column-major, sqrt(2) off-diagonal
    rows, cols = np.triu_indices(blk.size)
    order = np.lexsort((rows, cols))
    return rows[order], cols[order]


def _clarabel_backend(sf, tol, max_iter):
    import clarabel
    import scipy.sparse as sp

    N = sf.n_scalars
    a_rows, a_cols, a_vals, b_parts, cones = [], [], [], [], []
    offset = 0
    for blk in sf.blocks:
        r_idx, c_idx = _upper_colmajor(blk)
        pos = {(i, j): k for k, (i, j) in enumerate(zip(r_idx, c_idx))}
        scale = np.where(r_idx == c_idx, 1.0, np.sqrt(2.0))
        b_parts.append(blk.const[r_idx, c_idx] * scale)
        for v, i, j, val in zip(blk.var, blk.row, blk.col, blk.val):
            if i > j:
                continue
            w = 1.0 if i == j else np.sqrt(2.0)
            a_rows.append(offset + pos[(i, j)])
            a_cols.append(v)
            a_vals.append(-val * w)
        offset += r_idx.size
        cones.append(clarabel.PSDTriangleConeT(blk.size))
    A = sp.csc_matrix((a_vals, (a_rows, a_cols)), shape=(offset, N))
    P = sp.csc_matrix((N, N))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = int(max_iter)
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    solver = clarabel.DefaultSolver(P, np.asarray(sf.c), A, np.concatenate(b_parts),
                                    cones, settings)
    sol = solver.solve()
    name = str(sol.status)
    if name.endswith("Solved") and not name.endswith("AlmostSolved"):
        status = "optimal"
    elif "PrimalInfeasible" in name:
        status = "infeasible"
    elif "DualInfeasible" in name:
        status = "unbounded"
    else:
        status = "stalled"
    x = np.array(sol.x) if sol.x is not None else None
    return BackendOutput(status, x, int(sol.iterations), f"clarabel status: {name}")


BACKENDS = {"cvxopt": _cvxopt_backend, "clarabel": _clarabel_backend}


def register_backend(name, fn):
    """Add a backend ``fn(standard_form, tol, max_iter) -> BackendOutput``."""
    BACKENDS[name] = fn


def solve(problem, solver="cvxopt", tol=1e-8, max_iter=100, feas_tol=1e-6,
          precondition=True, max_relaxed_tol=1e-6):
    """Lower, solve and map back to named matrices.

    With ``precondition`` the backend sees the diagonally equilibrated
    problem (:func:`equilibrate`); residuals are always measured on the
    original blocks.

    Infeasibility is reported through ``status``. A backend that stalls but
    leaves an iterate whose constraint matrices are PSD up to
    ``feas_tol * max(1, |F0|)`` yields ``status="feasible"``.

    A stalled run is retried with the
    tolerance raised tenfold, up to ``max_relaxed_tol``; the tolerance that
    produced the result is kept in ``tol_used``.
    """
    problem.seal()
    sf = to_standard_form(problem)
    backend = BACKENDS[solver]
    scaled, d = equilibrate(sf) if precondition else (sf, None)
    t0 = time.perf_counter()
    iterations, current = 0, tol
    while True:
        out = backend(scaled, current, max_iter)
        iterations += out.iterations
        if out.x is not None and d is not None:
            out.x = out.x * d
        if out.status != "stalled" or 10 * current > max(max_relaxed_tol, tol) * (1 + 1e-9):
            break
        current *= 10
    elapsed = time.perf_counter() - t0

    if out.x is None or out.status in ("infeasible",):
        status = "infeasible" if out.status == "infeasible" else "numerical-failure"
        return SolverResult(status, {}, None, {}, elapsed, iterations, solver,
                            out.message, out.trace, tol_used=current)

    values = sf.devectorize(out.x)
    worst, min_eigs = _worst_violation(sf, out.x)
    scale = _scale(sf)
    residuals = {"max_psd_violation": worst, "max_eq_violation": 0.0}
    var_min = {v.name: float(la.eigvalsh(values[v.name])[0])
               for v in sf.variables if v.symmetric}

    if out.status == "optimal":
        status = "optimal"
    elif out.status == "stalled" and worst <= feas_tol * scale:
        status = "feasible"
    else:
        status = "numerical-failure"
    objective = sf.sign * float(sf.c @ out.x)
    return SolverResult(status, values, objective, residuals, elapsed, iterations,
                        solver, out.message, out.trace, min_eigs, var_min, current)


def _worst_violation(sf, x):
    min_eigs, worst = {}, 0.0
    for blk in sf.blocks:
        F = blk.evaluate(x)
        lo = float(la.eigvalsh(0.5 * (F + F.T))[0])
        min_eigs[blk.name] = lo
        worst = max(worst, -lo)
    return worst, min_eigs


def _scale(sf):
    return max([1.0] + [float(np.abs(b.const).max(initial=0.0)) for b in sf.blocks])
