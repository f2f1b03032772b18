"""Ellipsoids ``{x : (x - c)^T Q (x - c) <= 1}`` and the set algebra around them."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from .errors import ConditioningError, DimensionError

__all__ = [
    "Ellipsoid",
    "SafetySets",
    "contains_point",
    "project",
    "project_onto",
    "is_contained",
    "sample_boundary",
    "ellipse_points",
]

SYM_TOL = 1e-10
CONTAINMENT_TOL = 1e-7


@dataclass(frozen=True)
class Ellipsoid:
    """Shape matrix ``Q`` and center ``c``.

    ``Q`` may be rank deficient (``rank_mode="psd"``), which describes a
    cylinder unbounded along the kernel of ``Q``; such sets are valid data for
    safe and normal-operation sets.
    """

    Q: np.ndarray
    c: Optional[np.ndarray] = None
    rank_mode: str = "pd"

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim == 0:
            Q = Q.reshape(1, 1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError(f"shape matrix must be square, got {Q.shape}")
        d = Q.shape[0]
        c = np.zeros(d) if self.c is None else np.array(self.c, dtype=float).reshape(-1)
        if c.size != d:
            raise DimensionError(f"center has {c.size} entries, expected {d}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c))):
            raise ValueError("ellipsoid data must be finite")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYM_TOL:
            raise ValueError("shape matrix is not symmetric")
        if self.rank_mode not in ("pd", "psd"):
            raise ValueError("rank_mode must be 'pd' or 'psd'")
        Q = 0.5 * (Q + Q.T)
        if d:
            lo = la.eigvalsh(Q)[0]
            floor = SYM_TOL if self.rank_mode == "pd" else -SYM_TOL
            if lo < floor:
                raise ValueError(
                    f"shape matrix min eigenvalue {lo:.3g} violates {self.rank_mode} mode")
        Q.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)

    @property
    def dim(self):
        return self.Q.shape[0]

    def level(self, x):
        """``(x - c)^T Q (x - c)``; ``x`` may be a batch of row vectors."""
        dx = np.asarray(x, dtype=float) - self.c
        if dx.ndim == 1:
            return float(dx @ self.Q @ dx)
        return np.einsum("ij,jk,ik->i", dx, self.Q, dx)

    def scaled(self, factor):
        """Same center, shape ``factor * Q``."""
        return Ellipsoid(factor * self.Q, self.c, self.rank_mode)

    def lifted(self, total_dim):
        """Embed in ``R^total_dim``, leaving the extra coordinates unconstrained."""
        d = self.dim
        if total_dim < d:
            raise DimensionError("cannot lift to a smaller dimension")
        Q = np.zeros((total_dim, total_dim))
        Q[:d, :d] = self.Q
        c = np.zeros(total_dim)
        c[:d] = self.c
        mode = self.rank_mode if total_dim == d else "psd"
        return Ellipsoid(Q, c, mode)


@dataclass(frozen=True)
class SafetySets:
    """Input set, safe set and (optionally) the normal-operation set.

    The safe and normal sets are expressed in plant coordinates. Leaving
    ``normal`` out selects the non-stealthy attack model.
    """

    input: Ellipsoid
    safe: Ellipsoid
    normal: Optional[Ellipsoid] = None

    @property
    def stealthy(self):
        return self.normal is not None


def _check_dim(E, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != E.dim:
        raise DimensionError(f"point has {x.size} entries, ellipsoid is {E.dim}-D")
    return x


def contains_point(E, x, tol=0.0):
    return E.level(_check_dim(E, x)) <= 1.0 + tol


def _require_pd(Q, what):
    try:
        return la.cholesky(Q, lower=True)
    except la.LinAlgError:
        raise ConditioningError(f"{what} requires a positive definite shape matrix",
                                float(la.eigvalsh(Q)[0])) from None


def project(E, k):
    """Shadow of ``E`` on its first ``k`` coordinates.

    Shape ``Q1 - Q2 Q3^{-1} Q2^T`` (Schur complement of the trailing block),
    center = first ``k`` entries of ``c``. ``k == dim`` returns ``E``.
    """
    d = E.dim
    if not 0 < k <= d:
        raise DimensionError(f"k must satisfy 0 < k <= {d}, got {k}")
    if k == d:
        return E
    Q = E.Q
    Q1, Q2, Q3 = Q[:k, :k], Q[:k, k:], Q[k:, k:]
    smin = la.svdvals(Q3)[-1]
    if smin <= 1e-12 * max(1.0, np.abs(Q3).max()):
        raise ConditioningError(
            f"trailing block is singular (smallest singular value {smin:.3g})", smin)
    shape = Q1 - Q2 @ la.solve(Q3, Q2.T, assume_a="sym")
    return Ellipsoid(0.5 * (shape + shape.T), E.c[:k], E.rank_mode)


def project_onto(E, coords):
    """Shadow of ``E`` on an arbitrary coordinate subset (in the given order)."""
    coords = list(coords)
    rest = [i for i in range(E.dim) if i not in coords]
    perm = coords + rest
    P = E.Q[np.ix_(perm, perm)]
    return project(Ellipsoid(P, E.c[perm], E.rank_mode), len(coords))


def is_contained(inner, outer, tol=CONTAINMENT_TOL, method="auto", solver=None):
    """Whether ``inner`` is a subset of ``outer``.

    Coincident centers reduce to ``Q_outer <= Q_inner + tol I``. Otherwise
    (or with ``method="sprocedure"``) a scalar S-procedure multiplier
    ``tau >= 0`` is searched for, maximizing the smallest eigenvalue ``t`` of

        [[tau Q_in - Q_out,  Q_out c_out - tau Q_in c_in],
         [       *        ,  1 - c_out' Q_out c_out - tau (1 - c_in' Q_in c_in)]]

    and containment is reported iff ``t >= -tol``.
    """
    if inner.dim != outer.dim:
        raise DimensionError("ellipsoids must have the same dimension")
    if method not in ("auto", "eigen", "sprocedure"):
        raise ValueError(f"unknown method {method!r}")
    same_center = np.allclose(inner.c, outer.c, rtol=0.0, atol=1e-12)
    if method == "eigen" or (method == "auto" and same_center):
        if not same_center:
            raise ValueError("eigenvalue test needs coincident centers")
        return bool(la.eigvalsh(inner.Q - outer.Q)[0] >= -tol)
    return _sprocedure_margin(inner, outer, solver) >= -tol


def _sprocedure_margin(inner, outer, solver=None):
    from .lmi.problem import LmiProblem
    from .lmi.solve import solve

    d = inner.dim
    Qi, ci, Qo, co = inner.Q, inner.c, outer.Q, outer.c
    prob = LmiProblem(mode="analysis")
    tau = prob.variable("tau", 1, 1, symmetric=True)
    t = prob.variable("t", 1, 1, symmetric=True)
    blk = prob.block([d, 1])
    corner = np.array([[-(1.0 - ci @ Qi @ ci)]])
    blk.scalar(tau, np.block([[Qi, (-Qi @ ci)[:, None]],
                              [(-Qi @ ci)[None, :], corner]]))
    blk.const(0, 0, -Qo)
    blk.const(0, 1, (Qo @ co)[:, None])
    blk.const(1, 1, np.array([[1.0 - co @ Qo @ co]]))
    blk.scalar(t, -np.eye(d + 1))
    prob.add_constraint("sprocedure", blk.build())
    nn = prob.block([1])
    nn.scalar(tau, np.eye(1))
    prob.add_constraint("tau_nonneg", nn.build())
    # t is bounded above by the Q_out-independent corner when tau -> 0; cap it
    cap = prob.block([1])
    cap.const(0, 0, np.eye(1))
    cap.scalar(t, -np.eye(1))
    prob.add_constraint("t_cap", cap.build())
    prob.set_objective({"t": np.eye(1)}, sense="max")
    res = solve(prob, solver=solver or "cvxopt")
    if res.status not in ("optimal", "feasible"):
        from .errors import SolverFailure
        raise SolverFailure(f"containment S-procedure failed: {res.status}", res)
    return float(res.values["t"][0, 0])


def sample_boundary(E, count, seed=0):
    """``count`` points on the boundary of ``E`` (requires ``Q`` PD).

    Gaussian directions are normalized and mapped through the Cholesky factor
    of ``Q^{-1}``, so each point satisfies the boundary equation to rounding.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    L = _require_pd(E.Q, "boundary sampling")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, E.dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    # Q = L L^T  =>  x = L^{-T} z has x^T Q x = |z|^2 = 1
    x = la.solve_triangular(L, z.T, lower=True, trans="T").T
    return x + E.c


def ellipse_points(E, count=720):
    """Deterministic boundary points of a 2-D ellipsoid at equally spaced angles."""
    if E.dim != 2:
        raise DimensionError("ellipse_points needs a 2-D ellipsoid")
    L = _require_pd(E.Q, "ellipse tracing")
    theta = 2.0 * np.pi * np.arange(count) / count
    z = np.vstack([np.cos(theta), np.sin(theta)])
    return la.solve_triangular(L, z, lower=True, trans="T").T + E.c
