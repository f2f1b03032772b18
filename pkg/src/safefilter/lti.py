"""Continuous-time LTI models: stacking, stability, H-infinity norm, simulation.

Matrices cross module boundaries as row-major nested lists or numpy arrays;
everything is converted to read-only float arrays on construction.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la

from .errors import DimensionError, DivergenceError, NumericalError, StabilityError

__all__ = [
    "StateSpaceModel",
    "FilterRealization",
    "Trajectory",
    "is_hurwitz",
    "build_extended_system",
    "series_model",
    "hinf_norm",
    "frequency_response",
    "simulate",
    "controllability_rank",
]

HURWITZ_TOL = 1e-9


def as_matrix(value, rows=None, cols=None, name="matrix"):
    """Read-only 2-D float copy of ``value``; empty shapes allowed."""
    arr = np.array(value, dtype=float)
    if arr.size == 0 and rows is not None and cols is not None:
        arr = np.zeros((rows, cols))
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpaceModel:
    """``x' = A x + B u``, ``y = C x + D u``.

    ``C`` defaults to the identity (all states measured) and ``D`` to zero.
    """

    A: np.ndarray
    B: np.ndarray
    C: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        A = as_matrix(A, n, n, "A")
        B = np.array(self.B, dtype=float)
        if B.ndim == 1 and n > 0:
            B = B.reshape(n, -1)
        B = as_matrix(B, n, None, "B")
        m = B.shape[1]
        C = as_matrix(np.eye(n) if self.C is None else self.C, None, n, "C")
        p = C.shape[0]
        D = as_matrix(np.zeros((p, m)) if self.D is None else self.D, p, m, "D")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def with_output(self, C, D=None):
        return StateSpaceModel(self.A, self.B, C, D)


def _selection(value, m, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = np.diag(arr)
    arr = as_matrix(arr, m, m, name)
    if np.any(arr - np.diag(np.diag(arr))):
        raise DimensionError(f"{name} must be diagonal")
    if not np.all(np.isin(np.diag(arr), (0.0, 1.0))):
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr


@dataclass(frozen=True)
class FilterRealization:
    """Input filter ``x_f' = A_f x_f + B_f u_c``, ``u_f = C_f x_f + D_f u_c``.

    ``gamma_f`` selects the filtered channels and ``gamma_c`` the ones that
    bypass the filter; both accept a 0/1 vector or a diagonal matrix.
    ``gamma_c`` defaults to ``I - gamma_f``.
    """

    A_f: np.ndarray
    B_f: np.ndarray
    C_f: np.ndarray
    D_f: np.ndarray
    gamma_f: Optional[np.ndarray] = None
    gamma_c: Optional[np.ndarray] = None

    def __post_init__(self):
        D_f = np.array(self.D_f, dtype=float)
        if D_f.ndim != 2 or D_f.shape[0] != D_f.shape[1]:
            raise DimensionError(f"D_f must be square m x m, got {D_f.shape}")
        m = D_f.shape[0]
        A_f = np.array(self.A_f, dtype=float)
        nf = A_f.shape[0] if A_f.size else 0
        A_f = as_matrix(A_f, nf, nf, "A_f")
        B_f = as_matrix(self.B_f, nf, m, "B_f")
        C_f = as_matrix(self.C_f, m, nf, "C_f")
        gf = np.ones(m) if self.gamma_f is None else self.gamma_f
        gf = _selection(gf, m, "gamma_f")
        gc = np.eye(m) - gf if self.gamma_c is None else self.gamma_c
        gc = _selection(gc, m, "gamma_c")
        if not np.allclose(gf + gc, np.eye(m), atol=0.0):
            raise ValueError("gamma_f + gamma_c must equal the identity")
        for name, val in (("A_f", A_f), ("B_f", B_f), ("C_f", C_f),
                          ("D_f", as_matrix(D_f, m, m, "D_f")),
                          ("gamma_f", gf), ("gamma_c", gc)):
            object.__setattr__(self, name, val)

    @property
    def n_f(self):
        return self.A_f.shape[0]

    @property
    def m(self):
        return self.D_f.shape[0]

    @classmethod
    def passthrough(cls, m):
        """No filter: ``n_f = 0`` and ``D_f = I``."""
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), np.eye(m))

    def as_model(self):
        """The filter alone, ``u_c -> u_f``."""
        return StateSpaceModel(self.A_f, self.B_f, self.C_f, self.D_f)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        k = len(self.t)
        if self.states.shape[0] != k or self.inputs.shape[0] != k:
            raise DimensionError("one row per time sample required")


def is_hurwitz(A, tol=HURWITZ_TOL):
    """True iff every eigenvalue of ``A`` has real part below ``-tol``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if A.size == 0:
        return True
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return bool(np.max(la.eigvals(A).real) < -tol)


def build_extended_system(plant, filt):
    """Stack plant and filter into the state ``zeta = [x_p; x_f]``.

    The returned model's output is the distortion ``z = u_f - u_c``, i.e.
    ``C = [0, C_f]`` and ``D = D_f - I``.
    """
    if plant.m != filt.m:
        raise DimensionError(
            f"plant has {plant.m} inputs but the filter has {filt.m} channels")
    n_p, n_f, m = plant.n, filt.n_f, plant.m
    Bp = plant.B
    A = np.block([
        [plant.A, Bp @ filt.gamma_f @ filt.C_f],
        [np.zeros((n_f, n_p)), filt.A_f],
    ])
    B = np.vstack([Bp @ filt.gamma_f @ filt.D_f + Bp @ filt.gamma_c, filt.B_f])
    Cz = np.hstack([np.zeros((m, n_p)), filt.C_f])
    Dz = filt.D_f - np.eye(m)
    return StateSpaceModel(A, B, Cz, Dz)


def series_model(plant, filt=None):
    """``u_c -> x_p`` through the filter (plant alone when ``filt`` is None)."""
    if filt is None:
        return StateSpaceModel(plant.A, plant.B)
    ext = build_extended_system(plant, filt)
    C = np.hstack([np.eye(plant.n), np.zeros((plant.n, filt.n_f))])
    return ext.with_output(C)


def controllability_rank(A, B, tol=None):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks), tol=tol))


def frequency_response(sys, omegas):
    """``G(j w) = C (j w I - A)^{-1} B + D`` for every ``w`` in ``omegas``.

    ``w = inf`` returns ``D``. Returns an array of shape ``(len(omegas), p, m)``.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = sys.n
    out = np.empty((omegas.size, sys.p, sys.m), dtype=complex)
    eye = np.eye(n)
    for k, w in enumerate(omegas):
        if np.isinf(w) or n == 0:
            out[k] = sys.D
            continue
        M = 1j * w * eye - sys.A
        # rcond guard: solve() only raises on exact singularity
        if np.linalg.cond(M) > 1.0 / np.finfo(float).eps:
            raise NumericalError(f"resolvent is singular at omega={w:g}", omega=w)
        out[k] = sys.C @ np.linalg.solve(M, sys.B) + sys.D
    return out


def _sigma_max(G):
    return float(np.linalg.norm(G, 2)) if G.size else 0.0


def _hamiltonian(A, B, C, D, g):
    m = D.shape[1]
    p = D.shape[0]
    R = g * g * np.eye(m) - D.T @ D
    Ri = np.linalg.inv(R)
    Ak = A + B @ Ri @ D.T @ C
    return np.block([
        [Ak, B @ Ri @ B.T],
        [-C.T @ (np.eye(p) + D @ Ri @ D.T) @ C, -Ak.T],
    ])


def hinf_norm(sys, tol=1e-6):
    """H-infinity norm by bisection on the Hamiltonian imaginary-axis test.

    ``g`` exceeds the norm iff the Hamiltonian built for level ``g`` has no
    eigenvalue on the imaginary axis. Candidate axis eigenvalues are
    confirmed by evaluating ``sigma_max(G(j w))`` there, which also lifts the
    lower bound. Terminates when ``(hi - lo) <= tol * lo``.
    """
    if not is_hurwitz(sys.A):
        raise StabilityError("H-infinity norm undefined: A is not Hurwitz")
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    d_norm = _sigma_max(D)
    if sys.n == 0 or not np.any(B) or not np.any(C):
        return d_norm

    poles = la.eigvals(A)
    probe = np.concatenate([[0.0], np.abs(poles), np.abs(poles.imag)])
    probe = np.unique(probe[np.isfinite(probe)])
    lo = max(d_norm, max(_sigma_max(G) for G in frequency_response(sys, probe)))
    scale = max(np.linalg.norm(A, 1), 1.0)

    def crossing(g):
        """Largest gain found on the axis at level g, or None if none."""
        H = _hamiltonian(A, B, C, D, g)
        ev = la.eigvals(H)
        hnorm = max(np.linalg.norm(H, 1), 1.0)
        cand = ev[np.abs(ev.real) <= 1e-6 * hnorm]
        cand = cand[cand.imag >= 0]
        if cand.size == 0:
            return None
        vals = [_sigma_max(G) for G in frequency_response(sys, np.abs(cand.imag))]
        best = max(vals)
        return best if best >= g * (1 - 1e-9) else None

    if lo <= 1e-14 * scale:
        # G is numerically zero at every probe; confirm no crossing at a tiny level
        tiny = max(lo, d_norm) + 1e-12 * scale
        if crossing(tiny) is None:
            return lo
        lo = tiny

    hi = 2.0 * lo
    while True:
        c = crossing(hi)
        if c is None:
            break
        lo = max(lo, c)
        hi = 2.0 * max(hi, c)

    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        c = crossing(mid)
        if c is None:
            hi = mid
        else:
            lo = max(mid, c)
    return 0.5 * (lo + hi)


InputSignal = Union[Callable[[float, np.ndarray], Sequence[float]], np.ndarray, Sequence]


def _input_function(u, m, t_grid):
    if callable(u):
        def f(t, x):
            return np.asarray(u(t, x), dtype=float).reshape(m)
        return f
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 1:
        if arr.size != m:
            raise DimensionError(f"constant input must have {m} entries")
        return lambda t, x: arr
    if arr.shape != (t_grid.size, m):
        raise DimensionError(
            f"sampled input must have shape {(t_grid.size, m)}, got {arr.shape}")
    cols = [arr[:, j] for j in range(m)]

    def f(t, x):
        return np.array([np.interp(t, t_grid, c) for c in cols])
    return f


def simulate(sys, u, x0=None, t_end=1.0, dt=1e-4):
    """Fixed-step RK4 trajectory of ``sys`` on ``[0, t_end]``.

    ``u`` is a callable ``u(t, x)``, a constant length-``m`` vector, or an
    array with one row per time sample (linearly interpolated at the RK
    stages). The step is ``t_end / ceil(t_end / dt)``, never larger than ``dt``.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    n, m = sys.n, sys.m
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).reshape(-1)
    if x.size != n:
        raise DimensionError(f"x0 must have {n} entries")
    steps = max(1, int(np.ceil(t_end / dt - 1e-9)))
    h = t_end / steps
    t_grid = np.linspace(0.0, t_end, steps + 1)
    f_u = _input_function(u, m, t_grid)
    A, B = sys.A, sys.B

    states = np.empty((steps + 1, n))
    inputs = np.empty((steps + 1, m))
    for k in range(steps):
        t = t_grid[k]
        u0 = f_u(t, x)
        states[k] = x
        inputs[k] = u0
        k1 = A @ x + B @ u0
        x2 = x + 0.5 * h * k1
        k2 = A @ x2 + B @ f_u(t + 0.5 * h, x2)
        x3 = x + 0.5 * h * k2
        k3 = A @ x3 + B @ f_u(t + 0.5 * h, x3)
        x4 = x + h * k3
        k4 = A @ x4 + B @ f_u(t + h, x4)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e150:
            raise DivergenceError(
                f"integration diverged at t={t_grid[k + 1]:g}", t_grid[k + 1])
    states[-1] = x
    inputs[-1] = f_u(t_grid[-1], x)
    outputs = states @ sys.C.T + inputs @ sys.D.T
    return Trajectory(t_grid, states, inputs, outputs)
