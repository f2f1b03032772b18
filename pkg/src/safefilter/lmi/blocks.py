"""Assembly of the invariance (analysis) and filter-synthesis LMI problems.

Block order of the S-procedure matrices is ``[state, 1, input]``; in the
synthesis problem the state is split into plant and filter halves, giving
``[x_p, x_f, 1, u]``.
"""
import numpy as np
import scipy.linalg as la

from ..errors import ConditioningError, DimensionError
from .problem import LmiProblem

STRICT_MARGIN = 1e-8
MAX_COND = 1e12


def spd_inverse(M, name):
    """Inverse of a symmetric positive definite matrix via Cholesky.

    Raises :class:`ConditioningError` when ``M`` is not PD or its condition
    number exceeds ``1e12``; nothing is regularized silently.
    """
    M = np.asarray(M, dtype=float)
    ev = la.eigvalsh(M)
    if ev[0] <= 0 or ev[-1] / ev[0] > MAX_COND:
        cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
        raise ConditioningError(f"{name} is singular or ill-conditioned (cond={cond:.3g})",
                                cond)
    c = la.cho_factor(M, lower=True)
    inv = la.cho_solve(c, np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


def input_set_block(R, u_bar, n):
    """Multiplier matrix of the input-set constraint, ``[state, 1, input]``.

    ``[zeta; 1; u]^T S [zeta; 1; u] = 1 - (u - u_bar)^T R (u - u_bar)``.
    Shared by both assemblers.
    """
    R = np.asarray(R, dtype=float)
    ub = np.asarray(u_bar, dtype=float).reshape(-1)
    m = R.shape[0]
    S = np.zeros((n + 1 + m, n + 1 + m))
    S[n, n] = 1.0 - ub @ R @ ub
    S[n, n + 1:] = ub @ R
    S[n + 1:, n] = R @ ub
    S[n + 1:, n + 1:] = -R
    return S


def normal_set_block(Xi, xi_bar, n, m):
    """``[zeta; 1; u]^T T [zeta; 1; u] = 1 - (zeta - xi)^T Xi (zeta - xi)``."""
    Xi = np.asarray(Xi, dtype=float)
    xb = np.asarray(xi_bar, dtype=float).reshape(-1)
    T = np.zeros((n + 1 + m, n + 1 + m))
    T[:n, :n] = -Xi
    T[:n, n] = Xi @ xb
    T[n, :n] = Xi @ xb
    T[n, n] = 1.0 - xb @ Xi @ xb
    return T


def _check_scalars(**scalars):
    for k, v in scalars.items():
        if v is None:
            continue
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"{k} must be a nonnegative number, got {v}")


def assemble_lemma1(A, B, input_set, normal_set=None, alpha=0.5, strict=STRICT_MARGIN):
    """Invariant-ellipsoid problem for ``zeta' = A zeta + B u``.

    Variables ``Q`` (symmetric), ``beta >= 0`` and, when a normal-operation
    set is given, ``lam >= 0``. Constraints::

        invariance:  -E - alpha F - beta S - lam T >= 0
        Q_pd:        Q >= strict * I

    Objective: maximize ``trace(Q)``. ``normal_set`` may be given in the
    leading (plant) coordinates; it is lifted to the state dimension.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError("A must be n x n and B must have n rows")
    m = B.shape[1]
    if input_set.dim != m:
        raise DimensionError(f"input set is {input_set.dim}-D, B has {m} columns")
    _check_scalars(alpha=alpha)

    prob = LmiProblem(mode="analysis", stealthy=normal_set is not None, alpha=alpha)
    Q = prob.variable("Q", n, symmetric=True)
    beta = prob.variable("beta", 1, 1, symmetric=True)
    lam = prob.variable("lam", 1, 1, symmetric=True) if normal_set is not None else None

    blk = prob.block([n, 1, m])
    blk.term(0, 0, Q, left=-A.T)                  # -(A^T Q + Q A)
    blk.term(0, 2, Q, right=-B)                   # -Q B
    blk.term(0, 0, Q, scale=-alpha, he=False)     # -alpha Q
    blk.const(1, 1, np.array([[alpha]]))          # -alpha * (-1)
    blk.scalar(beta, -input_set_block(input_set.Q, input_set.c, n))
    if lam is not None:
        Xi = normal_set.lifted(n)
        blk.scalar(lam, -normal_set_block(Xi.Q, Xi.c, n, m))
    prob.add_constraint("invariance", blk.build())

    pd = prob.block([n])
    pd.term(0, 0, Q, he=False)
    pd.const(0, 0, -strict * np.eye(n))
    prob.add_constraint("Q_pd", pd.build())
    _nonneg(prob, beta)
    if lam is not None:
        _nonneg(prob, lam)
    prob.set_objective({"Q": np.eye(n)}, sense="max")
    return prob


def _nonneg(prob, var):
    b = prob.block([1])
    b.scalar(var, np.eye(1))
    prob.add_constraint(f"{var.name}_nonneg", b.build())


def _add_calA(blk, Ap, Bp, Gf, X, Y, Ah, Ch, sign=-1.0):
    """Add ``sign * He(calA)`` on the leading ``2 n_p`` rows, where
    ``calA = [[Ap X + Bp Gf Ch, Ap], [Ah, Y Ap]]``."""
    blk.term(0, 0, X, left=sign * Ap)
    blk.term(0, 0, Ch, left=sign * Bp @ Gf)
    # (0,1) block of calA + calA^T is Ap + Ah^T
    blk.const(0, 1, sign * Ap)
    blk.term(0, 1, Ah, transpose=True, scale=sign)
    blk.term(1, 1, Y, right=sign * Ap)


def _add_calB(blk, col, Bp, Gf, Gc, Y, Bh, Dh, sign=-1.0):
    """Add ``sign * calB`` in block column ``col`` (mirrored), where
    ``calB = [Bp Gf Dh + Bp Gc; Bh + Y Bp Gc]``."""
    blk.term(0, col, Dh, left=sign * Bp @ Gf)
    blk.const(0, col, sign * Bp @ Gc)
    blk.term(1, col, Bh, scale=sign)
    blk.term(1, col, Y, right=sign * Bp @ Gc)


def assemble_theorem1(plant, gamma_f, gamma_c, sets, alpha, lam, delta, gamma, epsilon,
                      strict=STRICT_MARGIN, beta=None):
    """Filter-synthesis problem in the linearizing variables.

    Variables ``X, Y`` (symmetric ``n_p x n_p``), ``Ah, Bh, Ch, Dh`` and
    ``beta >= 0`` (pinned when ``beta`` is given). ``alpha, lam, delta,
    gamma, epsilon`` are data. Constraints::

        invariance:  -E' - alpha F' - beta S' - lam T' >= 0   (2n_p+1+m)
        safety:      -J - delta W >= 0                        (n_p+1+n_p)
        distortion:  -L >= 0                                  (2n_p+m+m)
        Q_pd:        [[X, I], [I, Y]] >= strict * I

    The ``lam T'`` term is dropped when ``sets.normal`` is None. Objective:
    minimize ``trace(X)``.
    """
    Ap, Bp = plant.A, plant.B
    n, m = plant.n, plant.m
    Gf = np.asarray(gamma_f, dtype=float)
    Gc = np.asarray(gamma_c, dtype=float)
    if Gf.ndim == 1:
        Gf = np.diag(Gf)
    if Gc.ndim == 1:
        Gc = np.diag(Gc)
    if Gf.shape != (m, m) or Gc.shape != (m, m):
        raise DimensionError("selection matrices must be m x m")
    if not np.allclose(Gf + Gc, np.eye(m), rtol=0, atol=0):
        raise ValueError("gamma_f + gamma_c must equal the identity")
    if sets.input.dim != m or sets.safe.dim != n:
        raise DimensionError("set dimensions do not match the plant")
    _check_scalars(alpha=alpha, lam=lam, delta=delta, gamma=gamma, epsilon=epsilon, beta=beta)
    Psi_inv = spd_inverse(sets.safe.Q, "Psi")
    stealthy = sets.normal is not None
    if stealthy:
        if sets.normal.dim != n:
            raise DimensionError("normal set must live in plant coordinates")
        Xip, xip = sets.normal.Q, sets.normal.c
        Xip_inv = spd_inverse(Xip, "Xi_p")

    prob = LmiProblem(mode="synthesis", stealthy=stealthy, alpha=alpha, lam=lam,
                      delta=delta, gamma=gamma, epsilon=epsilon)
    X = prob.variable("X", n, symmetric=True)
    Y = prob.variable("Y", n, symmetric=True)
    Ah = prob.variable("Ah", n, n)
    Bh = prob.variable("Bh", n, m)
    Ch = prob.variable("Ch", m, n)
    Dh = prob.variable("Dh", m, m)
    bvar = prob.variable("beta", 1, 1, symmetric=True)

    # invariance, blocks [x_p, x_f, 1, u]
    inv = prob.block([n, n, 1, m])
    _add_calA(inv, Ap, Bp, Gf, X, Y, Ah, Ch)
    _add_calB(inv, 3, Bp, Gf, Gc, Y, Bh, Dh)
    inv.term(0, 0, X, scale=-alpha, he=False)
    inv.const(0, 1, -alpha * np.eye(n))
    inv.term(1, 1, Y, scale=-alpha, he=False)
    inv.const(2, 2, np.array([[alpha]]))
    S = input_set_block(sets.input.Q, sets.input.c, 2 * n)
    inv.scalar(bvar, -S)
    if stealthy and lam != 0:
        h = (Xip @ xip)[:, None]
        # +lam G, G = [[2X - Xi_p^{-1}, X Xi_p], [Xi_p X, Xi_p]]
        inv.term(0, 0, X, scale=2 * lam, he=False)
        inv.const(0, 0, -lam * Xip_inv)
        inv.term(0, 1, X, right=lam * Xip)
        inv.const(1, 1, lam * Xip)
        # -lam H, H = [X Xi_p xi_p; Xi_p xi_p]
        inv.term(0, 2, X, right=-lam * h)
        inv.const(1, 2, -lam * h)
        inv.const(2, 2, np.array([[-lam * (1.0 - xip @ Xip @ xip)]]))
    prob.add_constraint("invariance", inv.build())

    # safety, blocks [x_p, 1, x_p]
    Psi, psi = sets.safe.Q, sets.safe.c
    saf = prob.block([n, 1, n])
    saf.term(0, 0, X, scale=delta, he=False)
    saf.term(0, 1, X, right=(Psi @ psi)[:, None])
    saf.const(1, 1, np.array([[1.0 - psi @ Psi @ psi - delta]]))
    saf.term(0, 2, X)
    saf.const(2, 2, Psi_inv)
    prob.add_constraint("safety", saf.build())

    # distortion (bounded real), blocks [x_p, x_f, u, z]
    dis = prob.block([n, n, m, m])
    _add_calA(dis, Ap, Bp, Gf, X, Y, Ah, Ch)
    _add_calB(dis, 2, Bp, Gf, Gc, Y, Bh, Dh)
    dis.term(0, 3, Ch, transpose=True, scale=-1.0)      # -calC_z^T
    dis.const(2, 2, (gamma - epsilon) * np.eye(m))
    dis.term(2, 3, Dh, transpose=True, scale=-1.0)      # -D_z^T = -(Dh - I)^T
    dis.const(2, 3, np.eye(m))
    dis.const(3, 3, gamma * np.eye(m))
    prob.add_constraint("distortion", dis.build())

    qpd = prob.block([n, n])
    qpd.term(0, 0, X, he=False)
    qpd.const(0, 1, np.eye(n))
    qpd.term(1, 1, Y, he=False)
    qpd.const(0, 0, -strict * np.eye(n))
    qpd.const(1, 1, -strict * np.eye(n))
    prob.add_constraint("Q_pd", qpd.build())
    _nonneg(prob, bvar)

    prob.set_objective({"X": np.eye(n)}, sense="min")
    if beta is not None:
        prob = prob.fix("beta", np.array([[beta]]))
    return prob
