"""Direct numpy evaluation of the LMI blocks at given values.

Written independently of the expression layer, so plugging a solution in
here checks the solver output without trusting the lowering.
"""
import numpy as np
import scipy.linalg as la


def _z(r, c):
    return np.zeros((r, c))


def lemma1_matrices(A, B, Q, beta, lam, alpha, input_set, normal_set=None):
    """``{"invariance": -E - aF - bS - lT, "Q_pd": Q}``."""
    A, B, Q = (np.asarray(M, dtype=float) for M in (A, B, Q))
    n, m = B.shape
    R, ub = input_set.Q, input_set.c
    E = np.block([[A.T @ Q + Q @ A, _z(n, 1), Q @ B],
                  [_z(1, n), _z(1, 1), _z(1, m)],
                  [B.T @ Q, _z(m, 1), _z(m, m)]])
    F = np.block([[Q, _z(n, 1), _z(n, m)],
                  [_z(1, n), -np.ones((1, 1)), _z(1, m)],
                  [_z(m, n), _z(m, 1), _z(m, m)]])
    S = np.block([[_z(n, n), _z(n, 1), _z(n, m)],
                  [_z(1, n), np.array([[1 - ub @ R @ ub]]), (ub @ R)[None, :]],
                  [_z(m, n), (R @ ub)[:, None], -R]])
    M = -E - alpha * F - beta * S
    if normal_set is not None:
        Xi = np.zeros((n, n))
        d = normal_set.dim
        Xi[:d, :d] = normal_set.Q
        xb = np.zeros(n)
        xb[:d] = normal_set.c
        T = np.block([[-Xi, (Xi @ xb)[:, None], _z(n, m)],
                      [(Xi @ xb)[None, :], np.array([[1 - xb @ Xi @ xb]]), _z(1, m)],
                      [_z(m, n), _z(m, 1), _z(m, m)]])
        M = M - lam * T
    return {"invariance": M, "Q_pd": Q}


def calA(Ap, Bp, Gf, X, Y, Ah, Ch):
    return np.block([[Ap @ X + Bp @ Gf @ Ch, Ap], [Ah, Y @ Ap]])


def calB(Bp, Gf, Gc, Y, Bh, Dh):
    return np.vstack([Bp @ Gf @ Dh + Bp @ Gc, Bh + Y @ Bp @ Gc])


def calCz(Ch):
    return np.hstack([Ch, np.zeros_like(Ch)])


def calQ(X, Y):
    return np.block([[X, np.eye(X.shape[0])], [np.eye(X.shape[0]), Y]])


def calG(X, Xip):
    return np.block([[2 * X - la.inv(Xip), X @ Xip], [Xip @ X, Xip]])


def calH(X, Xip, xip):
    return np.concatenate([X @ Xip @ xip, Xip @ xip])[:, None]


def theorem1_matrices(plant, gamma_f, gamma_c, sets, values, alpha, lam, delta, gamma,
                      epsilon):
    """The four synthesis matrices (``invariance``, ``safety``, ``distortion``,
    ``Q_pd``) at ``values`` (X, Y, Ah, Bh, Ch, Dh, beta)."""
    Ap, Bp = plant.A, plant.B
    n, m = plant.n, plant.m
    Gf = np.diag(gamma_f) if np.ndim(gamma_f) == 1 else np.asarray(gamma_f, dtype=float)
    Gc = np.diag(gamma_c) if np.ndim(gamma_c) == 1 else np.asarray(gamma_c, dtype=float)
    X, Y = values["X"], values["Y"]
    Ah, Bh, Ch, Dh = values["Ah"], values["Bh"], values["Ch"], values["Dh"]
    beta = float(np.asarray(values["beta"]).reshape(-1)[0])
    cA = calA(Ap, Bp, Gf, X, Y, Ah, Ch)
    cB = calB(Bp, Gf, Gc, Y, Bh, Dh)
    cQ = calQ(X, Y)
    R, ub = sets.input.Q, sets.input.c
    N2 = 2 * n

    Ep = np.block([[cA.T + cA, _z(N2, 1), cB],
                   [_z(1, N2), _z(1, 1), _z(1, m)],
                   [cB.T, _z(m, 1), _z(m, m)]])
    Fp = np.block([[cQ, _z(N2, 1), _z(N2, m)],
                   [_z(1, N2), -np.ones((1, 1)), _z(1, m)],
                   [_z(m, N2), _z(m, 1), _z(m, m)]])
    Sp = np.block([[_z(N2, N2), _z(N2, 1), _z(N2, m)],
                   [_z(1, N2), np.array([[1 - ub @ R @ ub]]), (ub @ R)[None, :]],
                   [_z(m, N2), (R @ ub)[:, None], -R]])
    inv = -Ep - alpha * Fp - beta * Sp
    if sets.normal is not None:
        Xip, xip = sets.normal.Q, sets.normal.c
        H = calH(X, Xip, xip)
        Tp = np.block([[-calG(X, Xip), H, _z(N2, m)],
                       [H.T, np.array([[1 - xip @ Xip @ xip]]), _z(1, m)],
                       [_z(m, N2), _z(m, 1), _z(m, m)]])
        inv = inv - lam * Tp

    Psi, psi = sets.safe.Q, sets.safe.c
    J = np.block([[_z(n, n), -(X @ Psi @ psi)[:, None], -X],
                  [-(X @ Psi @ psi)[None, :], np.array([[-1 + psi @ Psi @ psi]]), _z(1, n)],
                  [-X, _z(n, 1), -la.inv(Psi)]])
    W = np.block([[-X, _z(n, 1), _z(n, n)],
                  [_z(1, n), np.ones((1, 1)), _z(1, n)],
                  [_z(n, n), _z(n, 1), _z(n, n)]])
    saf = -J - delta * W

    Cz = calCz(Ch)
    Dz = Dh - np.eye(m)
    L = np.block([[cA.T + cA, cB, Cz.T],
                  [cB.T, -(gamma - epsilon) * np.eye(m), Dz.T],
                  [Cz, Dz, -gamma * np.eye(m)]])
    return {"invariance": inv, "safety": saf, "distortion": -L, "Q_pd": cQ}


def min_eigenvalues(mats):
    return {k: float(la.eigvalsh(0.5 * (M + M.T))[0]) for k, M in mats.items()}
