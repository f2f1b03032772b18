"""Post-hoc verification of a fixed filter: invariance certificate, safe-set
containment, distortion bound and adversarial simulation."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as la

from .ellipsoid import Ellipsoid, is_contained, project
from .errors import DimensionError, DivergenceError
from .io import write_csv
from .lmi.blocks import input_set_block, normal_set_block
from .lmi.problem import LmiProblem
from .lmi.solve import solve
from .lti import build_extended_system, hinf_norm, is_hurwitz, simulate

__all__ = [
    "DEFAULT_ALPHA_GRID",
    "AttackPolicy",
    "VerificationReport",
    "InvarianceCheck",
    "MonteCarloResult",
    "alpha_grid_for",
    "check_invariance",
    "greedy_attack_policy",
    "boundary_random_policy",
    "constant_policy",
    "monte_carlo_invariance",
    "full_verify",
    "write_trace_csv",
]

DEFAULT_ALPHA_GRID = (0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 19.0)
LEVEL_TOL = 1e-3
INPUT_TOL = 1e-12
CERT_TOL = 1e-6
HINF_TOL = 1e-4


class AttackPolicy:
    """Admissible actuator injection ``u(t, zeta)`` in ``E(R, u_bar)``.

    Kinds:

    * ``greedy-worst-case``: the admissible input maximizing ``dV/dt`` for
      ``V = zeta' Q zeta``, i.e. ``u_bar + R^{-1} g / sqrt(g' R^{-1} g)`` with
      ``g = B' Q zeta`` (``u_bar`` when ``g = 0``).
    * ``boundary-random``: a random boundary point of the input set, redrawn
      every ``dwell`` seconds from a generator keyed on ``(seed, interval)``.
    * ``constant``: a fixed admissible input.
    """

    KINDS = ("greedy-worst-case", "boundary-random", "constant")

    def __init__(self, kind, input_set, B=None, Q=None, seed=0, dwell=0.01, value=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        self.kind = kind
        self.input_set = input_set
        self.seed = int(seed)
        self.dwell = float(dwell)
        R = input_set.Q
        self._L = la.cholesky(R, lower=True)
        self._Rinv = la.cho_solve((self._L, True), np.eye(R.shape[0]))
        if kind == "greedy-worst-case":
            if B is None or Q is None:
                raise ValueError("greedy policy needs B and Q")
            self._BtQ = np.asarray(B, dtype=float).T @ np.asarray(Q, dtype=float)
        if kind == "constant":
            if value is None:
                value = input_set.c
            value = np.asarray(value, dtype=float).reshape(-1)
            if value.size != input_set.dim:
                raise DimensionError("constant input has the wrong size")
            if input_set.level(value) > 1.0 + INPUT_TOL:
                raise ValueError("constant input lies outside the input set")
            self.value = value
        if kind == "boundary-random" and self.dwell <= 0:
            raise ValueError("dwell must be positive")

    @property
    def deterministic(self):
        return self.kind != "boundary-random"

    def __call__(self, t, zeta):
        ub = self.input_set.c
        if self.kind == "constant":
            return self.value
        if self.kind == "greedy-worst-case":
            g = self._BtQ @ np.asarray(zeta, dtype=float)
            Rg = self._Rinv @ g
            s = float(g @ Rg)
            if s <= 0.0:
                return ub.copy()
            return ub + Rg / np.sqrt(s)
        k = int(np.floor(t / self.dwell + 1e-12))
        d = np.random.default_rng([self.seed, k]).standard_normal(ub.size)
        d /= np.linalg.norm(d)
        # R = L L'  =>  (L^{-T} d)' R (L^{-T} d) = 1
        return ub + la.solve_triangular(self._L, d, lower=True, trans="T")


def greedy_attack_policy(extended, Q, input_set):
    """Pointwise maximizer of ``dV/dt`` over the input set."""
    return AttackPolicy("greedy-worst-case", input_set, B=extended.B, Q=Q)


def boundary_random_policy(input_set, seed=0, dwell=0.01):
    return AttackPolicy("boundary-random", input_set, seed=seed, dwell=dwell)


def constant_policy(input_set, value=None):
    return AttackPolicy("constant", input_set, value=value)


def alpha_grid_for(A, grid=DEFAULT_ALPHA_GRID):
    """Grid values inside ``(0, 2 min |Re eig(A)|)``."""
    hi = 2.0 * float(np.min(np.abs(la.eigvals(A).real)))
    return [a for a in grid if 0.0 < a < hi]


@dataclass
class InvarianceCheck:
    """Outcome of the fixed-``Q`` invariance test.

    ``margins[alpha]`` is the largest ``t`` with ``M(beta, lam) - t I >= 0``;
    ``alpha`` certifies when its margin is at least ``-tol``.
    """

    feasible: bool
    certified_alpha: Optional[float]
    margins: Dict[float, float]
    multipliers: Dict[float, Dict[str, float]]
    tol: float

    def __bool__(self):
        return self.feasible


def _invariance_margin(A, B, Q, sets, alpha, solver, tol):
    n, m = B.shape
    prob = LmiProblem(mode="analysis", stealthy=sets.normal is not None, alpha=alpha)
    beta = prob.variable("beta", 1, 1, symmetric=True)
    lam = prob.variable("lam", 1, 1, symmetric=True) if sets.normal is not None else None
    t = prob.variable("t", 1, 1, symmetric=True)
    blk = prob.block([n, 1, m])
    blk.const(0, 0, -(A.T @ Q + Q @ A) - alpha * Q)
    blk.const(0, 2, -Q @ B)
    blk.const(1, 1, np.array([[alpha]]))
    blk.scalar(beta, -input_set_block(sets.input.Q, sets.input.c, n))
    if lam is not None:
        Xi = sets.normal.lifted(n)
        blk.scalar(lam, -normal_set_block(Xi.Q, Xi.c, n, m))
    blk.scalar(t, -np.eye(n + 1 + m))
    prob.add_constraint("invariance", blk.build())
    for var in [beta] + ([lam] if lam is not None else []):
        b = prob.block([1])
        b.scalar(var, np.eye(1))
        prob.add_constraint(f"{var.name}_nonneg", b.build())
    cap = prob.block([1])
    cap.const(0, 0, np.eye(1))
    cap.scalar(t, -np.eye(1))
    prob.add_constraint("t_cap", cap.build())
    prob.set_objective({"t": np.eye(1)}, sense="max")
    res = solve(prob, solver=solver, tol=tol)
    if not res.ok:
        return -np.inf, {}
    mult = {"beta": float(res.values["beta"][0, 0])}
    if lam is not None:
        mult["lam"] = float(res.values["lam"][0, 0])
    return float(res.values["t"][0, 0]), mult


def check_invariance(extended, Q, sets, alpha_grid=None, solver="cvxopt", tol=1e-8,
                     cert_tol=CERT_TOL):
    """Whether ``E(Q)`` is certified invariant for ``extended`` under every
    admissible input (and, in stealthy mode, every state in the normal set).

    For each decay rate ``alpha`` the multipliers ``beta, lam >= 0`` are
    searched with ``Q`` fixed, maximizing the smallest eigenvalue of the
    S-procedure matrix. The default grid is :data:`DEFAULT_ALPHA_GRID`
    restricted to ``(0, 2 min |Re eig(A)|)``. An ``alpha`` certifies when
    its margin is at least ``-cert_tol`` (absolute).
    """
    A, B = extended.A, extended.B
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n} x {n}")
    if la.eigvalsh(0.5 * (Q + Q.T))[0] <= 0:
        raise ValueError("Q must be positive definite")
    if sets.input.dim != B.shape[1]:
        raise DimensionError("input set does not match the system inputs")
    Q = 0.5 * (Q + Q.T)
    grid = alpha_grid_for(A) if alpha_grid is None else [float(a) for a in alpha_grid]
    margins, mults, certified = {}, {}, None
    for a in grid:
        t, mult = _invariance_margin(A, B, Q, sets, a, solver, tol)
        margins[a] = t
        mults[a] = mult
        if certified is None and t >= -cert_tol:
            certified = a
    return InvarianceCheck(certified is not None, certified, margins, mults, cert_tol)


@dataclass
class RunRecord:
    max_level: float
    first_escape_time: Optional[float]
    safe_exit_time: Optional[float]
    normal_exit_time: Optional[float]
    error: Optional[str] = None


@dataclass
class MonteCarloResult:
    """Worst case over runs plus one :class:`RunRecord` per run."""

    max_level: float
    first_escape_time: Optional[float]
    safe_exit_time: Optional[float]
    runs: List[RunRecord]
    trajectories: list = field(default_factory=list, repr=False)


def _first_time(t, mask):
    idx = np.flatnonzero(mask)
    return float(t[idx[0]]) if idx.size else None


def monte_carlo_invariance(extended, Q, policy, t_end=5.0, dt=1e-4, n_runs=1, seed=0,
                           zeta0=None, sets=None, n_plant=None, level_tol=LEVEL_TOL,
                           keep_trajectories=False):
    """Simulate the attacked system and track ``V(zeta) = zeta' Q zeta``.

    Deterministic policies run once regardless of ``n_runs``; random ones
    use seeds ``seed, seed + 1, ...``. When ``sets`` is given, exits of the
    plant state (first ``n_plant`` coordinates) from the safe and normal
    sets are recorded too; the normal set is monitored, never enforced.
    Divergence is reported per run.
    """
    Q = np.asarray(Q, dtype=float)
    n = extended.n
    n_plant = n if n_plant is None else n_plant
    z0 = np.zeros(n) if zeta0 is None else np.asarray(zeta0, dtype=float).reshape(-1)
    if z0 @ Q @ z0 > 1.0 + level_tol:
        raise ValueError("initial state lies outside the ellipsoid")
    runs_needed = 1 if policy.deterministic else int(n_runs)
    runs, trajs = [], []
    for r in range(runs_needed):
        pol = policy
        if not policy.deterministic:
            pol = AttackPolicy(policy.kind, policy.input_set, seed=seed + r,
                               dwell=policy.dwell)
        try:
            tr = simulate(extended, pol, x0=z0, t_end=t_end, dt=dt)
        except DivergenceError as exc:
            runs.append(RunRecord(np.inf, exc.time, None, None, str(exc)))
            continue
        V = np.einsum("ij,jk,ik->i", tr.states, Q, tr.states)
        esc = _first_time(tr.t, V > 1.0 + level_tol)
        safe_exit = normal_exit = None
        if sets is not None:
            xp = tr.states[:, :n_plant]
            safe_exit = _first_time(tr.t, sets.safe.level(xp) > 1.0)
            if sets.normal is not None:
                normal_exit = _first_time(tr.t, sets.normal.level(xp) > 1.0)
        runs.append(RunRecord(float(V.max()), esc, safe_exit, normal_exit))
        if keep_trajectories:
            trajs.append(tr)
    worst = max(r.max_level for r in runs)
    escapes = [r.first_escape_time for r in runs if r.first_escape_time is not None]
    safe_exits = [r.safe_exit_time for r in runs if r.safe_exit_time is not None]
    return MonteCarloResult(worst, min(escapes) if escapes else None,
                            min(safe_exits) if safe_exits else None, runs, trajs)


@dataclass
class VerificationReport:
    """Bundle of the four post-hoc checks.

    ``first_escape_time`` is set iff ``max_level > 1 + level_tol``; this is
    enforced on construction.
    """

    invariance_feasible: bool
    containment: bool
    hinf_value: float
    gamma: float
    max_level: float
    first_escape_time: Optional[float]
    residuals: Dict[str, object] = field(default_factory=dict)
    level_tol: float = LEVEL_TOL
    hinf_tol: float = HINF_TOL

    def __post_init__(self):
        escaped = self.max_level > 1.0 + self.level_tol
        if escaped != (self.first_escape_time is not None):
            raise ValueError("first_escape_time must be given iff max_level exceeds 1 + tol")

    @property
    def hinf_ok(self):
        return bool(self.hinf_value <= self.gamma + self.hinf_tol)

    @property
    def simulation_ok(self):
        return self.first_escape_time is None

    @property
    def passed(self):
        return bool(self.invariance_feasible and self.containment and self.hinf_ok
                    and self.simulation_ok)

    def checks(self):
        return {"invariance": bool(self.invariance_feasible),
                "containment": bool(self.containment),
                "hinf": self.hinf_ok,
                "simulation": self.simulation_ok}


def full_verify(plant, filt, Q, sets, gamma, alpha_grid=None, t_end=5.0, dt=1e-4,
                zeta0=None, solver="cvxopt"):
    """Invariance certificate, containment of the plant-coordinate shadow of
    ``E(Q)`` in the safe set, ``|T_{u_c -> z}|_inf <= gamma`` and a greedy
    attack run, bundled into one report."""
    ext = build_extended_system(plant, filt)
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (ext.n, ext.n):
        raise DimensionError(f"Q must be {ext.n} x {ext.n} for this plant and filter")
    Q = 0.5 * (Q + Q.T)
    inv = check_invariance(ext, Q, sets, alpha_grid, solver=solver)
    shadow = project(Ellipsoid(Q), plant.n)
    contained = is_contained(shadow, sets.safe, tol=1e-6)
    stable = is_hurwitz(ext.A)
    hinf = float(hinf_norm(ext)) if stable else float("inf")
    mc = monte_carlo_invariance(ext, Q, greedy_attack_policy(ext, Q, sets.input),
                                t_end=t_end, dt=dt, zeta0=zeta0, sets=sets, n_plant=plant.n)
    residuals = {
        "invariance_margins": inv.margins,
        "certified_alpha": inv.certified_alpha,
        "containment_margin": float(la.eigvalsh(shadow.Q - sets.safe.Q)[0]),
        "extended_hurwitz": stable,
        "safe_exit_time": mc.safe_exit_time,
    }
    return VerificationReport(inv.feasible, contained, hinf, float(gamma), mc.max_level,
                              mc.first_escape_time, residuals)


def write_trace_csv(path, trajectory, Q, sets=None, n_plant=None):
    """Columns ``t, zeta_1..n, u_1..m, V, in_safe, in_normal``; membership
    flags are 1/0 and ``in_normal`` is blank without a normal set."""
    st, inp = trajectory.states, trajectory.inputs
    n, m = st.shape[1], inp.shape[1]
    n_plant = n if n_plant is None else n_plant
    Q = np.asarray(Q, dtype=float)
    V = np.einsum("ij,jk,ik->i", st, Q, st)
    xp = st[:, :n_plant]
    in_safe = (sets.safe.level(xp) <= 1.0) if sets is not None else [None] * len(V)
    in_normal = (sets.normal.level(xp) <= 1.0) if sets is not None and sets.normal is not None \
        else [None] * len(V)
    header = (["t"] + [f"zeta_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)]
              + ["V", "in_safe", "in_normal"])
    rows = ([float(t), *map(float, x), *map(float, u), float(v), s, nn]
            for t, x, u, v, s, nn in zip(trajectory.t, st, inp, V, in_safe, in_normal))
    write_csv(path, header, rows)
