"""LMI problems and their lowering to a vectorized conic program."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import DimensionError
from .expr import AffineMatrixExpr, BlockBuilder, MatrixVar


class LmiProblem:
    """Variables, PSD constraints ``expr >= 0`` and a linear objective.

    Built incrementally, then sealed (by :meth:`seal` or on the first solve);
    sealed problems reject further edits and can be shared between threads.
    """

    def __init__(self, mode="analysis", stealthy=None, **metadata):
        self.variables: Dict[str, MatrixVar] = {}
        self.constraints: List[Tuple[str, AffineMatrixExpr]] = []
        self.objective: Dict[str, np.ndarray] = {}
        self.sense = "min"
        self.metadata = {"mode": mode, "stealthy": stealthy, **metadata}
        self._sealed = False

    def _editable(self):
        if self._sealed:
            raise RuntimeError("problem is sealed")

    def variable(self, name, rows, cols=None, symmetric=False):
        self._editable()
        if name in self.variables:
            raise ValueError(f"variable {name!r} already registered")
        var = MatrixVar(name, rows, rows if cols is None else cols, symmetric)
        self.variables[name] = var
        return var

    def block(self, sizes):
        return BlockBuilder(sizes)

    def add_constraint(self, name, expr):
        self._editable()
        for vname, var in expr.variables.items():
            if self.variables.get(vname) != var:
                raise ValueError(f"constraint {name!r} uses unregistered variable {vname!r}")
        if any(n == name for n, _ in self.constraints):
            raise ValueError(f"duplicate constraint name {name!r}")
        self.constraints.append((name, expr))

    def set_objective(self, coeffs, sense="min"):
        """Objective ``sum_v <C_v, V>``; ``coeffs`` maps variable name -> ``C_v``."""
        self._editable()
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        for name, C in coeffs.items():
            if name not in self.variables:
                raise ValueError(f"objective uses unregistered variable {name!r}")
            if np.shape(C) != self.variables[name].shape:
                raise DimensionError(f"objective coefficient for {name!r} has wrong shape")
        self.objective = {k: np.asarray(v, dtype=float) for k, v in coeffs.items()}
        self.sense = sense

    def seal(self):
        self._sealed = True
        return self

    @property
    def sealed(self):
        return self._sealed

    def constraint(self, name):
        for n, expr in self.constraints:
            if n == name:
                return expr
        raise KeyError(name)

    def fix(self, name, value):
        """Copy of the problem with variable ``name`` replaced by ``value``."""
        if name not in self.variables:
            raise KeyError(name)
        value = np.asarray(value, dtype=float).reshape(self.variables[name].shape)
        out = LmiProblem(**self.metadata)
        out.variables = {k: v for k, v in self.variables.items() if k != name}
        out.constraints = []
        for n, expr in self.constraints:
            e = expr.substitute(name, value)
            if e.terms or np.any(e.const):
                out.constraints.append((n, e))
        out.objective = {k: v for k, v in self.objective.items() if k != name}
        out.sense = self.sense
        out.metadata["fixed"] = {**self.metadata.get("fixed", {}), name: value}
        return out

    def evaluate(self, values):
        """Constraint matrices at ``values``: name -> symmetric ndarray."""
        return {n: e.evaluate(values) for n, e in self.constraints}

    def objective_value(self, values):
        return float(sum(np.sum(C * np.asarray(values[k])) for k, C in self.objective.items()))


@dataclass(frozen=True)
class ConeBlock:
    """``F0 + sum_k x_k F_k >= 0`` with the ``F_k`` in triplet form.

    ``var[t], row[t], col[t], val[t]`` is one nonzero of ``F_var`` (both
    triangles stored).
    """

    name: str
    size: int
    const: np.ndarray
    var: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    def coefficient(self, k):
        F = np.zeros((self.size, self.size))
        sel = self.var == k
        F[self.row[sel], self.col[sel]] = self.val[sel]
        return F

    def evaluate(self, x):
        F = np.array(self.const)
        np.add.at(F, (self.row, self.col), self.val * np.asarray(x)[self.var])
        return F


@dataclass(frozen=True)
class StandardForm:
    """``minimize c @ x`` subject to one semidefinite cone per block.

    ``sign`` converts back to the problem's own sense:
    objective = ``sign * (c @ x)``.
    """

    c: np.ndarray
    sign: float
    blocks: Tuple[ConeBlock, ...]
    variables: Tuple[MatrixVar, ...]
    index: Dict[str, slice]

    @property
    def n_scalars(self):
        return self.c.size

    @property
    def cone_dims(self):
        return [b.size for b in self.blocks]

    def devectorize(self, x):
        return {v.name: v.devectorize(x[self.index[v.name]]) for v in self.variables}

    def vectorize(self, values):
        x = np.zeros(self.n_scalars)
        for v in self.variables:
            x[self.index[v.name]] = v.vectorize(values[v.name])
        return x

    def dump(self, path):
        """Text dump for external cross-checking: ``i j value`` lines, 0-based."""
        lines = [f"# n_scalars {self.n_scalars} sign {self.sign:+g}"]
        for v in self.variables:
            s = self.index[v.name]
            lines.append(f"# variable {v.name} {v.rows}x{v.cols} "
                         f"{'sym' if v.symmetric else 'full'} offset {s.start}")
        lines.append("# objective")
        lines += [f"{k} 0 {val!r}" for k, val in enumerate(self.c) if val != 0.0]
        for b, blk in enumerate(self.blocks):
            lines.append(f"# block {b} {blk.name} size {blk.size} const")
            r, c = np.nonzero(blk.const)
            lines += [f"{i} {j} {blk.const[i, j]!r}" for i, j in zip(r, c)]
            for k in np.unique(blk.var):
                lines.append(f"# block {b} {blk.name} size {blk.size} var {k}")
                sel = blk.var == k
                lines += [f"{i} {j} {v!r}"
                          for i, j, v in zip(blk.row[sel], blk.col[sel], blk.val[sel])]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def equilibrate(sf):
    """Diagonally rescaled copy of ``sf`` and the variable scale ``d``.

    Each scalar is divided by the square root of its largest coefficient
    magnitude (``x = d * x_scaled``), then every block gets the congruence ``S F S``
    with ``S = diag(1/sqrt(max diagonal magnitude))``. Congruence keeps the
    PSD cone, so the scaled problem has the same feasible set.
    """
    colmax = np.zeros(sf.n_scalars)
    for b in sf.blocks:
        np.maximum.at(colmax, b.var, np.abs(b.val))
    d = 1.0 / np.sqrt(np.where(colmax > 0, colmax, 1.0))
    blocks = []
    for b in sf.blocks:
        val = b.val * d[b.var]
        on_diag = b.row == b.col
        diag = np.abs(np.diag(b.const)).copy()
        np.maximum.at(diag, b.row[on_diag], np.abs(val[on_diag]))
        r = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
        blocks.append(ConeBlock(b.name, b.size, b.const * np.outer(r, r), b.var, b.row, b.col,
                                val * r[b.row] * r[b.col]))
    return StandardForm(sf.c * d, sf.sign, tuple(blocks), sf.variables, sf.index), d


def to_standard_form(problem):
    """Scalarize every variable (``svec`` for symmetric ones) and lower each
    constraint to one semidefinite cone block."""
    variables = tuple(problem.variables.values())
    index, offset = {}, 0
    for v in variables:
        index[v.name] = slice(offset, offset + v.size)
        offset += v.size
    bases = {v.name: v.basis() for v in variables}

    c = np.zeros(offset)
    for name, C in problem.objective.items():
        c[index[name]] = [np.sum(C * B) for B in bases[name]]
    sign = 1.0
    if problem.sense == "max":
        c, sign = -c, -1.0

    blocks = []
    for cname, expr in problem.constraints:
        vs, rs, cs, xs = [], [], [], []
        for vname in expr.variables:
            start = index[vname].start
            for k, B in enumerate(bases[vname]):
                F = expr.linear_part(vname, B)
                r, cc = np.nonzero(np.abs(F) > 0.0)
                vs.append(np.full(r.size, start + k))
                rs.append(r)
                cs.append(cc)
                xs.append(F[r, cc])
        cat = (lambda a, dt: np.concatenate(a).astype(dt) if a else np.zeros(0, dt))
        blocks.append(ConeBlock(cname, expr.dim, np.array(expr.const),
                                cat(vs, int), cat(rs, int), cat(cs, int), cat(xs, float)))
    return StandardForm(c, sign, tuple(blocks), variables, index)
