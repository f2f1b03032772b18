"""Affine symmetric-matrix expressions over named matrix variables.

An expression is ``C + sum_k He(L_k op(V_k) R_k)`` where ``He(M) = M + M^T``
and ``op`` is identity or transpose. Every term carries its own transpose, so
the value is symmetric for any assignment of the variables.
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..errors import DimensionError

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class MatrixVar:
    """Decision variable. Symmetric variables are scalarized through ``svec``."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise DimensionError(f"variable {self.name!r} needs positive dimensions")
        if self.symmetric and self.rows != self.cols:
            raise DimensionError(f"symmetric variable {self.name!r} must be square")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def size(self):
        """Number of scalar coordinates."""
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    def basis(self):
        """Matrices ``B_k`` with ``V = sum_k x_k B_k`` for ``x = vectorize(V)``."""
        out = []
        if self.symmetric:
            for i, j in zip(*np.triu_indices(self.rows)):
                B = np.zeros(self.shape)
                if i == j:
                    B[i, i] = 1.0
                else:
                    B[i, j] = B[j, i] = 1.0 / SQRT2
                out.append(B)
        else:
            for i in range(self.rows):
                for j in range(self.cols):
                    B = np.zeros(self.shape)
                    B[i, j] = 1.0
                    out.append(B)
        return out

    def vectorize(self, M):
        M = np.asarray(M, dtype=float).reshape(self.shape)
        if self.symmetric:
            return svec(M)
        return M.reshape(-1).copy()

    def devectorize(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.size:
            raise DimensionError(f"{self.name!r} expects {self.size} coordinates")
        if self.symmetric:
            return smat(x, self.rows)
        return x.reshape(self.shape).copy()


def svec(M):
    """Row-major upper triangle, off-diagonal entries scaled by sqrt(2)."""
    M = np.asarray(M, dtype=float)
    iu = np.triu_indices(M.shape[0])
    scale = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return M[iu] * scale


def smat(x, n):
    """Inverse of :func:`svec`."""
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / SQRT2)
    M = np.zeros((n, n))
    M[iu] = np.asarray(x, dtype=float) * scale
    return M + np.triu(M, 1).T


@dataclass(frozen=True)
class Term:
    """``He(left @ op(var) @ right)``; scalar variables broadcast as ``v * I``."""

    var: MatrixVar
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False

    def apply(self, V):
        V = np.asarray(V, dtype=float)
        if self.transpose:
            V = V.T
        if V.shape == (1, 1) and self.left.shape[1] != 1:
            core = V[0, 0] * self.right
        else:
            core = V @ self.right
        M = self.left @ core
        return M + M.T


@dataclass(frozen=True)
class AffineMatrixExpr:
    const: np.ndarray
    terms: Tuple[Term, ...] = ()

    @property
    def dim(self):
        return self.const.shape[0]

    @property
    def variables(self):
        return {t.var.name: t.var for t in self.terms}

    def evaluate(self, values):
        """Numeric value for ``values`` (a mapping name -> matrix)."""
        out = np.array(self.const, dtype=float)
        for t in self.terms:
            try:
                V = values[t.var.name]
            except KeyError:
                raise KeyError(f"no value for variable {t.var.name!r}") from None
            out = out + t.apply(np.asarray(V, dtype=float).reshape(t.var.shape))
        return out

    def linear_part(self, name, V):
        """Contribution of variable ``name`` at value ``V`` (no constant)."""
        out = np.zeros_like(self.const)
        for t in self.terms:
            if t.var.name == name:
                out = out + t.apply(V)
        return out

    def substitute(self, name, value):
        """Fold variable ``name`` into the constant."""
        value = np.asarray(value, dtype=float)
        const = self.const + self.linear_part(name, value)
        terms = tuple(t for t in self.terms if t.var.name != name)
        return AffineMatrixExpr(const, terms)

    def __add__(self, other):
        if other.dim != self.dim:
            raise DimensionError("expression dimensions differ")
        return AffineMatrixExpr(self.const + other.const, self.terms + other.terms)

    def __neg__(self):
        return AffineMatrixExpr(
            -self.const,
            tuple(Term(t.var, -t.left, t.right, t.transpose) for t in self.terms))

    def __sub__(self, other):
        return self + (-other)


class BlockBuilder:
    """Assemble a symmetric block matrix term by term.

    Off-diagonal placements at ``(i, j)`` imply the mirrored transpose at
    ``(j, i)``. On a diagonal block, :meth:`term` adds ``He(L V R)`` by
    default; pass ``he=False`` to add the symmetric part ``(LVR + (LVR)^T)/2``
    once, which is just ``L V R`` when that product is already symmetric.
    """

    def __init__(self, sizes):
        self.sizes = [int(s) for s in sizes]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.dim = int(self.offsets[-1])
        self._const = np.zeros((self.dim, self.dim))
        self._terms = []

    def _sel(self, i):
        E = np.zeros((self.dim, self.sizes[i]))
        E[self.offsets[i]:self.offsets[i + 1], :] = np.eye(self.sizes[i])
        return E

    def _slices(self, i, j):
        o = self.offsets
        return slice(o[i], o[i + 1]), slice(o[j], o[j + 1])

    def const(self, i, j, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        si, sj = self._slices(i, j)
        if M.shape != (self.sizes[i], self.sizes[j]):
            raise DimensionError(
                f"block ({i},{j}) expects {(self.sizes[i], self.sizes[j])}, got {M.shape}")
        if i == j:
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.abs(M).max()):
                raise ValueError(f"diagonal constant block ({i},{i}) must be symmetric")
            self._const[si, sj] += 0.5 * (M + M.T)
        else:
            self._const[si, sj] += M
            self._const[sj, si] += M.T
        return self

    def term(self, i, j, var, left=None, right=None, transpose=False, he=True, scale=1.0):
        r, c = (var.cols, var.rows) if transpose else (var.rows, var.cols)
        scalar = var.shape == (1, 1)
        if left is None:
            left = np.eye(self.sizes[i] if scalar else r)
        if right is None:
            right = np.eye(self.sizes[j] if scalar else c)
        left = np.atleast_2d(np.asarray(left, dtype=float)) * scale
        right = np.atleast_2d(np.asarray(right, dtype=float))
        if scalar:
            if left.shape[1] != right.shape[0]:
                raise DimensionError("scalar term: inner dimensions of left/right differ")
        elif left.shape[1] != r or right.shape[0] != c:
            raise DimensionError(
                f"term for {var.name!r}: left {left.shape}, right {right.shape} "
                f"do not fit {(r, c)}")
        if left.shape[0] != self.sizes[i] or right.shape[1] != self.sizes[j]:
            raise DimensionError(f"term for {var.name!r} does not fit block ({i},{j})")
        if i == j and not he:
            left = 0.5 * left
        if not np.any(left) or not np.any(right):
            return self
        L = self._sel(i) @ left
        R = right @ self._sel(j).T
        self._terms.append(Term(var, L, R, transpose))
        return self

    def scalar(self, var, M, i=None, j=None):
        """Add ``v * M`` for a 1x1 variable ``v``; ``M`` spans the whole matrix
        unless a block ``(i, j)`` is given."""
        if var.shape != (1, 1):
            raise DimensionError(f"{var.name!r} is not a scalar variable")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if i is None:
            if M.shape != (self.dim, self.dim):
                raise DimensionError("full-size coefficient expected")
            if not np.any(M):
                return self
            self._terms.append(Term(var, 0.5 * M, np.eye(self.dim)))
            return self
        if i == j:
            return self.term(i, i, var, left=M, right=np.eye(self.sizes[i]), he=False)
        return self.term(i, j, var, left=M, right=np.eye(self.sizes[j]))

    def build(self):
        const = 0.5 * (self._const + self._const.T)
        return AffineMatrixExpr(const, tuple(self._terms))
