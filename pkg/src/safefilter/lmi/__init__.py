"""Affine matrix expressions, LMI problems, lowering and solving."""
from .expr import AffineMatrixExpr, BlockBuilder, MatrixVar, Term, smat, svec
from .problem import ConeBlock, LmiProblem, StandardForm, to_standard_form
from .solve import BACKENDS, SolverResult, register_backend, solve
