import numpy as np
import pytest

from safefilter.errors import DimensionError
from safefilter.lmi import BlockBuilder, LmiProblem, MatrixVar, smat, svec, to_standard_form


def test_svec_trace_example():
    # trace(Q) on a 2x2 symmetric variable lowers to (1, 0, 1)
    v = MatrixVar("Q", 2, 2, symmetric=True)
    c = [np.sum(np.eye(2) * B) for B in v.basis()]
    assert np.array_equal(c, [1.0, 0.0, 1.0])


def test_svec_round_trip():
    rng = np.random.default_rng(0)
    for n in range(1, 8):
        M = rng.standard_normal((n, n))
        M = M + M.T
        assert np.allclose(smat(svec(M), n), M, atol=1e-15)


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((2, 6, 6))
    A, B = A + A.T, B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B), abs=1e-12)


def test_basis_reconstructs():
    rng = np.random.default_rng(2)
    for sym in (True, False):
        v = MatrixVar("V", 3, 3, sym)
        M = rng.standard_normal((3, 3))
        if sym:
            M = M + M.T
        x = v.vectorize(M)
        assert np.allclose(sum(xk * B for xk, B in zip(x, v.basis())), M, atol=1e-14)
        assert np.allclose(v.devectorize(x), M, atol=1e-14)


def test_variable_validation():
    with pytest.raises(DimensionError):
        MatrixVar("V", 2, 3, symmetric=True)
    with pytest.raises(DimensionError):
        MatrixVar("V", 0, 1)
    with pytest.raises(DimensionError):
        MatrixVar("V", 2, 2).devectorize(np.zeros(3))


def _random_values(rng, variables):
    out = {}
    for v in variables:
        M = rng.standard_normal(v.shape)
        out[v.name] = M + M.T if v.symmetric else M
    return out


def test_block_builder_symmetric_under_any_assignment():
    rng = np.random.default_rng(3)
    P = MatrixVar("P", 3, 3, symmetric=True)
    K = MatrixVar("K", 2, 3)
    s = MatrixVar("s", 1, 1, symmetric=True)
    b = BlockBuilder([3, 1, 2])
    b.term(0, 0, P, left=rng.standard_normal((3, 3)))
    b.term(0, 2, K, transpose=True, right=rng.standard_normal((2, 2)))
    b.term(2, 2, K, left=rng.standard_normal((2, 2)), right=np.ones((3, 2)))
    b.const(0, 1, rng.standard_normal((3, 1)))
    b.scalar(s, np.diag(rng.standard_normal(6)))
    expr = b.build()
    for _ in range(20):
        M = expr.evaluate(_random_values(rng, [P, K, s]))
        assert np.array_equal(M, M.T)


def test_block_builder_mirrors_off_diagonal():
    K = MatrixVar("K", 2, 3)
    b = BlockBuilder([3, 2])
    L = np.arange(6.0).reshape(3, 2)
    b.term(0, 1, K, transpose=True, left=np.eye(3), right=np.eye(2))
    b.const(0, 1, L)
    Kv = np.arange(6.0).reshape(2, 3) + 1
    M = b.build().evaluate({"K": Kv})
    assert np.array_equal(M[:3, 3:], Kv.T + L)
    assert np.array_equal(M[3:, :3], (Kv.T + L).T)
    assert not np.any(M[:3, :3]) and not np.any(M[3:, 3:])


def test_diagonal_term_he_flag():
    P = MatrixVar("P", 2, 2, symmetric=True)
    Pv = np.array([[2.0, 1.0], [1.0, 3.0]])
    with_he = BlockBuilder([2]).term(0, 0, P).build().evaluate({"P": Pv})
    without = BlockBuilder([2]).term(0, 0, P, he=False).build().evaluate({"P": Pv})
    assert np.allclose(with_he, 2 * Pv)
    assert np.allclose(without, Pv)


def test_scalar_broadcast():
    s = MatrixVar("s", 1, 1, symmetric=True)
    M = np.array([[1.0, 2.0], [2.0, -1.0]])
    expr = BlockBuilder([2]).scalar(s, M).build()
    assert np.allclose(expr.evaluate({"s": [[3.0]]}), 3 * M)
    with pytest.raises(DimensionError):
        BlockBuilder([2]).scalar(MatrixVar("P", 2, 2, symmetric=True), M)


def test_block_shape_errors():
    b = BlockBuilder([2, 1])
    with pytest.raises(DimensionError):
        b.const(0, 1, np.ones((2, 2)))
    with pytest.raises(ValueError):
        b.const(0, 0, np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        b.term(0, 1, MatrixVar("K", 2, 2))


def test_substitute_folds_constant():
    rng = np.random.default_rng(4)
    P = MatrixVar("P", 2, 2, symmetric=True)
    K = MatrixVar("K", 2, 2)
    b = BlockBuilder([2, 2])
    b.term(0, 0, P, left=rng.standard_normal((2, 2)))
    b.term(0, 1, K, right=rng.standard_normal((2, 2)))
    expr = b.build()
    vals = _random_values(rng, [P, K])
    fixed = expr.substitute("K", vals["K"])
    assert set(fixed.variables) == {"P"}
    assert np.allclose(fixed.evaluate(vals), expr.evaluate(vals), atol=1e-14)


def test_missing_value():
    P = MatrixVar("P", 2, 2, symmetric=True)
    with pytest.raises(KeyError):
        BlockBuilder([2]).term(0, 0, P).build().evaluate({})


class TestProblem:
    def test_registration(self):
        prob = LmiProblem()
        P = prob.variable("P", 2, symmetric=True)
        with pytest.raises(ValueError):
            prob.variable("P", 2)
        stray = MatrixVar("Z", 2, 2, symmetric=True)
        with pytest.raises(ValueError):
            prob.add_constraint("c", BlockBuilder([2]).term(0, 0, stray).build())
        prob.add_constraint("c", BlockBuilder([2]).term(0, 0, P).build())
        with pytest.raises(ValueError):
            prob.add_constraint("c", BlockBuilder([2]).term(0, 0, P).build())
        with pytest.raises(DimensionError):
            prob.set_objective({"P": np.eye(3)})
        with pytest.raises(ValueError):
            prob.set_objective({"P": np.eye(2)}, sense="up")

    def test_sealed(self):
        prob = LmiProblem()
        prob.variable("P", 2, symmetric=True)
        prob.seal()
        with pytest.raises(RuntimeError):
            prob.variable("Q", 2)

    def test_standard_form_matches_evaluation(self):
        rng = np.random.default_rng(5)
        prob = LmiProblem()
        P = prob.variable("P", 3, symmetric=True)
        K = prob.variable("K", 2, 3)
        b = prob.block([3, 2])
        b.term(0, 0, P, left=rng.standard_normal((3, 3)))
        b.term(0, 1, K, transpose=True)
        b.const(1, 1, np.eye(2))
        prob.add_constraint("c", b.build())
        prob.set_objective({"P": np.eye(3), "K": np.ones((2, 3))})
        sf = to_standard_form(prob)
        vals = _random_values(rng, [P, K])
        x = sf.vectorize(vals)
        assert np.allclose(sf.blocks[0].evaluate(x), prob.evaluate(vals)["c"], atol=1e-13)
        assert sf.c @ x == pytest.approx(prob.objective_value(vals), abs=1e-12)
        back = sf.devectorize(x)
        assert all(np.allclose(back[k], vals[k], atol=1e-14) for k in vals)

    def test_fix_removes_variable(self):
        prob = LmiProblem()
        P = prob.variable("P", 2, symmetric=True)
        s = prob.variable("s", 1, 1, symmetric=True)
        b = prob.block([2])
        b.term(0, 0, P, he=False)
        b.scalar(s, -np.eye(2))
        prob.add_constraint("c", b.build())
        fixed = prob.fix("s", 0.5)
        assert set(fixed.variables) == {"P"}
        assert fixed.metadata["fixed"]["s"].item() == 0.5
        vals = {"P": np.diag([1.0, 2.0])}
        assert np.allclose(fixed.evaluate(vals)["c"], np.diag([0.5, 1.5]))

    def test_dump(self, tmp_path):
        prob = LmiProblem()
        P = prob.variable("P", 2, symmetric=True)
        prob.add_constraint("c", prob.block([2]).term(0, 0, P, he=False).build())
        prob.set_objective({"P": np.eye(2)})
        path = tmp_path / "sdp.txt"
        to_standard_form(prob).dump(path)
        text = path.read_text()
        assert text.startswith("# n_scalars 3")
        assert "# variable P 2x2 sym offset 0" in text
        assert "# block 0 c size 2 var 1" in text
