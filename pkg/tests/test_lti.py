import numpy as np
import pytest
import scipy.linalg as la

from safefilter import two_actuator as ta
from safefilter.errors import DimensionError, DivergenceError, NumericalError, StabilityError
from safefilter.lti import (FilterRealization, StateSpaceModel, build_extended_system,
                            controllability_rank, frequency_response, hinf_norm, is_hurwitz,
                            series_model, simulate)

from conftest import random_stable


def sweep_norm(sys, count=10_000):
    """Independent oracle: max singular value over a dense log grid."""
    lam = np.abs(np.linalg.eigvals(sys.A))
    w = np.logspace(np.log10(lam.min() / 100), np.log10(lam.max() * 100), count)
    M = 1j * w[:, None, None] * np.eye(sys.n) - sys.A
    G = sys.C @ np.linalg.solve(M, np.broadcast_to(sys.B, (count,) + sys.B.shape)) + sys.D
    dc = sys.C @ np.linalg.solve(-sys.A, sys.B) + sys.D
    return max(np.linalg.svd(G, compute_uv=False)[:, 0].max(),
               np.linalg.norm(dc, 2), np.linalg.norm(sys.D, 2))


class TestModel:
    def test_defaults(self):
        sys = StateSpaceModel(np.eye(2), np.ones((2, 1)))
        assert sys.C.shape == (2, 2) and sys.D.shape == (2, 1)
        assert (sys.n, sys.m, sys.p) == (2, 1, 2)

    def test_dimension_checks(self):
        with pytest.raises(DimensionError):
            StateSpaceModel(np.ones((2, 3)), np.ones((2, 1)))
        with pytest.raises(DimensionError):
            StateSpaceModel(np.eye(2), np.ones((3, 1)))
        with pytest.raises(ValueError):
            StateSpaceModel(np.array([[np.nan]]), np.ones((1, 1)))

    def test_immutable(self):
        sys = StateSpaceModel(np.eye(2), np.ones((2, 1)))
        with pytest.raises(ValueError):
            sys.A[0, 0] = 5.0

    def test_filter_selection_validation(self):
        with pytest.raises(ValueError):
            FilterRealization(np.eye(1), np.ones((1, 2)), np.ones((2, 1)), np.eye(2),
                              gamma_f=[1, 0], gamma_c=[1, 0])
        with pytest.raises(ValueError):
            FilterRealization(np.eye(1), np.ones((1, 2)), np.ones((2, 1)), np.eye(2),
                              gamma_f=[0.5, 1])
        f = FilterRealization(np.eye(1), np.ones((1, 2)), np.ones((2, 1)), np.eye(2),
                              gamma_f=[1, 0])
        assert np.array_equal(f.gamma_c, np.diag([0.0, 1.0]))


class TestHurwitz:
    def test_plant(self):
        assert is_hurwitz(ta.A_P)

    def test_identity(self):
        assert not is_hurwitz(np.eye(3))

    def test_margin(self):
        assert not is_hurwitz(np.diag([-1e-12, -1.0]))
        assert is_hurwitz(np.diag([-1e-12, -1.0]), tol=0.0)

    def test_non_square(self):
        with pytest.raises(DimensionError):
            is_hurwitz(np.ones((2, 3)))

    def test_extended_with_reported_filter(self, plant):
        ext = build_extended_system(plant, ta.reported_filter())
        assert is_hurwitz(ext.A)
        # block-triangular: spectrum is the union of plant and filter spectra
        union = np.sort_complex(np.concatenate([la.eigvals(ta.A_P),
                                                la.eigvals(ta.reported_filter().A_f)]))
        assert np.allclose(np.sort_complex(la.eigvals(ext.A)), union, atol=1e-8)


class TestExtended:
    def test_passthrough_equals_plant(self, plant):
        ext = build_extended_system(plant, FilterRealization.passthrough(2))
        assert np.array_equal(ext.A, plant.A) and np.array_equal(ext.B, plant.B)
        assert not ext.C.any() and not ext.D.any()

    def test_reported_filter_structure(self, plant):
        f = ta.reported_filter()
        ext = build_extended_system(plant, f)
        assert ext.A.shape == (6, 6)
        assert np.array_equal(ext.A[:3, :3], ta.A_P)
        assert np.allclose(ext.A[:3, 3:], ta.B_P @ f.C_f, rtol=0, atol=0)
        assert not ext.A[3:, :3].any()
        assert np.array_equal(ext.A[3:, 3:], f.A_f)
        assert np.allclose(ext.B, np.vstack([ta.B_P @ f.D_f, f.B_f]))
        assert np.array_equal(ext.C, np.hstack([np.zeros((2, 3)), f.C_f]))
        assert np.array_equal(ext.D, f.D_f - np.eye(2))

    def test_nothing_filtered(self, plant):
        f = ta.reported_filter()
        g = FilterRealization(f.A_f, f.B_f, f.C_f, f.D_f, gamma_f=[0, 0])
        ext = build_extended_system(plant, g)
        assert not ext.A[:3, 3:].any()
        assert np.array_equal(ext.B, np.vstack([ta.B_P, f.B_f]))

    def test_channel_mismatch(self, plant):
        with pytest.raises(DimensionError):
            build_extended_system(plant, FilterRealization.passthrough(3))

    def test_random_spectrum_union(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n_p, n_f, m = rng.integers(1, 5, size=3)
            plant = StateSpaceModel(rng.standard_normal((n_p, n_p)),
                                    rng.standard_normal((n_p, m)))
            f = FilterRealization(rng.standard_normal((n_f, n_f)),
                                  rng.standard_normal((n_f, m)),
                                  rng.standard_normal((m, n_f)),
                                  rng.standard_normal((m, m)))
            ext = build_extended_system(plant, f)
            ev = np.sort_complex(la.eigvals(ext.A))
            union = np.sort_complex(np.concatenate([la.eigvals(plant.A), la.eigvals(f.A_f)]))
            assert np.allclose(ev, union, atol=1e-8)

    def test_series_model_outputs_plant_state(self, plant):
        s = series_model(plant, ta.reported_filter())
        assert s.C.shape == (3, 6) and np.array_equal(s.C[:, :3], np.eye(3))


class TestHinf:
    def test_zero_transfer(self):
        sys = StateSpaceModel(-np.eye(2), np.ones((2, 1)), np.zeros((1, 2)), np.zeros((1, 1)))
        assert hinf_norm(sys) == 0.0

    @pytest.mark.parametrize("a", [0.1, 1.0, 7.5, 150.0])
    def test_first_order(self, a):
        sys = StateSpaceModel([[-a]], [[1.0]], [[1.0]], [[0.0]])
        assert hinf_norm(sys) == pytest.approx(1.0 / a, rel=1e-6)

    def test_static_gain(self):
        D = np.array([[3.0, 0.0], [0.0, -4.0]])
        sys = StateSpaceModel(-np.eye(1), np.zeros((1, 2)), np.zeros((2, 1)), D)
        assert hinf_norm(sys) == pytest.approx(4.0, rel=1e-6)

    def test_resonant_peak(self):
        # w_n = 10, zeta = 0.05: peak 1 / (2 zeta sqrt(1 - zeta^2)) / w_n^2 * w_n^2
        z, wn = 0.05, 10.0
        A = np.array([[0.0, 1.0], [-wn ** 2, -2 * z * wn]])
        sys = StateSpaceModel(A, [[0.0], [wn ** 2]], [[1.0, 0.0]], [[0.0]])
        expected = 1.0 / (2 * z * np.sqrt(1 - z ** 2))
        assert hinf_norm(sys) == pytest.approx(expected, rel=1e-6)

    def test_unstable(self):
        with pytest.raises(StabilityError):
            hinf_norm(StateSpaceModel([[1.0]], [[1.0]], [[1.0]], [[0.0]]))

    def test_reported_filter_distortion(self, plant):
        ext = build_extended_system(plant, ta.reported_filter())
        h = hinf_norm(ext)
        assert h <= 0.61
        assert h == pytest.approx(sweep_norm(ext), rel=1e-4)

    def test_sweep_agreement(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            sys = random_stable(rng, rng.integers(1, 7), rng.integers(1, 3), rng.integers(1, 3))
            assert hinf_norm(sys) == pytest.approx(sweep_norm(sys), rel=1e-4)


class TestFrequencyResponse:
    def test_dc_gains(self, plant):
        G = frequency_response(plant, [0.0])[0]
        assert G[1, 0] == pytest.approx(2.0 / 3.0, abs=1e-14)
        assert G[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-14)
        assert abs(G[2, 0]) == 0.0

    def test_infinity_is_d(self):
        sys = StateSpaceModel(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)), [[0.7]])
        assert frequency_response(sys, [np.inf])[0, 0, 0] == 0.7

    def test_singular_resolvent(self):
        sys = StateSpaceModel([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]])
        with pytest.raises(NumericalError) as info:
            frequency_response(sys, [0.5, 1.0])
        assert info.value.omega == 1.0

    def test_dc_formula_random(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            sys = random_stable(rng, 4, 2, 3)
            G0 = frequency_response(sys, [0.0])[0]
            assert np.allclose(G0, -sys.C @ np.linalg.solve(sys.A, sys.B) + sys.D,
                               rtol=0, atol=1e-10)

    def test_shape(self, plant):
        assert frequency_response(plant, np.logspace(-1, 4, 7)).shape == (7, 3, 2)


class TestSimulate:
    def test_zero(self, plant):
        tr = simulate(plant, np.zeros(2), t_end=0.01, dt=1e-3)
        assert not tr.states.any()
        assert tr.t.size == 11 and np.all(np.diff(tr.t) > 0)

    def test_exponential_decay(self):
        sys = StateSpaceModel([[-1.0]], [[0.0]])
        tr = simulate(sys, np.zeros(1), x0=[1.0], t_end=2.0, dt=1e-3)
        assert np.max(np.abs(tr.states[:, 0] - np.exp(-tr.t))) < 1e-6

    def test_step_steady_state(self, plant):
        u = np.array([2.0, 0.0])
        tr = simulate(plant, u, t_end=3.0, dt=1e-4)
        ss = -np.linalg.solve(ta.A_P, ta.B_P @ u)
        assert np.allclose(tr.states[-1], ss, atol=1e-9)

    def test_convergence_order(self):
        sys = StateSpaceModel([[-1.0, 3.0], [-3.0, -1.0]], [[1.0], [0.5]])
        u = lambda t, x: [np.sin(2 * t)]  # noqa: E731
        ref = simulate(sys, u, x0=[1.0, 0.0], t_end=2.0, dt=1e-4).states[-1]
        e1 = np.linalg.norm(simulate(sys, u, x0=[1.0, 0.0], t_end=2.0, dt=0.1).states[-1] - ref)
        e2 = np.linalg.norm(simulate(sys, u, x0=[1.0, 0.0], t_end=2.0, dt=0.05).states[-1] - ref)
        assert np.log2(e1 / e2) >= 3.5

    def test_sampled_input(self):
        sys = StateSpaceModel([[0.0]], [[1.0]])
        t = np.linspace(0, 1, 11)
        tr = simulate(sys, t[:, None], t_end=1.0, dt=0.1)
        # integral of t from 0 to 1
        assert tr.states[-1, 0] == pytest.approx(0.5, abs=1e-12)

    def test_state_feedback_input(self):
        sys = StateSpaceModel([[0.0]], [[1.0]])
        tr = simulate(sys, lambda t, x: -2.0 * x, x0=[1.0], t_end=1.0, dt=1e-3)
        assert tr.states[-1, 0] == pytest.approx(np.exp(-2.0), rel=1e-9)

    def test_divergence(self):
        sys = StateSpaceModel([[800.0]], [[0.0]])
        with pytest.raises(DivergenceError) as info:
            simulate(sys, np.zeros(1), x0=[1.0], t_end=1.0, dt=1e-3)
        assert 0.0 < info.value.time <= 1.0

    def test_bad_step(self, plant):
        with pytest.raises(ValueError):
            simulate(plant, np.zeros(2), dt=0.0)


def test_controllability_rank(plant):
    assert controllability_rank(plant.A, plant.B) == 3
    assert controllability_rank(np.eye(2), np.array([[1.0], [0.0]])) == 1
