import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpgexp.model import (NonlinearSystem, SemilinearSplit, TimeDependentSystem, autonomize,
                          linearize, remainder_directional)
from dpgexp.operators import DenseOperator, TimeAugmentedOperator
from dpgexp.problems import build_ho_problem, riccati_problem


def scalar(rhs, jac=None):
    return NonlinearSystem(dim=1, rhs=rhs, jac_apply=jac)


def square_system(with_jacobian=True):
    jac = (lambda u, v: 2 * u * v) if with_jacobian else None
    return scalar(lambda u: u**2, jac)


def cubic_split(n=5, seed=0):
    rng = np.random.default_rng(seed)
    A = DenseOperator(-np.eye(n) * 3 + 0.3 * rng.standard_normal((n, n)))
    split = SemilinearSplit(A, lambda u: np.sin(u) + u**3, lambda u: np.cos(u) + 3 * u**2)
    return NonlinearSystem(dim=n, rhs=lambda u: A.matvec(u) + np.sin(u) + u**3, split=split)


class TestLinearize:
    def test_linear_scalar_has_zero_remainder(self):
        lin = linearize(scalar(lambda u: -u, lambda u, v: -v), [3.0])
        assert lin.J.to_dense()[0, 0] == -1.0
        for u in (-2.0, 0.0, 5.0):
            assert lin.g(np.array([u]))[0] == 0.0

    @pytest.mark.parametrize("with_jacobian", [True, False])
    def test_square_remainder(self, with_jacobian):
        lin = linearize(square_system(with_jacobian), [1.0])
        assert lin.J.to_dense()[0, 0] == pytest.approx(2.0, rel=1e-9)
        assert lin.g_n()[0] == pytest.approx(-1.0, rel=1e-9)
        for u in (-1.5, 0.25, 3.0):
            assert lin.g(np.array([u]))[0] == pytest.approx(u**2 - 2 * u, rel=1e-8, abs=1e-9)

    def test_riccati_remainder_by_hand(self):
        u_n = 1.7
        lin = linearize(riccati_problem(), [u_n])
        u = np.array([0.4])
        assert lin.g(u)[0] == pytest.approx(0.4**2 - 2 * u_n * 0.4, rel=1e-15)
        assert lin.g_n()[0] == pytest.approx(-u_n**2, rel=1e-15)

    def test_semilinear_jacobian_is_diagonal_shift(self):
        sys = cubic_split()
        u = np.linspace(-0.5, 0.5, 5)
        lin = linearize(sys, u)
        expect = sys.split.A.to_dense() + np.diag(np.cos(u) + 3 * u**2)
        assert np.allclose(lin.J.to_dense(), expect, rtol=1e-15, atol=0)

    def test_semilinear_split_matches_rhs(self):
        sys = cubic_split()
        rng = np.random.default_rng(1)
        for _ in range(10):
            u = rng.standard_normal(5)
            full = sys(u)
            split = sys.split.A.matvec(u) + sys.split.f(u)
            assert np.linalg.norm(full - split) <= 1e-12 * np.linalg.norm(full)

    def test_remainder_identity_fast_path(self):
        sys = cubic_split()
        rng = np.random.default_rng(2)
        lin = linearize(sys, rng.standard_normal(5))
        for _ in range(10):
            u = rng.standard_normal(5)
            direct = sys(u) - lin.J.matvec(u)
            assert np.linalg.norm(lin.g(u) - direct) <= 1e-13 * (1 + np.linalg.norm(sys(u)))

    def test_nonfinite_state(self):
        with pytest.raises(ValueError):
            linearize(square_system(), [np.nan])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linearize(square_system(), [1.0, 2.0])

    def test_rejects_non_autonomous(self):
        sys = TimeDependentSystem(dim=1, rhs=lambda t, u: u + t)
        with pytest.raises(TypeError):
            linearize(sys, [1.0])


class TestRemainderDirectional:
    def test_vanishes_at_linearization_point_analytic(self):
        rng = np.random.default_rng(3)
        for sys in (cubic_split(), riccati_problem()):
            u_n = rng.standard_normal(sys.dim)
            lin = linearize(sys, u_n)
            for _ in range(5):
                v = rng.standard_normal(sys.dim)
                assert np.linalg.norm(remainder_directional(lin, u_n, v)) <= 1e-10 * np.linalg.norm(v)

    def test_vanishes_at_linearization_point_fd(self):
        sys = NonlinearSystem(dim=3, rhs=lambda u: np.array([u[1] * u[2], -u[0] ** 2, np.exp(u[2])]))
        rng = np.random.default_rng(4)
        u_n = rng.standard_normal(3)
        lin = linearize(sys, u_n)
        for _ in range(5):
            v = rng.standard_normal(3)
            assert np.linalg.norm(remainder_directional(lin, u_n, v)) <= 1e-6 * np.linalg.norm(v)

    def test_square_by_hand(self):
        lin = linearize(square_system(), [1.0])
        assert remainder_directional(lin, np.array([2.0]), np.array([1.0]))[0] == pytest.approx(2.0)

    def test_square_by_hand_fd(self):
        lin = linearize(square_system(with_jacobian=False), [1.0])
        out = remainder_directional(lin, np.array([2.0]), np.array([1.0]))[0]
        assert out == pytest.approx(2.0, rel=1e-7)

    def test_linear_is_zero(self):
        M = np.array([[0.0, 1.0], [-2.0, -0.1]])
        sys = NonlinearSystem(dim=2, rhs=lambda u: M @ u, jacobian=lambda u: DenseOperator(M))
        lin = linearize(sys, [1.0, 1.0])
        for u in ([0.0, 0.0], [3.0, -1.0]):
            assert np.array_equal(remainder_directional(lin, np.array(u), np.array([1.0, 2.0])),
                                  np.zeros(2))

    def test_nonfinite_direction(self):
        lin = linearize(square_system(), [1.0])
        with pytest.raises(ValueError):
            remainder_directional(lin, np.array([1.0]), np.array([np.inf]))

    def test_zero_direction(self):
        lin = linearize(square_system(False), [1.0])
        assert np.array_equal(remainder_directional(lin, np.array([5.0]), np.zeros(1)), np.zeros(1))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 5, elements=st.floats(-2, 2)),
       arrays(float, 5, elements=st.floats(-2, 2)),
       arrays(float, 5, elements=st.floats(-2, 2)),
       st.floats(-3, 3), st.floats(-3, 3))
def test_jacobian_action_linear(u, v, w, alpha, beta):
    sys = cubic_split()
    lhs = sys.apply_jacobian(u, alpha * v + beta * w)
    rhs = alpha * sys.apply_jacobian(u, v) + beta * sys.apply_jacobian(u, w)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + np.linalg.norm(rhs))


class TestAutonomize:
    def test_hand_jacobian(self):
        sys = TimeDependentSystem(dim=1, rhs=lambda t, u: u + t, dfdt=lambda t, u: np.ones(1),
                                  jac_apply=lambda t, u, v: v)
        aut = autonomize(sys)
        lin = linearize(aut, [0.0, 1.0])
        assert isinstance(lin.J, TimeAugmentedOperator)
        assert np.array_equal(lin.J.to_dense(), np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert np.array_equal(lin.F_n, [1.0, 1.0])

    def test_fd_fallbacks(self):
        sys = TimeDependentSystem(dim=1, rhs=lambda t, u: u + t)
        J = linearize(autonomize(sys), [0.5, 1.0]).J.to_dense()
        assert np.allclose(J, [[0.0, 0.0], [1.0, 1.0]], atol=1e-8)

    def test_constant_in_time(self):
        sys = TimeDependentSystem(dim=2, rhs=lambda t, u: -u, dfdt=lambda t, u: np.zeros(2),
                                  jac_apply=lambda t, u, v: -v)
        J = linearize(autonomize(sys), [0.3, 1.0, 2.0]).J.to_dense()
        assert np.all(J[0] == 0.0)
        assert np.all(J[1:, 0] == 0.0)

    def test_ho_dimension(self):
        p = build_ho_problem(4)
        aut = autonomize(p.system)
        assert aut.dim == 17
        J = linearize(aut, np.concatenate(([0.0], p.initial()))).J
        assert J.dim == 17

    def test_already_autonomous(self):
        with pytest.raises(TypeError):
            autonomize(riccati_problem())
