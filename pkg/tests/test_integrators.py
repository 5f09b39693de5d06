import math

import numpy as np
import pytest

from dpgexp.harness import estimate_order
from dpgexp.integrators import (COEFFICIENTS, IntegrationError, MethodId, TimeGrid, integrate,
                                step_dpg2, step_dpg3, step_exp_euler_classic, step_hybrid_euler,
                                step_linear_dpg_p0)
from dpgexp.model import NonlinearSystem, SemilinearSplit, linearize
from dpgexp.operators import DenseOperator
from dpgexp.phi import PhiEvaluator, expm_dense, phi_dense
from dpgexp.problems import build_ho_problem, linear_decay_system, riccati_problem

E_M01 = 0.9048374180359595681          # exp(-0.1)
ONE_MINUS_E_M01 = 0.09516258196404043186

NONLINEAR = [step_exp_euler_classic, step_hybrid_euler, step_dpg2, step_dpg3]
DENSE = PhiEvaluator(backend="dense")


def decay_scalar():
    return NonlinearSystem(dim=1, rhs=lambda u: -u, jac_apply=lambda u, v: -v)


def random_system(rng, n=4):
    """Semilinear system with a smooth pointwise nonlinearity."""
    A = DenseOperator(-2 * np.eye(n) + 0.5 * rng.standard_normal((n, n)))
    a, b = rng.uniform(0.2, 1.0, 2)
    f = lambda u: a * np.sin(u) + b * u**2
    fp = lambda u: a * np.cos(u) + 2 * b * u
    return NonlinearSystem(dim=n, rhs=lambda u: A.matvec(u) + f(u),
                           split=SemilinearSplit(A, f, fp))


def affine_system(rng, n=10):
    M = rng.standard_normal((n, n)) / math.sqrt(n) - 2 * np.eye(n)
    b = rng.standard_normal(n)
    sys = NonlinearSystem(dim=n, rhs=lambda u: M @ u + b, jacobian=lambda u: DenseOperator(M),
                          linear=True)
    return sys, M, b


def affine_exact(M, b, u0, h):
    return expm_dense(h * M) @ u0 + h * phi_dense(1, h * M) @ b


@pytest.mark.parametrize("step", NONLINEAR)
def test_scalar_linear_decay_exact(step):
    out = step(linearize(decay_scalar(), [1.0]), np.array([1.0]), 0.1)
    assert out.trace[0] == pytest.approx(E_M01, rel=1e-13)


def test_hybrid_field_value():
    out = step_hybrid_euler(linearize(decay_scalar(), [1.0]), np.array([1.0]), 0.1)
    # u_n + h phi_2(-h) (-u_n) = 1 - (e^{-h} - 1 + h) / h
    assert out.field[0] == pytest.approx(1 - (E_M01 - 1 + 0.1) / 0.1, rel=1e-13)


def test_hybrid_local_order_three():
    sys = riccati_problem()
    errs = []
    for h in (0.02, 0.01, 0.005):
        out = step_hybrid_euler(linearize(sys, [1.0]), np.array([1.0]), h)
        errs.append(abs(out.trace[0] - 1 / (1 - h)))
    slope = estimate_order(list(zip((0.02, 0.01, 0.005), errs))).slope
    assert slope == pytest.approx(3.0, abs=0.1)


@pytest.mark.parametrize("step", NONLINEAR)
def test_equilibrium(step):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 5)) - 3 * np.eye(5)
    u_star = rng.standard_normal(5)
    sys = NonlinearSystem(dim=5, rhs=lambda u: M @ (u - u_star) + (u - u_star) ** 2)
    out = step(linearize(sys, u_star), u_star, 0.3)
    assert np.abs(out.trace - u_star).max() <= 1e-12 * (1 + np.linalg.norm(u_star))
    if out.stages:
        for v in out.stages.values():
            if v is out.stages.get("correction"):
                assert np.abs(v).max() <= 1e-12
            else:
                assert np.abs(v - u_star).max() <= 1e-12 * (1 + np.linalg.norm(u_star))


@pytest.mark.parametrize("step", NONLINEAR)
@pytest.mark.parametrize("h", [0.1, 1.0])
def test_affine_exactness(step, h):
    sys, M, b = affine_system(np.random.default_rng(1))
    u0 = np.ones(10)
    out = step(linearize(sys, u0), u0, h, DENSE)
    exact = affine_exact(M, b, u0, h)
    assert np.linalg.norm(out.trace - exact) <= 1e-11 * np.linalg.norm(exact)


def test_hybrid_equals_classical():
    rng = np.random.default_rng(2)
    for _ in range(20):
        sys = random_system(rng)
        u = rng.standard_normal(4)
        h = rng.uniform(0.01, 1.0)
        lin = linearize(sys, u)
        a = step_hybrid_euler(lin, u, h).trace
        b = step_exp_euler_classic(lin, u, h).trace
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(b)


def test_phi_action_counts():
    rng = np.random.default_rng(3)
    sys = random_system(rng)
    u = rng.standard_normal(4)
    lin = linearize(sys, u)
    assert step_exp_euler_classic(lin, u, 0.1).phi_action_count == 1
    assert step_hybrid_euler(lin, u, 0.1).phi_action_count == 1
    assert step_dpg2(lin, u, 0.1).phi_action_count <= 2
    assert step_dpg3(lin, u, 0.1).phi_action_count <= 3


def test_nested_stage_bitwise():
    rng = np.random.default_rng(4)
    sys = random_system(rng)
    u = rng.standard_normal(4)
    lin = linearize(sys, u)
    ev = PhiEvaluator(dense_threshold=1)
    a = step_dpg2(lin, u, 0.2, ev).stages["u2"]
    b = step_dpg3(lin, u, 0.2, ev).stages["u2"]
    assert np.array_equal(a, b)


def raw_dpg2(lin, u, h):
    """Weighted-sum form: u + h b1 g(u) + h b2 g(u2) + h phi_1 J u, with dense phi."""
    J = lin.J.to_dense()
    P = [phi_dense(p, h * J) for p in range(5)]
    u2 = u + h * P[2] @ lin.system(u)
    b1 = P[1] - 8 * P[3]
    b2 = 8 * P[3]
    return u + h * P[1] @ (J @ u) + h * (b1 @ lin.g(u) + b2 @ lin.g(u2))


def raw_dpg3(lin, u, h):
    J = lin.J.to_dense()
    P = [phi_dense(p, h * J) for p in range(5)]
    g = lin.g
    u2 = u + h * P[2] @ lin.system(u)
    u3 = u + h * J @ u2 + h * g(u)
    C = -0.25 * lin.g_prime_apply(u2, u3 - 2 * u2 + u)
    b1 = P[1] - 14 * P[3] + 36 * P[4]
    b2 = 16 * P[3] - 48 * P[4]
    b3 = 12 * P[4] - 2 * P[3]
    return u + h * P[1] @ (J @ u) + h * (b1 @ g(u) + b2 @ (g(u2) + C) + b3 @ g(u3))


@pytest.mark.parametrize("step,raw", [(step_dpg2, raw_dpg2), (step_dpg3, raw_dpg3)])
def test_difference_form_matches_weighted_sum(step, raw):
    rng = np.random.default_rng(5)
    for _ in range(5):
        sys = random_system(rng)
        u = rng.standard_normal(4)
        h = rng.uniform(0.05, 0.8)
        lin = linearize(sys, u)
        got = step(lin, u, h, DENSE).trace
        expect = raw(lin, u, h)
        assert np.linalg.norm(got - expect) <= 1e-12 * np.linalg.norm(expect)


def test_coefficient_table():
    c = COEFFICIENTS
    assert c[MethodId.DPG2]["b1"] == {1: 1.0, 3: -8.0}
    assert c[MethodId.DPG2]["b2"] == {3: 8.0}
    assert c[MethodId.DPG3]["b1"] == {1: 1.0, 3: -14.0, 4: 36.0}
    assert c[MethodId.DPG3]["b2"] == {3: 16.0, 4: -48.0}
    assert c[MethodId.DPG3]["b3"] == {3: -2.0, 4: 12.0}


@pytest.mark.parametrize("method,order,band", [("dpg2", 3.0, 0.15), ("dpg3", 4.0, 0.2)])
def test_riccati_global_order(method, order, band):
    sys = riccati_problem()
    rows = []
    for N in (8, 16, 32, 64):
        traj = integrate(sys, TimeGrid(0.0, 0.5, N), [1.0], method)
        rows.append((0.5 / N, abs(traj.final[0] - 2.0)))
    assert estimate_order(rows).slope == pytest.approx(order, abs=band)


class TestLinearDPG:
    def test_trivial(self):
        u = np.array([1.0, -2.0])
        out = step_linear_dpg_p0(np.zeros((2, 2)), np.zeros(2), u, 0.3)
        assert np.array_equal(out.trace, u)
        assert np.allclose(out.field, u, rtol=1e-15)

    def test_homogeneous_exact(self):
        out = step_linear_dpg_p0([[1.0]], [0.0], [1.0], 0.1)
        assert out.trace[0] == pytest.approx(E_M01, rel=1e-14)
        assert out.phi_action_count == 1

    def test_constant_source_one_step(self):
        out = step_linear_dpg_p0([[1.0]], [1.0], [0.0], 0.1)
        assert out.trace[0] == pytest.approx(ONE_MINUS_E_M01, rel=1e-14)

    def test_field_is_interval_mean(self):
        # for u' = -u the exact interval mean is u_n (1 - e^{-h}) / h
        out = step_linear_dpg_p0([[1.0]], [0.0], [1.0], 0.1)
        assert out.field[0] == pytest.approx(ONE_MINUS_E_M01 / 0.1, rel=1e-14)

    def test_time_dependent_source_converges(self):
        # u' = -u + t, u(0) = 0: u = t - 1 + e^{-t}
        from dpgexp.model import TimeDependentSystem
        sys = TimeDependentSystem(dim=1, rhs=lambda t, u: -u + t, jac_apply=lambda t, u, v: -v,
                                  linear=True)
        rows = []
        for N in (8, 16, 32, 64):
            traj = integrate(sys, TimeGrid(0.0, 1.0, N), [0.0], "linear-dpg-p0")
            rows.append((1.0 / N, abs(traj.final[0] - math.exp(-1.0))))
        assert estimate_order(rows).slope == pytest.approx(1.0, abs=0.1)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            step_linear_dpg_p0(np.eye(2), np.zeros(3), np.zeros(2), 0.1)

    def test_rejects_nonlinear_flag(self):
        with pytest.raises(ValueError):
            integrate(riccati_problem(), TimeGrid(0, 1, 2), [0.1], "linear-dpg-p0")


class TestIntegrate:
    def test_single_step_matches_stepper(self):
        sys = riccati_problem()
        traj = integrate(sys, TimeGrid(0.0, 0.1, 1), [1.0], "dpg3")
        out = step_dpg3(linearize(sys, [1.0]), np.array([1.0]), 0.1)
        assert np.array_equal(traj.final, out.trace)
        assert traj.traces.shape == (2, 1)

    @pytest.mark.parametrize("method", ["hybrid-euler", "dpg2", "dpg3", "euler-classic"])
    def test_linear_system_exact(self, method):
        rng = np.random.default_rng(6)
        M = rng.standard_normal((6, 6)) - 2 * np.eye(6)
        sys = NonlinearSystem(dim=6, rhs=lambda u: M @ u, jacobian=lambda u: DenseOperator(M))
        u0 = rng.standard_normal(6)
        traj = integrate(sys, TimeGrid(0.0, 1.0, 7), u0, method)
        exact = expm_dense(M) @ u0
        assert np.linalg.norm(traj.final - exact) <= 1e-11 * np.linalg.norm(exact)

    def test_stiff_decay_stable(self):
        sys = linear_decay_system(2, [-1.0, -100.0])
        for method in ("hybrid-euler", "dpg2", "dpg3"):
            traj = integrate(sys, TimeGrid(0.0, 1.0, 10), np.ones(2), method)
            assert np.allclose(traj.final, [math.exp(-1), math.exp(-100)], rtol=1e-12, atol=1e-15)

    def test_zero_initial_condition(self):
        sys = linear_decay_system(3, [-1.0, -2.0, -3.0])
        traj = integrate(sys, TimeGrid(0.0, 1.0, 4), np.zeros(3), "dpg3")
        assert np.array_equal(traj.traces, np.zeros((5, 3)))

    def test_deterministic(self):
        p = build_ho_problem(6)
        runs = [integrate(p.system, TimeGrid(0.0, 1.0, 4), p.initial(), "dpg3") for _ in range(2)]
        assert np.array_equal(runs[0].traces, runs[1].traces)
        assert np.array_equal(runs[0].fields, runs[1].fields)

    def test_clock_is_exact(self):
        p = build_ho_problem(6)
        traj = integrate(p.system, TimeGrid(0.0, 1.0, 16), p.initial(), "dpg3")
        assert np.abs(traj.clock - traj.times).max() <= 1e-12
        assert traj.traces.shape == (17, 36)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_error_carries_step_index(self):
        sys = NonlinearSystem(dim=1, rhs=lambda u: u**2, jac_apply=lambda u, v: 2 * u * v)
        with pytest.raises(IntegrationError) as info:
            integrate(sys, TimeGrid(0.0, 3.0, 6), [1.0], "hybrid-euler")
        assert info.value.step >= 1

    def test_shape_check(self):
        with pytest.raises(ValueError):
            integrate(riccati_problem(), TimeGrid(0, 1, 2), [1.0, 2.0], "dpg2")

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 0)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 1.0, 2)

    def test_method_orders(self):
        assert [MethodId(m).order for m in ("hybrid-euler", "dpg2", "dpg3")] == [2, 3, 4]
