"""Exponential time-stepping schemes.

Every nonlinear scheme receives a :class:`~dpgexp.model.Linearization`
(``J_n``, ``g_n``) and advances one step of size ``h``:

* classical exponential Euler:  ``u_n + h phi_1(hJ) F(u_n)``
* hybrid exponential Euler:     one phi-action for the interval constant
  ``u_n + h phi_2(hJ) F(u_n)``; the end-point value is recovered from it
  by a single product with ``J``.
* two-stage DPG (order 3) and three-stage DPG (order 4), built on the
  hybrid pair as internal stages.

The two- and three-stage updates are written with remainder differences
``D_i = g_n(u_i) - g_n(u_n)``, which is algebraically the same as the
weighted sums ``b_1 g_n(u_n) + b_2 g_n(u_2) + ...`` but needs fewer
phi-actions and cancels better.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Linearization, NonlinearSystem, TimeDependentSystem, autonomize, linearize
from .operators import as_operator
from .phi import PhiEvaluator

__all__ = [
    "MethodId",
    "StepOutput",
    "TimeGrid",
    "Trajectory",
    "IntegrationError",
    "step_exp_euler_classic",
    "step_hybrid_euler",
    "step_dpg2",
    "step_dpg3",
    "step_linear_dpg_p0",
    "integrate",
    "STEPPERS",
    "COEFFICIENTS",
]


class MethodId(str, enum.Enum):
    EXP_EULER_CLASSIC = "euler-classic"
    HYBRID_EULER = "hybrid-euler"
    DPG2 = "dpg2"
    DPG3 = "dpg3"
    LINEAR_DPG_P0 = "linear-dpg-p0"

    @property
    def order(self) -> int:
        return {"euler-classic": 2, "hybrid-euler": 2, "dpg2": 3, "dpg3": 4,
                "linear-dpg-p0": 1}[self.value]


class IntegrationError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step


@dataclass
class StepOutput:
    trace: np.ndarray
    field: Optional[np.ndarray] = None
    stages: Optional[dict] = None
    phi_action_count: int = 0


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.N

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.N + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    traces: np.ndarray
    fields: Optional[np.ndarray]
    phi_action_count: int = 0
    clock: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.traces[-1]


def _check_h(h):
    if not h > 0:
        raise ValueError("step size h must be positive")


def _rhs_at(lin: Linearization, u_n):
    if u_n is lin.u_n or np.array_equal(u_n, lin.u_n):
        return lin.F_n
    return lin.system(u_n)


class _Counter:
    def __init__(self, evaluator):
        self.evaluator = evaluator
        self.count = 0

    def __call__(self, op, h, vectors):
        self.count += 1
        return self.evaluator.combination(op, h, vectors)


def _interval_constant(lin, u_n, F, h, phi):
    # u_n + h phi_2(hJ) F
    z = np.zeros_like(u_n)
    return u_n + phi(lin.J, h, [z, z, F / h])


def _post_process(lin, u_n, F, h, u_mid):
    # u_n + h J u_mid + h g_n(u_n), written as u_n + h J (u_mid - u_n) + h F
    return u_n + h * lin.J.matvec(u_mid - u_n) + h * F


def step_exp_euler_classic(lin: Linearization, u_n, h: float,
                           evaluator: PhiEvaluator | None = None) -> StepOutput:
    _check_h(h)
    phi = _Counter(evaluator or PhiEvaluator())
    u_n = np.asarray(u_n, dtype=float)
    F = _rhs_at(lin, u_n)
    trace = u_n + phi(lin.J, h, [np.zeros_like(u_n), F])
    return StepOutput(trace=trace, phi_action_count=phi.count)


def step_hybrid_euler(lin: Linearization, u_n, h: float,
                      evaluator: PhiEvaluator | None = None) -> StepOutput:
    """One phi-action for the interval constant, a product with ``J`` for the trace."""
    _check_h(h)
    phi = _Counter(evaluator or PhiEvaluator())
    u_n = np.asarray(u_n, dtype=float)
    F = _rhs_at(lin, u_n)
    field_value = _interval_constant(lin, u_n, F, h, phi)
    trace = _post_process(lin, u_n, F, h, field_value)
    return StepOutput(trace=trace, field=field_value, phi_action_count=phi.count)


def _difference_update(lin, u_n, F, h, diffs, coeffs, phi):
    """``u_n + h phi_1(hJ) F + sum_i h b_i(hJ) diffs[i]`` as one phi-combination.

    ``coeffs[i]`` maps phi-index ``p`` to the weight of ``phi_p`` in ``b_i``;
    ``h phi_p(hJ) x`` enters the combination as ``v_p = x / h**(p-1)``.
    """
    top = max(p for c in coeffs for p in c)
    vectors = [np.zeros_like(u_n) for _ in range(top + 1)]
    vectors[1] = F.copy()
    for D, c in zip(diffs, coeffs):
        for p, w in c.items():
            vectors[p] = vectors[p] + (w / h ** (p - 1)) * D
    return u_n + phi(lin.J, h, vectors)


# Weights of phi_p in b_i. b_1 is implied by b_1 + b_2 (+ b_3) = phi_1.
COEFFICIENTS = {
    MethodId.DPG2: {
        "b1": {1: 1.0, 3: -8.0},
        "b2": {3: 8.0},
    },
    MethodId.DPG3: {
        "b1": {1: 1.0, 3: -14.0, 4: 36.0},
        "b2": {3: 16.0, 4: -48.0},
        "b3": {3: -2.0, 4: 12.0},
    },
}


def step_dpg2(lin: Linearization, u_n, h: float,
              evaluator: PhiEvaluator | None = None) -> StepOutput:
    """Third-order step with ``b_1 = phi_1 - 8 phi_3``, ``b_2 = 8 phi_3``."""
    _check_h(h)
    phi = _Counter(evaluator or PhiEvaluator())
    u_n = np.asarray(u_n, dtype=float)
    F = _rhs_at(lin, u_n)
    u2 = _interval_constant(lin, u_n, F, h, phi)
    D2 = lin.g(u2) - lin.g(u_n)
    b = COEFFICIENTS[MethodId.DPG2]
    trace = _difference_update(lin, u_n, F, h, [D2], [b["b2"]], phi)
    return StepOutput(trace=trace, field=u2, stages={"u2": u2}, phi_action_count=phi.count)


def step_dpg3(lin: Linearization, u_n, h: float,
              evaluator: PhiEvaluator | None = None) -> StepOutput:
    """Fourth-order step.

    ``u3`` is post-processed from ``u2`` without a phi-action. The update is
    ``u_n + h phi_1 F + h b_2 (D_2 + C) + h b_3 D_3`` with
    ``b_2 = 16 phi_3 - 48 phi_4``, ``b_3 = 12 phi_4 - 2 phi_3`` and the
    correction ``C = -1/4 g_n'(u2)(u3 - 2 u2 + u_n)``.
    """
    _check_h(h)
    phi = _Counter(evaluator or PhiEvaluator())
    u_n = np.asarray(u_n, dtype=float)
    F = _rhs_at(lin, u_n)
    u2 = _interval_constant(lin, u_n, F, h, phi)
    u3 = _post_process(lin, u_n, F, h, u2)
    correction = -0.25 * lin.g_prime_apply(u2, u3 - 2.0 * u2 + u_n)
    g_n = lin.g(u_n)
    D2 = lin.g(u2) - g_n + correction
    D3 = lin.g(u3) - g_n
    b = COEFFICIENTS[MethodId.DPG3]
    trace = _difference_update(lin, u_n, F, h, [D2, D3], [b["b2"], b["b3"]], phi)
    return StepOutput(trace=trace, field=u2,
                      stages={"u2": u2, "u3": u3, "correction": correction},
                      phi_action_count=phi.count)


def step_linear_dpg_p0(A, f_tn, u_n, h: float,
                       evaluator: PhiEvaluator | None = None) -> StepOutput:
    """Lowest-order DPG step for ``u' + A u = f`` with ``f`` frozen at ``t_n``.

    The interval constant is ``phi_1(-hA) u_n + h phi_2(-hA) f``; the trace
    ``u_n - h A u0 + h f`` needs no further phi-action.
    """
    _check_h(h)
    A = as_operator(A)
    u_n = np.asarray(u_n, dtype=float)
    f_tn = np.asarray(f_tn, dtype=float)
    if u_n.shape != (A.dim,) or f_tn.shape != (A.dim,):
        raise ValueError("dimension mismatch between operator, source and state")
    phi = _Counter(evaluator or PhiEvaluator())
    field_value = phi(-A, h, [np.zeros_like(u_n), u_n / h, f_tn / h])
    trace = u_n - h * A.matvec(field_value) + h * f_tn
    return StepOutput(trace=trace, field=field_value, phi_action_count=phi.count)


STEPPERS = {
    MethodId.EXP_EULER_CLASSIC: step_exp_euler_classic,
    MethodId.HYBRID_EULER: step_hybrid_euler,
    MethodId.DPG2: step_dpg2,
    MethodId.DPG3: step_dpg3,
}


def _integrate_linear_p0(sys, grid, u0, evaluator):
    if not sys.linear:
        raise ValueError("linear-dpg-p0 requires a system declared linear")
    h = grid.h
    times = grid.times
    u = np.array(u0, dtype=float)
    traces, fields = [u], []
    count = 0
    for n in range(grid.N):
        t = times[n]
        try:
            if sys.autonomous:
                J = sys.jacobian_operator(u)
                f = sys(u) - J.matvec(u)
            else:
                J = sys.jacobian_operator(t, u)
                f = sys(t, u) - J.matvec(u)
            out = step_linear_dpg_p0(-J, f, u, h, evaluator)
        except Exception as exc:
            raise IntegrationError(n, exc) from exc
        u = out.trace
        traces.append(u)
        fields.append(out.field)
        count += out.phi_action_count
    return Trajectory(times=times, traces=np.array(traces), fields=np.array(fields),
                      phi_action_count=count)


def integrate(sys, grid: TimeGrid, u0, method, evaluator: PhiEvaluator | None = None) -> Trajectory:
    """March ``u0`` over ``grid`` with a fresh linearization every step.

    A :class:`TimeDependentSystem` is autonomized internally; the returned
    traces are then the original state and ``Trajectory.clock`` holds the
    integrated time component.
    """
    method = MethodId(method)
    evaluator = evaluator or PhiEvaluator()
    u0 = np.array(u0, dtype=float)
    if u0.shape != (sys.dim,):
        raise ValueError(f"initial state of shape {u0.shape} does not match system dimension {sys.dim}")
    if method is MethodId.LINEAR_DPG_P0:
        return _integrate_linear_p0(sys, grid, u0, evaluator)

    augmented = isinstance(sys, TimeDependentSystem)
    if augmented:
        sys = autonomize(sys)
        u0 = np.concatenate(([grid.t0], u0))
    stepper = STEPPERS[method]
    h = grid.h
    u = u0
    traces = [u]
    fields = [] if method is not MethodId.EXP_EULER_CLASSIC else None
    count = 0
    for n in range(grid.N):
        try:
            lin = linearize(sys, u)
            out = stepper(lin, u, h, evaluator)
        except Exception as exc:
            raise IntegrationError(n, exc) from exc
        if not np.all(np.isfinite(out.trace)):
            raise IntegrationError(n, "non-finite state")
        u = out.trace
        traces.append(u)
        if fields is not None:
            fields.append(out.field)
        count += out.phi_action_count
    traces = np.array(traces)
    fields = np.array(fields) if fields is not None else None
    clock = None
    if augmented:
        clock = traces[:, 0].copy()
        traces = traces[:, 1:]
        fields = fields[:, 1:] if fields is not None else None
    return Trajectory(times=grid.times, traces=traces, fields=fields,
                      phi_action_count=count, clock=clock)
