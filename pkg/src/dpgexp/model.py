"""Nonlinear systems, per-step linearization and autonomization.

A system ``u' = F(u)`` is linearized at the current state ``u_n`` as

    u' = J_n u + g_n(u),     J_n = F'(u_n),     g_n(u) = F(u) - J_n u,

so that ``g_n'(u_n) = 0``.  Non-autonomous systems ``u' = F(t, u)`` are
converted by appending time to the state: ``U = [t; u]``,
``F_aug(U) = [1; F(t, u)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .operators import (DenseOperator, DiagonalShiftedOperator, LinearOperator,
                        TimeAugmentedOperator, as_operator)

__all__ = [
    "SemilinearSplit",
    "NonlinearSystem",
    "TimeDependentSystem",
    "Linearization",
    "linearize",
    "autonomize",
    "remainder_directional",
]

_SQRT_EPS = np.sqrt(np.finfo(float).eps)
_TINY = np.finfo(float).tiny


def _fd_step(u, v):
    return _SQRT_EPS * (1.0 + np.linalg.norm(u)) / max(np.linalg.norm(v), _TINY)


@dataclass(frozen=True)
class SemilinearSplit:
    """``F(u) = A u + f(u)`` with a pointwise nonlinearity.

    For time-dependent systems ``f`` and ``f_prime_diag`` take ``(t, u)``.
    """

    A: LinearOperator
    f: Callable
    f_prime_diag: Callable

    def __post_init__(self):
        object.__setattr__(self, "A", as_operator(self.A))


@dataclass(frozen=True)
class NonlinearSystem:
    """Autonomous system ``u' = rhs(u)``.

    Parameters
    ----------
    dim : int
        State dimension.
    rhs : callable
        ``u -> F(u)``.
    jac_apply : callable, optional
        ``(u, v) -> J(u) v``.  Falls back to ``jacobian``, the semilinear
        split, or central finite differences, in that order.
    jacobian : callable, optional
        ``u -> LinearOperator`` materializing ``J(u)``.
    split : SemilinearSplit, optional
        Semilinear structure; enables the cheap linearization
        ``J_n = A + diag(f'(u_n))``.
    linear : bool
        Declares ``F`` affine in ``u``.
    exact : callable, optional
        ``(t, u0) -> u(t)``, for problems with a known solution.
    """

    dim: int
    rhs: Callable
    jac_apply: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    split: Optional[SemilinearSplit] = None
    linear: bool = False
    exact: Optional[Callable] = None
    name: str = ""
    time_dependent_source: Optional["TimeDependentSystem"] = field(default=None, repr=False)

    autonomous = True

    def __call__(self, u):
        return np.asarray(self.rhs(u), dtype=float)

    @property
    def has_analytic_jacobian(self) -> bool:
        return any(x is not None for x in (self.jac_apply, self.jacobian, self.split))

    def apply_jacobian(self, u, v):
        """``J(u) v``."""
        if self.jac_apply is not None:
            return np.asarray(self.jac_apply(u, v), dtype=float)
        if self.jacobian is not None:
            return self.jacobian(u).matvec(v)
        if self.split is not None:
            return self.split.A.matvec(v) + self.split.f_prime_diag(u) * v
        if not np.any(v):
            return np.zeros(self.dim)
        eps = _fd_step(u, v)
        return (self(u + eps * v) - self(u - eps * v)) / (2 * eps)

    def jacobian_operator(self, u) -> LinearOperator:
        if self.split is not None:
            return DiagonalShiftedOperator(self.split.A, self.split.f_prime_diag(u))
        if self.jacobian is not None:
            return self.jacobian(u)
        cols = [self.apply_jacobian(u, e) for e in np.eye(self.dim)]
        return DenseOperator(np.column_stack(cols) if cols else np.zeros((0, 0)))


@dataclass(frozen=True)
class TimeDependentSystem:
    """Non-autonomous system ``u' = rhs(t, u)``.

    ``dfdt(t, u)`` is the partial time derivative of ``rhs``; central finite
    differences are used when it is omitted.  Other fields mirror
    :class:`NonlinearSystem` with ``t`` prepended to each callable.
    """

    dim: int
    rhs: Callable
    dfdt: Optional[Callable] = None
    jac_apply: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    split: Optional[SemilinearSplit] = None
    linear: bool = False
    exact: Optional[Callable] = None
    name: str = ""

    autonomous = False

    def __call__(self, t, u):
        return np.asarray(self.rhs(t, u), dtype=float)

    @property
    def has_analytic_jacobian(self) -> bool:
        return any(x is not None for x in (self.jac_apply, self.jacobian, self.split))

    def apply_jacobian(self, t, u, v):
        if self.jac_apply is not None:
            return np.asarray(self.jac_apply(t, u, v), dtype=float)
        if self.jacobian is not None:
            return self.jacobian(t, u).matvec(v)
        if self.split is not None:
            return self.split.A.matvec(v) + self.split.f_prime_diag(t, u) * v
        if not np.any(v):
            return np.zeros(self.dim)
        eps = _fd_step(u, v)
        return (self(t, u + eps * v) - self(t, u - eps * v)) / (2 * eps)

    def time_derivative(self, t, u):
        if self.dfdt is not None:
            return np.asarray(self.dfdt(t, u), dtype=float)
        eps = _SQRT_EPS * (1.0 + abs(t))
        return (self(t + eps, u) - self(t - eps, u)) / (2 * eps)

    def jacobian_operator(self, t, u) -> LinearOperator:
        if self.split is not None:
            return DiagonalShiftedOperator(self.split.A, self.split.f_prime_diag(t, u))
        if self.jacobian is not None:
            return self.jacobian(t, u)
        cols = [self.apply_jacobian(t, u, e) for e in np.eye(self.dim)]
        return DenseOperator(np.column_stack(cols))


def autonomize(sys: TimeDependentSystem) -> NonlinearSystem:
    """Append time to the state of a non-autonomous system.

    The returned system acts on ``U = [t; u]`` and its Jacobian is a
    :class:`TimeAugmentedOperator` whose first row is zero.
    """
    if getattr(sys, "autonomous", True):
        raise TypeError("system is already autonomous")

    def rhs(U):
        out = np.empty(sys.dim + 1)
        out[0] = 1.0
        out[1:] = sys(U[0], U[1:])
        return out

    def jac_apply(U, V):
        t, u = U[0], U[1:]
        out = np.empty(sys.dim + 1)
        out[0] = 0.0
        out[1:] = sys.apply_jacobian(t, u, V[1:])
        if V[0] != 0.0:
            out[1:] += V[0] * sys.time_derivative(t, u)
        return out

    def jacobian(U):
        t, u = U[0], U[1:]
        return TimeAugmentedOperator(sys.jacobian_operator(t, u), sys.time_derivative(t, u))

    exact = None
    if sys.exact is not None:
        def exact(t, U0):
            return np.concatenate(([t], sys.exact(t, U0[1:])))

    return NonlinearSystem(
        dim=sys.dim + 1,
        rhs=rhs,
        jac_apply=jac_apply,
        jacobian=jacobian,
        linear=False,
        exact=exact,
        name=sys.name,
        time_dependent_source=sys,
    )


@dataclass(frozen=True)
class Linearization:
    """Snapshot of the Rosenbrock splitting at ``u_n``."""

    system: NonlinearSystem
    u_n: np.ndarray
    J: LinearOperator
    F_n: np.ndarray

    def g(self, u) -> np.ndarray:
        """Nonlinear remainder ``F(u) - J_n u``."""
        split = self.system.split
        if split is not None:
            # f(u) - f'(u_n) u avoids forming A u twice
            return split.f(u) - self.J.shift * u
        return self.system(u) - self.J.matvec(u)

    def g_n(self) -> np.ndarray:
        """``g_n(u_n) = F(u_n) - J_n u_n``."""
        return self.g(self.u_n)

    def g_prime_apply(self, u, v) -> np.ndarray:
        return remainder_directional(self, u, v)


def linearize(sys: NonlinearSystem, u_n) -> Linearization:
    """Freeze the Jacobian at ``u_n``.

    Semilinear systems get ``J_n = A + diag(f'(u_n))``; others use the
    system's Jacobian operator, materialized densely when only a
    Jacobian-vector product is available.
    """
    if not getattr(sys, "autonomous", True):
        raise TypeError("linearize needs an autonomous system; call autonomize() first")
    u_n = np.array(u_n, dtype=float)
    if u_n.shape != (sys.dim,):
        raise ValueError(f"state of shape {u_n.shape} does not match system dimension {sys.dim}")
    if not np.all(np.isfinite(u_n)):
        raise ValueError("cannot linearize at a non-finite state")
    return Linearization(system=sys, u_n=u_n, J=sys.jacobian_operator(u_n), F_n=sys(u_n))


def remainder_directional(lin: Linearization, u, v) -> np.ndarray:
    """``g_n'(u) v = (J(u) - J_n) v``.

    Without an analytic Jacobian, ``J(u) v`` is a central difference of
    ``F`` with step ``sqrt(eps) (1 + |u|) / |v|``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("direction has non-finite entries")
    if u.shape != v.shape or u.shape != (lin.system.dim,):
        raise ValueError("dimension mismatch in remainder_directional")
    if not np.any(v):
        return np.zeros_like(v)
    sys = lin.system
    if sys.split is not None:
        return (sys.split.f_prime_diag(u) - lin.J.shift) * v
    return sys.apply_jacobian(u, v) - lin.J.matvec(v)
