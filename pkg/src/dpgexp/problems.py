"""Built-in test problems.

``ho``
    Semilinear parabolic problem on the unit square,

        u_t - Lap u = 1 / (1 + u^2) + s(x, y, t),

    with homogeneous Dirichlet data and manufactured exact solution
    ``u = x(1-x) y(1-y) e^t``.  Space is discretized by the 5-point
    Laplacian on ``m x m`` interior nodes (``dx = 1/(m+1)``), ordered
    lexicographically with ``x`` running fastest.
``riccati``
    Scalar ``u' = u^2`` with ``u(t) = u0 / (1 - u0 t)``.
``linear-decay``
    ``u' = diag(spectrum) u`` with negative spectrum.

Sign convention: the integrators solve ``u' = F(u)``, so the HO right-hand
side is ``Lap_h u + ...``.  The linear DPG scheme writes ``u' + A u = f``,
i.e. ``A = -Lap_h``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .model import NonlinearSystem, SemilinearSplit, TimeDependentSystem
from .operators import CSROperator, DenseOperator

__all__ = [
    "Grid2D",
    "HOProblem",
    "laplacian_2d",
    "build_ho_problem",
    "riccati_problem",
    "linear_decay_system",
    "ProblemInstance",
    "PROBLEMS",
    "get_problem",
]


@dataclass(frozen=True)
class Grid2D:
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("grid needs at least 2 interior points per dimension")

    @property
    def dx(self) -> float:
        return 1.0 / (self.m + 1)

    @property
    def coords(self) -> np.ndarray:
        return np.arange(1, self.m + 1) * self.dx

    def nodes(self):
        """Flattened ``(x, y)`` node coordinates, ``x`` running fastest."""
        c = self.coords
        Y, X = np.meshgrid(c, c, indexing="ij")
        return X.ravel(), Y.ravel()


def laplacian_2d(m: int) -> sp.csr_matrix:
    """5-point Dirichlet Laplacian on ``m x m`` interior nodes (CSR, sorted)."""
    if m < 2:
        raise ValueError("laplacian_2d needs m >= 2")
    dx = 1.0 / (m + 1)
    T = sp.diags([np.ones(m - 1), -2.0 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
    eye = sp.identity(m)
    L = (sp.kron(eye, T) + sp.kron(T, eye)).tocsr() / dx**2
    L.sort_indices()
    return L


@dataclass(frozen=True)
class HOProblem:
    grid: Grid2D
    A: CSROperator
    system: TimeDependentSystem

    def exact(self, t: float) -> np.ndarray:
        x, y = self.grid.nodes()
        return x * (1 - x) * y * (1 - y) * np.exp(t)

    def source(self, t: float) -> np.ndarray:
        return _ho_source(self.grid, t)

    def initial(self) -> np.ndarray:
        return self.exact(0.0)

    def residual(self, t: float) -> np.ndarray:
        """``d/dt exact - F(t, exact)``: semidiscrete consistency of the exact solution."""
        u = self.exact(t)
        return u - self.system(t, u)


def _ho_source(grid, t):
    x, y = grid.nodes()
    bump = x * (1 - x) * y * (1 - y)
    w = bump * np.exp(t)
    return w + 2.0 * np.exp(t) * (x * (1 - x) + y * (1 - y)) - 1.0 / (1.0 + w**2)


def _ho_source_dt(grid, t):
    x, y = grid.nodes()
    w = x * (1 - x) * y * (1 - y) * np.exp(t)
    return w + 2.0 * np.exp(t) * (x * (1 - x) + y * (1 - y)) + 2.0 * w**2 / (1.0 + w**2) ** 2


def build_ho_problem(m: int) -> HOProblem:
    grid = Grid2D(m)
    A = CSROperator(laplacian_2d(m))

    def f(t, u):
        return 1.0 / (1.0 + u**2) + _ho_source(grid, t)

    def f_prime(t, u):
        return -2.0 * u / (1.0 + u**2) ** 2

    def rhs(t, u):
        return A.matvec(u) + f(t, u)

    problem = None

    def exact(t, u0=None):
        return problem.exact(t)

    system = TimeDependentSystem(
        dim=m * m,
        rhs=rhs,
        dfdt=lambda t, u: _ho_source_dt(grid, t),
        split=SemilinearSplit(A, f, f_prime),
        exact=exact,
        name="ho",
    )
    problem = HOProblem(grid=grid, A=A, system=system)
    return problem


def riccati_problem() -> NonlinearSystem:
    """``u' = u^2``; exact solution valid for ``t < 1/u0``."""
    return NonlinearSystem(
        dim=1,
        rhs=lambda u: u**2,
        jac_apply=lambda u, v: 2.0 * u * v,
        exact=lambda t, u0: u0 / (1.0 - u0 * t),
        name="riccati",
    )


def linear_decay_system(dim: int, spectrum) -> NonlinearSystem:
    lam = np.asarray(spectrum, dtype=float)
    if lam.shape != (dim,):
        raise ValueError("spectrum length must equal dim")
    if np.any(lam >= 0):
        raise ValueError("spectrum entries must be negative")
    D = DenseOperator(np.diag(lam))
    return NonlinearSystem(
        dim=dim,
        rhs=lambda u: lam * u,
        jacobian=lambda u: D,
        linear=True,
        exact=lambda t, u0: np.exp(lam * t) * u0,
        name="linear-decay",
    )


@dataclass
class ProblemInstance:
    name: str
    system: object
    u0: np.ndarray
    t0: float
    T: float
    exact: Optional[Callable] = None   # t -> state


def _ho_instance(grid=32, **_):
    p = build_ho_problem(grid)
    return ProblemInstance("ho", p.system, p.initial(), 0.0, 1.0, p.exact)


def _riccati_instance(u0=1.0, **_):
    sys = riccati_problem()
    u0 = np.array([float(u0)])
    return ProblemInstance("riccati", sys, u0, 0.0, 0.5, lambda t: sys.exact(t, u0))


def _decay_instance(spectrum=(-1.0, -100.0), **_):
    lam = np.asarray(spectrum, dtype=float)
    sys = linear_decay_system(lam.size, lam)
    u0 = np.ones(lam.size)
    return ProblemInstance("linear-decay", sys, u0, 0.0, 1.0, lambda t: sys.exact(t, u0))


PROBLEMS = {
    "ho": _ho_instance,
    "riccati": _riccati_instance,
    "linear-decay": _decay_instance,
}


def get_problem(name: str, **params) -> ProblemInstance:
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}") from None
    return builder(**params)
