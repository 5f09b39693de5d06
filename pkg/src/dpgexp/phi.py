"""Matrix phi-functions and their actions on vectors.

The phi-functions are ``phi_0(z) = exp(z)`` and
``phi_p(z) = int_0^1 exp((1 - s) z) s**(p-1) / (p-1)! ds`` for ``p >= 1``.
They obey ``phi_{p+1}(z) = (phi_p(z) - 1/p!) / z``.

Every quantity the integrators need is a linear combination

    sum_k h**k phi_k(h A) v_k ,

which is evaluated with a single exponential of the block matrix

    [[h A, W], [0, K]] ,   W = [w_q, ..., w_1],  w_k = h**k v_k,

where ``K`` is the ``q x q`` shift matrix; the top block of
``exp(...) @ [v_0; e_q]`` is the combination.  Three back ends compute that
exponential action: a dense Pade path, a Krylov (Arnoldi) path with
substepping, and a truncated Taylor path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .operators import LinearOperator, TimeAugmentedOperator, as_operator

__all__ = [
    "Backend",
    "PhiEvaluator",
    "PhiCombination",
    "KrylovConvergenceError",
    "expm_dense",
    "phi_dense",
    "phi_combination_action",
    "krylov_phi_action",
    "taylor_phi_action",
]

_EPS = np.finfo(float).eps


class KrylovConvergenceError(RuntimeError):
    """Arnoldi failed to reach the requested accuracy."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (achieved residual estimate {residual:.3e})")
        self.residual = residual


class Backend(str, enum.Enum):
    DENSE = "dense"
    KRYLOV = "krylov"
    TAYLOR = "taylor"


@dataclass(frozen=True)
class PhiEvaluator:
    """Configuration for phi-function actions.

    Operators of dimension ``<= dense_threshold`` always take the dense Pade
    path; larger ones use ``backend``.
    """

    backend: Backend = Backend.KRYLOV
    tol: float = 1e-12
    max_krylov_dim: int = 64
    dense_threshold: int = 512

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_krylov_dim < 2:
            raise ValueError("max_krylov_dim must be at least 2")
        if self.dense_threshold < 1:
            raise ValueError("dense_threshold must be at least 1")

    def combination(self, op, h, vectors):
        return phi_combination_action(PhiCombination(op, h, vectors), self)


@dataclass
class PhiCombination:
    """``sum_k h**k phi_k(h * operator) vectors[k]``."""

    operator: LinearOperator
    h: float
    vectors: Sequence[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.operator = as_operator(self.operator)
        self.h = float(self.h)
        if not self.h >= 0:
            raise ValueError("step size h must be non-negative")
        n = self.operator.dim
        vecs = []
        for k, v in enumerate(self.vectors):
            v = np.asarray(v, dtype=float)
            if v.shape != (n,):
                raise ValueError(f"vector {k} has shape {v.shape}, operator dimension is {n}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"vector {k} has non-finite entries")
            vecs.append(v)
        if not vecs:
            raise ValueError("at least one vector is required")
        self.vectors = vecs


# ---------------------------------------------------------------------------
# dense kernels

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
# Higham (2005) backward-error thresholds for double precision.
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _pade_uv(A, m):
    b = _PADE[m]
    n = A.shape[0]
    ident = np.eye(n)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A2 @ A4
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
        return U, V
    powers = [ident, A2]
    for _ in range(2, (m + 1) // 2):
        powers.append(powers[-1] @ A2)
    U = sum(b[j] * powers[j // 2] for j in range(m, 0, -2))
    U = A @ U
    V = sum(b[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    return U, V


def expm_dense(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant.

    Raises
    ------
    ValueError
        If ``M`` is not square or has non-finite entries.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm_dense needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("expm_dense input has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return A
    norm = np.abs(A).sum(axis=0).max()
    if norm == 0.0:
        return np.eye(n)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            U, V = _pade_uv(A, m)
            return sla.solve(V - U, V + U)
    s = max(0, int(math.ceil(math.log2(norm / _THETA[13]))))
    U, V = _pade_uv(A / 2.0**s, 13)
    R = sla.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def phi_dense(p: int, M) -> np.ndarray:
    """Return ``phi_p(M)`` read off one exponential of an augmented block matrix."""
    if p < 0:
        raise ValueError("p must be non-negative")
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"phi_dense needs a square matrix, got shape {A.shape}")
    if p == 0:
        return expm_dense(A)
    n = A.shape[0]
    big = np.zeros(((p + 1) * n, (p + 1) * n))
    big[:n, :n] = A
    for i in range(p):
        big[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = np.eye(n)
    return expm_dense(big)[:n, p * n:]


# ---------------------------------------------------------------------------
# block-augmented exponential action


class _PhiBlock:
    """Matrix-free ``[[h A, W], [0, K]]`` with ``W = [w_q .. w_1]`` (already scaled)."""

    def __init__(self, op: LinearOperator, h: float, W: np.ndarray):
        self.op = op
        self.h = h
        self.W = W          # shape (n, q)
        self.n = op.dim
        self.q = W.shape[1]
        self.dim = self.n + self.q

    def matvec(self, x):
        n = self.n
        out = np.empty(self.dim)
        top = self.op.matvec(x[:n])
        if self.h != 1.0:
            top *= self.h
        if self.q:
            top += self.W @ x[n:]
            out[n:-1] = x[n + 1:]
            out[-1] = 0.0
        out[:n] = top
        return out

    def norm1(self):
        a = self.h * self.op.norm1()
        if self.q:
            a = max(a, float(np.abs(self.W).sum(axis=0).max()) + 1.0)
        return a

    def to_dense(self):
        n, q = self.n, self.q
        B = np.zeros((self.dim, self.dim))
        B[:n, :n] = self.h * self.op.to_dense()
        B[:n, n:] = self.W
        for i in range(q - 1):
            B[n + i, n + i + 1] = 1.0
        return B


def _build_block(op, h, v0, weights):
    """Block operator and start vector whose exponential action gives
    ``exp(hA) v0 + sum_k phi_k(hA) weights[k-1]``.

    Trailing zero weights are trimmed. ``W`` is rescaled by a power of two so
    that its columns are commensurate with ``v0``.
    """
    weights = list(weights)
    while weights and not np.any(weights[-1]):
        weights.pop()
    q = len(weights)
    n = op.dim
    W = np.empty((n, q))
    for k, w in enumerate(weights, start=1):
        W[:, q - k] = w
    eta = 1.0
    if q:
        wnorm = np.abs(W).sum(axis=0).max()
        if wnorm > 0:
            eta = 2.0 ** -math.ceil(math.log2(wnorm))
    b = np.zeros(n + q)
    b[:n] = v0
    if q:
        b[-1] = 1.0 / eta
    return _PhiBlock(op, h, W * eta), b


def _expv_dense(block, b):
    return expm_dense(block.to_dense()) @ b


def _expv_taylor(block, b, tol, max_terms=80):
    norm = block.norm1()
    s = max(1, int(math.ceil(norm / 2.0)))
    F = b.copy()
    for _ in range(s):
        term = F.copy()
        acc = F
        prev = np.inf
        for k in range(1, max_terms + 1):
            term = block.matvec(term) / (s * k)
            acc = acc + term
            cur = np.abs(term).max()
            if cur + prev <= tol * np.abs(acc).max():
                break
            prev = cur
        F = acc
    return F


_CHECKPOINTS = (4, 8, 12, 16, 24, 32, 40, 48, 56, 64, 80, 96, 128)


def _corner_exp(H, s, m, dt):
    """exp of ``dt * [[H_m, 0], [s e_m^T, 0]]``; entry ``[m, 0]`` is the error estimate."""
    Z = np.zeros((m + 1, m + 1))
    Z[:m, :m] = dt * H[:m, :m]
    Z[m, m - 1] = dt * s
    return expm_dense(Z)


def _expv_krylov(block, b, tol, m_max, max_substeps=100_000):
    """``exp(B) b`` by Arnoldi with adaptive dimension and time substepping.

    The local error of a substep ``dt`` is estimated from the Hessenberg
    subdiagonal corner entry (Saad's a-posteriori estimate) and must not
    exceed ``tol * dt * |w|``.  The dimension grows through a few
    checkpoints; only at ``m_max`` is the substep shrunk.
    """
    n = b.shape[0]
    if not np.any(b):
        return np.zeros(n)
    m_max = min(m_max, n)
    btol = 4 * _EPS * max(block.norm1(), _EPS)
    checkpoints = {m for m in _CHECKPOINTS if m < m_max} | {m_max}

    t = 0.0
    w = b.copy()
    dt_hint = 1.0
    for _ in range(max_substeps):
        if t >= 1.0:
            return w
        beta = np.linalg.norm(w)
        if beta == 0.0:
            return w
        remaining = 1.0 - t
        V = np.zeros((m_max + 1, n))
        H = np.zeros((m_max + 1, m_max))
        V[0] = w / beta
        for j in range(m_max):
            p = block.matvec(V[j])
            Vj = V[:j + 1]
            coef = Vj @ p
            p -= coef @ Vj
            corr = Vj @ p
            p -= corr @ Vj
            H[:j + 1, j] = coef + corr
            s = np.linalg.norm(p)
            m = j + 1
            if s <= btol:
                # invariant subspace reached: projection is exact
                E = expm_dense(remaining * H[:m, :m])
                w = beta * (E[:, 0] @ V[:m])
                t = 1.0
                break
            H[m, j] = s
            V[m] = p / s
            if m not in checkpoints:
                continue
            if m < m_max:
                dt = remaining
                E = _corner_exp(H, s, m, dt)
                err = beta * abs(E[m, 0])
                if err > tol * dt * beta:
                    continue
            else:
                dt = min(remaining, dt_hint)
                for _attempt in range(100):
                    E = _corner_exp(H, s, m, dt)
                    err = beta * abs(E[m, 0])
                    if err <= tol * dt * beta:
                        break
                    dt *= min(0.5, max(0.1, 0.9 * (tol * dt * beta / err) ** (1.0 / m)))
                    if dt < 1e-14:
                        raise KrylovConvergenceError(
                            f"Krylov substep collapsed at dimension {m}", err / beta)
                else:
                    raise KrylovConvergenceError(
                        f"no acceptable Krylov substep at dimension {m}", err / beta)
            # corrected approximant includes the v_{m+1} direction
            w = beta * (E[:, 0] @ V[:m + 1])
            t = 1.0 if dt >= remaining else t + dt
            ratio = (tol * dt * beta / max(err, 1e-300)) ** (1.0 / m)
            dt_hint = dt * min(5.0, max(1.0, 0.9 * ratio))
            break
    if t < 1.0:
        raise KrylovConvergenceError("Krylov substep limit reached", np.nan)
    return w


def _block_expv(op, h, v0, weights, evaluator, backend):
    block, b = _build_block(op, h, v0, weights)
    if backend is Backend.DENSE:
        y = _expv_dense(block, b)
    elif backend is Backend.TAYLOR:
        y = _expv_taylor(block, b, evaluator.tol)
    else:
        y = _expv_krylov(block, b, evaluator.tol, evaluator.max_krylov_dim)
    return y[:op.dim]


def _reduce_time_augmented(op: TimeAugmentedOperator, h, vectors):
    """Split a combination on ``[[0, 0], [c, J]]`` into a closed-form time
    component and a combination on ``J``.

    ``phi_k(h Jaug) [a; x] = [a / k!; phi_k(hJ) x + h phi_{k+1}(hJ) a c]``.
    """
    c = op.time_column
    t_part = 0.0
    inner = [v[1:].copy() for v in vectors] + [np.zeros(op.inner.dim)]
    for k, v in enumerate(vectors):
        a = v[0]
        if a != 0.0:
            t_part += h**k * a / math.factorial(k)
            inner[k + 1] += a * c
    return t_part, inner


def _select_backend(dim, evaluator):
    if dim <= evaluator.dense_threshold:
        return Backend.DENSE
    return evaluator.backend


def _combination(op, h, vectors, evaluator, backend=None):
    if isinstance(op, TimeAugmentedOperator):
        t_part, inner = _reduce_time_augmented(op, h, vectors)
        rest = _combination(op.inner, h, inner, evaluator, backend)
        return np.concatenate(([t_part], rest))
    if backend is None:
        backend = _select_backend(op.dim, evaluator)
    if h == 0.0:
        return vectors[0].copy()
    weights = [h**k * v for k, v in enumerate(vectors[1:], start=1)]
    return _block_expv(op, h, vectors[0], weights, evaluator, backend)


def phi_combination_action(c: PhiCombination, evaluator: PhiEvaluator | None = None) -> np.ndarray:
    """Evaluate ``sum_k h**k phi_k(h A) v_k`` for ``c = (A, h, [v_0, ..., v_q])``.

    A time-augmented operator is reduced to its inner block first, so the
    time component is obtained in closed form and never enters the iterative
    back ends.
    """
    evaluator = evaluator or PhiEvaluator()
    return _combination(c.operator, c.h, c.vectors, evaluator)


def _single_phi(op, h, v, p, evaluator, backend):
    op = as_operator(op)
    v = np.asarray(v, dtype=float)
    if v.shape != (op.dim,):
        raise ValueError(f"vector of shape {v.shape} does not match operator dimension {op.dim}")
    if p < 0:
        raise ValueError("p must be non-negative")
    if h == 0.0:
        return v / math.factorial(p)
    if p == 0:
        return _block_expv(op, h, v, [], evaluator, backend)
    weights = [np.zeros(op.dim)] * (p - 1) + [v]
    return _block_expv(op, h, np.zeros(op.dim), weights, evaluator, backend)


def krylov_phi_action(op, h: float, v, p: int, evaluator: PhiEvaluator | None = None) -> np.ndarray:
    """``phi_p(h op) v`` by the Krylov back end, regardless of size.

    A zero ``v`` returns a zero vector. Raises :class:`KrylovConvergenceError`
    when the requested tolerance cannot be met.
    """
    return _single_phi(op, h, v, p, evaluator or PhiEvaluator(), Backend.KRYLOV)


def taylor_phi_action(op, h: float, v, p: int, evaluator: PhiEvaluator | None = None) -> np.ndarray:
    """``phi_p(h op) v`` by the truncated Taylor back end."""
    return _single_phi(op, h, v, p, evaluator or PhiEvaluator(), Backend.TAYLOR)
