"""Convergence studies, order estimation and output files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .integrators import COEFFICIENTS, MethodId, TimeGrid, integrate
from .phi import Backend, PhiEvaluator, phi_dense
from .problems import PROBLEMS, get_problem

__all__ = [
    "RunConfig",
    "ConvergenceRow",
    "ConvergenceReport",
    "OrderEstimate",
    "estimate_order",
    "run_convergence",
    "check_order_conditions",
    "emit_outputs",
    "read_convergence_csv",
    "parse_steps",
    "parse_config",
    "DEFAULT_STEPS",
]

DEFAULT_STEPS = (4, 8, 16, 32, 64, 128)
REFERENCE_FACTOR = 8
ROUNDOFF_FACTOR = 100.0


def parse_steps(text: str) -> list[int]:
    """``"4,8,16"`` or ``"4..128"`` (doubling from the first to the last value)."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(s) for s in text.split("..", 1))
        if lo < 1 or hi < lo:
            raise ValueError(f"bad step range {text!r}")
        steps = []
        n = lo
        while n <= hi:
            steps.append(n)
            n *= 2
    else:
        steps = [int(s) for s in text.split(",") if s.strip()]
    if not steps:
        raise ValueError("empty step list")
    if any(b <= a for a, b in zip(steps, steps[1:])) or steps[0] < 1:
        raise ValueError("step counts must be positive and strictly increasing")
    return steps


@dataclass
class RunConfig:
    problem: str = "ho"
    method: str = "dpg3"
    grid: int = 32
    t0: Optional[float] = None
    T: Optional[float] = None
    steps: Sequence[int] = DEFAULT_STEPS
    backend: str = "krylov"
    tol: float = 1e-12
    max_krylov_dim: int = 64
    dense_threshold: int = 512
    reference: str = "self"
    out: Optional[str] = None
    plot_out: Optional[str] = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; available: {', '.join(sorted(PROBLEMS))}")
        try:
            self.method = MethodId(self.method).value
        except ValueError:
            names = ", ".join(m.value for m in MethodId)
            raise ValueError(f"unknown method {self.method!r}; available: {names}") from None
        if self.reference not in ("self", "exact"):
            raise ValueError("reference must be 'self' or 'exact'")
        self.steps = list(self.steps)
        if not self.steps or any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("step list must be nonempty and strictly increasing")
        if self.t0 is not None and self.T is not None and not self.T > self.t0:
            raise ValueError("T must exceed t0")

    def evaluator(self) -> PhiEvaluator:
        return PhiEvaluator(backend=Backend(self.backend), tol=self.tol,
                            max_krylov_dim=self.max_krylov_dim,
                            dense_threshold=self.dense_threshold)

    def instance(self):
        inst = get_problem(self.problem, grid=self.grid)
        if self.t0 is not None:
            inst.t0 = float(self.t0)
        if self.T is not None:
            inst.T = float(self.T)
        if not inst.T > inst.t0:
            raise ValueError("T must exceed t0")
        return inst


_CONFIG_KEYS = {
    "problem": str, "method": str, "grid": int, "t0": float, "T": float,
    "steps": parse_steps, "backend": str, "tol": float,
    "max-krylov-dim": int, "dense-threshold": int, "reference": str,
    "out": str, "plot-out": str,
}


def parse_config(text: str) -> dict:
    """Parse the ``key = value`` config grammar.

    One assignment per line; ``#`` starts a comment; blank lines are ignored.
    Keys are the long CLI flag names without dashes prefix (``max-krylov-dim``).
    Returns keyword arguments for :class:`RunConfig`.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key.replace("-", "_")] = _CONFIG_KEYS[key](value)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    h: float
    error: float
    error_l2: float = float("nan")
    roundoff: bool = False


@dataclass(frozen=True)
class OrderEstimate:
    slope: float
    pairwise: tuple


def estimate_order(rows: Iterable) -> OrderEstimate:
    """Least-squares slope of ``log(error)`` against ``log(h)``.

    ``rows`` holds ``(h, error)`` pairs or :class:`ConvergenceRow` objects.
    """
    pairs = [(r.h, r.error) if isinstance(r, ConvergenceRow) else (float(r[0]), float(r[1]))
             for r in rows]
    if len(pairs) < 2:
        raise ValueError("at least two rows are needed to estimate an order")
    pairs.sort(key=lambda p: -p[0])
    if not all(hv > 0 and ev > 0 and math.isfinite(hv) and math.isfinite(ev) for hv, ev in pairs):
        raise ValueError("errors and step sizes must be positive and finite")
    h = np.log([p[0] for p in pairs])
    e = np.log([p[1] for p in pairs])
    hc = h - h.mean()
    slope = float(hc @ (e - e.mean()) / (hc @ hc))
    pairwise = tuple(float((e[i + 1] - e[i]) / (h[i + 1] - h[i])) for i in range(len(h) - 1))
    return OrderEstimate(slope, pairwise)


@dataclass
class ConvergenceReport:
    problem: str
    method: str
    rows: list
    fitted_slope: float
    pairwise: tuple
    reference: str
    norm: str = "inf-final"
    metadata: dict = field(default_factory=dict)

    @property
    def fit_rows(self):
        return [r for r in self.rows if not r.roundoff]

    def format(self) -> str:
        lines = [f"problem={self.problem} method={self.method} reference={self.reference} norm={self.norm}",
                 f"{'N':>6} {'h':>12} {'error':>12} {'L2 error':>12}  note"]
        for r in self.rows:
            note = "round-off, excluded" if r.roundoff else ""
            lines.append(f"{r.N:>6d} {r.h:>12.4e} {r.error:>12.4e} {r.error_l2:>12.4e}  {note}")
        lines.append(f"fitted slope: {self.fitted_slope:.4f}")
        lines.append("pairwise slopes: " + ", ".join(f"{s:.3f}" for s in self.pairwise))
        return "\n".join(lines)


def run_convergence(cfg: RunConfig) -> ConvergenceReport:
    """Integrate for every ``N`` and record the final-time max-norm error.

    With ``reference="self"`` the reference is the same method at
    ``8 * max(N)`` steps; with ``"exact"`` it is the problem's closed form.
    Rows whose error falls below ``100 * tol`` are flagged and left out of
    the fit.
    """
    inst = cfg.instance()
    ev = cfg.evaluator()
    steps = sorted(cfg.steps)

    def solve(N):
        return integrate(inst.system, TimeGrid(inst.t0, inst.T, N), inst.u0, cfg.method, ev).final

    if cfg.reference == "exact":
        if inst.exact is None:
            raise ValueError(f"problem {inst.name!r} has no exact solution")
        ref = np.asarray(inst.exact(inst.T), dtype=float)
    else:
        ref = solve(REFERENCE_FACTOR * steps[-1])

    floor = ROUNDOFF_FACTOR * cfg.tol
    rows = []
    for N in steps:
        diff = solve(N) - ref
        err = float(np.abs(diff).max())
        l2 = float(np.linalg.norm(diff) / math.sqrt(diff.size))
        rows.append(ConvergenceRow(N=N, h=(inst.T - inst.t0) / N, error=err, error_l2=l2,
                                   roundoff=err < floor))
    rows.sort(key=lambda r: -r.h)
    usable = [r for r in rows if not r.roundoff]
    if not usable:
        raise ArithmeticError("all rows are below the round-off floor")
    est = estimate_order(usable)
    meta = {"grid": cfg.grid if inst.name == "ho" else None, "t0": inst.t0, "T": inst.T,
            "backend": ev.backend.value, "tol": ev.tol, "max_krylov_dim": ev.max_krylov_dim,
            "reference_steps": REFERENCE_FACTOR * steps[-1] if cfg.reference == "self" else None}
    return ConvergenceReport(problem=inst.name, method=cfg.method, rows=rows,
                             fitted_slope=est.slope, pairwise=est.pairwise,
                             reference=cfg.reference, metadata=meta)


def _scalar_phis(z, pmax):
    return [phi_dense(p, [[z]])[0, 0] for p in range(pmax + 1)]


def _coef_value(coef, phis):
    return sum(w * phis[p] for p, w in coef.items())


def _order_condition_residuals(phis):
    """Residuals of the five stiff order conditions; ``phis[p]`` is phi_p (scalar or matrix)."""
    c2 = COEFFICIENTS[MethodId.DPG2]
    c3 = COEFFICIENTS[MethodId.DPG3]
    b1, b2 = (_coef_value(c2[k], phis) for k in ("b1", "b2"))
    d1, d2, d3 = (_coef_value(c3[k], phis) for k in ("b1", "b2", "b3"))
    return {
        "dpg2: b1+b2=phi1": (b1 + b2, phis[1]),
        "dpg2: b2/8=phi3": (b2 / 8, phis[3]),
        "dpg3: b1+b2+b3=phi1": (d1 + d2 + d3, phis[1]),
        "dpg3: b2/4+b3=2phi3": (d2 / 4 + d3, 2 * phis[3]),
        "dpg3: b2/8+b3=6phi4": (d2 / 8 + d3, 6 * phis[4]),
    }


def check_order_conditions(z_samples: Sequence[float], matrix_dim: int, n_matrices: int = 5,
                           seed: int = 0) -> dict:
    """Max relative residual of each order condition over scalar and matrix samples.

    Residuals are ``|lhs - rhs| / max(1, |rhs|)`` (2-norm for matrices).
    Random matrices are standard normal scaled to spectral radius 2.
    """
    table = {}

    def record(pairs, kind):
        for name, (lhs, rhs) in pairs.items():
            res = float(np.linalg.norm(np.atleast_1d(lhs - rhs), 2 if np.ndim(lhs) == 2 else None)
                        / max(1.0, np.linalg.norm(np.atleast_1d(rhs), 2 if np.ndim(rhs) == 2 else None)))
            key = (name, kind)
            table[key] = max(table.get(key, 0.0), res)

    for z in z_samples:
        record(_order_condition_residuals(_scalar_phis(float(z), 4)), "scalar")
    rng = np.random.default_rng(seed)
    for _ in range(n_matrices):
        M = rng.standard_normal((matrix_dim, matrix_dim))
        M *= 2.0 / max(abs(np.linalg.eigvals(M)))
        record(_order_condition_residuals([phi_dense(p, M) for p in range(5)]), "matrix")
    return table


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_outputs(report: ConvergenceReport, csv_path, plot_path=None, rates=(2, 3, 4)) -> None:
    """Write ``N,h,error`` CSV and, optionally, plot data with guide lines.

    Guide line for rate ``p`` is ``e0 * (h / h0)**p`` anchored at the first
    (coarsest) row.
    """
    with open(csv_path, "w", newline="") as fh:
        fh.write(format_convergence_csv(report))
    if plot_path is not None:
        with open(plot_path, "w", newline="") as fh:
            fh.write(format_plot_data(report, rates))


def format_convergence_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    buf.write("N,h,error\n")
    for r in report.rows:
        buf.write(f"{r.N},{_fmt(r.h)},{_fmt(r.error)}\n")
    return buf.getvalue()


def format_plot_data(report: ConvergenceReport, rates=(2, 3, 4)) -> str:
    buf = io.StringIO()
    h0, e0 = report.rows[0].h, report.rows[0].error
    cols = ["h", "error", "log10_h", "log10_error"] + [f"rate{p}" for p in rates] + ["excluded"]
    buf.write(",".join(cols) + "\n")
    for r in report.rows:
        vals = [r.h, r.error, math.log10(r.h), math.log10(r.error) if r.error > 0 else float("-inf")]
        vals += [e0 * (r.h / h0) ** p for p in rates]
        buf.write(",".join(_fmt(v) for v in vals) + f",{int(r.roundoff)}\n")
    return buf.getvalue()


def read_convergence_csv(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["N", "h", "error"]:
            raise ValueError(f"unexpected header {header}")
        return [(int(a), float(b), float(c)) for a, b, c in reader]


def write_trajectory_csv(path, times, states) -> None:
    """Columns ``t, u0, u1, ...``; one row per time node."""
    states = np.atleast_2d(states)
    with open(path, "w", newline="") as fh:
        fh.write("t," + ",".join(f"u{i}" for i in range(states.shape[1])) + "\n")
        for t, row in zip(times, states):
            fh.write(_fmt(t) + "," + ",".join(_fmt(x) for x in row) + "\n")


def report_dict(report: ConvergenceReport) -> dict:
    d = asdict(report)
    d["rows"] = [asdict(r) for r in report.rows]
    return d
