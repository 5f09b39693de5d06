"""
Hybrid exponential Euler and the DPG methods
============================================

One step of each scheme on a small nonlinear system, then global orders
on the scalar Riccati equation ``u' = u^2``.
"""

# %%
import numpy as np

from dpgexp import (NonlinearSystem, SemilinearSplit, TimeGrid, integrate, linearize,
                    riccati_problem, step_dpg2, step_dpg3, step_exp_euler_classic,
                    step_hybrid_euler)
from dpgexp.harness import estimate_order
from dpgexp.operators import DenseOperator

# %% [markdown]
# A semilinear system ``u' = A u + sin(u)`` with its split declared, so the
# Jacobian is ``A + diag(cos(u_n))``.

# %%
rng = np.random.default_rng(1)
A = DenseOperator(-3 * np.eye(4) + 0.5 * rng.standard_normal((4, 4)))
split = SemilinearSplit(A, np.sin, np.cos)
sys = NonlinearSystem(dim=4, rhs=lambda u: A.matvec(u) + np.sin(u), split=split)
u0 = np.ones(4)
lin = linearize(sys, u0)

# %% [markdown]
# The hybrid trace is a post-processing of the interval constant, yet it
# coincides with classical exponential Euler.

# %%
h = 0.2
hyb = step_hybrid_euler(lin, u0, h)
cls = step_exp_euler_classic(lin, u0, h)
print("hybrid trace   ", hyb.trace)
print("classical trace", cls.trace)
print("difference     ", np.abs(hyb.trace - cls.trace).max())

# %% [markdown]
# DPG2 and DPG3 share their first stage, and DPG3 recovers its third stage
# without another phi-action.

# %%
d2 = step_dpg2(lin, u0, h)
d3 = step_dpg3(lin, u0, h)
print("shared stage identical:", np.array_equal(d2.stages["u2"], d3.stages["u2"]))
print("phi-combination solves:", hyb.phi_action_count, d2.phi_action_count, d3.phi_action_count)

# %% [markdown]
# Global error at ``T = 0.5`` against ``u(t) = 1 / (1 - t)``.

# %%
ric = riccati_problem()
steps = [8, 16, 32, 64]
for method in ("hybrid-euler", "dpg2", "dpg3"):
    rows = []
    for N in steps:
        u = integrate(ric, TimeGrid(0.0, 0.5, N), [1.0], method).final[0]
        rows.append((0.5 / N, abs(u - 2.0)))
    errs = "  ".join(f"{e:.2e}" for _, e in rows)
    print(f"{method:<13} {errs}   slope {estimate_order(rows).slope:.2f}")
