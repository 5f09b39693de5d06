"""
phi-functions and their actions
===============================

Dense evaluation through one augmented exponential, and the Krylov action
used for large sparse operators.
"""

# %%
import math

import numpy as np
import scipy.sparse as sp

from dpgexp import CSROperator, PhiEvaluator, krylov_phi_action, phi_dense
from dpgexp.phi import expm_dense

# %% [markdown]
# ``phi_0 = exp`` and ``phi_{p+1}(z) = (phi_p(z) - 1/p!) / z``. At ``z = 0``
# every ``phi_p`` equals ``1/p!``.

# %%
for p in range(5):
    print(p, phi_dense(p, [[0.0]])[0, 0], 1 / math.factorial(p))

# %% [markdown]
# Check the recurrence on a random 6x6 matrix.

# %%
rng = np.random.default_rng(0)
M = rng.standard_normal((6, 6))
phis = [phi_dense(p, M) for p in range(5)]
Minv = np.linalg.inv(M)
for p in range(4):
    res = np.linalg.norm(phis[p + 1] - Minv @ (phis[p] - np.eye(6) / math.factorial(p)))
    print(f"p={p}  recurrence residual {res:.2e}")

# %% [markdown]
# For a stiff 1D Laplacian the Arnoldi loop substeps in time. Its error is
# controlled relative to the input vector, so the difference relative to a
# strongly damped output grows with ``|hA|``.

# %%
n = 200
T = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]).tocsr() * (n + 1) ** 2
v = np.sin(np.linspace(0, 3, n))
for h in (1e-4, 1e-2, 1.0):
    dense = phi_dense(1, h * T.toarray()) @ v
    kr = krylov_phi_action(CSROperator(T), h, v, 1, PhiEvaluator(tol=1e-12))
    print(f"h={h:g}  |hA|_1={h * abs(T).sum(axis=0).max():.1e}  "
          f"rel. diff {np.linalg.norm(kr - dense) / np.linalg.norm(dense):.2e}")

# %%
print("exp(0) == I:", np.array_equal(expm_dense(np.zeros((3, 3))), np.eye(3)))
