"""Exponential integrators built from the lowest-order DPG time-marching scheme.

The package provides phi-function actions (:mod:`dpgexp.phi`), per-step
Rosenbrock linearization (:mod:`dpgexp.model`), the hybrid exponential Euler
and two-/three-stage DPG steppers (:mod:`dpgexp.integrators`), test problems
(:mod:`dpgexp.problems`) and a convergence harness (:mod:`dpgexp.harness`).
"""

from .harness import (ConvergenceReport, RunConfig, check_order_conditions, emit_outputs,
                      estimate_order, run_convergence)
from .integrators import (IntegrationError, MethodId, StepOutput, TimeGrid, Trajectory,
                          integrate, step_dpg2, step_dpg3, step_exp_euler_classic,
                          step_hybrid_euler, step_linear_dpg_p0)
from .model import (Linearization, NonlinearSystem, SemilinearSplit, TimeDependentSystem,
                    autonomize, linearize, remainder_directional)
from .operators import (CSROperator, DenseOperator, DiagonalShiftedOperator, LinearOperator,
                        TimeAugmentedOperator)
from .phi import (Backend, KrylovConvergenceError, PhiCombination, PhiEvaluator, expm_dense,
                  krylov_phi_action, phi_combination_action, phi_dense)
from .problems import (build_ho_problem, get_problem, laplacian_2d, linear_decay_system,
                       riccati_problem)

__version__ = "0.1.0"
