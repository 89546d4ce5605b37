"""Constant-mean-curvature Killing graphs on the hyperbolic half-space slice.

Subpackages: ``geometry`` (model, isometries, Killing structures, exact
solutions), ``operator`` (graph mean-curvature residual, orientation fixing,
grid discretization), ``barriers`` (stacked lower barriers, equidistant
supersolutions, upper caps), ``solver`` (masked Dirichlet solver),
``perron`` (monotone lift iteration for the asymptotic problem), and ``cli``
(batch scenarios with file artifacts).
"""

from . import barriers, cli, geometry, operator, perron, solver
from .geometry import (AmbientPoint, ChartPoint, IdealPoint, IdealSphere, Isometry,
                       between_spheres_check, christoffel_drift, exact_solution,
                       flow_apply, gamma_eval, hyperbolic_distance, killing_graph_embed,
                       killing_structure)
from .operator import (GridFunction, OrientationConvention, ScalarPatch, exact_patch,
                       fix_orientation_sign, make_grid, numerical_mean_curvature,
                       qh_pointwise, qh_residual_grid, sample_on_grid)
from .barriers import (BarrierStack, SupersolutionPlane, UpperCap, build_stack,
                       eval_stack, make_supersolution, select_alpha, upper_cap_barrier)
from .solver import (DirichletProblem, SolveReport, SolverConfig, SolverDivergence,
                     gradient_diagnostic, residual_norm, solve_dirichlet)
from .perron import (BallCover, BoundaryDatum, PerronConfig, PerronState,
                     boundary_attainment_report, cmc_lift, comparison_check,
                     perron_sweep, run_asymptotic_solve)

__version__ = "0.1.0"
