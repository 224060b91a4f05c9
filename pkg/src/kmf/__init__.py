"""Kinetic meshfree flow solver (2D compressible inviscid) and bench harness."""

from kmf.state import (
    Primitives,
    FlowState,
    PositivityError,
    primitives_to_conserved,
    conserved_to_primitives,
    primitives_to_q,
    q_to_primitives,
    free_stream,
    sound_speed,
)
from kmf.kinetics import full_flux, split_flux, moment_oracle, QuadratureError
from kmf.geometry import (
    PointCloud,
    Connectivity,
    StencilDeficiencyError,
    read_point_cloud,
    write_point_cloud,
    build_stencils,
    generate_naca_cloud,
)
from kmf.lsq import (
    Gradient2,
    QGradients,
    ConditioningError,
    lsq_gradient_first_order,
    lsq_gradient_quadratic,
    defect_corrected_gradient,
    compute_q_derivatives,
)
from kmf.solver import (
    SolverConfig,
    SolveResult,
    local_timestep,
    flux_residual,
    apply_boundary,
    state_update_rk,
    residue_norm,
    solve,
)
from kmf.bench import BenchmarkReport, timed_run, speedup, sweep

__version__ = "0.1.0"

__all__ = [
    "Primitives",
    "FlowState",
    "PositivityError",
    "primitives_to_conserved",
    "conserved_to_primitives",
    "primitives_to_q",
    "q_to_primitives",
    "free_stream",
    "sound_speed",
    "full_flux",
    "split_flux",
    "moment_oracle",
    "QuadratureError",
    "PointCloud",
    "Connectivity",
    "StencilDeficiencyError",
    "read_point_cloud",
    "write_point_cloud",
    "build_stencils",
    "generate_naca_cloud",
    "Gradient2",
    "QGradients",
    "ConditioningError",
    "lsq_gradient_first_order",
    "lsq_gradient_quadratic",
    "defect_corrected_gradient",
    "compute_q_derivatives",
    "SolverConfig",
    "SolveResult",
    "local_timestep",
    "flux_residual",
    "apply_boundary",
    "state_update_rk",
    "residue_norm",
    "solve",
    "BenchmarkReport",
    "timed_run",
    "speedup",
    "sweep",
    "__version__",
]
