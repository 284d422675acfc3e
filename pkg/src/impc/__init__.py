"""Robust tube-based predictive control of interval-uncertain linear systems.

The package identifies an interval model of an unknown linear system
from one disturbed trajectory, propagates the resulting parametric and
additive uncertainty through matrix-zonotope tubes, and runs a
variable-horizon predictive controller whose tightened constraints make
every admissible model respect the state and input limits.
"""

from .errors import (AllInfeasible, ConfigError, ContainmentSolverError,
                     EmptyTightened, ImpcError, InconsistentData,
                     InfeasibleStart, NotContractive, NoValidTerminalSet,
                     RankDeficient, ShapeError, UnboundedParameter)
from .setalg import (Box, IntervalMatrix, MatrixZonotope, box_of_zonotope,
                     entry_decomposition, entry_matrices,
                     interval_product_bound, transport, transport_iter,
                     zonotope_contains)
from .polytope import Polytope
from .qpsolve import QpProblem, QpSolution, QpStatus, find_feasible_point, \
    solve_lp, solve_qp
from .ident import (Dataset, DataMatrices, UncertainModel,
                    build_data_matrices, dd_interval_bounds,
                    sm_interval_bounds)
from .tube import (ClosedLoopInterval, TubeTables, cache_key, load_or_compute,
                   precompute_tube, recursion_radii)
from .synth import (GainEvidence, SynthesisReport, build_terminal_set,
                    compute_x_infinity, power_series_matrix, synthesize,
                    validate_gain)
from .rmpc import (ControllerConfig, HorizonSolution,
                   VariableHorizonController, assemble_horizon_qp,
                   control_step, feasible_any_horizon, solve_variable_horizon,
                   tighten_constraints, verify_solution_inclusion)
from .harness import (ExperimentConfig, FdResult, FdStudy, Pipeline,
                      RunRecord, build_pipeline, estimate_feasible_domain,
                      fd_grid_points, feasibility_mask, generate_dataset,
                      run_config, run_monte_carlo, simulate_run,
                      write_fd_csv, write_fd_points_csv, write_run_csv,
                      write_summary_csv, write_timing_csv)

__version__ = "0.1.0"

__all__ = [
    "AllInfeasible", "Box", "ClosedLoopInterval", "ConfigError",
    "ContainmentSolverError", "ControllerConfig", "DataMatrices", "Dataset",
    "EmptyTightened", "ExperimentConfig", "FdResult", "FdStudy",
    "GainEvidence", "HorizonSolution", "ImpcError", "InconsistentData",
    "InfeasibleStart", "IntervalMatrix", "MatrixZonotope", "NotContractive",
    "NoValidTerminalSet", "Pipeline", "Polytope", "QpProblem", "QpSolution",
    "QpStatus", "RankDeficient", "RunRecord", "ShapeError",
    "SynthesisReport", "TubeTables", "UnboundedParameter",
    "UncertainModel", "VariableHorizonController", "assemble_horizon_qp",
    "box_of_zonotope", "build_data_matrices", "build_pipeline",
    "build_terminal_set", "cache_key", "compute_x_infinity", "control_step",
    "dd_interval_bounds", "entry_decomposition", "entry_matrices",
    "estimate_feasible_domain", "fd_grid_points", "feasibility_mask",
    "feasible_any_horizon",
    "find_feasible_point", "generate_dataset", "interval_product_bound",
    "load_or_compute", "power_series_matrix", "precompute_tube",
    "recursion_radii", "run_config",
    "run_monte_carlo", "simulate_run", "sm_interval_bounds", "solve_lp",
    "solve_qp", "solve_variable_horizon", "synthesize",
    "tighten_constraints", "transport", "transport_iter", "validate_gain",
    "verify_solution_inclusion", "write_fd_csv", "write_fd_points_csv",
    "write_run_csv", "write_summary_csv", "write_timing_csv",
    "zonotope_contains",
]
