"""Solver and benchmark harness for the time-space Laplace-Beltrami
equation on (0,1) x M with temporal Neumann data, including superconvergent
gradient post-processing."""

from .analysis import (ErrorReport, error_De, error_De2M, error_De2T, error_e,
                       observed_order, observed_orders)
from .assembly import (assemble_load, assemble_mass, assemble_stiffness,
                       export_matrix_market)
from .bench import RunConfig, run
from .benchmarks import (BenchmarkProblem, make_benchmark,
                         surface_laplacian_levelset)
from .errors import (DegenerateGradient, DegenerateTriangle, IncompatibleData,
                     LengthMismatch, NonConvergence, RankDeficientPatch,
                     SolverDivergence, TooFewNodes, TsfemError,
                     UnknownBenchmark)
from .metric import (ElementGeometry, MeshGeometry, QuadratureRule,
                     element_geometry, exact_metric_torus, lift_eval,
                     triangle_rule)
from .recovery import (SurfacePatch, SurfacePatchSet, build_surface_patch,
                       ppr_time, ppr_time_field, pppr_field, pppr_vertex)
from .solver import (SolveInfo, SolverOptions, SpaceTimeField, TimeEigenBasis,
                     solve, solve_modal, time_eigenbasis)
from .surface import (ImplicitSurface, MeshDiagnostics, SurfaceMesh,
                      diagnostics, make_torus_mesh, orient_outward,
                      project_point, project_points, read_off, refine_project,
                      torus_surface, write_off)
from .timedisc import (TimeGrid, boundary_correction, compatibility_residual,
                       dtt_apply, summation_by_parts_check, time_operator)

__version__ = "0.1.0"
