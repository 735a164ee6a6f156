"""Refinement-ladder harness producing convergence tables.

One run builds a mesh ladder for the chosen benchmark (regenerated
structured grids for the torus, uniform refinement with first-order
projection for the file-based surfaces), halves the time step per level,
solves, post-processes, and evaluates the four error norms.  Results are
written as a CSV with a fixed column set; timings and solver statistics go
to the JSON summary and the log, never into the CSV, so that repeated runs
of the same configuration produce byte-identical tables.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .analysis import (ERROR_COLUMNS, ErrorReport, error_De, error_De2M,
                       error_De2T, error_e, observed_orders)
from .assembly import assemble_mass, assemble_stiffness
from .benchmarks import BenchmarkProblem, make_benchmark
from .metric import MeshGeometry, triangle_rule
from .recovery import SurfacePatchSet, ppr_time_field
from .solver import SolveInfo, SolverOptions, solve
from .surface import (SurfaceMesh, make_torus_mesh, orient_outward, read_off,
                      refine_project)
from .timedisc import TimeGrid

log = logging.getLogger(__name__)

CSV_HEADER = ("level,N_v,N,h,tau,e,order_e,De,order_De,"
              "De2T,order_De2T,De2M,order_De2M")


# initial time intervals, balancing the temporal against the spatial error
# of the shipped coarse meshes (tau still halves per level)
DEFAULT_N0 = {"torus": 8, "ex2": 8, "ex3": 4}


@dataclass
class RunConfig:
    """Configuration of one refinement study."""

    benchmark: str = "torus"
    levels: int = 4
    n0: int = 0                      # 0 = per-benchmark default; doubled per level
    mesh: str = ""                   # "AxB" torus grid or an OFF path; "" = default
    refinement: str = "first_order"  # projection applied when refining
    quadrature: int = 4
    seed: int = 0
    out: str = "results.csv"
    json_out: str = ""
    solver: SolverOptions = field(default_factory=SolverOptions)
    acceptance: dict = field(default_factory=dict)  # column -> [lo, hi]

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.n0 == 0:
            self.n0 = DEFAULT_N0.get(self.benchmark, 8)
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")


def _default_mesh_spec(benchmark: str) -> str:
    return "20x10" if benchmark == "torus" else ""


def _coarse_mesh(problem: BenchmarkProblem, spec: str) -> SurfaceMesh:
    if spec and not ("x" in spec and spec.replace("x", "").isdigit()):
        mesh = read_off(spec)
    else:
        name = problem.mesh_source
        path = resources.files("tsfem").joinpath("meshes", name)
        with resources.as_file(path) as p:
            mesh = read_off(p)
    return orient_outward(mesh, problem.surf)


def build_level_mesh(problem: BenchmarkProblem, config: RunConfig,
                     level: int) -> SurfaceMesh:
    """Mesh of refinement level ``level`` (0-based)."""
    spec = config.mesh or _default_mesh_spec(config.benchmark)
    if problem.mesh_source == "torus" and "x" in spec:
        base_major, base_minor = (int(s) for s in spec.split("x"))
        return make_torus_mesh(base_major * 2 ** level, base_minor * 2 ** level,
                               4.0, 1.0)
    mesh = _coarse_mesh(problem, spec)
    for _ in range(level):
        mesh = refine_project(mesh, problem.surf, order=config.refinement)
    return mesh


@dataclass
class LevelStats:
    wall_time: float = 0.0
    cg_iterations_total: int = 0
    cg_iterations_max: int = 0
    patch_fallbacks: int = 0
    compat_residual: float = 0.0
    incompatibility: float = 0.0


def run(config: RunConfig):
    """Execute the ladder; returns (ErrorReport, per-level LevelStats list)."""
    problem = make_benchmark(config.benchmark)
    report = ErrorReport()
    stats = []
    mesh = None
    for level in range(config.levels):
        t_start = time.perf_counter()
        try:
            if problem.mesh_source == "torus" or mesh is None:
                mesh = build_level_mesh(problem, config, level)
            else:
                mesh = refine_project(mesh, problem.surf,
                                      order=config.refinement)
            grid = TimeGrid(config.n0 * 2 ** level)
            geo = MeshGeometry(mesh, problem.surf,
                               triangle_rule(config.quadrature))
            k_mat = assemble_stiffness(mesh)
            m_mat = assemble_mass(mesh)
            info = SolveInfo()
            u_h = solve(mesh, problem.surf, grid, problem.f, problem.mu0,
                        problem.mu1, options=config.solver, stiffness=k_mat,
                        mass=m_mat, geometry=geo, info=info)
            recovered_dt = ppr_time_field(grid, u_h)
            patches = SurfacePatchSet(mesh)
            e = error_e(u_h, problem.exact_u, mesh, problem.surf, grid,
                        geometry=geo)
            de = error_De(u_h, problem.exact_dt_u, problem.exact_grad_g_u,
                          mesh, problem.surf, grid, geometry=geo)
            de2t = error_De2T(u_h, recovered_dt, problem.exact_dt_u, mesh,
                              problem.surf, grid, geometry=geo)
            de2m = error_De2M(u_h, problem.exact_grad_g_u, mesh, problem.surf,
                              grid, geometry=geo, patches=patches)
        except Exception as exc:
            raise RuntimeError(
                f"level {level} ({config.benchmark}) failed: {exc}") from exc
        report.add_level(mesh.n_vertices, grid.n_intervals,
                         mesh.max_edge_length(), grid.tau, e, de, de2t, de2m)
        elapsed = time.perf_counter() - t_start
        stats.append(LevelStats(
            wall_time=elapsed,
            cg_iterations_total=int(np.sum(info.cg_iterations)),
            cg_iterations_max=int(np.max(info.cg_iterations)),
            patch_fallbacks=patches.fallback_count,
            compat_residual=float(info.compat_residual or 0.0),
            incompatibility=info.incompatibility,
        ))
        log.info(
            "level %d: N_v=%d N=%d h=%.3e tau=%.3e e=%.3e De=%.3e "
            "De2T=%.3e De2M=%.3e  [%.1fs, cg max %d, fallbacks %d]",
            level, mesh.n_vertices, grid.n_intervals, report.h[-1],
            grid.tau, e, de, de2t, de2m, elapsed,
            stats[-1].cg_iterations_max, patches.fallback_count)
    observed_orders(report)
    return report, stats


def format_csv(report: ErrorReport) -> str:
    """Fixed-schema CSV of a (order-filled) report."""
    lines = [CSV_HEADER]
    for k in range(report.n_levels):
        cells = [str(k), str(report.n_vertices[k]), str(report.n_intervals[k]),
                 f"{report.h[k]:.12e}", f"{report.tau[k]:.12e}"]
        for name in ERROR_COLUMNS:
            cells.append(f"{report.errors[name][k]:.12e}")
            order = report.orders[name][k]
            cells.append("" if np.isnan(order) else f"{order:.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_dict(config: RunConfig, report: ErrorReport, stats) -> dict:
    levels = []
    for k in range(report.n_levels):
        row = {
            "level": k,
            "N_v": report.n_vertices[k],
            "N": report.n_intervals[k],
            "h": report.h[k],
            "tau": report.tau[k],
        }
        for name in ERROR_COLUMNS:
            row[name] = report.errors[name][k]
            order = report.orders[name][k]
            row[f"order_{name}"] = None if np.isnan(order) else order
        s = stats[k]
        row["diagnostics"] = {
            "wall_time_s": s.wall_time,
            "cg_iterations_total": s.cg_iterations_total,
            "cg_iterations_max": s.cg_iterations_max,
            "patch_fallbacks": s.patch_fallbacks,
            "compat_residual": s.compat_residual,
            "zero_mode_imbalance": s.incompatibility,
        }
        levels.append(row)
    return {
        "benchmark": config.benchmark,
        "levels": config.levels,
        "n0": config.n0,
        "seed": config.seed,
        "rows": levels,
    }


def check_acceptance(config: RunConfig, report: ErrorReport) -> list:
    """Violations of configured [lo, hi] bounds on finest-pair orders."""
    violations = []
    if report.n_levels < 2:
        return violations
    for name, bounds in config.acceptance.items():
        col = name.removeprefix("order_")
        if col not in ERROR_COLUMNS:
            raise ValueError(f"unknown acceptance column {name!r}")
        order = report.orders[col][-1]
        lo, hi = float(bounds[0]), float(bounds[1])
        if not (lo <= order <= hi):
            violations.append(
                f"order_{col} = {order:.4f} outside [{lo:g}, {hi:g}]")
    return violations


def write_outputs(config: RunConfig, report: ErrorReport, stats) -> None:
    csv_text = format_csv(report)
    with open(config.out, "w", encoding="ascii") as fh:
        fh.write(csv_text)
    if config.json_out:
        with open(config.json_out, "w", encoding="ascii") as fh:
            json.dump(summary_dict(config, report, stats), fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
