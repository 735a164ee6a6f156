"""Command-line entry point for the convergence benchmark harness.

Configuration comes from an optional TOML file plus flag overrides; flags
win.  Exit codes: 0 on success, 2 when a configured acceptance bound on
the finest-pair observed orders is violated, 1 on errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import RunConfig, check_acceptance, run, write_outputs
from .solver import SolverOptions

log = logging.getLogger("tsfem")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tsfem-bench",
        description="Run a refinement ladder for one benchmark problem and "
                    "emit its convergence table.")
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--benchmark", choices=["torus", "ex2", "ex3"])
    p.add_argument("--levels", type=int)
    p.add_argument("--n0", type=int, help="time intervals at the first level")
    p.add_argument("--mesh", help="torus grid 'AxB' or OFF file path")
    p.add_argument("--quadrature", type=int, choices=[2, 4])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--json", dest="json_out", help="JSON summary path")
    p.add_argument("--solver.cg-tol", dest="solver_cg_tol", type=float)
    p.add_argument("--solver.preconditioner", dest="solver_preconditioner",
                   choices=["jacobi", "ic0"])
    p.add_argument("--threads", type=int,
                   help="cap the BLAS worker count for this run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)
    solver_data = data.pop("solver", {})
    acceptance = data.pop("acceptance", {})
    config = RunConfig(**data)
    config.solver = SolverOptions(**solver_data)
    config.acceptance = dict(acceptance)
    for name in ("benchmark", "levels", "n0", "mesh", "quadrature", "seed",
                 "out", "json_out"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(config, name, val)
    if args.solver_cg_tol is not None:
        config.solver.cg_tol = args.solver_cg_tol
    if args.solver_preconditioner is not None:
        config.solver.preconditioner = args.solver_preconditioner
    config.__post_init__()
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s")
    if args.threads:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(args.threads)
        except ImportError:
            log.warning("threadpoolctl unavailable; --threads ignored")
    try:
        config = load_config(args)
        report, stats = run(config)
        write_outputs(config, report, stats)
    except Exception as exc:  # surfaced with context by the harness
        log.error("error: %s", exc)
        return 1
    violations = check_acceptance(config, report)
    for v in violations:
        log.error("acceptance violation: %s", v)
    log.info("wrote %s", config.out)
    return 2 if violations else 0


if __name__ == "__main__":
    sys.exit(main())
