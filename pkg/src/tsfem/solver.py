"""Coupled time-space solve via an eigenvalue decomposition in time.

The one-sided second-difference operator A = -D_tt has the closed-form
cosine spectrum

    A v^j = lambda_j v^j,   v^j_i = cos(j pi i / N),
    lambda_j = 2 (1 - cos(j pi / N)) / tau^2,

and the eigenvectors are orthogonal in the trapezoid-weighted inner
product (W A is symmetric).  Expanding the load slices in this basis
decouples the space-time system into N+1 independent spatial problems
(lambda_j M + K) z_j = Fhat_j solved by preconditioned CG; the singular
j = 0 mode is handled by constant-mode deflation and a final mean shift.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_mass, assemble_stiffness, load_operator
from .errors import IncompatibleData, SolverDivergence
from .metric import MeshGeometry, triangle_rule
from .surface import ImplicitSurface, SurfaceMesh
from .timedisc import TimeGrid, time_operator

log = logging.getLogger(__name__)

Array = np.ndarray


@dataclass(frozen=True)
class TimeEigenBasis:
    """Cosine eigensystem of the time operator under trapezoid weights."""

    eigenvalues: Array   # (N+1,), ascending, lambda_0 = 0
    vectors: Array       # (N+1, N+1), column j = v^j
    norms: Array         # c_j = (v^j)^T W v^j


def time_eigenbasis(grid: TimeGrid, method: str = "analytic") -> TimeEigenBasis:
    """Eigenbasis of A = -D_tt.  ``method="analytic"`` uses the closed-form
    cosine vectors; ``"dense_eig"`` diagonalizes W^(1/2) A W^(-1/2)
    numerically (test/reference path)."""
    n = grid.n_intervals
    w = grid.weights
    if method == "analytic":
        i = np.arange(n + 1)
        j = np.arange(n + 1)
        vectors = np.cos(np.pi * np.outer(i, j) / n)
        eigenvalues = 2.0 * (1.0 - np.cos(np.pi * j / n)) / grid.tau ** 2
    elif method == "dense_eig":
        a = time_operator(grid)
        ws = np.sqrt(w)
        sym = (a * ws[:, None]) / ws[None, :]
        sym = 0.5 * (sym + sym.T)
        eigenvalues, q = np.linalg.eigh(sym)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        vectors = q / ws[:, None]
    else:
        raise ValueError(f"unknown time transform {method!r}")
    norms = np.einsum("ij,i,ij->j", vectors, w, vectors)
    return TimeEigenBasis(eigenvalues=eigenvalues, vectors=vectors, norms=norms)


@dataclass
class SpaceTimeField:
    """Nodal coefficients of a piecewise-linear-in-time FEM field.

    ``values[i]`` holds the spatial nodal vector at time node i; the field
    itself is sum_i values[i] phi^i(t) with hat functions phi^i.
    """

    values: Array
    grid: TimeGrid
    mesh: SurfaceMesh

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_nodes, self.mesh.n_vertices):
            raise ValueError("values shape inconsistent with grid/mesh")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field values")
        self.values = v

    def at_time(self, t: float) -> Array:
        """Nodal slice at time t by linear interpolation between time nodes."""
        grid = self.grid
        i = min(int(t / grid.tau), grid.n_intervals - 1)
        s = (t - grid.nodes[i]) / grid.tau
        return (1.0 - s) * self.values[i] + s * self.values[i + 1]

    def spacetime_mean(self, mass) -> float:
        """Discrete space-time mean weighted by the mass matrix."""
        m1 = mass @ np.ones(self.mesh.n_vertices)
        total = float(m1.sum())
        w = self.grid.weights * self.grid.tau
        return float(np.einsum("i,ij,j->", w, self.values, m1)) / total


@dataclass
class SolverOptions:
    cg_tol: float = 1e-10
    cg_max_iter_factor: float = 10.0
    preconditioner: str = "jacobi"       # jacobi | ic0
    time_transform: str = "analytic"     # analytic | dense_eig (test only)
    quadrature_degree: int = 4
    incompatibility_tol: float = 0.1     # relative discrete zero-mode imbalance
    compat_warn_tol: float = 1.0
    precond_lambda_ratio: float = 1e3    # rebuild ic0 beyond this spread


@dataclass
class SolveInfo:
    cg_iterations: list = field(default_factory=list)
    incompatibility: float = 0.0
    compat_residual: float | None = None


def _make_preconditioner(mat: sp.csr_array, kind: str):
    if kind == "jacobi":
        d = mat.diagonal()
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "ic0":
        ilu = spla.spilu(mat.tocsc(), drop_tol=1e-5, fill_factor=10.0)
        return ilu.solve
    raise ValueError(f"unknown preconditioner {kind!r}")


def _pcg(mat, b, apply_prec, tol, max_iter, deflate_constants=False):
    """Preconditioned CG, optionally restricted to the mean-zero complement.

    Deflation removes the constant vector from the right-hand side, every
    preconditioned direction, and the returned solution, which keeps the
    singular zero-mode system well posed without modifying the operator.
    """
    n = len(b)

    def deflate(x):
        return x - x.mean()

    if deflate_constants:
        b = deflate(b)
    x = np.zeros(n)
    r = b.copy()
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x, 0
    z = apply_prec(r)
    if deflate_constants:
        z = deflate(z)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        ap = mat @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * norm_b:
            return (deflate(x) if deflate_constants else x), it
        z = apply_prec(r)
        if deflate_constants:
            z = deflate(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDivergence(
        f"CG exceeded {max_iter} iterations (|r|/|b| = "
        f"{np.linalg.norm(r) / norm_b:.3e})")


def solve_modal(stiffness, mass, grid: TimeGrid, load_slices: Array,
                options: SolverOptions | None = None,
                info: SolveInfo | None = None) -> Array:
    """Solve the coupled system for given per-time-node load vectors.

    ``load_slices`` has shape (N+1, N_v), row i the load of f(t_i) + b^i.
    Returns the (N+1, N_v) nodal coefficients with discrete space-time mean
    zero.  Raises IncompatibleData when the zero-mode load imbalance is
    above tolerance relative to the load scale.
    """
    opts = options or SolverOptions()
    basis = time_eigenbasis(grid, opts.time_transform)
    n_v = load_slices.shape[1]
    w = grid.weights

    # modal loads Fhat_j = sum_i w_i v^j_i F^i / c_j
    fhat = (basis.vectors * w[:, None]).T @ load_slices / basis.norms[:, None]

    ones = np.ones(n_v)
    m_ones = mass @ ones
    total_mass = float(ones @ m_ones)

    # zero-mode compatibility: project the imbalance out, but report it.
    # Scale by the largest modal l1 load so the ratio is dimensionless and
    # insensitive to mesh resolution.
    imbalance = float(ones @ fhat[0])
    scale = max(float(np.abs(fhat).sum(axis=1).max()), 1e-300)
    rel = abs(imbalance) / scale
    if info is not None:
        info.incompatibility = rel
    if rel > opts.incompatibility_tol:
        raise IncompatibleData(rel, opts.incompatibility_tol)
    fhat[0] -= (imbalance / total_mass) * m_ones

    max_iter = max(50, int(opts.cg_max_iter_factor * np.sqrt(n_v)))
    z = np.empty((grid.n_nodes, n_v))
    prec = None
    prec_lambda = None
    for j in range(grid.n_nodes):
        lam = basis.eigenvalues[j]
        if lam == 0.0:
            mat = stiffness
        else:
            mat = stiffness + lam * mass
        if opts.preconditioner == "jacobi" or prec is None or \
                lam / max(prec_lambda, 1e-300) > opts.precond_lambda_ratio:
            prec = _make_preconditioner(mat, opts.preconditioner)
            prec_lambda = max(lam, 1e-300)
        zj, iters = _pcg(mat, fhat[j], prec, opts.cg_tol, max_iter,
                         deflate_constants=(lam == 0.0))
        z[j] = zj
        if info is not None:
            info.cg_iterations.append(iters)

    # back to nodal slices and fix the global constant
    u = basis.vectors @ z
    mean = float(np.einsum("i,ij,j->", w * grid.tau, u, m_ones)) / total_mass
    return u - mean


def assemble_load_slices(mesh: SurfaceMesh, surf: ImplicitSurface,
                         grid: TimeGrid, f, mu0, mu1,
                         geometry: MeshGeometry | None = None,
                         quadrature_degree: int = 4) -> Array:
    """Per-time-node load vectors of T_h(f(t_i) + b^i), shape (N+1, N_v).

    ``f(t, pts)``, ``mu0(pts)``, ``mu1(pts)`` must be vectorized over point
    arrays of shape (n, 3).  Quadrature points are projected once and
    reused across all slices.
    """
    geo = geometry if geometry is not None else MeshGeometry(
        mesh, surf, triangle_rule(quadrature_degree))
    pts = geo.projected.reshape(-1, 3)
    op = load_operator(geo)
    n = grid.n_intervals
    loads = np.empty((n + 1, mesh.n_vertices))
    for i, t in enumerate(grid.nodes):
        vals = np.asarray(f(t, pts), dtype=np.float64)
        # consistent Neumann corrections: b^0 = -(2/tau) mu0, b^N = (2/tau) mu1
        if i == 0:
            vals = vals - (2.0 / grid.tau) * np.asarray(mu0(pts))
        elif i == n:
            vals = vals + (2.0 / grid.tau) * np.asarray(mu1(pts))
        loads[i] = op @ vals
    return loads


def solve(mesh: SurfaceMesh, surf: ImplicitSurface, grid: TimeGrid,
          f, mu0, mu1, options: SolverOptions | None = None,
          stiffness=None, mass=None, geometry: MeshGeometry | None = None,
          info: SolveInfo | None = None) -> SpaceTimeField:
    """End-to-end solve of -D_tt u - Lap u = f with temporal Neumann data.

    Assembles (or reuses) K, M and the lifted load slices, checks the
    continuous compatibility of the data (warning only), and runs the
    modal solve.  The returned field has discrete space-time mean zero.
    """
    opts = options or SolverOptions()
    geo = geometry if geometry is not None else MeshGeometry(
        mesh, surf, triangle_rule(opts.quadrature_degree))
    k_mat = stiffness if stiffness is not None else assemble_stiffness(mesh)
    m_mat = mass if mass is not None else assemble_mass(mesh)

    from .timedisc import compatibility_residual
    compat = compatibility_residual(grid, mesh, surf, f, mu0, mu1, geometry=geo)
    if info is not None:
        info.compat_residual = compat
    area = mesh.total_area()
    if compat > opts.compat_warn_tol * area:
        warnings.warn(
            f"data compatibility residual {compat:.3e} is large relative to "
            f"the surface area {area:.3e}", stacklevel=2)

    loads = assemble_load_slices(mesh, surf, grid, f, mu0, mu1, geometry=geo)
    values = solve_modal(k_mat, m_mat, grid, loads, opts, info)
    return SpaceTimeField(values=values, grid=grid, mesh=mesh)
