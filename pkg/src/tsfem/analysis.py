"""Space-time error norms and observed convergence orders.

All norms integrate over the discrete surface with lifted exact data:
3-point Gauss in time per interval crossed with the metric quadrature in
space.  The discrete gradient is embedded in ambient 3-space through the
element Jacobian, jac g_h^{-1} grad(ubar).  Orders follow the convention
log(err_k / err_{k+1}) / log(sqrt(N_v^{k+1} / N_v^k)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import MeshGeometry
from .recovery import SurfacePatchSet
from .solver import SpaceTimeField
from .surface import ImplicitSurface, SurfaceMesh
from .timedisc import TimeGrid

Array = np.ndarray

# Gauss-Legendre on (0, 1), degree 5
_TG_NODES = np.array([0.5 - np.sqrt(15.0) / 10.0, 0.5,
                      0.5 + np.sqrt(15.0) / 10.0])
_TG_WEIGHTS = np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0])


def _geometry(mesh, surf, geometry):
    return geometry if geometry is not None else MeshGeometry(mesh, surf)


def _vec_at_quad(geo: MeshGeometry, nodal_vec: Array) -> Array:
    """P1 interpolation of per-vertex 3-vectors to quadrature nodes."""
    tri_vals = nodal_vec[geo.mesh.triangles]          # (F, 3, 3)
    return np.einsum("qa,fac->fqc", geo.basis, tri_vals)


def time_gauss(grid: TimeGrid, n_points: int = 3):
    """(t, weight, interval, local coordinate) tuples covering (0, 1)."""
    if n_points == 3:
        nodes, weights = _TG_NODES, _TG_WEIGHTS
    else:
        x, w = np.polynomial.legendre.leggauss(n_points)
        nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    out = []
    for i in range(1, grid.n_nodes):
        t0 = grid.nodes[i - 1]
        for s, w in zip(nodes, weights):
            out.append((t0 + s * grid.tau, w * grid.tau, i, s))
    return out


def error_e(field: SpaceTimeField, exact_u, mesh: SurfaceMesh,
            surf: ImplicitSurface, grid: TimeGrid,
            geometry: MeshGeometry | None = None,
            time_points: int = 3) -> float:
    """L2(T; L2(M_h)) distance between the field and the lifted exact u."""
    geo = _geometry(mesh, surf, geometry)
    pts = geo.projected.reshape(-1, 3)
    shape = geo.quad_points.shape[:2]
    err2 = 0.0
    for t, w, i, s in time_gauss(grid, time_points):
        nodal = (1.0 - s) * field.values[i - 1] + s * field.values[i]
        diff = geo.at_quad(nodal) - np.asarray(exact_u(t, pts)).reshape(shape)
        err2 += w * geo.integrate(diff * diff)
    return float(np.sqrt(err2))


def error_De(field: SpaceTimeField, exact_dt_u, exact_grad_g_u,
             mesh: SurfaceMesh, surf: ImplicitSurface, grid: TimeGrid,
             geometry: MeshGeometry | None = None,
             time_points: int = 3) -> float:
    """Combined first-derivative error: the piecewise-constant discrete
    time derivative against the lifted exact one, plus the per-element
    tangential gradient against the lifted exact surface gradient."""
    geo = _geometry(mesh, surf, geometry)
    pts = geo.projected.reshape(-1, 3)
    shape = geo.quad_points.shape[:2]
    err2 = 0.0
    grads_prev = None
    grads_cur = geo.element_gradients(field.values[0])
    interval = 0
    for t, w, i, s in time_gauss(grid, time_points):
        if i != interval:
            grads_prev = grads_cur if interval == i - 1 else \
                geo.element_gradients(field.values[i - 1])
            grads_cur = geo.element_gradients(field.values[i])
            dt_nodal = (field.values[i] - field.values[i - 1]) / grid.tau
            dt_quad = geo.at_quad(dt_nodal)
            interval = i
        diff_t = dt_quad - np.asarray(exact_dt_u(t, pts)).reshape(shape)
        err2 += w * geo.integrate(diff_t * diff_t)
        grads = (1.0 - s) * grads_prev + s * grads_cur   # (F, 3)
        exact = np.asarray(exact_grad_g_u(t, pts)).reshape(shape + (3,))
        diff_g = grads[:, None, :] - exact
        err2 += w * geo.integrate(np.einsum("fqc,fqc->fq", diff_g, diff_g))
    return float(np.sqrt(err2))


def error_De2T(field: SpaceTimeField, recovered_dt: SpaceTimeField, exact_dt_u,
               mesh: SurfaceMesh, surf: ImplicitSurface, grid: TimeGrid,
               geometry: MeshGeometry | None = None,
               time_points: int = 3) -> float:
    """Error of the recovered time derivative (piecewise linear in time)."""
    geo = _geometry(mesh, surf, geometry)
    pts = geo.projected.reshape(-1, 3)
    shape = geo.quad_points.shape[:2]
    err2 = 0.0
    for t, w, i, s in time_gauss(grid, time_points):
        nodal = (1.0 - s) * recovered_dt.values[i - 1] + s * recovered_dt.values[i]
        diff = geo.at_quad(nodal) - np.asarray(exact_dt_u(t, pts)).reshape(shape)
        err2 += w * geo.integrate(diff * diff)
    return float(np.sqrt(err2))


def error_De2M(field: SpaceTimeField, exact_grad_g_u, mesh: SurfaceMesh,
               surf: ImplicitSurface, grid: TimeGrid,
               geometry: MeshGeometry | None = None,
               patches: SurfacePatchSet | None = None,
               recovered: Array | None = None,
               time_points: int = 3) -> float:
    """Error of the recovered surface gradient against the lifted exact one.

    Recovery is evaluated per time node and interpolated linearly in time;
    slices are recovered on the fly unless ``recovered`` (N+1, N_v, 3) is
    given.
    """
    geo = _geometry(mesh, surf, geometry)
    pts = geo.projected.reshape(-1, 3)
    shape = geo.quad_points.shape[:2]
    if recovered is None:
        ps = patches if patches is not None else SurfacePatchSet(mesh)

        def slice_at(i):
            return ps.recover_slice(field.values[i])
    else:
        def slice_at(i):
            return recovered[i]

    err2 = 0.0
    rec_prev = rec_cur = None
    interval = 0
    for t, w, i, s in time_gauss(grid, time_points):
        if i != interval:
            rec_prev = rec_cur if interval == i - 1 and rec_cur is not None \
                else slice_at(i - 1)
            rec_cur = slice_at(i)
            interval = i
        nodal = (1.0 - s) * rec_prev + s * rec_cur       # (N_v, 3)
        diff = _vec_at_quad(geo, nodal) - \
            np.asarray(exact_grad_g_u(t, pts)).reshape(shape + (3,))
        err2 += w * geo.integrate(np.einsum("fqc,fqc->fq", diff, diff))
    return float(np.sqrt(err2))


# ---------------------------------------------------------------------------
# Convergence reports
# ---------------------------------------------------------------------------

ERROR_COLUMNS = ("e", "De", "De2T", "De2M")


@dataclass
class ErrorReport:
    """Per-level errors of a refinement study plus observed orders."""

    n_vertices: list = field(default_factory=list)
    n_intervals: list = field(default_factory=list)
    h: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    errors: dict = field(default_factory=lambda: {c: [] for c in ERROR_COLUMNS})
    orders: dict = field(default_factory=lambda: {c: [] for c in ERROR_COLUMNS})

    def add_level(self, n_vertices, n_intervals, h, tau, e, De, De2T, De2M):
        self.n_vertices.append(int(n_vertices))
        self.n_intervals.append(int(n_intervals))
        self.h.append(float(h))
        self.tau.append(float(tau))
        for name, val in zip(ERROR_COLUMNS, (e, De, De2T, De2M)):
            self.errors[name].append(float(val))

    @property
    def n_levels(self) -> int:
        return len(self.n_vertices)


def observed_order(err_coarse: float, err_fine: float,
                   nv_coarse: int, nv_fine: int) -> float:
    """log(err_c / err_f) / log(sqrt(nv_f / nv_c))."""
    ratio = np.sqrt(nv_fine / nv_coarse)
    if err_fine == 0.0 or err_coarse == 0.0 or ratio == 1.0:
        return float("nan")
    return float(np.log(err_coarse / err_fine) / np.log(ratio))


def observed_orders(report: ErrorReport) -> ErrorReport:
    """Fill the per-pair order columns of a report (first entry is NaN)."""
    for name in ERROR_COLUMNS:
        errs = report.errors[name]
        orders = [float("nan")]
        for k in range(1, report.n_levels):
            orders.append(observed_order(
                errs[k - 1], errs[k],
                report.n_vertices[k - 1], report.n_vertices[k]))
        report.orders[name] = orders
    return report
