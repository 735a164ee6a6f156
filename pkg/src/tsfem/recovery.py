"""Superconvergent gradient post-processing.

Temporal recovery fits a quadratic through three consecutive nodal values
and differentiates it at the node; on the uniform grids used here this
collapses to the classical centered / one-sided three-point stencils.

Surface recovery works per vertex in a local tangent frame: one quadratic
least-squares fit of the stencil *heights* recovers the surface Jacobian,
a second fit of the nodal *values* recovers the parametric gradient, and
the transposed pseudo-inverse of the recovered Jacobian maps the latter to
an ambient 3-vector tangent to the recovered surface.  Both fits share the
same fitting weights, so each vertex reduces to one precomputed
(3 x stencil) matrix applied to the stencil values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficientPatch, TooFewNodes
from .metric import MeshGeometry
from .solver import SpaceTimeField
from .surface import SurfaceMesh
from .timedisc import TimeGrid

Array = np.ndarray

MAX_PATCH_CONDITION = 1e8


@dataclass(frozen=True)
class TemporalPatch:
    """Three-node stencil used for the quadratic fit at one time node."""

    node: int
    stencil: tuple


def temporal_patch(grid: TimeGrid, i: int) -> TemporalPatch:
    n = grid.n_intervals
    if n < 2:
        raise TooFewNodes("temporal recovery needs at least 2 intervals")
    if i == 0:
        return TemporalPatch(0, (0, 1, 2))
    if i == n:
        return TemporalPatch(n, (n - 2, n - 1, n))
    return TemporalPatch(i, (i - 1, i, i + 1))


def ppr_time(grid: TimeGrid, samples) -> Array:
    """Recovered time derivative at every node (axis 0 of ``samples``).

    Exact for quadratics: interior nodes get the centered difference
    (s[i+1] - s[i-1]) / 2 tau, the endpoints the one-sided
    (-3 s[0] + 4 s[1] - s[2]) / 2 tau and its mirror.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if grid.n_intervals < 2:
        raise TooFewNodes("temporal recovery needs at least 2 intervals")
    if samples.shape[0] != grid.n_nodes:
        raise TooFewNodes(
            f"got {samples.shape[0]} samples for {grid.n_nodes} nodes")
    out = np.empty_like(samples)
    two_tau = 2.0 * grid.tau
    out[1:-1] = (samples[2:] - samples[:-2]) / two_tau
    out[0] = (-3.0 * samples[0] + 4.0 * samples[1] - samples[2]) / two_tau
    out[-1] = (3.0 * samples[-1] - 4.0 * samples[-2] + samples[-3]) / two_tau
    return out


def ppr_time_field(grid: TimeGrid, field: SpaceTimeField) -> SpaceTimeField:
    """Columnwise temporal recovery of a space-time field."""
    return SpaceTimeField(values=ppr_time(grid, field.values),
                          grid=grid, mesh=field.mesh)


# ---------------------------------------------------------------------------
# Surface patches
# ---------------------------------------------------------------------------

@dataclass
class SurfacePatch:
    """Per-vertex recovery data in the local tangent frame."""

    vertex: int
    stencil: Array          # vertex indices, patch vertex first
    origin: Array           # coordinates of the patch vertex
    frame: Array            # rows e1, e2, normal
    xi_eta: Array           # (m, 2) tangential coordinates
    heights: Array          # (m,) normal offsets
    fit: Array              # (2, m): values -> (d/dxi, d/deta) at the origin
    recovered_jac: Array    # (3, 2) recovered surface Jacobian
    transfer: Array         # (3, m): values -> ambient recovered gradient
    fallback: bool = False


def _vertex_frame(mesh: SurfaceMesh, a: int) -> Array:
    tris = mesh.vertex_triangles(a)
    n = mesh.tri_normals[tris].mean(axis=0)
    n = n / np.linalg.norm(n)
    # tangent pair from the least-aligned coordinate axis
    k = int(np.argmin(np.abs(n)))
    e1 = np.zeros(3)
    e1[k] = 1.0
    e1 -= (e1 @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.stack([e1, e2, n])


def _collect_stencil(mesh: SurfaceMesh, a: int, two_ring: bool) -> Array:
    ring1 = mesh.vertex_ring(a)
    if not two_ring:
        return np.concatenate([[a], ring1])
    seen = {int(a)} | {int(b) for b in ring1}
    for b in ring1:
        seen.update(int(c) for c in mesh.vertex_ring(b))
    rest = sorted(seen - {int(a)})
    return np.concatenate([[a], rest])


def _quadratic_design(xi_eta: Array, radius: float) -> Array:
    s = xi_eta / radius
    return np.stack([np.ones(len(s)), s[:, 0], s[:, 1],
                     s[:, 0] ** 2, s[:, 0] * s[:, 1], s[:, 1] ** 2], axis=1)


def build_surface_patch(mesh: SurfaceMesh, a: int) -> SurfacePatch:
    """Construct the recovery patch of vertex ``a``.

    Starts from the 1-ring and grows to the 2-ring while the stencil has
    fewer than 6 vertices or the scaled quadratic design matrix is too ill
    conditioned; raises RankDeficientPatch if even the 2-ring cannot
    support the fit.
    """
    origin = mesh.vertices[a]
    frame = _vertex_frame(mesh, a)
    for two_ring in (False, True):
        stencil = _collect_stencil(mesh, a, two_ring)
        if len(stencil) < 6:
            continue
        rel = mesh.vertices[stencil] - origin
        xi_eta = rel @ frame[:2].T
        heights = rel @ frame[2]
        radius = float(np.linalg.norm(xi_eta, axis=1).max())
        if radius <= 0.0:
            continue
        design = _quadratic_design(xi_eta, radius)
        u, s, vt = np.linalg.svd(design, full_matrices=False)
        if s[-1] <= 0.0 or s[0] / s[-1] > MAX_PATCH_CONDITION:
            continue
        pinv = (vt.T / s) @ u.T
        fit = pinv[1:3] / radius
        zx, zy = fit @ heights
        jac = np.stack([frame[0] + zx * frame[2],
                        frame[1] + zy * frame[2]], axis=1)
        transfer = jac @ np.linalg.inv(jac.T @ jac) @ fit
        return SurfacePatch(vertex=a, stencil=stencil, origin=origin,
                            frame=frame, xi_eta=xi_eta, heights=heights,
                            fit=fit, recovered_jac=jac, transfer=transfer)
    raise RankDeficientPatch(f"vertex {a}: quadratic fit rank-deficient "
                             "after 2-ring extension")


def pppr_vertex(mesh: SurfaceMesh, patch: SurfacePatch, nodal_values) -> Array:
    """Recovered ambient tangential gradient at the patch vertex."""
    vals = np.asarray(nodal_values, dtype=np.float64)
    return patch.transfer @ vals[patch.stencil]


class SurfacePatchSet:
    """All vertex patches of a mesh, packed for vectorized recovery.

    Vertices whose patch is rank deficient fall back to the area-weighted
    average of the incident element gradients (first-order accurate); their
    indices are kept in ``fallback_vertices`` and counted in reports.
    """

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        patches = []
        fallback = []
        for a in range(mesh.n_vertices):
            try:
                patches.append(build_surface_patch(mesh, a))
            except RankDeficientPatch:
                patches.append(None)
                fallback.append(a)
        self.fallback_vertices = np.array(fallback, dtype=np.int64)
        m_max = max((len(p.stencil) for p in patches if p is not None),
                    default=0)
        n_v = mesh.n_vertices
        self.indices = np.zeros((n_v, m_max), dtype=np.int64)
        self.weights = np.zeros((n_v, 3, m_max))
        self.recovered_jacs = np.zeros((n_v, 3, 2))
        for a, p in enumerate(patches):
            if p is None:
                continue
            m = len(p.stencil)
            self.indices[a, :m] = p.stencil
            self.weights[a, :, :m] = p.transfer
            self.recovered_jacs[a] = p.recovered_jac
        self.patches = patches
        if len(fallback):
            geo = MeshGeometry(mesh, None)
            self._fb_geo = geo
            areas = mesh.tri_areas
            self._fb_tris = [mesh.vertex_triangles(a) for a in fallback]
            self._fb_weights = [areas[t] / areas[t].sum() for t in self._fb_tris]

    @property
    def fallback_count(self) -> int:
        return len(self.fallback_vertices)

    def recover_slice(self, nodal: Array) -> Array:
        """Recovered gradients at every vertex for one nodal slice, (N_v, 3)."""
        gathered = nodal[self.indices]                       # (N_v, m_max)
        out = np.einsum("vkm,vm->vk", self.weights, gathered)
        if self.fallback_count:
            grads = self._fb_geo.element_gradients(nodal)    # (F, 3)
            for a, tris, w in zip(self.fallback_vertices, self._fb_tris,
                                  self._fb_weights):
                out[a] = w @ grads[tris]
        return out


def pppr_field(mesh: SurfaceMesh, field: SpaceTimeField,
               patches: SurfacePatchSet | None = None) -> Array:
    """Surface-gradient recovery of every time slice, (N+1, N_v, 3)."""
    ps = patches if patches is not None else SurfacePatchSet(mesh)
    out = np.empty((field.grid.n_nodes, mesh.n_vertices, 3))
    for i in range(field.grid.n_nodes):
        out[i] = ps.recover_slice(field.values[i])
    return out
