"""Triangulated surface meshes and implicit exact-surface geometry.

A surface is described in two ways: exactly, as the zero level set of a
smooth function ``phi`` on ambient 3-space, and approximately, as a closed
triangle mesh whose vertices lie on (or near) that level set.  The bridge
between the two is the closest-point projection, implemented here as a
vectorized damped iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateGradient, NonConvergence

Array = np.ndarray


@dataclass(frozen=True)
class ImplicitSurface:
    """Level-set description of a smooth closed surface.

    ``phi``, ``grad_phi`` and ``hess_phi`` accept points of shape (..., 3)
    and return values of shape (...,), (..., 3) and (..., 3, 3).  The zero
    level set is the surface; ``grad_phi`` must not vanish in a tubular
    neighborhood of it.
    """

    phi: Callable[[Array], Array]
    grad_phi: Callable[[Array], Array]
    hess_phi: Callable[[Array], Array]
    name: str = "implicit"

    def unit_normal(self, x: Array) -> Array:
        """Outward unit normal field grad(phi)/|grad(phi)|."""
        g = self.grad_phi(x)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(norm < 1e-10):
            raise DegenerateGradient("grad_phi vanishes at a normal evaluation")
        return g / norm


class SurfaceMesh:
    """Closed triangulated 2-manifold embedded in 3-space.

    Vertices and triangles are immutable after construction.  Adjacency
    (edges, edge-to-triangle incidence, vertex rings) is built eagerly and
    validated: every edge must be shared by exactly two triangles.
    """

    def __init__(self, vertices, triangles):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (N_v, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (N_t, 3)")
        if t.min(initial=0) < 0 or t.max(initial=-1) >= len(v):
            raise ValueError("triangle vertex index out of range")
        self.vertices = v
        self.triangles = t
        self._build_adjacency()
        self._check_areas()
        for arr in (self.vertices, self.triangles, self.edges,
                    self.edge_tris, self.tri_edges):
            arr.flags.writeable = False

    # -- construction helpers -------------------------------------------------

    def _build_adjacency(self):
        t = self.triangles
        # all directed edges; undirected key = sorted pair
        raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        undirected = np.sort(raw, axis=1)
        edges, inverse, counts = np.unique(
            undirected, axis=0, return_inverse=True, return_counts=True)
        if not np.all(counts == 2):
            bad = int(np.sum(counts != 2))
            raise ValueError(f"mesh is not a closed 2-manifold: {bad} edges "
                             "without exactly two incident triangles")
        self.edges = edges
        n_tri = len(t)
        # tri_edges[f, k] = edge index opposite local slot k ordering (01,12,20)
        self.tri_edges = inverse.reshape(3, n_tri).T.copy()
        # edge -> the two incident triangles
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        tri_of_raw = np.tile(np.arange(n_tri), 3)
        order = np.argsort(inverse, kind="stable")
        edge_tris[:, 0] = tri_of_raw[order[0::2]]
        edge_tris[:, 1] = tri_of_raw[order[1::2]]
        self.edge_tris = edge_tris
        # vertex -> neighbor vertices (1-ring), CSR layout
        both = np.concatenate([edges, edges[:, ::-1]])
        order = np.argsort(both[:, 0], kind="stable")
        nbr_counts = np.bincount(edges.ravel(), minlength=len(self.vertices))
        self._ring_offsets = np.concatenate([[0], np.cumsum(nbr_counts)])
        self._ring = both[order, 1]
        # vertex -> incident triangles, CSR layout (row-major ravel: entry i
        # of t.ravel() belongs to triangle i // 3)
        flat = t.ravel()
        order = np.argsort(flat, kind="stable")
        tri_counts = np.bincount(flat, minlength=len(self.vertices))
        self._vtri_offsets = np.concatenate([[0], np.cumsum(tri_counts)])
        self._vtri = order // 3

    def _check_areas(self):
        e1 = self.vertices[self.triangles[:, 1]] - self.vertices[self.triangles[:, 0]]
        e2 = self.vertices[self.triangles[:, 2]] - self.vertices[self.triangles[:, 0]]
        cross = np.cross(e1, e2)
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        if np.any(areas <= 0.0):
            raise ValueError("mesh contains a zero-area triangle")
        self.tri_areas = areas
        self.tri_normals = cross / (2.0 * areas[:, None])

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex_ring(self, a: int) -> Array:
        """Indices of the 1-ring neighbors of vertex ``a``."""
        return self._ring[self._ring_offsets[a]:self._ring_offsets[a + 1]]

    def vertex_triangles(self, a: int) -> Array:
        """Indices of the triangles incident to vertex ``a``."""
        return self._vtri[self._vtri_offsets[a]:self._vtri_offsets[a + 1]]

    def edge_lengths(self) -> Array:
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def max_edge_length(self) -> float:
        return float(self.edge_lengths().max())

    def total_area(self) -> float:
        return float(self.tri_areas.sum())

    def shape_regularity(self) -> float:
        """Worst circumradius / inradius ratio over all triangles."""
        v = self.vertices
        t = self.triangles
        a = np.linalg.norm(v[t[:, 1]] - v[t[:, 2]], axis=1)
        b = np.linalg.norm(v[t[:, 0]] - v[t[:, 2]], axis=1)
        c = np.linalg.norm(v[t[:, 0]] - v[t[:, 1]], axis=1)
        s = 0.5 * (a + b + c)
        inradius = self.tri_areas / s
        circumradius = a * b * c / (4.0 * self.tri_areas)
        return float((circumradius / inradius).max())


@dataclass
class MeshDiagnostics:
    """Geometric quality indicators of a mesh relative to its exact surface."""

    h: float
    max_vertex_distance: float
    parallelogram_deviation: Array  # one entry per interior edge
    irregular_area_fraction: float
    shape_regularity: float = field(default=0.0)

    @property
    def max_parallelogram_deviation(self) -> float:
        return float(self.parallelogram_deviation.max())


# ---------------------------------------------------------------------------
# Closest-point projection
# ---------------------------------------------------------------------------

def _grad_checked(surf: ImplicitSurface, q):
    g = surf.grad_phi(q)
    gn2 = np.einsum("ij,ij->i", g, g)
    if np.any(gn2 < 1e-20):
        raise DegenerateGradient("grad_phi below 1e-10 at an iterate")
    return g, gn2


def _to_level_set(surf: ImplicitSurface, p, scale, max_inner=20):
    """Damped normal-flow Newton until |phi| <= 1e-13 * scale."""
    for _ in range(max_inner):
        phi = surf.phi(p)
        if np.all(np.abs(phi) <= 1e-13 * scale):
            break
        g, gn2 = _grad_checked(surf, p)
        step = -(phi / gn2)[:, None] * g
        cand = p + step
        for _ in range(20):
            worse = np.abs(surf.phi(cand)) > np.abs(phi)
            if not np.any(worse):
                break
            step[worse] *= 0.5
            cand = p + step
        p = cand
    return p


def project_points(surf: ImplicitSurface, x, tol_phi=1e-12, tol_angle=1e-8,
                   max_iter=50):
    """Project points onto the zero level set of ``surf`` (closest points).

    Vectorized over the leading axes of ``x``.  The returned points p satisfy
    |phi(p)| <= tol_phi * (1 + |p|) and p - x is parallel to grad_phi(p)
    within tol_angle.  The distance to the foot point is minimized by
    projected gradient descent on the level set: damped normal-flow Newton
    steps keep the iterate on the surface, tangential pulls toward the
    point are backtracked whenever they fail to shrink the true distance
    (needed near focal regions), and a Newton solve of the stationarity
    system polishes the result quadratically.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x).copy()
    n = len(pts)
    scale = 1.0 + np.linalg.norm(pts, axis=1)

    p = _to_level_set(surf, pts.copy(), scale)
    dist = np.linalg.norm(p - pts, axis=1)

    # phase 1: monotone tangential descent of the distance on the surface
    newton_budget = min(12, max_iter)
    for _ in range(max_iter - newton_budget):
        g, gn2 = _grad_checked(surf, p)
        nrm = g / np.sqrt(gn2)[:, None]
        d = pts - p
        tang = d - np.einsum("ij,ij->i", d, nrm)[:, None] * nrm
        tn = np.linalg.norm(tang, axis=1)
        active = tn > np.maximum(tol_angle * dist, 1e-13 * scale)
        if not np.any(active):
            break
        step = np.where(active[:, None], tang, 0.0)
        cand = _to_level_set(surf, p + step, scale)
        for _ in range(10):
            worse = active & (np.linalg.norm(cand - pts, axis=1) >
                              dist + 1e-15 * scale)
            if not np.any(worse):
                break
            step[worse] *= 0.5
            cand = _to_level_set(surf, p + step, scale)
        p = cand
        dist = np.linalg.norm(p - pts, axis=1)

    # phase 2: Newton on the stationarity system [p - x + lam grad(phi); phi]
    lam = surf.phi(p) / _grad_checked(surf, p)[1]
    eye = np.eye(3)
    for _ in range(newton_budget):
        phi = surf.phi(p)
        g, gn2 = _grad_checked(surf, p)
        H = surf.hess_phi(p)
        res_p = p - pts + lam[:, None] * g
        done = (np.abs(phi) <= tol_phi * scale) & (
            np.linalg.norm(res_p, axis=1) <= tol_angle * np.maximum(dist, 1e-13))
        if np.all(done):
            break
        jac = np.empty((n, 4, 4))
        jac[:, :3, :3] = eye + lam[:, None, None] * H
        jac[:, :3, 3] = g
        jac[:, 3, :3] = g
        jac[:, 3, 3] = 0.0
        rhs = np.concatenate([res_p, phi[:, None]], axis=1)
        try:
            delta = np.linalg.solve(jac, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(
                "projection stationarity system became singular") from exc
        # damp: halve while the merit |phi| + |res_p| grows
        merit0 = np.abs(phi) + np.linalg.norm(res_p, axis=1)
        t = np.ones(n)
        for _ in range(25):
            p_try = p - t[:, None] * delta[:, :3]
            lam_try = lam - t * delta[:, 3]
            g_try = surf.grad_phi(p_try)
            merit = np.abs(surf.phi(p_try)) + np.linalg.norm(
                p_try - pts + lam_try[:, None] * g_try, axis=1)
            worse = (merit > merit0) & ~done
            if not np.any(worse):
                break
            t[worse] *= 0.5
        t[done] = 0.0
        p = p - t[:, None] * delta[:, :3]
        lam = lam - t * delta[:, 3]
        dist = np.linalg.norm(p - pts, axis=1)

    phi = surf.phi(p)
    g, gn2 = _grad_checked(surf, p)
    nrm = g / np.sqrt(gn2)[:, None]
    d = p - pts
    dn = np.linalg.norm(d, axis=1)
    tang = np.linalg.norm(d - np.einsum("ij,ij->i", d, nrm)[:, None] * nrm, axis=1)
    ok_phi = np.abs(phi) <= tol_phi * scale
    # the parallelism condition degenerates for points (nearly) on the
    # surface already; an absolutely tiny tangential component also counts
    ok_ang = (dn <= 1e-13 * scale) | (tang <= tol_angle * dn) | \
        (tang <= 1e-12 * scale)
    if not np.all(ok_phi & ok_ang):
        worst = float(np.max(np.abs(phi) / scale))
        raise NonConvergence(
            f"projection failed for {int(np.sum(~(ok_phi & ok_ang)))} point(s); "
            f"worst relative |phi| = {worst:.3e}")
    return p[0] if single else p


def project_point(surf: ImplicitSurface, x, **kwargs):
    """Closest point on the surface to a single ambient point ``x``."""
    return project_points(surf, np.asarray(x, dtype=np.float64), **kwargs)


def first_order_project(surf: ImplicitSurface, x):
    """Single normal-flow step x - phi(x) grad(phi)/|grad(phi)|^2."""
    x = np.asarray(x, dtype=np.float64)
    pts = np.atleast_2d(x)
    phi = surf.phi(pts)
    g = surf.grad_phi(pts)
    gn2 = np.einsum("ij,ij->i", g, g)
    if np.any(gn2 < 1e-20):
        raise DegenerateGradient("grad_phi below 1e-10")
    out = pts - (phi / gn2)[:, None] * g
    return out[0] if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# Mesh generation, refinement and diagnostics
# ---------------------------------------------------------------------------

def make_torus_mesh(n_major: int, n_minor: int, R: float, r: float) -> SurfaceMesh:
    """Structured torus mesh from an n_major x n_minor parameter grid.

    Vertices sit at angles (2 pi j / n_major, 2 pi k / n_minor) of the chart
    (theta, psi) -> ((R + r cos psi) cos theta, (R + r cos psi) sin theta,
    r sin psi); every parameter quad is split along the same diagonal.
    """
    if n_major < 3 or n_minor < 3:
        raise ValueError("need at least 3 subdivisions in each direction")
    theta = 2.0 * np.pi * np.arange(n_major) / n_major
    psi = 2.0 * np.pi * np.arange(n_minor) / n_minor
    tt, pp = np.meshgrid(theta, psi, indexing="ij")
    rho = R + r * np.cos(pp)
    verts = np.stack([rho * np.cos(tt), rho * np.sin(tt),
                      r * np.sin(pp)], axis=-1).reshape(-1, 3)

    jj, kk = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    v00 = (jj * n_minor + kk).ravel()
    v10 = (((jj + 1) % n_major) * n_minor + kk).ravel()
    v01 = (jj * n_minor + (kk + 1) % n_minor).ravel()
    v11 = (((jj + 1) % n_major) * n_minor + (kk + 1) % n_minor).ravel()
    tris = np.concatenate([
        np.stack([v00, v10, v11], axis=1),
        np.stack([v00, v11, v01], axis=1),
    ])
    mesh = SurfaceMesh(verts, tris)
    return orient_outward(mesh, torus_surface(R, r))


def orient_outward(mesh: SurfaceMesh, surf: ImplicitSurface) -> SurfaceMesh:
    """Flip triangles whose normal disagrees with grad(phi) at the centroid."""
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    agree = np.einsum("ij,ij->i", mesh.tri_normals, surf.grad_phi(centroids))
    if np.all(agree > 0):
        return mesh
    tris = mesh.triangles.copy()
    flip = agree < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return SurfaceMesh(mesh.vertices, tris)


def subdivide(mesh: SurfaceMesh) -> SurfaceMesh:
    """Flat 1-to-4 midpoint refinement (no projection)."""
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.concatenate([mesh.vertices, mids])
    return SurfaceMesh(verts, _split_triangles(mesh))


def _split_triangles(mesh: SurfaceMesh) -> np.ndarray:
    t = mesh.triangles
    n_old = mesh.n_vertices
    m01 = n_old + mesh.tri_edges[:, 0]
    m12 = n_old + mesh.tri_edges[:, 1]
    m20 = n_old + mesh.tri_edges[:, 2]
    return np.concatenate([
        np.stack([t[:, 0], m01, m20], axis=1),
        np.stack([t[:, 1], m12, m01], axis=1),
        np.stack([t[:, 2], m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])


def refine_project(mesh: SurfaceMesh, surf: ImplicitSurface,
                   order: str = "exact") -> SurfaceMesh:
    """Uniform 1-to-4 refinement with vertices moved toward the surface.

    Each triangle is split at its edge midpoints, then the chosen
    projection moves the vertices of the refined mesh: "exact" runs the
    full closest-point projection, "first_order" takes the single
    normal-flow step x - phi(x) grad(phi)/|grad(phi)|^2.  Applying the
    step to old vertices as well keeps the vertex-to-surface distance
    shrinking quadratically under repeated refinement (on-surface vertices
    are fixed points of either projection).
    """
    if order not in ("exact", "first_order"):
        raise ValueError(f"unknown projection order {order!r}")
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    verts = np.concatenate([mesh.vertices, mids])
    if order == "exact":
        verts = project_points(surf, verts)
    else:
        verts = first_order_project(surf, verts)
    return SurfaceMesh(verts, _split_triangles(mesh))


def diagnostics(mesh: SurfaceMesh, surf: ImplicitSurface,
                irregular_factor: float = 10.0) -> MeshDiagnostics:
    """Mesh-quality report: size, vertex distance to the surface, and the
    near-parallelogram statistic of adjacent triangle pairs.

    For the pair (T, T') sharing an edge, the deviation is the larger
    opposite-edge length mismatch of the quadrilateral they form, divided
    by the global mesh size h.  Pairs with deviation above
    ``irregular_factor * h`` count toward the irregular area fraction.
    """
    h = mesh.max_edge_length()
    projected = project_points(surf, mesh.vertices)
    max_dist = float(np.linalg.norm(projected - mesh.vertices, axis=1).max())

    v = mesh.vertices
    tris = mesh.triangles
    a = mesh.edges[:, 0]
    b = mesh.edges[:, 1]
    f0 = mesh.edge_tris[:, 0]
    f1 = mesh.edge_tris[:, 1]
    # the vertex opposite a shared edge is the triangle's index sum minus the
    # edge endpoints
    c = tris[f0].sum(axis=1) - a - b
    d = tris[f1].sum(axis=1) - a - b
    # quadrilateral a-c-b-d: opposite pairs (ac, bd) and (cb, da)
    ac = np.linalg.norm(v[a] - v[c], axis=1)
    bd = np.linalg.norm(v[b] - v[d], axis=1)
    cb = np.linalg.norm(v[c] - v[b], axis=1)
    da = np.linalg.norm(v[d] - v[a], axis=1)
    deviations = np.maximum(np.abs(ac - bd), np.abs(cb - da)) / h
    pair_areas = mesh.tri_areas[f0] + mesh.tri_areas[f1]

    flagged = deviations > irregular_factor * h
    frac = float(pair_areas[flagged].sum() / mesh.total_area())
    return MeshDiagnostics(
        h=h,
        max_vertex_distance=max_dist,
        parallelogram_deviation=deviations,
        irregular_area_fraction=frac,
        shape_regularity=mesh.shape_regularity(),
    )


# ---------------------------------------------------------------------------
# OFF file I/O
# ---------------------------------------------------------------------------

def read_off(path) -> SurfaceMesh:
    """Read an ASCII OFF file with triangular faces."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    cursor = 4  # skip edge count
    verts = np.array(tokens[cursor:cursor + 3 * nv], dtype=np.float64).reshape(nv, 3)
    cursor += 3 * nv
    tris = np.empty((nf, 3), dtype=np.int64)
    for f in range(nf):
        cnt = int(tokens[cursor])
        if cnt != 3:
            raise ValueError(f"{path}: face {f} is not a triangle")
        tris[f] = [int(tokens[cursor + 1]), int(tokens[cursor + 2]),
                   int(tokens[cursor + 3])]
        cursor += 4
    return SurfaceMesh(verts, tris)


def write_off(mesh: SurfaceMesh, path) -> None:
    """Write ``mesh`` as an ASCII OFF file."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")


# ---------------------------------------------------------------------------
# Built-in level sets (benchmark surfaces are defined in tsfem.benchmarks)
# ---------------------------------------------------------------------------

def torus_surface(R: float = 4.0, r: float = 1.0) -> ImplicitSurface:
    """Torus level set sqrt((sqrt(x1^2+x2^2) - R)^2 + x3^2) - r.

    This phi is the exact signed distance inside the tube |phi| < R - r.
    """

    def phi(x):
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        return np.hypot(s - R, x[..., 2]) - r

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        q = np.hypot(s - R, x[..., 2])
        out = np.empty_like(x)
        f = (s - R) / (q * s)
        out[..., 0] = f * x[..., 0]
        out[..., 1] = f * x[..., 1]
        out[..., 2] = x[..., 2] / q
        return out

    def hess(x):
        # phi = g(s, x3) with g(a,b) = sqrt((a-R)^2 + b^2); chain rule through
        # s(x1,x2) = sqrt(x1^2+x2^2)
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        a = s - R
        b = x[..., 2]
        q = np.hypot(a, b)
        g_a = a / q
        g_aa = b**2 / q**3
        g_ab = -a * b / q**3
        g_bb = a**2 / q**3
        ds = np.zeros(x.shape)
        ds[..., 0] = x[..., 0] / s
        ds[..., 1] = x[..., 1] / s
        H = np.zeros(x.shape + (3,))
        outer = ds[..., :, None] * ds[..., None, :]
        # D^2 s: (I_2 - ds ds^T)/s on the x1-x2 block
        d2s = -outer / s[..., None, None]
        d2s[..., 0, 0] += 1.0 / s
        d2s[..., 1, 1] += 1.0 / s
        d2s[..., 2, :] = 0.0
        d2s[..., :, 2] = 0.0
        e3 = np.zeros(x.shape)
        e3[..., 2] = 1.0
        H += g_aa[..., None, None] * outer
        H += g_ab[..., None, None] * (ds[..., :, None] * e3[..., None, :]
                                      + e3[..., :, None] * ds[..., None, :])
        H += g_bb[..., None, None] * (e3[..., :, None] * e3[..., None, :])
        H += g_a[..., None, None] * d2s
        return H

    return ImplicitSurface(phi, grad, hess, name=f"torus(R={R},r={r})")
