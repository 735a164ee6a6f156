"""Per-element parametric maps, discrete metric tensors and quadrature.

Every triangle is parametrized affinely from the reference triangle
{(xi, eta): xi, eta >= 0, xi + eta <= 1}; the Jacobian columns are the two
edge vectors from vertex 0.  The induced 2x2 Gram matrix is the discrete
metric of the element, and sqrt(det) is twice the triangle area.  Exact
surface data is transferred to the mesh by composing with the closest-point
projection at quadrature nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTriangle
from .surface import ImplicitSurface, SurfaceMesh, project_points

Array = np.ndarray


@dataclass(frozen=True)
class ElementGeometry:
    """Affine geometry of one embedded triangle."""

    jac: Array       # 3x2, columns = edge vectors from vertex 0
    g: Array         # 2x2 metric jac^T jac
    g_inv: Array     # 2x2 inverse metric
    sqrt_det: float  # sqrt(det g) = 2 * area


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on the reference triangle; weights sum to 1/2."""

    points: Array   # (n_q, 3) barycentric coordinates
    weights: Array  # (n_q,)
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


def triangle_rule(degree: int = 4) -> QuadratureRule:
    """Reference-triangle quadrature: degree 4 (6 points, default) or the
    cheap degree 2 edge-midpoint rule (3 points)."""
    if degree == 2:
        pts = np.array([[0.5, 0.5, 0.0],
                        [0.0, 0.5, 0.5],
                        [0.5, 0.0, 0.5]])
        wts = np.full(3, 1.0 / 6.0)
        return QuadratureRule(pts, wts, 2)
    if degree == 4:
        a1, w1 = 0.44594849091596488, 0.11169079483900573
        a2, w2 = 0.09157621350977074, 0.054975871827660935
        pts = np.array([
            [1 - 2 * a1, a1, a1], [a1, 1 - 2 * a1, a1], [a1, a1, 1 - 2 * a1],
            [1 - 2 * a2, a2, a2], [a2, 1 - 2 * a2, a2], [a2, a2, 1 - 2 * a2],
        ])
        wts = np.array([w1, w1, w1, w2, w2, w2])
        return QuadratureRule(pts, wts, 4)
    raise ValueError(f"no rule of degree {degree}")


def element_geometry(mesh: SurfaceMesh, tri_index: int) -> ElementGeometry:
    """Geometry of triangle ``tri_index``: Jacobian, metric, inverse, sqrt(det)."""
    jacs, g, g_inv, sqrt_det = _all_element_arrays(mesh)
    return ElementGeometry(jac=jacs[tri_index], g=g[tri_index],
                           g_inv=g_inv[tri_index],
                           sqrt_det=float(sqrt_det[tri_index]))


def _all_element_arrays(mesh: SurfaceMesh):
    """Vectorized per-element geometry, cached on the mesh instance."""
    cached = getattr(mesh, "_element_arrays", None)
    if cached is not None:
        return cached
    v = mesh.vertices[mesh.triangles]
    jacs = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # (F,3,2)
    g = np.einsum("fki,fkj->fij", jacs, jacs)
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    h2 = mesh.max_edge_length() ** 2
    if np.any(det <= (1e-14 * h2) ** 2):
        raise DegenerateTriangle("triangle with sqrt(det g) < 1e-14 h^2")
    sqrt_det = np.sqrt(det)
    g_inv = np.empty_like(g)
    g_inv[:, 0, 0] = g[:, 1, 1] / det
    g_inv[:, 1, 1] = g[:, 0, 0] / det
    g_inv[:, 0, 1] = -g[:, 0, 1] / det
    g_inv[:, 1, 0] = -g[:, 1, 0] / det
    arrays = (jacs, g, g_inv, sqrt_det)
    mesh._element_arrays = arrays
    return arrays


def exact_metric_torus(theta, psi, R: float, r: float) -> Array:
    """Exact first fundamental form of the torus chart at (theta, psi):
    diag((R + r cos(psi))^2, r^2).  Vectorized over theta/psi."""
    theta = np.asarray(theta, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    out = np.zeros(np.broadcast(theta, psi).shape + (2, 2))
    out[..., 0, 0] = (R + r * np.cos(psi)) ** 2
    out[..., 1, 1] = r ** 2
    return out


def lift_eval(surf: ImplicitSurface, f, x):
    """Evaluate exact-surface data at mesh points: f(project(x)).

    ``f`` takes points of shape (..., 3); ``x`` may be one point or an
    array of points lying in the tubular neighborhood of the surface.
    """
    return f(project_points(surf, np.asarray(x, dtype=np.float64)))


class MeshGeometry:
    """Precomputed quadrature-level geometry of a mesh/surface pair.

    Collects everything element loops need, already vectorized: the element
    Jacobians and metrics, the P1 basis values at quadrature nodes, the
    physical quadrature points, their closest-point projections onto the
    exact surface, and the combined quadrature weights
    w_q * sqrt(det g_h) per (element, node).
    """

    def __init__(self, mesh: SurfaceMesh, surf: ImplicitSurface | None,
                 rule: QuadratureRule | None = None):
        self.mesh = mesh
        self.surf = surf
        self.rule = rule if rule is not None else triangle_rule(4)
        self.jacs, self.g, self.g_inv, self.sqrt_det = _all_element_arrays(mesh)
        lam = self.rule.points                      # (n_q, 3) barycentric
        v = mesh.vertices[mesh.triangles]           # (F, 3, 3)
        self.quad_points = np.einsum("qa,fac->fqc", lam, v)
        self.weights = self.rule.weights[None, :] * self.sqrt_det[:, None]
        self.basis = lam                            # hat values at quad nodes
        self._projected = None

    @property
    def projected(self) -> Array:
        """Closest-point projections of all quadrature points, (F, n_q, 3)."""
        if self._projected is None:
            if self.surf is None:
                self._projected = self.quad_points
            else:
                flat = self.quad_points.reshape(-1, 3)
                self._projected = project_points(self.surf, flat).reshape(
                    self.quad_points.shape)
        return self._projected

    def integrate(self, values: Array) -> float:
        """Integrate per-(element, node) samples against the metric measure."""
        return float(np.sum(values * self.weights))

    def at_quad(self, nodal: Array) -> Array:
        """P1 interpolation of vertex values to quadrature nodes, (F, n_q)."""
        tri_vals = nodal[self.mesh.triangles]       # (F, 3)
        return np.einsum("qa,fa->fq", self.basis, tri_vals)

    def element_gradients(self, nodal: Array) -> Array:
        """Ambient embedding of the P1 tangential gradient per element.

        Returns (F, 3): jac g_inv [u1 - u0, u2 - u0] for each triangle, the
        constant surface gradient of the nodal field on that element.
        """
        tri_vals = nodal[self.mesh.triangles]
        dref = np.stack([tri_vals[:, 1] - tri_vals[:, 0],
                         tri_vals[:, 2] - tri_vals[:, 0]], axis=-1)  # (F, 2)
        return np.einsum("fik,fkl,fl->fi", self.jacs, self.g_inv, dref)
