"""P1 surface-FEM assembly in Riemannian-metric form.

Stiffness entries integrate (grad l_a)^T g_h^{-1} (grad l_b) sqrt(det g_h)
over the reference triangle; the integrand is constant for P1 elements, so
a one-point rule is exact.  Mass and load use the degree-4 rule.  Matrices
are returned as scipy CSR with canonical (sorted, deduplicated) structure,
which makes assembly deterministic.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .metric import MeshGeometry, QuadratureRule, triangle_rule, _all_element_arrays
from .surface import ImplicitSurface, SurfaceMesh

# gradients of the barycentric basis on the reference triangle
_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # (3, 2)


def _scatter(mesh: SurfaceMesh, blocks: np.ndarray) -> sp.csr_array:
    """Accumulate (F, 3, 3) local blocks into a global CSR matrix."""
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    mat = sp.coo_array((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: SurfaceMesh) -> sp.csr_array:
    """Stiffness matrix K of the Laplace-Beltrami form on the mesh."""
    jacs, g, g_inv, sqrt_det = _all_element_arrays(mesh)
    # (grad l_a)^T g_inv (grad l_b) * sqrt_det * |ref| with |ref| = 1/2
    core = np.einsum("ak,fkl,bl->fab", _REF_GRADS, g_inv, _REF_GRADS)
    blocks = 0.5 * sqrt_det[:, None, None] * core
    return _scatter(mesh, blocks)


def assemble_mass(mesh: SurfaceMesh) -> sp.csr_array:
    """Mass matrix M; per-element block (area/12) [[2,1,1],[1,2,1],[1,1,2]]."""
    _, _, _, sqrt_det = _all_element_arrays(mesh)
    base = (np.ones((3, 3)) + np.eye(3)) / 24.0  # sqrt_det = 2*area
    blocks = sqrt_det[:, None, None] * base
    return _scatter(mesh, blocks)


def assemble_load(mesh: SurfaceMesh, surf: ImplicitSurface, f_slice,
                  b_slice=None, rule: QuadratureRule | None = None,
                  geometry: MeshGeometry | None = None) -> np.ndarray:
    """Load vector of the lifted data f + b against the P1 basis.

    ``f_slice`` (and optionally ``b_slice``) are scalar fields on the exact
    surface, evaluated at the closest-point projections of the quadrature
    nodes: F[a] = sum_T int (f + b)(pi(x)) l_a sqrt(det g_h).
    """
    geo = geometry if geometry is not None else MeshGeometry(mesh, surf, rule)
    pts = geo.projected.reshape(-1, 3)
    vals = np.asarray(f_slice(pts), dtype=np.float64)
    if b_slice is not None:
        vals = vals + b_slice(pts)
    vals = vals.reshape(geo.quad_points.shape[:2])
    return load_from_quad_values(geo, vals)


def load_from_quad_values(geo: MeshGeometry, vals: np.ndarray) -> np.ndarray:
    """Load vector from data already sampled at quadrature nodes (F, n_q)."""
    weighted = vals * geo.weights                       # (F, n_q)
    contrib = np.einsum("fq,qa->fa", weighted, geo.basis)
    out = np.zeros(geo.mesh.n_vertices)
    np.add.at(out, geo.mesh.triangles.ravel(), contrib.ravel())
    return out


def load_operator(geo: MeshGeometry) -> sp.csr_array:
    """Sparse map from per-quadrature-node samples to the load vector.

    Row a collects l_a(q) * w_q * sqrt(det g_h) over all quadrature nodes of
    the elements touching vertex a; applying it to flattened (F * n_q,)
    samples equals ``load_from_quad_values``.  Used for the many per-time-
    slice loads of the space-time solve.
    """
    mesh = geo.mesh
    n_q = geo.rule.n_points
    f_idx = np.arange(mesh.n_triangles * n_q).reshape(mesh.n_triangles, n_q)
    rows = np.repeat(mesh.triangles[:, None, :], n_q, axis=1).ravel()
    cols = np.repeat(f_idx[:, :, None], 3, axis=2).ravel()
    vals = (geo.weights[:, :, None] * geo.basis[None, :, :]).ravel()
    mat = sp.coo_array((vals, (rows, cols)),
                       shape=(mesh.n_vertices, mesh.n_triangles * n_q)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def export_matrix_market(matrix, path) -> None:
    """Write a symmetric operator in MatrixMarket coordinate format."""
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_array(matrix), symmetry="symmetric")
