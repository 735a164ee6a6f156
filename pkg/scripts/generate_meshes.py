"""Generate the committed coarse OFF meshes for the file-based benchmarks.

Development tool, not part of the package: extracts an isosurface with
marching cubes, welds duplicate vertices, then improves the triangulation
by interleaving intrinsic-Delaunay edge flips with curvature-weighted
tangential Lloyd smoothing (re-projecting exactly each round).  The
curvature weighting mimics feature-adaptive meshers: vertices migrate
toward tightly curved regions.  Run from the repo root:

    python scripts/generate_meshes.py
"""

import sys

import numpy as np
from skimage.measure import marching_cubes

sys.path.insert(0, "src")

from tsfem.benchmarks import bent_sphere_surface, ellipsoid_like_surface
from tsfem.surface import SurfaceMesh, orient_outward, project_points, write_off


def extract(surf, lo, hi, n):
    axes = [np.linspace(lo[k], hi[k], n[k]) for k in range(3)]
    grid = np.meshgrid(*axes, indexing="ij")
    vol = surf.phi(np.stack(grid, axis=-1))
    spacing = [(hi[k] - lo[k]) / (n[k] - 1) for k in range(3)]
    verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=spacing)
    verts = verts + np.asarray(lo)
    verts = np.round(verts, 9)
    uniq, inverse = np.unique(verts, axis=0, return_inverse=True)
    faces = inverse[faces]
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
                  & (faces[:, 0] != faces[:, 2])]
    return uniq, faces


def max_curvature(surf, pts):
    """Largest absolute principal curvature from the level-set Hessian."""
    g = surf.grad_phi(pts)
    gn = np.linalg.norm(g, axis=-1, keepdims=True)
    n = g / gn
    H = surf.hess_phi(pts) / gn[..., None]
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    S = P @ H @ P
    ev = np.linalg.eigvalsh(S)
    return np.abs(ev).max(axis=-1)


def delaunay_flips(verts, faces, passes=6):
    """Flip edges violating the opposite-angle (Delaunay) criterion."""
    for _ in range(passes):
        mesh = SurfaceMesh(verts, faces)
        faces = mesh.triangles.copy()
        flipped = 0
        locked = set()
        edge_set = {tuple(e) for e in mesh.edges}
        for e, (a, b) in enumerate(mesh.edges):
            f0, f1 = mesh.edge_tris[e]
            if f0 in locked or f1 in locked:
                continue
            c = int(faces[f0].sum() - a - b)
            d = int(faces[f1].sum() - a - b)
            key = (min(c, d), max(c, d))
            if key in edge_set:
                continue
            v = mesh.vertices

            def angle(p, q, r):  # angle at p in triangle (p, q, r)
                u1, u2 = v[q] - v[p], v[r] - v[p]
                cosv = u1 @ u2 / (np.linalg.norm(u1) * np.linalg.norm(u2))
                return np.arccos(np.clip(cosv, -1.0, 1.0))

            if angle(c, a, b) + angle(d, a, b) <= np.pi + 1e-3:
                continue
            # orientation-preserving flip of (a,b): rewrite both triangles
            t0 = list(faces[f0])
            i = t0.index(a)
            if t0[(i + 1) % 3] != b:   # ensure f0 traverses a->b
                a, b = b, a
            faces[f0] = [a, d, c]
            faces[f1] = [b, c, d]
            locked.update((f0, f1))
            edge_set.add(key)
            flipped += 1
        if flipped == 0:
            break
    return SurfaceMesh(verts, faces).triangles.copy()


def relax(surf, verts, faces, rounds=40, adapt=1.0):
    """Curvature-weighted tangential Lloyd smoothing with exact projection."""
    verts = project_points(surf, verts)
    mesh = SurfaceMesh(verts, faces)
    for it in range(rounds):
        v = mesh.vertices.copy()
        w = max_curvature(surf, v) ** adapt
        acc = np.zeros_like(v)
        wsum = np.zeros(len(v))
        for a, b in mesh.edges:
            acc[a] += w[b] * v[b]
            acc[b] += w[a] * v[a]
            wsum[a] += w[b]
            wsum[b] += w[a]
        centroid = acc / wsum[:, None]
        n = surf.unit_normal(v)
        d = centroid - v
        tangential = d - np.einsum("ij,ij->i", d, n)[:, None] * n
        moved = project_points(surf, v + 0.6 * tangential)
        faces = mesh.triangles.copy()
        if it % 5 == 4:
            faces = delaunay_flips(moved, faces, passes=3)
        mesh = SurfaceMesh(moved, faces)
    return mesh


def build(name, surf, lo, hi, n, adapt):
    verts, faces = extract(surf, lo, hi, n)
    faces = delaunay_flips(project_points(surf, verts), faces)
    mesh = relax(surf, verts, faces, rounds=50, adapt=adapt)
    faces = delaunay_flips(mesh.vertices.copy(), mesh.triangles.copy(), passes=4)
    mesh = SurfaceMesh(mesh.vertices.copy(), faces)
    mesh = orient_outward(mesh, surf)
    print(f"{name}: N_v={mesh.n_vertices} tris={mesh.n_triangles} "
          f"h={mesh.max_edge_length():.3f} "
          f"regularity={mesh.shape_regularity():.2f}")
    write_off(mesh, f"src/tsfem/meshes/{name}.off")


if __name__ == "__main__":
    build("ex2_coarse", ellipsoid_like_surface(),
          (-2.25, -1.3, -1.0), (2.25, 1.3, 1.0), (34, 20, 16), adapt=0.5)
    build("ex3_coarse", bent_sphere_surface(),
          (-1.3, -1.3, -1.3), (2.3, 1.3, 1.3), (15, 12, 12), adapt=0.6)
