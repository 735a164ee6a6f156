"""Manufactured benchmark problems on three closed surfaces.

All three use the exact solution u(t, x) = x1 x2 e^t, so the source is
f = -e^t (x1 x2 + Lap_g(x1 x2)) and the temporal Neumann data are
mu0 = x1 x2, mu1 = e x1 x2.  The surface Laplacian of the ambient
extension ubar is evaluated through the level-set identity

    Lap_g u = Lap(ubar) - n^T Hess(ubar) n - div(n) (n . grad(ubar)),

with n = grad(phi)/|grad(phi)|, which avoids chart-specific formulas; the
hand-coded grad(phi) and Hess(phi) of each surface are all that is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateGradient, UnknownBenchmark
from .surface import ImplicitSurface, torus_surface

Array = np.ndarray

E = float(np.e)


@dataclass(frozen=True)
class BenchmarkProblem:
    """Exact solution, derived data and mesh source of one test problem."""

    name: str
    surf: ImplicitSurface
    exact_u: Callable          # (t, pts) -> (n,)
    exact_dt_u: Callable       # (t, pts) -> (n,)
    exact_grad_g_u: Callable   # (t, pts) -> (n, 3)
    f: Callable                # (t, pts) -> (n,)
    mu0: Callable              # (pts) -> (n,)
    mu1: Callable              # (pts) -> (n,)
    mesh_source: str           # "torus" or a packaged OFF resource name
    sample_box: tuple          # bounding box for random surface sampling


def _div_normal(surf: ImplicitSurface, pts: Array) -> Array:
    """div(grad phi / |grad phi|) = (Lap phi - n^T Hess(phi) n) / |grad phi|."""
    g = surf.grad_phi(pts)
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn < 1e-10):
        raise DegenerateGradient("grad_phi vanishes in div(normal)")
    h = surf.hess_phi(pts)
    n = g / gn[..., None]
    lap = np.trace(h, axis1=-2, axis2=-1)
    nhn = np.einsum("...i,...ij,...j->...", n, h, n)
    return (lap - nhn) / gn


def surface_laplacian_levelset(surf: ImplicitSurface, grad_u, hess_u,
                               pts: Array) -> Array:
    """Laplace-Beltrami of an ambient function at on-surface points.

    ``grad_u(pts)`` and ``hess_u(pts)`` are the ambient gradient and Hessian
    of the extension; points must lie on the zero level set.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n = surf.unit_normal(pts)
    gu = np.asarray(grad_u(pts), dtype=np.float64)
    hu = np.asarray(hess_u(pts), dtype=np.float64)
    lap = np.trace(hu, axis1=-2, axis2=-1)
    nhn = np.einsum("...i,...ij,...j->...", n, hu, n)
    ndotg = np.einsum("...i,...i->...", n, gu)
    return lap - nhn - _div_normal(surf, pts) * ndotg


def _xy_laplacian(surf: ImplicitSurface, pts: Array) -> Array:
    """Lap_g of the coordinate product x1 x2 restricted to the surface."""
    hess = np.zeros((3, 3))
    hess[0, 1] = hess[1, 0] = 1.0

    def grad_u(p):
        return np.stack([p[..., 1], p[..., 0], np.zeros(p.shape[:-1])], axis=-1)

    def hess_u(p):
        return np.broadcast_to(hess, p.shape[:-1] + (3, 3))

    return surface_laplacian_levelset(surf, grad_u, hess_u, pts)


def ellipsoid_like_surface() -> ImplicitSurface:
    """x1^2/4 + x2^2 + 4 x3^2 / (1 + sin(pi x1)/2)^2 - 1 = 0."""

    def _w(x1):
        return 1.0 + 0.5 * np.sin(np.pi * x1)

    def phi(x):
        x = np.asarray(x, dtype=np.float64)
        return (0.25 * x[..., 0] ** 2 + x[..., 1] ** 2
                + 4.0 * x[..., 2] ** 2 / _w(x[..., 0]) ** 2 - 1.0)

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        w = _w(x1)
        wp = 0.5 * np.pi * np.cos(np.pi * x1)
        out = np.empty_like(x)
        out[..., 0] = 0.5 * x1 - 8.0 * x3 ** 2 * wp / w ** 3
        out[..., 1] = 2.0 * x2
        out[..., 2] = 8.0 * x3 / w ** 2
        return out

    def hess(x):
        x = np.asarray(x, dtype=np.float64)
        x1, x3 = x[..., 0], x[..., 2]
        w = _w(x1)
        wp = 0.5 * np.pi * np.cos(np.pi * x1)
        wpp = -0.5 * np.pi ** 2 * np.sin(np.pi * x1)
        H = np.zeros(x.shape + (3,))
        H[..., 0, 0] = 0.5 - 8.0 * x3 ** 2 * (wpp / w ** 3 - 3.0 * wp ** 2 / w ** 4)
        H[..., 0, 2] = H[..., 2, 0] = -16.0 * x3 * wp / w ** 3
        H[..., 1, 1] = 2.0
        H[..., 2, 2] = 8.0 / w ** 2
        return H

    return ImplicitSurface(phi, grad, hess, name="ellipsoid-like")


def bent_sphere_surface() -> ImplicitSurface:
    """(x1 - x3^2)^2 + x2^2 + x3^2 - 1 = 0."""

    def phi(x):
        x = np.asarray(x, dtype=np.float64)
        p = x[..., 0] - x[..., 2] ** 2
        return p ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2 - 1.0

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        p = x[..., 0] - x[..., 2] ** 2
        out = np.empty_like(x)
        out[..., 0] = 2.0 * p
        out[..., 1] = 2.0 * x[..., 1]
        out[..., 2] = 2.0 * x[..., 2] * (1.0 - 2.0 * p)
        return out

    def hess(x):
        x = np.asarray(x, dtype=np.float64)
        p = x[..., 0] - x[..., 2] ** 2
        H = np.zeros(x.shape + (3,))
        H[..., 0, 0] = 2.0
        H[..., 0, 2] = H[..., 2, 0] = -4.0 * x[..., 2]
        H[..., 1, 1] = 2.0
        H[..., 2, 2] = 2.0 - 4.0 * p + 8.0 * x[..., 2] ** 2
        return H

    return ImplicitSurface(phi, grad, hess, name="bent-sphere")


def make_benchmark(name: str) -> BenchmarkProblem:
    """Benchmark problem by name: "torus", "ex2" or "ex3"."""
    if name == "torus":
        surf = torus_surface(4.0, 1.0)
        mesh_source = "torus"
        box = ((-5.2, -5.2, -1.2), (5.2, 5.2, 1.2))
    elif name == "ex2":
        surf = ellipsoid_like_surface()
        mesh_source = "ex2_coarse.off"
        box = ((-2.2, -1.2, -0.9), (2.2, 1.2, 0.9))
    elif name == "ex3":
        surf = bent_sphere_surface()
        mesh_source = "ex3_coarse.off"
        box = ((-1.2, -1.2, -1.2), (2.2, 1.2, 1.2))
    else:
        raise UnknownBenchmark(f"no benchmark named {name!r}")

    def exact_u(t, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts[..., 0] * pts[..., 1] * np.exp(t)

    def exact_dt_u(t, pts):
        return exact_u(t, pts)

    def exact_grad_g_u(t, pts):
        pts = np.asarray(pts, dtype=np.float64)
        n = surf.unit_normal(pts)
        amb = np.stack([pts[..., 1], pts[..., 0],
                        np.zeros(pts.shape[:-1])], axis=-1)
        tang = amb - np.einsum("...i,...i->...", n, amb)[..., None] * n
        return np.exp(t) * tang

    def f(t, pts):
        pts = np.asarray(pts, dtype=np.float64)
        xy = pts[..., 0] * pts[..., 1]
        return -np.exp(t) * (xy + _xy_laplacian(surf, pts))

    def mu0(pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts[..., 0] * pts[..., 1]

    def mu1(pts):
        return E * mu0(pts)

    return BenchmarkProblem(
        name=name, surf=surf, exact_u=exact_u, exact_dt_u=exact_dt_u,
        exact_grad_g_u=exact_grad_g_u, f=f, mu0=mu0, mu1=mu1,
        mesh_source=mesh_source, sample_box=box)


def sample_surface_points(problem: BenchmarkProblem, count: int,
                          rng: np.random.Generator) -> Array:
    """Random points on the surface: rejection-sample the bounding box for
    seeds inside the tubular neighborhood, then project."""
    from .surface import project_points
    lo = np.asarray(problem.sample_box[0])
    hi = np.asarray(problem.sample_box[1])
    out = []
    have = 0
    while have < count:
        cand = lo + (hi - lo) * rng.random((4 * count, 3))
        g = problem.surf.grad_phi(cand)
        gn = np.linalg.norm(g, axis=1)
        est = np.abs(problem.surf.phi(cand)) / np.maximum(gn, 1e-12)
        keep = cand[(est < 0.15) & (gn > 1e-6)]
        if len(keep):
            out.append(project_points(problem.surf, keep))
            have += len(keep)
    return np.concatenate(out)[:count]
