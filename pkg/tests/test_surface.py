import numpy as np
import pytest

from oracles import torus_closest_point
from conftest import doubled_triangle, octahedron

from tsfem.errors import DegenerateGradient, NonConvergence
from tsfem.surface import (ImplicitSurface, diagnostics, first_order_project,
                           make_torus_mesh, orient_outward, project_point,
                           project_points, read_off, refine_project,
                           subdivide, torus_surface, write_off)


def squared_torus(R=4.0, r=1.0):
    """Same zero set as the torus but a non-distance level set: preserves
    genuine residuals under single-step projection."""

    def phi(x):
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        return (s - R) ** 2 + x[..., 2] ** 2 - r ** 2

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        out = np.empty_like(x)
        f = 2.0 * (s - R) / s
        out[..., 0] = f * x[..., 0]
        out[..., 1] = f * x[..., 1]
        out[..., 2] = 2.0 * x[..., 2]
        return out

    def hess(x):
        x = np.asarray(x, dtype=np.float64)
        s = np.hypot(x[..., 0], x[..., 1])
        H = np.zeros(x.shape + (3,))
        x1, x2 = x[..., 0], x[..., 1]
        H[..., 0, 0] = 2.0 - 2.0 * R * x2 ** 2 / s ** 3
        H[..., 1, 1] = 2.0 - 2.0 * R * x1 ** 2 / s ** 3
        H[..., 0, 1] = H[..., 1, 0] = 2.0 * R * x1 * x2 / s ** 3
        H[..., 2, 2] = 2.0
        return H

    return ImplicitSurface(phi, grad, hess, name="squared-torus")


class TestProjection:
    def test_analytic_examples(self, torus):
        np.testing.assert_allclose(project_point(torus, [5.5, 0, 0]),
                                   [5.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(project_point(torus, [4.0, 0, 0.5]),
                                   [4.0, 0.0, 1.0], atol=1e-12)

    def test_fixed_point_on_surface(self, torus):
        x = np.array([5.0, 0.0, 0.0])
        np.testing.assert_allclose(project_point(torus, x), x, atol=1e-13)

    def test_matches_closed_form_oracle(self, torus):
        rng = np.random.default_rng(7)
        th = rng.uniform(0, 2 * np.pi, 200)
        ps = rng.uniform(0, 2 * np.pi, 200)
        rr = rng.uniform(0.2, 1.7, 200)
        rho = 4.0 + rr * np.cos(ps)
        pts = np.stack([rho * np.cos(th), rho * np.sin(th),
                        rr * np.sin(ps)], axis=-1)
        got = project_points(torus, pts)
        np.testing.assert_allclose(got, torus_closest_point(pts), atol=1e-9)

    def test_postconditions(self, torus):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, (50, 3)) * [0.8, 0.8, 0.4] + [4.0, 0.0, 0.0]
        p = project_points(torus, pts)
        scale = 1.0 + np.linalg.norm(p, axis=1)
        assert np.all(np.abs(torus.phi(p)) <= 1e-12 * scale)
        n = torus.unit_normal(p)
        d = p - pts
        tang = d - np.einsum("ij,ij->i", d, n)[:, None] * n
        dn = np.linalg.norm(d, axis=1)
        ok = (dn <= 1e-12) | (np.linalg.norm(tang, axis=1) <= 1e-8 * dn + 1e-12)
        assert np.all(ok)

    def test_degenerate_gradient_raises(self):
        sphere = ImplicitSurface(
            lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 1.0,
            lambda x: 2.0 * np.asarray(x, dtype=np.float64),
            lambda x: np.broadcast_to(2 * np.eye(3),
                                      np.asarray(x).shape[:-1] + (3, 3)))
        with pytest.raises(DegenerateGradient):
            project_point(sphere, [0.0, 0.0, 0.0])

    def test_nonconvergence_with_tiny_budget(self):
        from tsfem.benchmarks import bent_sphere_surface
        surf = bent_sphere_surface()
        # near the focal set of the high-curvature band: one iteration is
        # far from meeting the closest-point condition
        with pytest.raises(NonConvergence):
            project_points(surf, np.array([[1.08, 0.003, 0.87]]), max_iter=1)


class TestTorusMesh:
    def test_counts_200(self, torus_mesh_200):
        assert torus_mesh_200.n_vertices == 200
        assert torus_mesh_200.n_triangles == 400
        assert torus_mesh_200.n_edges == 600

    def test_minimal_grid(self):
        mesh = make_torus_mesh(3, 3, 4.0, 1.0)
        assert mesh.n_vertices == 9
        assert mesh.n_triangles == 18
        # closed manifold is enforced at construction; spot-check anyway
        assert mesh.edge_tris.min() >= 0

    def test_h_halves_with_doubled_grid(self, torus_mesh_200):
        fine = make_torus_mesh(40, 20, 4.0, 1.0)
        ratio = fine.max_edge_length() / torus_mesh_200.max_edge_length()
        assert 0.45 <= ratio <= 0.55

    def test_vertices_on_surface(self, torus, torus_mesh_200):
        assert np.max(np.abs(torus.phi(torus_mesh_200.vertices))) < 1e-12

    def test_orientation_outward(self, torus, torus_mesh_200):
        centroids = torus_mesh_200.vertices[torus_mesh_200.triangles].mean(axis=1)
        agree = np.einsum("ij,ij->i", torus_mesh_200.tri_normals,
                          torus.grad_phi(centroids))
        assert np.all(agree > 0)

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError):
            make_torus_mesh(2, 3, 4.0, 1.0)


class TestRefinement:
    def test_euler_count(self, torus, torus_mesh_200):
        fine = refine_project(torus_mesh_200, torus, order="exact")
        assert fine.n_vertices == 200 + 600
        assert fine.n_triangles == 4 * 400

    def test_h_halves_under_exact_refinement(self, torus, torus_mesh_200):
        mesh = torus_mesh_200
        for _ in range(2):
            fine = refine_project(mesh, torus, order="exact")
            ratio = fine.max_edge_length() / mesh.max_edge_length()
            assert abs(ratio - 0.5) < 0.05
            mesh = fine

    def test_on_surface_vertices_fixed(self, torus, torus_mesh_200):
        fine = refine_project(torus_mesh_200, torus, order="exact")
        np.testing.assert_allclose(fine.vertices[:200],
                                   torus_mesh_200.vertices, atol=1e-12)

    def test_first_order_distance_slope(self):
        surf = squared_torus()
        mesh = make_torus_mesh(10, 5, 4.0, 1.0)
        hs, dists = [], []
        for _ in range(3):
            mesh = refine_project(mesh, surf, order="first_order")
            d = diagnostics(mesh, surf)
            hs.append(d.h)
            dists.append(max(d.max_vertex_distance, 1e-16))
        slope = np.polyfit(np.log(hs), np.log(dists), 1)[0]
        assert slope >= 1.9
        # constant stays bounded across refinements
        consts = np.array(dists) / np.array(hs) ** 2
        assert consts[-1] <= 2.0 * max(consts[0], 1e-12)

    def test_manifold_preserved(self, torus, torus_mesh_coarse):
        fine = refine_project(torus_mesh_coarse, torus, order="first_order")
        # construction would have raised otherwise; degrees are all 2
        assert fine.n_edges * 2 == 3 * fine.n_triangles


class TestDiagnostics:
    def test_flat_grids_have_zero_deviation(self, flat_octa_mesh):
        sphere = ImplicitSurface(
            lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 1.0,
            lambda x: 2.0 * np.asarray(x, dtype=np.float64),
            lambda x: np.broadcast_to(2 * np.eye(3),
                                      np.asarray(x).shape[:-1] + (3, 3)))
        d = diagnostics(flat_octa_mesh, sphere)
        # pairs interior to a flat uniformly subdivided face are exact
        # parallelograms; only pairs across original octahedron edges are not
        zero = np.sum(d.parallelogram_deviation < 1e-14)
        assert zero >= flat_octa_mesh.n_edges // 2

    def test_structured_torus_deviation_shrinks(self, torus):
        devs = []
        for n in (10, 20, 40):
            mesh = make_torus_mesh(n, n // 2, 4.0, 1.0)
            d = diagnostics(mesh, torus)
            assert d.max_parallelogram_deviation <= 2.0 * d.h
            devs.append(d.max_parallelogram_deviation)
        assert devs[2] < devs[1] < devs[0]

    def test_on_surface_vertex_distance(self, torus, torus_mesh_coarse):
        d = diagnostics(torus_mesh_coarse, torus)
        assert d.max_vertex_distance <= 1e-10
        assert d.h == pytest.approx(torus_mesh_coarse.max_edge_length())
        assert np.all(d.parallelogram_deviation >= 0.0)


class TestMeshValidation:
    def test_open_mesh_rejected(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
        with pytest.raises(ValueError, match="closed 2-manifold"):
            from tsfem.surface import SurfaceMesh
            SurfaceMesh(verts, [[0, 1, 2]])

    def test_bad_index_rejected(self):
        from tsfem.surface import SurfaceMesh
        with pytest.raises(ValueError, match="out of range"):
            SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]])

    def test_rings_consistent(self, torus_mesh_coarse):
        mesh = torus_mesh_coarse
        for a in (0, 7, 23):
            ring = set(int(b) for b in mesh.vertex_ring(a))
            from_tris = set()
            for f in mesh.vertex_triangles(a):
                from_tris.update(int(v) for v in mesh.triangles[f] if v != a)
            assert ring == from_tris

    def test_immutable_arrays(self, torus_mesh_coarse):
        with pytest.raises(ValueError):
            torus_mesh_coarse.vertices[0, 0] = 99.0


class TestOffIO:
    def test_roundtrip(self, tmp_path, torus_mesh_coarse):
        path = tmp_path / "mesh.off"
        write_off(torus_mesh_coarse, path)
        back = read_off(path)
        np.testing.assert_array_equal(back.triangles, torus_mesh_coarse.triangles)
        np.testing.assert_allclose(back.vertices, torus_mesh_coarse.vertices,
                                   rtol=0, atol=0)

    def test_rejects_non_off(self, tmp_path):
        path = tmp_path / "bad.off"
        path.write_text("PLY\n3 1 0\n")
        with pytest.raises(ValueError, match="not an OFF"):
            read_off(path)

    def test_packaged_meshes_are_valid(self):
        from importlib import resources
        from tsfem.benchmarks import make_benchmark
        for name in ("ex2", "ex3"):
            prob = make_benchmark(name)
            path = resources.files("tsfem").joinpath("meshes", prob.mesh_source)
            with resources.as_file(path) as p:
                mesh = read_off(p)
            # coarse vertices were projected exactly during generation
            assert np.max(np.abs(prob.surf.phi(mesh.vertices))) < 1e-10
            oriented = orient_outward(mesh, prob.surf)
            assert oriented.n_edges * 2 == 3 * oriented.n_triangles


def test_first_order_step_is_single_newton(torus):
    surf = squared_torus()
    x = np.array([5.3, 0.0, 0.2])
    got = first_order_project(surf, x)
    g = surf.grad_phi(x)
    expected = x - surf.phi(x) * g / (g @ g)
    np.testing.assert_allclose(got, expected, rtol=1e-14)


def test_subdivide_keeps_flat_faces():
    mesh = subdivide(octahedron())
    # all child triangles of a face stay in the face plane
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.max(np.abs(np.abs(c).sum(axis=1) - 1.0)) > 0  # not projected
    assert mesh.n_triangles == 32
