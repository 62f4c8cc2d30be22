import numpy as np
import pytest

from sonoscan.errors import NonDiskTopology
from sonoscan.mesh import (
    TriMesh,
    closest_point,
    closest_point_brute_force,
    closest_point_on_triangles,
    grid_mesh,
    hemisphere_mesh,
    load_ply,
    save_ply,
)


def flat_mesh(n=9, extent=0.2):
    xs = np.linspace(-extent / 2, extent / 2, n)
    return grid_mesh(xs, xs, lambda x, y: np.zeros_like(x))


def bumpy_mesh(n=15, extent=0.3, seed=3):
    rng = np.random.default_rng(seed)
    amp = 0.02
    a, b = rng.uniform(10, 25, 2)

    def height(x, y):
        return amp * np.sin(a * x) * np.cos(b * y)

    xs = np.linspace(-extent / 2, extent / 2, n)
    return grid_mesh(xs, xs, height)


def segment_distance_oracle(tri, p):
    """Independent closest-point check: plane projection clamped by edges."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    proj = p - np.dot(p - a, n) * n
    # barycentric of the projection
    m = np.column_stack([b - a, c - a])
    uv, *_ = np.linalg.lstsq(m, proj - a, rcond=None)
    if uv[0] >= 0 and uv[1] >= 0 and uv.sum() <= 1:
        return proj
    best, best_d = None, np.inf
    for s, e in ((a, b), (b, c), (c, a)):
        t = np.clip(np.dot(p - s, e - s) / np.dot(e - s, e - s), 0.0, 1.0)
        cand = s + t * (e - s)
        d = np.linalg.norm(p - cand)
        if d < best_d:
            best, best_d = cand, d
    return best


def test_point_triangle_matches_segment_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        tri = rng.normal(size=(3, 3))
        while np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])) < 1e-3:
            tri = rng.normal(size=(3, 3))
        p = rng.normal(size=3) * 2.0
        feet, _ = closest_point_on_triangles(tri[None], p)
        oracle = segment_distance_oracle(tri, p)
        assert np.allclose(feet[0], oracle, atol=1e-9)


def test_closest_point_on_vertex_and_face():
    mesh = flat_mesh()
    k = 12
    hit = closest_point(mesh, mesh.vertices[k])
    assert abs(hit.signed_distance) < 1e-12
    assert np.allclose(hit.point, mesh.vertices[k], atol=1e-12)

    centroid = mesh.vertices[mesh.faces[5]].mean(axis=0)
    h = 0.035
    above = closest_point(mesh, centroid + [0, 0, h])
    assert np.isclose(above.signed_distance, h, atol=1e-12)
    assert np.allclose(above.point, centroid, atol=1e-12)
    below = closest_point(mesh, centroid - [0, 0, h])
    assert np.isclose(below.signed_distance, -h, atol=1e-12)


def test_bvh_agrees_with_brute_force():
    rng = np.random.default_rng(7)
    for mesh in (flat_mesh(7), bumpy_mesh(11), hemisphere_mesh(0.05, 0.16, 0.02)):
        assert mesh.n_faces <= 500
        for _ in range(300):
            p = rng.uniform(-0.12, 0.12, 3)
            fast = closest_point(mesh, p)
            slow = closest_point_brute_force(mesh, p)
            assert np.allclose(fast.point, slow.point, atol=1e-9)
            assert np.isclose(fast.signed_distance, slow.signed_distance, atol=1e-9)


def test_hint_face_does_not_change_result():
    mesh = bumpy_mesh()
    rng = np.random.default_rng(13)
    hint = 0
    for _ in range(200):
        p = rng.uniform(-0.2, 0.2, 3)
        fast = closest_point(mesh, p, hint_face=hint)
        slow = closest_point_brute_force(mesh, p)
        assert np.allclose(fast.point, slow.point, atol=1e-9)
        hint = fast.face


def test_signed_distance_is_lipschitz():
    mesh = bumpy_mesh()
    rng = np.random.default_rng(5)
    for _ in range(200):
        p1 = rng.uniform(-0.1, 0.1, 3)
        p2 = p1 + rng.normal(scale=0.02, size=3)
        d1 = closest_point(mesh, p1).signed_distance
        d2 = closest_point(mesh, p2).signed_distance
        assert abs(d1 - d2) <= np.linalg.norm(p1 - p2) + 1e-12


def test_vertex_normals_flat_grid():
    mesh = flat_mesh()
    assert np.allclose(mesh.vertex_normals, np.tile([0, 0, 1.0], (mesh.n_vertices, 1)), atol=1e-12)
    assert np.allclose(np.linalg.norm(mesh.vertex_normals, axis=1), 1.0, atol=1e-12)


def test_boundary_loop_of_grid():
    n = 5
    mesh = flat_mesh(n)
    assert len(mesh.boundary) == 4 * (n - 1)
    assert mesh.boundary[0] == 0  # canonical start


def test_closed_surface_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    with pytest.raises(NonDiskTopology):
        TriMesh(verts, faces)


def test_bowtie_rejected():
    verts = np.array([
        [0, 0, 0], [1, 0, 0], [0, 1, 0],
        [-1, 0, 0], [0, -1, 0],
    ], dtype=float)
    faces = np.array([[0, 1, 2], [0, 3, 4]])
    with pytest.raises(NonDiskTopology):
        TriMesh(verts, faces)


def test_inconsistent_winding_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0.0]])
    faces = np.array([[0, 1, 2], [0, 3, 2]])  # second face wound backwards
    with pytest.raises(NonDiskTopology):
        TriMesh(verts, faces)


def test_degenerate_face_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2]])
    with pytest.raises(ValueError):
        TriMesh(verts, faces)


def test_ply_roundtrip(tmp_path):
    mesh = bumpy_mesh(7)
    uv = np.random.default_rng(2).uniform(size=(mesh.n_vertices, 2))
    path = tmp_path / "patch.ply"
    save_ply(path, mesh, uv)
    loaded, uv_back = load_ply(path)
    assert np.allclose(loaded.vertices, mesh.vertices, atol=1e-7)
    assert np.array_equal(loaded.faces, mesh.faces)
    assert np.allclose(uv_back, uv, atol=1e-7)

    save_ply(path, mesh)
    _, no_uv = load_ply(path)
    assert no_uv is None
