"""Triangular surface meshes and closest-point queries.

Meshes are restricted to what the scanner actually produces: manifold,
consistently wound patches with disk topology (one boundary loop, genus
zero).  Queries run against an axis-aligned bounding-box tree built once at
construction; an exhaustive per-face path is kept for oracle checks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import NonDiskTopology

MIN_FACE_AREA = 1e-12
_LEAF_SIZE = 8


def closest_point_on_triangles(tri: np.ndarray, p: np.ndarray):
    """Closest point to p on each triangle of a (m, 3, 3) stack.

    Returns (feet (m, 3), bary (m, 3)).  Region classification follows the
    standard vertex/edge/face case split (Ericson), vectorised over faces.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    m = tri.shape[0]
    bary = np.zeros((m, 3))
    done = np.zeros(m, dtype=bool)

    def settle(mask, bu, bv, bw):
        newly = mask & ~done
        bary[newly, 0] = bu if np.isscalar(bu) else bu[newly]
        bary[newly, 1] = bv if np.isscalar(bv) else bv[newly]
        bary[newly, 2] = bw if np.isscalar(bw) else bw[newly]
        done[newly] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        settle((d1 <= 0.0) & (d2 <= 0.0), 1.0, 0.0, 0.0)
        settle((d3 >= 0.0) & (d4 <= d3), 0.0, 1.0, 0.0)
        v_ab = d1 / np.where(d1 - d3 == 0.0, 1.0, d1 - d3)
        settle((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), 1.0 - v_ab, v_ab, 0.0)
        settle((d6 >= 0.0) & (d5 <= d6), 0.0, 0.0, 1.0)
        w_ac = d2 / np.where(d2 - d6 == 0.0, 1.0, d2 - d6)
        settle((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), 1.0 - w_ac, 0.0, w_ac)
        e1 = d4 - d3
        e2 = d5 - d6
        w_bc = e1 / np.where(e1 + e2 == 0.0, 1.0, e1 + e2)
        settle((va <= 0.0) & (e1 >= 0.0) & (e2 >= 0.0), 0.0, 1.0 - w_bc, w_bc)
        denom = va + vb + vc
        denom = np.where(denom == 0.0, 1.0, denom)
        v_in = vb / denom
        w_in = vc / denom
        settle(np.ones(m, dtype=bool), 1.0 - v_in - w_in, v_in, w_in)

    feet = (bary[:, 0:1] * a) + (bary[:, 1:2] * b) + (bary[:, 2:3] * c)
    return feet, bary


def _boundary_loop(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Single ordered boundary loop; raises NonDiskTopology otherwise."""
    directed = {}
    undirected = {}
    for f, (i, j, k) in enumerate(faces):
        for u, v in ((i, j), (j, k), (k, i)):
            if (u, v) in directed:
                raise NonDiskTopology("inconsistent winding: directed edge repeated")
            directed[(u, v)] = f
            key = (u, v) if u < v else (v, u)
            undirected[key] = undirected.get(key, 0) + 1
    if np.any(np.asarray(list(undirected.values())) > 2):
        raise NonDiskTopology("non-manifold edge (more than two incident faces)")
    boundary_next = {}
    for (u, v) in directed:
        if (v, u) not in directed:
            if u in boundary_next:
                raise NonDiskTopology("non-manifold boundary vertex")
            boundary_next[u] = v
    if not boundary_next:
        raise NonDiskTopology("mesh is closed; expected one boundary loop")
    euler = n_vertices - len(undirected) + len(faces)
    if euler != 1:
        raise NonDiskTopology(f"Euler characteristic {euler}, expected 1 for a disk")
    start = min(boundary_next)
    loop = [start]
    v = boundary_next[start]
    while v != start:
        loop.append(v)
        v = boundary_next[v]
    if len(loop) != len(boundary_next):
        raise NonDiskTopology("multiple boundary loops")
    return np.asarray(loop, dtype=int)


class TriMesh:
    """Immutable triangle mesh with precomputed normals and a BVH."""

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        f = np.ascontiguousarray(np.asarray(faces, dtype=int))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must be (m, 3)")
        if f.min(initial=0) < 0 or f.max(initial=-1) >= len(v):
            raise ValueError("face index out of range")

        tri = v[f]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        if np.any(areas <= MIN_FACE_AREA):
            raise ValueError("degenerate face (area <= 1e-12 m^2)")

        self.vertices = v
        self.faces = f
        self.face_normals = cross / (2.0 * areas)[:, None]
        self.face_areas = areas
        self.boundary = _boundary_loop(f, len(v))

        weighted = cross * 0.5  # area-weighted face normals
        vn = np.zeros_like(v)
        for col in range(3):
            np.add.at(vn, f[:, col], weighted)
        norms = np.linalg.norm(vn, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("vertex with vanishing normal")
        self.vertex_normals = vn / norms[:, None]

        self._triangles = tri
        self._face_neighbors = self._vertex_incident_faces()
        self._bvh = _Bvh(tri)
        for arr in (self.vertices, self.faces, self.face_normals,
                    self.vertex_normals, self.boundary):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def _vertex_incident_faces(self):
        incident = [[] for _ in range(len(self.vertices))]
        for f, (i, j, k) in enumerate(self.faces):
            incident[i].append(f)
            incident[j].append(f)
            incident[k].append(f)
        return [np.asarray(lst, dtype=int) for lst in incident]

    def one_ring_faces(self, face: int) -> np.ndarray:
        """Faces sharing at least one vertex with `face` (itself included)."""
        i, j, k = self.faces[face]
        return np.unique(np.concatenate([
            self._face_neighbors[i], self._face_neighbors[j], self._face_neighbors[k]]))

    def interpolated_normal(self, face: int, bary: np.ndarray) -> np.ndarray:
        n = self.vertex_normals[self.faces[face]].T @ bary
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class ClosestPoint:
    face: int
    barycentric: np.ndarray
    point: np.ndarray
    signed_distance: float


def _best_on_faces(mesh: TriMesh, face_ids: np.ndarray, p: np.ndarray):
    feet, bary = closest_point_on_triangles(mesh._triangles[face_ids], p)
    d2 = np.einsum("ij,ij->i", feet - p, feet - p)
    k = int(np.argmin(d2))
    return float(d2[k]), int(face_ids[k]), feet[k], bary[k]


def _signed(mesh: TriMesh, face: int, bary, foot, p) -> ClosestPoint:
    delta = p - foot
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        return ClosestPoint(face, bary, foot, 0.0)
    normal = mesh.interpolated_normal(face, bary)
    sign = 1.0 if float(normal @ delta) >= 0.0 else -1.0
    return ClosestPoint(face, bary, foot, sign * dist)


def closest_point(mesh: TriMesh, p, hint_face: int | None = None) -> ClosestPoint:
    """Globally closest surface point to p, with signed distance.

    The sign comes from the interpolated vertex normal at the foot point
    (positive on the outward side).  `hint_face` seeds the search with the
    one-ring around a previously returned face, which makes tracking queries
    nearly free while leaving the result exact.
    """
    p = np.asarray(p, dtype=float)
    upper = np.inf
    best = None
    if hint_face is not None:
        d2, face, foot, bary = _best_on_faces(mesh, mesh.one_ring_faces(hint_face), p)
        upper = d2
        best = (face, foot, bary)
    d2, face, foot, bary = mesh._bvh.query(p, upper)
    if best is None or d2 < upper:
        best = (face, foot, bary)
    return _signed(mesh, best[0], best[2], best[1], p)


def closest_point_brute_force(mesh: TriMesh, p) -> ClosestPoint:
    """Exhaustive per-face reference used by the oracle tests."""
    p = np.asarray(p, dtype=float)
    _, face, foot, bary = _best_on_faces(mesh, np.arange(mesh.n_faces), p)
    return _signed(mesh, face, bary, foot, p)


class _Bvh:
    """Median-split AABB tree over triangles; best-first nearest queries."""

    def __init__(self, triangles: np.ndarray):
        self._tri = triangles
        lo = triangles.min(axis=1)
        hi = triangles.max(axis=1)
        centroids = triangles.mean(axis=1)
        order = np.arange(len(triangles))

        bounds_lo, bounds_hi = [], []
        children, ranges = [], []

        def build(ids) -> int:
            node = len(bounds_lo)
            bounds_lo.append(lo[ids].min(axis=0))
            bounds_hi.append(hi[ids].max(axis=0))
            children.append((-1, -1))
            ranges.append(None)
            if len(ids) <= _LEAF_SIZE:
                ranges[node] = ids
                return node
            cen = centroids[ids]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            half = len(ids) // 2
            part = ids[np.argpartition(cen[:, axis], half)]
            left = build(part[:half])
            right = build(part[half:])
            children[node] = (left, right)
            return node

        build(order)
        self._lo = np.asarray(bounds_lo)
        self._hi = np.asarray(bounds_hi)
        self._children = children
        self._ranges = ranges

    def _box_dist2(self, node: int, p: np.ndarray) -> float:
        d = np.maximum(np.maximum(self._lo[node] - p, 0.0), p - self._hi[node])
        return float(d @ d)

    def query(self, p: np.ndarray, upper: float = np.inf):
        """Returns (dist^2, face, foot, bary) of the nearest triangle."""
        best = (upper, -1, None, None)
        heap = [(self._box_dist2(0, p), 0)]
        while heap:
            bound, node = heapq.heappop(heap)
            if bound >= best[0]:
                break
            left, right = self._children[node]
            if left < 0:
                ids = self._ranges[node]
                feet, bary = closest_point_on_triangles(self._tri[ids], p)
                d2 = np.einsum("ij,ij->i", feet - p, feet - p)
                k = int(np.argmin(d2))
                if d2[k] < best[0]:
                    best = (float(d2[k]), int(ids[k]), feet[k], bary[k])
            else:
                for child in (left, right):
                    cb = self._box_dist2(child, p)
                    if cb < best[0]:
                        heapq.heappush(heap, (cb, child))
        return best


def grid_mesh(xs: np.ndarray, ys: np.ndarray, height) -> TriMesh:
    """Heightfield mesh over a rectangular grid.

    `height` is either a callable h(x, y) (vectorised) or an (ny, nx) array.
    Faces are wound counter-clockwise seen from +z.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    gz = height(gx, gy) if callable(height) else np.asarray(height, dtype=float)
    if gz.shape != gx.shape:
        raise ValueError("height grid shape does not match the axes")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    nx, ny = len(xs), len(ys)
    faces = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            v00 = r * nx + c
            v10 = v00 + 1
            v01 = v00 + nx
            v11 = v01 + 1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return TriMesh(vertices, np.asarray(faces, dtype=int))


def hemisphere_mesh(radius: float, base_extent: float, pitch: float,
                    center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Flat square patch with a spherical dome of `radius` at its middle."""
    cx, cy, cz = center
    half = base_extent / 2.0
    n = max(2, int(round(base_extent / pitch)) + 1)
    xs = np.linspace(cx - half, cx + half, n)
    ys = np.linspace(cy - half, cy + half, n)

    def height(gx, gy):
        r2 = (gx - cx) ** 2 + (gy - cy) ** 2
        dome = np.sqrt(np.maximum(radius ** 2 - r2, 0.0))
        return cz + dome

    return grid_mesh(xs, ys, height)


def save_ply(path, mesh: TriMesh, uv: np.ndarray | None = None) -> None:
    """ASCII PLY with vertex normals; uv (if given) as extra properties s, t."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        for prop in ("x", "y", "z", "nx", "ny", "nz"):
            fh.write(f"property float {prop}\n")
        if uv is not None:
            fh.write("property float s\nproperty float t\n")
        fh.write(f"element face {mesh.n_faces}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        cols = [mesh.vertices, mesh.vertex_normals]
        if uv is not None:
            cols.append(np.asarray(uv, dtype=float).reshape(mesh.n_vertices, 2))
        data = np.hstack(cols)
        for row in data:
            fh.write(" ".join(f"{v:.9g}" for v in row) + "\n")
        for face in mesh.faces:
            fh.write(f"3 {face[0]} {face[1]} {face[2]}\n")


def load_ply(path):
    """Reads meshes written by save_ply; returns (TriMesh, uv or None)."""
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        n_vertices = n_faces = 0
        props = []
        element = None
        for line in fh:
            tok = line.split()
            if tok[0] == "element":
                element = tok[1]
                if element == "vertex":
                    n_vertices = int(tok[2])
                elif element == "face":
                    n_faces = int(tok[2])
            elif tok[0] == "property" and element == "vertex":
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        rows = np.array([[float(v) for v in fh.readline().split()]
                         for _ in range(n_vertices)])
        faces = []
        for _ in range(n_faces):
            tok = fh.readline().split()
            if tok[0] != "3":
                raise ValueError("only triangular faces are supported")
            faces.append([int(tok[1]), int(tok[2]), int(tok[3])])
    xyz = rows[:, [props.index("x"), props.index("y"), props.index("z")]]
    uv = None
    if "s" in props and "t" in props:
        uv = rows[:, [props.index("s"), props.index("t")]]
    return TriMesh(xyz, np.asarray(faces, dtype=int)), uv
