"""Surface parametrization and surface-specific probe coordinates.

A chart flattens a disk-topology mesh onto the unit square: the boundary
loop is pinned by arc length, interior vertices solve the cotangent-weight
harmonic system.  On top of the chart live the probe coordinates
(s1, s2, d, eps): chart position of the closest surface point, signed
probe-surface distance, and a 3-vector orientation error aligning the probe
axis with the inward surface normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import FlippedTriangles, NearSingularChart, OutsideDomain
from .kinematics import SerialChain, forward_kinematics, geometric_jacobian
from .mesh import ClosestPoint, TriMesh, closest_point
from .se3 import RigidTransform, matrix_to_quat, rotvec_to_matrix

BOUNDARY_OVERHANG_MARGIN = 0.01  # m, lateral slack before a query is off-chart
_GRID_BINS = 32


def _square_boundary_positions(t: np.ndarray) -> np.ndarray:
    """Perimeter parameter t in [0, 4) to a point on the unit-square boundary,
    counter-clockwise from (0, 0)."""
    t = np.mod(t, 4.0)
    side = np.floor(t).astype(int)
    frac = t - side
    uv = np.empty((len(t), 2))
    m = side == 0
    uv[m] = np.column_stack([frac[m], np.zeros(m.sum())])
    m = side == 1
    uv[m] = np.column_stack([np.ones(m.sum()), frac[m]])
    m = side == 2
    uv[m] = np.column_stack([1.0 - frac[m], np.ones(m.sum())])
    m = side == 3
    uv[m] = np.column_stack([np.zeros(m.sum()), 1.0 - frac[m]])
    return uv


def _cotangent_laplacian(mesh: TriMesh) -> sparse.csr_matrix:
    v = mesh.vertices
    f = mesh.faces
    rows, cols, vals = [], [], []
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        # cotangent at corner `a` weights the opposite edge (b, c)
        e1 = v[f[:, b]] - v[f[:, a]]
        e2 = v[f[:, c]] - v[f[:, a]]
        cos = np.einsum("ij,ij->i", e1, e2)
        sin = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = cos / np.maximum(sin, 1e-300)
        rows.append(f[:, b])
        cols.append(f[:, c])
        vals.append(0.5 * cot)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = mesh.n_vertices
    w = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
    w = (w + w.T).tocsr()
    deg = np.asarray(w.sum(axis=1)).ravel()
    return sparse.diags(deg) - w


def uv_signed_areas(uv: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = uv[faces[:, 0]]
    b = uv[faces[:, 1]]
    c = uv[faces[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


class SurfaceChart:
    """Mesh plus a bijective piecewise-linear map of its vertices to [0,1]^2."""

    def __init__(self, mesh: TriMesh, uv: np.ndarray):
        uv = np.array(uv, dtype=float).reshape(mesh.n_vertices, 2)
        areas = uv_signed_areas(uv, mesh.faces)
        flipped = int(np.sum(areas <= 0.0))
        if flipped:
            raise FlippedTriangles(f"{flipped} uv triangles are flipped or degenerate")
        self.mesh = mesh
        self.uv = uv
        self.uv.setflags(write=False)

        # per-face affine maps between uv and 3D
        f = mesh.faces
        du = np.stack([uv[f[:, 1]] - uv[f[:, 0]], uv[f[:, 2]] - uv[f[:, 0]]], axis=2)
        dp = np.stack([mesh.vertices[f[:, 1]] - mesh.vertices[f[:, 0]],
                       mesh.vertices[f[:, 2]] - mesh.vertices[f[:, 0]]], axis=2)
        det = du[:, 0, 0] * du[:, 1, 1] - du[:, 0, 1] * du[:, 1, 0]
        inv = np.empty_like(du)
        inv[:, 0, 0] = du[:, 1, 1]
        inv[:, 0, 1] = -du[:, 0, 1]
        inv[:, 1, 0] = -du[:, 1, 0]
        inv[:, 1, 1] = du[:, 0, 0]
        self._uv_det = det
        self._uv_inv = inv / det[:, None, None]
        self._dp_ds = dp @ self._uv_inv  # (m, 3, 2): columns d(point)/d(s1), d(point)/d(s2)

        self._bucket = self._build_uv_buckets()
        self._boundary_edges = {
            frozenset((int(a), int(b)))
            for a, b in zip(mesh.boundary, np.roll(mesh.boundary, -1))
        }
        self._boundary_vertices = set(int(i) for i in mesh.boundary)

    def _build_uv_buckets(self):
        f = self.mesh.faces
        tri_uv = self.uv[f]
        lo = np.clip((tri_uv.min(axis=1) * _GRID_BINS).astype(int), 0, _GRID_BINS - 1)
        hi = np.clip((tri_uv.max(axis=1) * _GRID_BINS).astype(int), 0, _GRID_BINS - 1)
        buckets = [[] for _ in range(_GRID_BINS * _GRID_BINS)]
        for face in range(len(f)):
            for gx in range(lo[face, 0], hi[face, 0] + 1):
                for gy in range(lo[face, 1], hi[face, 1] + 1):
                    buckets[gx * _GRID_BINS + gy].append(face)
        return [np.asarray(b, dtype=int) for b in buckets]

    def candidate_faces(self, s: np.ndarray) -> np.ndarray:
        gx = int(np.clip(s[0] * _GRID_BINS, 0, _GRID_BINS - 1))
        gy = int(np.clip(s[1] * _GRID_BINS, 0, _GRID_BINS - 1))
        return self._bucket[gx * _GRID_BINS + gy]

    def uv_of(self, face: int, bary: np.ndarray) -> np.ndarray:
        return self.uv[self.mesh.faces[face]].T @ bary

    def chart_scale(self) -> float:
        """Median metres per chart unit, for reasoning about gains in SI terms."""
        stretch = np.linalg.norm(self._dp_ds, axis=1)  # (m, 2)
        return float(np.median(stretch))

    def foot_is_on_boundary(self, face: int, bary: np.ndarray, tol: float = 1e-9) -> bool:
        idx = self.mesh.faces[face]
        active = [int(idx[i]) for i in range(3) if bary[i] > tol]
        if len(active) == 3:
            return False
        if len(active) == 1:
            return active[0] in self._boundary_vertices
        return frozenset(active) in self._boundary_edges


def build_chart(mesh: TriMesh) -> SurfaceChart:
    """Discrete-harmonic parametrization onto the unit square.

    The boundary loop (canonical orientation, starting at its smallest
    vertex index) is pinned to the square boundary by arc length; interior
    vertices solve the cotangent-weight Laplace system.  A fold anywhere is
    reported as FlippedTriangles, never silently repaired.
    """
    loop = mesh.boundary
    pts = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    total = float(seg.sum())
    arc = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    uv_boundary = _square_boundary_positions(4.0 * arc / total)

    n = mesh.n_vertices
    interior = np.setdiff1d(np.arange(n), loop)
    uv = np.zeros((n, 2))
    uv[loop] = uv_boundary
    if len(interior):
        lap = _cotangent_laplacian(mesh).tocsc()
        lap_ii = lap[interior][:, interior]
        lap_ib = lap[interior][:, loop]
        rhs = -lap_ib @ uv_boundary
        uv[interior] = np.column_stack([
            spsolve(lap_ii, rhs[:, 0]),
            spsolve(lap_ii, rhs[:, 1]),
        ])
    return SurfaceChart(mesh, uv)


def chart_to_surface(chart: SurfaceChart, s) -> tuple[np.ndarray, np.ndarray]:
    """Map a chart point to (surface point, unit normal).

    Raises OutsideDomain when s falls outside every uv triangle.
    """
    s = np.asarray(s, dtype=float).reshape(2)
    face, bary = locate_uv(chart, s)
    idx = chart.mesh.faces[face]
    point = chart.mesh.vertices[idx].T @ bary
    normal = chart.mesh.vertex_normals[idx].T @ bary
    return point, normal / np.linalg.norm(normal)


def locate_uv(chart: SurfaceChart, s: np.ndarray, tol: float = 1e-9):
    """Find the uv triangle containing s and its barycentric coordinates."""
    best_face, best_bary, best_violation = -1, None, np.inf
    for face in chart.candidate_faces(s):
        idx = chart.mesh.faces[face]
        rel = s - chart.uv[idx[0]]
        ab = chart._uv_inv[face] @ rel
        bary = np.array([1.0 - ab[0] - ab[1], ab[0], ab[1]])
        violation = float(-bary.min())
        if violation < best_violation:
            best_face, best_bary, best_violation = face, bary, violation
        if violation <= 0.0:
            break
    if best_face < 0 or best_violation > tol:
        raise OutsideDomain(f"chart point {s} is outside the parameter domain")
    bary = np.clip(best_bary, 0.0, None)
    return best_face, bary / bary.sum()


@dataclass(frozen=True)
class SurfacePose:
    """Probe state in surface coordinates: chart position, clearance, alignment."""

    s: np.ndarray       # (2,) chart coordinates of the foot point
    d: float            # signed probe-surface distance, positive outside
    eps: np.ndarray     # (3,) orientation error, zero when aligned
    face: int           # mesh face carrying the foot point
    foot: np.ndarray    # (3,) closest surface point

    def rho(self) -> np.ndarray:
        return np.concatenate([self.s, [self.d], self.eps])


def _target_rotation(chart: SurfaceChart, face: int, normal: np.ndarray) -> np.ndarray:
    """Probe target frame at a foot point: z into the tissue, roll fixed by
    the chart's s1 direction transported to the tangent plane."""
    z = -normal
    t1 = chart._dp_ds[face, :, 0]
    x = t1 - (t1 @ z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise NearSingularChart("s1 direction is parallel to the surface normal")
    x = x / nx
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def surface_pose(chart: SurfaceChart, probe: RigidTransform,
                 hint_face: int | None = None,
                 overhang_margin: float = BOUNDARY_OVERHANG_MARGIN) -> SurfacePose:
    """Surface coordinates of a probe pose.

    The chart position is the uv image of the closest surface point; when
    that point sits on the mesh boundary the coordinates clamp to the chart
    edge, and only a lateral overhang beyond `overhang_margin` raises
    OutsideDomain.  The orientation error is twice the vector part of the
    quaternion rotating the probe frame onto the local target frame, so it
    vanishes exactly at alignment and stays smooth nearby.
    """
    cp: ClosestPoint = closest_point(chart.mesh, probe.translation, hint_face)
    normal = chart.mesh.interpolated_normal(cp.face, cp.barycentric)
    if chart.foot_is_on_boundary(cp.face, cp.barycentric):
        delta = probe.translation - cp.point
        lateral = delta - (delta @ normal) * normal
        if np.linalg.norm(lateral) > overhang_margin:
            raise OutsideDomain("probe foot point left the charted surface")
    s = chart.uv_of(cp.face, cp.barycentric)
    target = _target_rotation(chart, cp.face, normal)
    q_err = matrix_to_quat(target.T @ probe.rotation)
    eps = 2.0 * q_err[1:]
    return SurfacePose(s=s, d=cp.signed_distance, eps=eps, face=cp.face, foot=cp.point)


def pose_rho(chart: SurfaceChart, probe: RigidTransform, hint_face: int | None = None) -> np.ndarray:
    return surface_pose(chart, probe, hint_face).rho()


def aligned_probe(chart: SurfaceChart, s, distance: float = 0.0) -> RigidTransform:
    """Probe pose with zero orientation error at chart point s, offset
    `distance` along the outward normal."""
    s = np.asarray(s, dtype=float).reshape(2)
    face, _ = locate_uv(chart, s)
    point, normal = chart_to_surface(chart, s)
    rotation = _target_rotation(chart, face, normal)
    return RigidTransform(rotation, point + distance * normal)


def chart_jacobian(chart: SurfaceChart, probe: RigidTransform,
                   hint_face: int | None = None,
                   h_lin: float = 1e-6, h_ang: float = 1e-6) -> np.ndarray:
    """6x6 derivative of (s1, s2, d, eps) with respect to Cartesian probe
    displacement (base frame), by central finite differences."""
    jac = np.empty((6, 6))
    r, p = probe.rotation, probe.translation
    for k in range(3):
        step = np.zeros(3)
        step[k] = h_lin
        hi = surface_pose(chart, RigidTransform(r, p + step, check=False), hint_face)
        lo = surface_pose(chart, RigidTransform(r, p - step, check=False), hint_face)
        jac[:, k] = (hi.rho() - lo.rho()) / (2.0 * h_lin)
    for k in range(3):
        rotvec = np.zeros(3)
        rotvec[k] = h_ang
        r_hi = rotvec_to_matrix(rotvec) @ r
        r_lo = rotvec_to_matrix(-rotvec) @ r
        hi = surface_pose(chart, RigidTransform(r_hi, p, check=False), hint_face)
        lo = surface_pose(chart, RigidTransform(r_lo, p, check=False), hint_face)
        jac[:, 3 + k] = (hi.rho() - lo.rho()) / (2.0 * h_ang)
    return jac


def task_jacobian(chart: SurfaceChart, chain: SerialChain, q: np.ndarray,
                  hint_face: int | None = None) -> np.ndarray:
    """6x7 Jacobian mapping joint rates to surface-coordinate rates."""
    probe = forward_kinematics(chain, q)
    cp = closest_point(chart.mesh, probe.translation, hint_face)
    if abs(chart._uv_det[cp.face]) < 1e-14:
        raise NearSingularChart(f"uv triangle of face {cp.face} is degenerate")
    j_chart = chart_jacobian(chart, probe, cp.face)
    return j_chart @ geometric_jacobian(chain, q)
