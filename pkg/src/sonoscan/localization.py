"""Marker-based localisation, view planning and surface reconstruction.

The camera is a pinhole model looking along +z.  Marker detection is
abstracted to 3D marker-centre observations in the camera frame; depth
capture ray-casts an analytic ground-truth scene; reconstruction fuses the
back-projected clouds into a heightmap grid over the fitted plane and
triangulates it, yielding the mesh and its pose relative to the first view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMarkers, InsufficientCoverage
from .mesh import TriMesh, grid_mesh
from .se3 import RigidTransform, orthonormal_tangents, rotation_about_line

N_MARKERS = 4
DEFAULT_GRID_PITCH = 0.002  # m
MAX_EMPTY_CELL_FRACTION = 0.2
COLLINEARITY_RATIO = 10.0


@dataclass(frozen=True)
class MarkerObservation:
    """Detected fiducial centre in the camera frame."""

    marker_id: int
    center_cam: np.ndarray
    covariance: float = 0.0  # isotropic sigma in metres

    def __post_init__(self):
        object.__setattr__(self, "center_cam",
                           np.asarray(self.center_cam, dtype=float).reshape(3))


@dataclass(frozen=True)
class ScenePlane:
    center: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "normal", n)

    def transformed(self, t: RigidTransform) -> "ScenePlane":
        return ScenePlane(t.apply(self.center), t.rotate(self.normal))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if min(self.fx, self.fy) <= 0.0:
            raise ValueError("focal lengths must be positive")


def pixel_rays(intrinsics: CameraIntrinsics, width: int, height: int) -> np.ndarray:
    """Unit ray directions per pixel centre, (h, w, 3), camera frame."""
    us = (np.arange(width) + 0.5 - intrinsics.cx) / intrinsics.fx
    vs = (np.arange(height) + 0.5 - intrinsics.cy) / intrinsics.fy
    gu, gv = np.meshgrid(us, vs)
    d = np.stack([gu, gv, np.ones_like(gu)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel range along the camera ray (0 = no return)."""

    width: int
    height: int
    intrinsics: CameraIntrinsics
    depths: np.ndarray
    view_pose: RigidTransform  # camera in base

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=float).reshape(self.height, self.width)
        if np.any(d < 0.0):
            raise ValueError("depths must be non-negative")
        object.__setattr__(self, "depths", d)

    def points_base(self) -> np.ndarray:
        """Back-projected hit points in the base frame, (n, 3)."""
        rays = pixel_rays(self.intrinsics, self.width, self.height)
        mask = self.depths > 0.0
        pts_cam = rays[mask] * self.depths[mask][:, None]
        return self.view_pose.apply(pts_cam)


@dataclass(frozen=True)
class ReconstructedSurface:
    mesh: TriMesh                 # in the object frame (plane centre, z = normal)
    object_pose: RigidTransform   # object frame in the first camera frame


def fit_plane(observations) -> ScenePlane:
    """Least-squares plane through the four marker centres.

    The normal is the smallest principal direction of the centred points,
    oriented back toward the camera.  Near-collinear layouts (second/third
    singular value ratio under 10) raise DegenerateMarkers.
    """
    if len(observations) != N_MARKERS:
        raise ValueError(f"expected exactly {N_MARKERS} marker observations")
    ids = {o.marker_id for o in observations}
    if len(ids) != N_MARKERS:
        raise ValueError("marker ids must be distinct")
    pts = np.stack([o.center_cam for o in observations])
    center = pts.mean(axis=0)
    _, svals, vt = np.linalg.svd(pts - center)
    ratio = svals[1] / max(svals[2], 1e-300)
    if ratio < COLLINEARITY_RATIO:
        raise DegenerateMarkers(
            f"markers are near-collinear (spread ratio {ratio:.2f} < {COLLINEARITY_RATIO})")
    normal = vt[2]
    if normal @ center > 0.0:  # camera sits at the origin of the camera frame
        normal = -normal
    return ScenePlane(center, normal)


def alignment_pose(plane: ScenePlane, angle: float, distance: float) -> RigidTransform:
    """Camera pose with the optical axis through the plane centre.

    The camera origin sits `distance` from the centre, along a direction
    tilted `angle` away from the plane normal; angle 0 is the nadir view.
    """
    if not 0.0 <= angle < np.pi / 2:
        raise ValueError("angle must be in [0, 90) degrees")
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    t1, _ = orthonormal_tangents(plane.normal)
    direction = np.cos(angle) * plane.normal + np.sin(angle) * t1
    origin = plane.center + distance * direction
    z_axis = -direction  # optical axis through the centre
    x_axis = t1 - (t1 @ z_axis) * z_axis
    nx = np.linalg.norm(x_axis)
    if nx < 1e-9:  # nadir view: any tangent serves as image x
        x_axis, _ = orthonormal_tangents(z_axis)
    else:
        x_axis = x_axis / nx
    y_axis = np.cross(z_axis, x_axis)
    return RigidTransform(np.column_stack([x_axis, y_axis, z_axis]), origin)


def orbit_plan(base_pose: RigidTransform, plane: ScenePlane, n_views: int):
    """Camera poses rotated about the plane's centre axis by 2*pi*k/n."""
    if n_views < 1:
        raise ValueError("need at least one view")
    poses = []
    for k in range(n_views):
        spin = rotation_about_line(plane.center, plane.normal,
                                   2.0 * np.pi * k / n_views)
        poses.append(spin.compose(base_pose))
    return poses


class AnalyticScene:
    """Ground-truth geometry for the synthetic depth camera: a support plane
    with spherical domes resting on it (dome centres on the plane)."""

    def __init__(self, plane_point, plane_normal, spheres=()):
        self.plane_point = np.asarray(plane_point, dtype=float)
        n = np.asarray(plane_normal, dtype=float)
        self.plane_normal = n / np.linalg.norm(n)
        self.spheres = [(np.asarray(c, dtype=float), float(r)) for c, r in spheres]

    def ray_hits(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """First-intersection range per ray; inf where nothing is hit."""
        t_best = np.full(len(dirs), np.inf)
        denom = dirs @ self.plane_normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t_plane = ((self.plane_point - origins) @ self.plane_normal) / denom
        ok = (np.abs(denom) > 1e-12) & (t_plane > 0.0)
        t_best[ok] = t_plane[ok]
        for center, radius in self.spheres:
            oc = origins - center
            b = np.einsum("ij,ij->i", oc, dirs)
            c = np.einsum("ij,ij->i", oc, oc) - radius ** 2
            disc = b * b - c
            root = np.sqrt(np.maximum(disc, 0.0))
            t_sph = -b - root
            ok = (disc >= 0.0) & (t_sph > 0.0) & (t_sph < t_best)
            t_best[ok] = t_sph[ok]
        return t_best

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance to the visible surface (exposed plane plus the
        upper hemispheres); the reconstruction error oracle."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.plane_normal
        h = (points - self.plane_point) @ n
        foot = points - np.outer(h, n)
        best = np.abs(h)
        for center, radius in self.spheres:
            lat = np.linalg.norm(foot - center, axis=1)
            # plane is hidden under the dome footprint: closest exposed point is the rim
            best = np.where(lat >= radius, best,
                            np.sqrt((radius - lat) ** 2 + h ** 2))
            r_dist = np.linalg.norm(points - center, axis=1)
            d_dome = np.where(h >= 0.0, np.abs(r_dist - radius),
                              np.sqrt((lat - radius) ** 2 + h ** 2))
            best = np.minimum(best, d_dome)
        return best


def capture_depth(scene: AnalyticScene, view: RigidTransform,
                  intrinsics: CameraIntrinsics, resolution,
                  noise_sigma: float = 0.0, rng=None) -> DepthImage:
    """Ray-cast the scene through a pinhole camera at `view`."""
    width, height = resolution
    if width < 16 or height < 16:
        raise ValueError("resolution must be at least 16x16")
    rays = pixel_rays(intrinsics, width, height).reshape(-1, 3)
    dirs = view.rotate(rays)
    origins = np.broadcast_to(view.translation, dirs.shape)
    t = scene.ray_hits(origins, dirs)
    depths = np.where(np.isfinite(t), t, 0.0)
    if noise_sigma > 0.0:
        rng = np.random.default_rng() if rng is None else rng
        depths = np.where(depths > 0.0,
                          np.maximum(depths + rng.normal(0.0, noise_sigma, depths.shape), 0.0),
                          0.0)
    return DepthImage(width, height, intrinsics, depths.reshape(height, width), view)


def _fill_holes(grid: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Iterative neighbour-mean fill of unknown cells (deterministic)."""
    filled = grid.copy()
    todo = ~known
    while np.any(todo):
        weights = np.zeros(grid.shape)
        acc = np.zeros(grid.shape)
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            src_ok = np.zeros(grid.shape, dtype=bool)
            src = np.zeros(grid.shape)
            rows = slice(max(dr, 0), grid.shape[0] + min(dr, 0))
            rows_src = slice(max(-dr, 0), grid.shape[0] + min(-dr, 0))
            cols = slice(max(dc, 0), grid.shape[1] + min(dc, 0))
            cols_src = slice(max(-dc, 0), grid.shape[1] + min(-dc, 0))
            src[rows, cols] = filled[rows_src, cols_src]
            src_ok[rows, cols] = ~todo[rows_src, cols_src]
            acc += np.where(src_ok, src, 0.0)
            weights += src_ok
        frontier = todo & (weights > 0)
        if not np.any(frontier):
            break
        filled[frontier] = acc[frontier] / weights[frontier]
        todo = todo & ~frontier
    return filled


def reconstruct_mesh(captures, plane: ScenePlane | None = None,
                     grid_pitch: float = DEFAULT_GRID_PITCH,
                     region=None) -> ReconstructedSurface:
    """Fuse depth captures into a triangulated heightmap patch.

    Points from every capture are expressed over the fitted plane; node
    heights are per-cell medians, holes are neighbour-filled.  `region`
    (umin, vmin, umax, vmax in plane coordinates) bounds the fused patch;
    by default the sample bounding box is used.  More than 20% empty cells
    inside the region raises InsufficientCoverage.
    """
    if len(captures) < 1:
        raise ValueError("need at least one capture")
    cloud = np.vstack([c.points_base() for c in captures])
    if len(cloud) < 100:
        raise InsufficientCoverage("captures contain almost no depth returns")

    if plane is None:
        center = cloud.mean(axis=0)
        _, _, vt = np.linalg.svd(cloud - center, full_matrices=False)
        normal = vt[2]
        to_cameras = np.mean([c.view_pose.translation for c in captures], axis=0) - center
        if normal @ to_cameras < 0.0:
            normal = -normal
        plane = ScenePlane(center, normal / np.linalg.norm(normal))

    t1, t2 = orthonormal_tangents(plane.normal)
    rel = cloud - plane.center
    u = rel @ t1
    v = rel @ t2
    h = rel @ plane.normal

    if region is None:
        region = (u.min(), v.min(), u.max(), v.max())
    umin, vmin, umax, vmax = region
    nu = max(2, int(np.ceil((umax - umin) / grid_pitch)) + 1)
    nv = max(2, int(np.ceil((vmax - vmin) / grid_pitch)) + 1)

    inside = (u >= umin) & (u <= umax) & (v >= vmin) & (v <= vmax)
    iu = ((u[inside] - umin) / (umax - umin) * (nu - 1)).round().astype(int)
    iv = ((v[inside] - vmin) / (vmax - vmin) * (nv - 1)).round().astype(int)

    heights = np.zeros((nv, nu))
    known = np.zeros((nv, nu), dtype=bool)
    flat = iv * nu + iu
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    h_sorted = h[inside][order]
    cells, starts = np.unique(flat_sorted, return_index=True)
    bounds = np.append(starts, len(flat_sorted))
    for cell, start, end in zip(cells, bounds[:-1], bounds[1:]):
        heights[cell // nu, cell % nu] = np.median(h_sorted[start:end])
        known[cell // nu, cell % nu] = True

    empty_fraction = 1.0 - known.mean()
    if empty_fraction > MAX_EMPTY_CELL_FRACTION:
        raise InsufficientCoverage(
            f"{empty_fraction:.0%} of grid cells received no depth samples")
    heights = _fill_holes(heights, known)

    us = np.linspace(umin, umax, nu)
    vs = np.linspace(vmin, vmax, nv)
    local = grid_mesh(us, vs, heights)

    t_base_obj = RigidTransform(np.column_stack([t1, t2, plane.normal]), plane.center)
    t_cam_obj = captures[0].view_pose.invert().compose(t_base_obj)
    return ReconstructedSurface(mesh=local, object_pose=t_cam_obj)


def save_depth_image(path_prefix, image: DepthImage) -> None:
    """Binary depth grid plus a JSON sidecar with pose and intrinsics."""
    np.save(f"{path_prefix}.npy", image.depths)
    meta = {
        "width": image.width,
        "height": image.height,
        "intrinsics": {"fx": image.intrinsics.fx, "fy": image.intrinsics.fy,
                       "cx": image.intrinsics.cx, "cy": image.intrinsics.cy},
        "view_pose": image.view_pose.as_matrix().tolist(),
    }
    with open(f"{path_prefix}.json", "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=1)


def load_depth_image(path_prefix) -> DepthImage:
    depths = np.load(f"{path_prefix}.npy")
    with open(f"{path_prefix}.json", "r", encoding="ascii") as fh:
        meta = json.load(fh)
    k = meta["intrinsics"]
    return DepthImage(
        meta["width"], meta["height"],
        CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"]),
        depths,
        RigidTransform.from_matrix(np.asarray(meta["view_pose"])),
    )
