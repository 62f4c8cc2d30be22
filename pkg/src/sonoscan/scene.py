"""Scene configuration: JSON schema, validation and object assembly.

A scene file fully describes one bench setup: the arm (geometry, limits,
inertial data), controller gains, the phantom (analytic ground truth plus
contact parameters), marker layout, camera, landing/scan profiles and the
simulation rate.  All lengths are metres, angles radians unless a key says
otherwise.  `default_config()` returns the packaged desk scene.
"""

from __future__ import annotations

import copy
import importlib.resources
import json
from dataclasses import dataclass

import numpy as np

from .control import ImpedanceGains, LandingProfile
from .dynamics import ArmDynamics
from .errors import SonoscanError
from .kinematics import N_JOINTS, SerialChain
from .localization import AnalyticScene, CameraIntrinsics
from .mesh import TriMesh, hemisphere_mesh
from .se3 import RigidTransform, rotvec_to_matrix
from .sim import PhantomModel, VoxelPhantom


class ConfigError(SonoscanError):
    """Scene configuration missing or malformed."""


def _transform_from(node) -> RigidTransform:
    xyz = np.asarray(node.get("xyz", [0.0, 0.0, 0.0]), dtype=float)
    rpy = np.asarray(node.get("rpy", [0.0, 0.0, 0.0]), dtype=float)
    rot = (rotvec_to_matrix([0.0, 0.0, rpy[2]])
           @ rotvec_to_matrix([0.0, rpy[1], 0.0])
           @ rotvec_to_matrix([rpy[0], 0.0, 0.0]))
    return RigidTransform(rot, xyz)


@dataclass(frozen=True)
class CameraConfig:
    intrinsics: CameraIntrinsics
    width: int
    height: int
    align_angle: float
    align_distance: float
    n_views: int
    grid_pitch: float
    depth_noise_sigma: float


@dataclass(frozen=True)
class UltrasoundConfig:
    width: float
    depth: float
    cols: int
    rows: int
    attenuation: float
    voxel_pitch: float
    background: float
    inclusions: tuple


@dataclass(frozen=True)
class ScanConfig:
    margin: float
    raster_region: tuple
    raster_spacing: float
    speed: float


@dataclass(frozen=True)
class Scene:
    """Assembled scene: every object the workflow and simulator need."""

    chain: SerialChain
    dynamics: ArmDynamics
    gains: ImpedanceGains
    phantom: PhantomModel
    ground_truth: AnalyticScene
    phantom_center: np.ndarray      # dome axis on the support plane
    markers: np.ndarray             # (4, 3) base frame
    marker_noise_sigma: float
    camera: CameraConfig
    landing: LandingProfile
    landing_settle_time: float
    scan: ScanConfig
    us: UltrasoundConfig
    q_home: np.ndarray
    dt: float
    control_refresh: int
    ft_noise_sigma: float
    seed: int
    raw: dict                       # the validated config this was built from

    def build_voxel_phantom(self) -> VoxelPhantom:
        cx, cy, cz = self.phantom_center
        extent = float(self.raw["phantom"]["extent"])
        radius = float(self.raw["phantom"]["dome_radius"])
        depth_below = 3.0 * radius
        origin = (cx - extent / 2.0, cy - extent / 2.0, cz - depth_below)

        def surface_height(gx, gy):
            r2 = (gx - cx) ** 2 + (gy - cy) ** 2
            return cz + np.sqrt(np.maximum(radius ** 2 - r2, 0.0))

        return VoxelPhantom.build(
            extent=(extent, extent, depth_below + radius),
            pitch=self.us.voxel_pitch,
            origin=origin,
            surface_height=surface_height,
            background=self.us.background,
            inclusions=self.us.inclusions,
        )


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scene config {path}: {exc}") from exc


def default_config() -> dict:
    text = importlib.resources.files("sonoscan").joinpath(
        "data/default_scene.json").read_text(encoding="utf-8")
    return json.loads(text)


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"scene config is missing the '{key}' section")
    return config[key]


def build_scene(config: dict, seed: int | None = None) -> Scene:
    """Validate a config dict and assemble the scene objects."""
    config = copy.deepcopy(config)
    try:
        chain_node = _require(config, "chain")
        axes = np.asarray(chain_node["axes"], dtype=float)
        offsets = tuple(_transform_from(n) for n in chain_node["offsets"])
        limits = None
        if "joint_limits_deg" in chain_node:
            limits = np.deg2rad(np.asarray(chain_node["joint_limits_deg"], dtype=float))
        chain = SerialChain(
            joint_axes=axes,
            joint_origins=offsets,
            flange_to_probe=_transform_from(chain_node["flange_to_probe"]),
            flange_to_camera=_transform_from(chain_node["flange_to_camera"]),
            joint_limits=limits,
        )

        dyn_node = _require(config, "dynamics")
        inertia = np.array([np.diag(row) for row in dyn_node["inertia_diag"]])
        dynamics = ArmDynamics(
            chain=chain,
            masses=np.asarray(dyn_node["masses"], dtype=float),
            com_local=np.asarray(dyn_node["com"], dtype=float),
            inertia_local=inertia,
            gravity=np.asarray(dyn_node.get("gravity", [0.0, 0.0, -9.81]), dtype=float),
        )

        gains_node = _require(config, "gains")
        gains = ImpedanceGains(
            k_rho=np.asarray(gains_node["stiffness"], dtype=float),
            damping_ratio=gains_node.get("damping_ratio", 0.7),
            nullspace_damping=gains_node.get("nullspace_damping", 2.0),
        )

        ph = _require(config, "phantom")
        center = np.asarray(ph["center"], dtype=float)
        radius = float(ph["dome_radius"])
        extent = float(ph["extent"])
        mesh = hemisphere_mesh(radius, extent, float(ph.get("mesh_pitch", 0.004)),
                               center=center)
        phantom = PhantomModel(
            surface=mesh,
            stiffness=float(ph.get("stiffness", 500.0)),
            damping=float(ph.get("damping", 5.0)),
            tangential_viscosity=float(ph.get("tangential_viscosity", 2.0)),
        )
        ground_truth = AnalyticScene(center, [0.0, 0.0, 1.0],
                                     spheres=[(center, radius)] if radius > 0 else [])

        markers = np.asarray(_require(config, "markers"), dtype=float).reshape(4, 3)

        cam = _require(config, "camera")
        camera = CameraConfig(
            intrinsics=CameraIntrinsics(cam["fx"], cam["fy"], cam["cx"], cam["cy"]),
            width=int(cam["width"]),
            height=int(cam["height"]),
            align_angle=np.deg2rad(float(cam.get("align_angle_deg", 45.0))),
            align_distance=float(cam.get("align_distance", 0.30)),
            n_views=int(cam.get("n_views", 8)),
            grid_pitch=float(cam.get("grid_pitch", 0.002)),
            depth_noise_sigma=float(cam.get("depth_noise_sigma", 0.0)),
        )

        land = _require(config, "landing")
        landing = LandingProfile(
            d_start=float(land["d_start"]),
            d_end=float(land["d_end"]),
            rate=float(land["rate"]),
            s_d=np.asarray(land.get("s", [0.5, 0.5]), dtype=float),
        )

        scan_node = _require(config, "scan")
        raster = scan_node.get("raster", {})
        scan = ScanConfig(
            margin=float(scan_node.get("margin", 0.005)),
            raster_region=tuple(raster.get("region", (0.3, 0.3, 0.7, 0.7))),
            raster_spacing=float(raster.get("spacing", 0.1)),
            speed=float(raster.get("speed", 0.05)),
        )

        us_node = config.get("us", {})
        us = UltrasoundConfig(
            width=float(us_node.get("width", 0.04)),
            depth=float(us_node.get("depth", 0.05)),
            cols=int(us_node.get("cols", 96)),
            rows=int(us_node.get("rows", 120)),
            attenuation=float(us_node.get("attenuation", 50.0)),
            voxel_pitch=float(us_node.get("voxel_pitch", 0.0015)),
            background=float(us_node.get("background", 0.45)),
            inclusions=tuple(us_node.get("inclusions", ())),
        )

        sim_node = _require(config, "sim")
        rate = float(sim_node.get("control_rate_hz", 3000.0))
        q_home = np.asarray(_require(config, "q_home"), dtype=float).reshape(N_JOINTS)

        return Scene(
            chain=chain,
            dynamics=dynamics,
            gains=gains,
            phantom=phantom,
            ground_truth=ground_truth,
            phantom_center=center,
            markers=markers,
            marker_noise_sigma=float(config.get("marker_noise_sigma", 0.0)),
            camera=camera,
            landing=landing,
            landing_settle_time=float(land.get("settle_time", 1.5)),
            scan=scan,
            us=us,
            q_home=q_home,
            dt=1.0 / rate,
            control_refresh=int(sim_node.get("control_refresh", 10)),
            ft_noise_sigma=float(sim_node.get("ft_noise_sigma", 0.0)),
            seed=int(seed if seed is not None else config.get("seed", 0)),
            raw=config,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scene config: {exc}") from exc


def default_scene(seed: int | None = None) -> Scene:
    return build_scene(default_config(), seed=seed)
