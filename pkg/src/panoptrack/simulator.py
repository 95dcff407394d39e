"""Synthetic LiDAR world with exact panoptic and track ground truth.

A parametric scene of axis-aligned boxes (cars, buildings), capped
cylinders (pedestrians, poles), and a ground plane is raycast by a virtual
spinning scanner. Closed-form ray-primitive intersections keep the ground
truth exact, and instance ids are globally consistent track ids by
construction. The emitted files use exactly the package's sequence layout,
so simulator output is indistinguishable from imported data downstream.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import (
    RigidPose,
    Scan,
    Taxonomy,
    pack_arrays,
    save_labels,
    save_poses,
    save_scan,
    save_taxonomy,
)

SIM_TAXONOMY = Taxonomy(
    names=("void", "ground", "building", "pole", "car", "pedestrian"),
    is_thing=(False, False, False, False, True, True),
    void_class=0,
)
CLASS_GROUND = 1
CLASS_BUILDING = 2
CLASS_POLE = 3
CLASS_CAR = 4
CLASS_PEDESTRIAN = 5

REFLECTANCE = {
    CLASS_GROUND: 0.2,
    CLASS_BUILDING: 0.4,
    CLASS_POLE: 0.6,
    CLASS_CAR: 0.8,
    CLASS_PEDESTRIAN: 0.5,
}


class ConfigurationError(ValueError):
    """World generation could not satisfy the requested configuration."""


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 0
    duration_frames: int = 20
    ego_speed: float = 0.5
    ego_path: str = "line"  # "line" or "arc"
    arc_radius: float = 40.0
    n_cars: int = 3
    n_pedestrians: int = 2
    n_poles: int = 4
    n_buildings: int = 2
    car_speed: tuple = (0.1, 0.6)
    pedestrian_speed: tuple = (0.02, 0.15)
    spawn_radius: tuple = (6.0, 25.0)
    ground_z: float = -2.0
    placement_retries: int = 200


@dataclass(frozen=True)
class BeamConfig:
    beams: tuple = tuple(np.deg2rad(np.linspace(10.0, -30.0, 32)))
    azimuth_steps: int = 1024
    max_range: float = 60.0

    def __post_init__(self):
        if self.azimuth_steps < 1:
            raise ValueError("azimuth_steps must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if list(self.beams) != sorted(self.beams, reverse=True):
            raise ValueError("beam elevations must be sorted descending")


@dataclass(frozen=True)
class SceneObject:
    """One rigid primitive with a constant per-frame velocity.

    Boxes use half-extents (hx, hy, hz); cylinders use (radius, half_height).
    Boxes stay axis-aligned in the world frame.
    """

    kind: str  # "box" or "cylinder"
    class_id: int
    track_id: int
    center: np.ndarray
    velocity: np.ndarray
    size: tuple

    def center_at(self, frame: int) -> np.ndarray:
        return self.center + self.velocity * frame

    def aabb(self, frame: int = 0):
        c = self.center_at(frame)
        if self.kind == "box":
            h = np.array(self.size)
        else:
            r, hh = self.size
            h = np.array([r, r, hh])
        return c - h, c + h


@dataclass(frozen=True)
class World:
    config: WorldConfig
    objects: tuple
    taxonomy: Taxonomy = SIM_TAXONOMY

    @property
    def ground_z(self) -> float:
        return self.config.ground_z


def _aabbs_overlap(a, b) -> bool:
    (alo, ahi), (blo, bhi) = a, b
    return bool(np.all(alo <= bhi) and np.all(blo <= ahi))


def build_world(config: WorldConfig) -> World:
    """Deterministically place objects without initial interpenetration."""
    rng = np.random.default_rng(config.seed)
    objects = []
    next_track = 1

    def place(kind, class_id, size, speed_range):
        nonlocal next_track
        for _ in range(config.placement_retries):
            r = rng.uniform(*config.spawn_radius)
            theta = rng.uniform(0.0, 2.0 * np.pi)
            if kind == "box":
                cz = config.ground_z + size[2]
            else:
                cz = config.ground_z + size[1]
            center = np.array([r * np.cos(theta), r * np.sin(theta), cz])
            if speed_range is not None:
                speed = rng.uniform(*speed_range)
                direction = rng.uniform(0.0, 2.0 * np.pi)
                vel = np.array([speed * np.cos(direction), speed * np.sin(direction), 0.0])
            else:
                vel = np.zeros(3)
            track = next_track if class_id in (CLASS_CAR, CLASS_PEDESTRIAN) else 0
            candidate = SceneObject(kind, class_id, track, center, vel, size)
            if all(not _aabbs_overlap(candidate.aabb(), o.aabb()) for o in objects):
                objects.append(candidate)
                if track:
                    next_track += 1
                return
        raise ConfigurationError(
            f"could not place a {SIM_TAXONOMY.names[class_id]} after "
            f"{config.placement_retries} retries")

    for _ in range(config.n_buildings):
        size = (rng.uniform(3.0, 6.0), rng.uniform(3.0, 6.0), rng.uniform(3.0, 5.0))
        place("box", CLASS_BUILDING, size, None)
    for _ in range(config.n_poles):
        place("cylinder", CLASS_POLE, (rng.uniform(0.1, 0.25), rng.uniform(2.0, 4.0)), None)
    for _ in range(config.n_cars):
        size = (rng.uniform(1.8, 2.4), rng.uniform(0.8, 1.1), rng.uniform(0.7, 0.9))
        place("box", CLASS_CAR, size, config.car_speed)
    for _ in range(config.n_pedestrians):
        place("cylinder", CLASS_PEDESTRIAN, (rng.uniform(0.25, 0.4), 0.9),
              config.pedestrian_speed)
    return World(config=config, objects=tuple(objects))


def ego_pose(config: WorldConfig, frame: int) -> RigidPose:
    """Sensor pose along the configured path at the given frame."""
    if config.ego_path == "line":
        return RigidPose(np.eye(3), np.array([config.ego_speed * frame, 0.0, 0.0]))
    if config.ego_path == "arc":
        angle = config.ego_speed * frame / config.arc_radius
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pos = np.array([config.arc_radius * np.sin(angle),
                        config.arc_radius * (1.0 - np.cos(angle)), 0.0])
        return RigidPose(rot, pos)
    raise ConfigurationError(f"unknown ego path {config.ego_path!r}")


# ---------------------------------------------------------------------------
# ray-primitive intersections (vectorized over rays)


def ray_plane_z(origin, dirs, z0):
    """Distance along each ray to the plane z = z0; inf when missed."""
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (z0 - origin[2]) / dz
    t = np.where((np.abs(dz) > 1e-12) & (t > 1e-9), t, np.inf)
    return t


def ray_box(origin, dirs, lo, hi):
    """Slab-method distance to an axis-aligned box; inf when missed."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (lo[None, :] - origin[None, :]) * inv
    t2 = (hi[None, :] - origin[None, :]) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # rays parallel to an axis: hit only if origin lies inside that slab
    parallel = np.abs(dirs) < 1e-12
    inside = (origin[None, :] >= lo[None, :]) & (origin[None, :] <= hi[None, :])
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    t_enter = tmin.max(axis=1)
    t_exit = tmax.min(axis=1)
    hit = (t_enter <= t_exit) & (t_exit > 1e-9)
    t = np.where(t_enter > 1e-9, t_enter, t_exit)  # inside the box: exit face
    return np.where(hit, t, np.inf)


def ray_cylinder(origin, dirs, center, radius, half_height):
    """Distance to a finite vertical capped cylinder; inf when missed."""
    o = origin[None, :] - center[None, :]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    ox, oy = o[0, 0], o[0, 1]
    oz = o[0, 2]

    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    t_side = np.full(dirs.shape[0], np.inf)
    ok = (disc >= 0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = oz + t * dz
            good = ok & (t > 1e-9) & (np.abs(z) <= half_height)
            t_side = np.where(good & (t < t_side), t, t_side)

    t_cap = np.full(dirs.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for zc in (-half_height, half_height):
            t = (zc - oz) / dz
            good = (np.abs(dz) > 1e-12) & (t > 1e-9)
            xx = ox + t * dx
            yy = oy + t * dy
            good &= xx * xx + yy * yy <= radius * radius
            t_cap = np.where(good & (t < t_cap), t, t_cap)
    return np.minimum(t_side, t_cap)


def _ray_directions(beams: BeamConfig) -> np.ndarray:
    elev = np.asarray(beams.beams)
    az = 2.0 * np.pi * np.arange(beams.azimuth_steps) / beams.azimuth_steps
    ce, se = np.cos(elev), np.sin(elev)
    ca, sa = np.cos(az), np.sin(az)
    dirs = np.stack(
        [np.outer(ce, ca), np.outer(ce, sa), np.broadcast_to(se[:, None], (elev.size, az.size))],
        axis=2,
    )
    return dirs.reshape(-1, 3)


def simulate_scan(world: World, frame: int, pose: RigidPose, beams: BeamConfig):
    """Raycast one frame: (Scan in sensor frame, packed gt labels).

    Instance ids in the labels are the objects' global track ids.
    """
    if frame >= world.config.duration_frames:
        raise ValueError(f"frame {frame} beyond duration {world.config.duration_frames}")
    dirs_sensor = _ray_directions(beams)
    dirs_world = dirs_sensor @ pose.rotation.T
    origin = pose.translation

    n = dirs_world.shape[0]
    best_t = ray_plane_z(origin, dirs_world, world.ground_z)
    best_class = np.full(n, CLASS_GROUND, dtype=np.int64)
    best_track = np.zeros(n, dtype=np.int64)

    for obj in world.objects:
        c = obj.center_at(frame)
        if obj.kind == "box":
            h = np.array(obj.size)
            t = ray_box(origin, dirs_world, c - h, c + h)
        else:
            t = ray_cylinder(origin, dirs_world, c, obj.size[0], obj.size[1])
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_class = np.where(closer, obj.class_id, best_class)
        best_track = np.where(closer, obj.track_id, best_track)

    hit = np.isfinite(best_t) & (best_t <= beams.max_range)
    t = best_t[hit]
    pts_sensor = dirs_sensor[hit] * t[:, None]
    cls = best_class[hit]
    refl = np.array([REFLECTANCE.get(c, 0.3) for c in range(6)])
    intensity = refl[cls]
    points = np.concatenate([pts_sensor, intensity[:, None]], axis=1).astype(np.float32)
    labels = pack_arrays(cls, best_track[hit])
    return (
        Scan(points=points, scan_index=frame, timestamp=float(frame)),
        labels,
    )


def generate_sequence(world_config: WorldConfig, beam_config: BeamConfig, out_dir):
    """Write a full sequence (scans, labels, poses, taxonomy) to disk.

    Returns (world, per-frame point counts).
    """
    world = build_world(world_config)
    os.makedirs(os.path.join(out_dir, "scans"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "labels"), exist_ok=True)
    poses = []
    counts = []
    for frame in range(world_config.duration_frames):
        pose = ego_pose(world_config, frame)
        scan, labels = simulate_scan(world, frame, pose, beam_config)
        save_scan(os.path.join(out_dir, "scans", f"{frame:06d}.bin"), scan)
        save_labels(os.path.join(out_dir, "labels", f"{frame:06d}.label"), labels)
        poses.append(pose)
        counts.append(len(scan))
    save_poses(os.path.join(out_dir, "poses.txt"), poses)
    save_taxonomy(os.path.join(out_dir, "taxonomy.txt"), world.taxonomy)
    return world, counts
