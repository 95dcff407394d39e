"""Domain types and bit-exact file I/O for scans, panoptic labels, and poses.

Conventions used throughout the package:

* Scans are stored as little-endian float32 quads ``(x, y, z, intensity)``.
* Panoptic labels are packed into 32-bit unsigned integers as
  ``(instance_id << 16) | semantic_class``.
* Poses are sensor-to-world: ``p_world = R @ p_sensor + t``.
* Semantic class 0 is conventionally the void / unlabeled class; packed
  value 0 therefore doubles as the void label.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

VOID = np.uint32(0)

ORTHONORMAL_TOL = 1e-6
POSE_FILE_TOL = 1e-4


class FormatError(ValueError):
    """Malformed file: bad size, bad field count, unparseable content."""


class DataError(ValueError):
    """Well-formed file carrying invalid values (non-finite, out of range)."""


class ConsistencyError(ValueError):
    """Mismatch between files or arrays that must agree positionally."""


@dataclass(frozen=True)
class PanopticLabel:
    """A (semantic class, instance id) pair. Stuff classes use instance 0."""

    semantic_class: int
    instance_id: int = 0


@dataclass(frozen=True)
class Scan:
    """One LiDAR sweep: an ordered (N, 4) float32 array of x, y, z, intensity.

    Point order is significant; label files pair with points positionally.
    """

    points: np.ndarray
    scan_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]


@dataclass(frozen=True)
class RigidPose:
    """Sensor-to-world rigid transform: p_world = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > POSE_FILE_TOL:
            raise DataError(f"rotation not orthonormal (max deviation {err:.3g})")
        if not np.isclose(np.linalg.det(r), 1.0, atol=POSE_FILE_TOL):
            raise DataError("rotation determinant is not +1 (improper rotation)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    def inverse(self) -> "RigidPose":
        return RigidPose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=np.float64)
        return xyz @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Taxonomy:
    """Class table: names plus the stuff/thing partition.

    `void_class`, when set, is excluded from all evaluation.
    """

    names: tuple = field(default_factory=tuple)
    is_thing: tuple = field(default_factory=tuple)
    void_class: int | None = None

    def __post_init__(self):
        if len(self.names) != len(self.is_thing):
            raise ConsistencyError("names and is_thing must have equal length")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "is_thing", tuple(bool(b) for b in self.is_thing))

    @property
    def class_count(self) -> int:
        return len(self.names)

    def thing_classes(self) -> list[int]:
        return [i for i, t in enumerate(self.is_thing) if t]

    def stuff_classes(self) -> list[int]:
        return [i for i, t in enumerate(self.is_thing) if not t]


# ---------------------------------------------------------------------------
# packed label codec


def pack_label(label: PanopticLabel) -> int:
    """Pack (class, instance) into 32 bits: (instance << 16) | class."""
    c, i = label.semantic_class, label.instance_id
    if not (0 <= c < 65536):
        raise ValueError(f"semantic_class {c} exceeds 16-bit range")
    if not (0 <= i < 65536):
        raise ValueError(f"instance_id {i} exceeds 16-bit range")
    return (i << 16) | c


def unpack_label(packed: int) -> PanopticLabel:
    packed = int(packed)
    if not (0 <= packed < 2**32):
        raise ValueError(f"packed value {packed} exceeds 32-bit range")
    return PanopticLabel(packed & 0xFFFF, packed >> 16)


def pack_arrays(classes: np.ndarray, instances: np.ndarray) -> np.ndarray:
    """Vectorized pack: uint32 array from class and instance arrays."""
    classes = np.asarray(classes)
    instances = np.asarray(instances)
    if classes.size and (classes.min() < 0 or classes.max() >= 65536):
        raise ValueError("semantic class out of 16-bit range")
    if instances.size and (instances.min() < 0 or instances.max() >= 65536):
        raise ValueError("instance id out of 16-bit range")
    return (instances.astype(np.uint32) << np.uint32(16)) | classes.astype(np.uint32)


def semantic_of(packed: np.ndarray) -> np.ndarray:
    return (np.asarray(packed, dtype=np.uint32) & np.uint32(0xFFFF)).astype(np.int64)


def instance_of(packed: np.ndarray) -> np.ndarray:
    return (np.asarray(packed, dtype=np.uint32) >> np.uint32(16)).astype(np.int64)


# ---------------------------------------------------------------------------
# file I/O


def load_scan(path, scan_index: int = 0, timestamp: float = 0.0,
              clamp_intensity: bool = True) -> Scan:
    """Read a binary scan file of little-endian float32 (x, y, z, intensity) quads."""
    size = os.path.getsize(path)
    if size % 16 != 0:
        raise FormatError(
            f"{path}: size {size} bytes is not a multiple of the 16-byte point record"
        )
    raw = np.fromfile(path, dtype="<f4")
    pts = raw.reshape(-1, 4)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        raise DataError(f"{path}: non-finite values at point index {int(np.argmax(bad))}")
    if clamp_intensity and pts.shape[0]:
        inten = pts[:, 3]
        if inten.min() < 0.0 or inten.max() > 1.0:
            import warnings

            warnings.warn(f"{path}: intensity outside [0, 1] clamped")
            pts = pts.copy()
            pts[:, 3] = np.clip(inten, 0.0, 1.0)
    return Scan(points=pts, scan_index=scan_index, timestamp=timestamp)


def save_scan(path, scan: Scan) -> None:
    scan.points.astype("<f4").tofile(path)


def load_labels(path, expected_count: int | None = None) -> np.ndarray:
    """Read packed uint32 labels; checks the count against the paired scan."""
    packed = np.fromfile(path, dtype="<u4")
    if expected_count is not None and packed.size != expected_count:
        raise ConsistencyError(
            f"{path}: {packed.size} labels but the paired scan has "
            f"{expected_count} points"
        )
    return packed.astype(np.uint32)


def save_labels(path, packed: np.ndarray) -> None:
    np.asarray(packed, dtype="<u4").tofile(path)


def load_poses(path) -> list[RigidPose]:
    """Parse one 3x4 row-major (rotation | translation) line per pose."""
    poses = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 12:
                raise FormatError(f"{path}:{lineno}: expected 12 fields, got {len(fields)}")
            try:
                vals = np.array([float(v) for v in fields], dtype=np.float64)
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
            mat = vals.reshape(3, 4)
            try:
                poses.append(RigidPose(mat[:, :3], mat[:, 3]))
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return poses


def save_poses(path, poses) -> None:
    with open(path, "w") as f:
        for p in poses:
            mat = np.hstack([p.rotation, p.translation.reshape(3, 1)])
            f.write(" ".join(repr(float(v)) for v in mat.reshape(-1)) + "\n")


def load_taxonomy(path) -> Taxonomy:
    """Parse `index,name,thing|stuff|void` lines; `void` marks the excluded class."""
    entries = {}
    void_class = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected index,name,kind")
            idx = int(parts[0])
            kind = parts[2].lower()
            if kind not in ("thing", "stuff", "void"):
                raise FormatError(f"{path}:{lineno}: kind must be thing, stuff, or void")
            if idx in entries:
                raise FormatError(f"{path}:{lineno}: duplicate class index {idx}")
            entries[idx] = (parts[1], kind == "thing")
            if kind == "void":
                void_class = idx
    if not entries or sorted(entries) != list(range(len(entries))):
        raise FormatError(f"{path}: class indices must be contiguous from 0")
    names = [entries[i][0] for i in range(len(entries))]
    is_thing = [entries[i][1] for i in range(len(entries))]
    return Taxonomy(names=tuple(names), is_thing=tuple(is_thing), void_class=void_class)


def save_taxonomy(path, taxonomy: Taxonomy) -> None:
    with open(path, "w") as f:
        for i, (name, thing) in enumerate(zip(taxonomy.names, taxonomy.is_thing)):
            if i == taxonomy.void_class:
                kind = "void"
            else:
                kind = "thing" if thing else "stuff"
            f.write(f"{i},{name},{kind}\n")


def frame_name(index: int) -> str:
    return f"{index:06d}"


def scan_path(seq_dir, index: int) -> str:
    return os.path.join(seq_dir, "scans", frame_name(index) + ".bin")


def label_path(seq_dir, index: int) -> str:
    return os.path.join(seq_dir, "labels", frame_name(index) + ".label")


def list_frames(directory, suffix: str) -> list[int]:
    """Sorted frame indices of NNNNNN.<suffix> files in a directory."""
    out = []
    for name in os.listdir(directory):
        stem, dot, ext = name.partition(".")
        if dot and ext == suffix and stem.isdigit():
            out.append(int(stem))
    return sorted(out)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via temp file + rename so readers never see partial content."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
