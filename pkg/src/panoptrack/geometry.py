"""Rigid transforms and ego-motion-compensated accumulation of scan trios.

A trio merges three consecutive scans (t-2, t-1, t) into the coordinate
frame of the newest scan t, keeping per-point provenance so predictions on
the merged cloud can later be split back into the source scans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RigidPose, Scan


class SequenceError(ValueError):
    """Scans are not consecutive or a sequence is too short."""


@dataclass(frozen=True)
class Trio:
    """Three consecutive scans merged into the newest scan's frame.

    points: (M, 4) float64 merged (x, y, z, intensity), oldest scan first.
    provenance: (M, 2) int64 of (source_scan_index, source_point_index).
    member_indices: scan indices oldest to newest; the last is reference_index.
    member_counts: point count per member, same order.
    """

    reference_index: int
    points: np.ndarray
    provenance: np.ndarray
    member_indices: tuple
    member_counts: tuple

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def member_slices(self) -> dict[int, slice]:
        """Slice of the merged arrays holding each member scan's points."""
        out = {}
        start = 0
        for idx, count in zip(self.member_indices, self.member_counts):
            out[idx] = slice(start, start + count)
            start += count
        return out

    def gather_point_labels(self, per_scan_labels: dict[int, np.ndarray]) -> np.ndarray:
        """Concatenate per-scan label arrays into merged-point order."""
        parts = []
        for idx, count in zip(self.member_indices, self.member_counts):
            labels = np.asarray(per_scan_labels[idx])
            if labels.shape[0] != count:
                raise ValueError(
                    f"scan {idx}: {labels.shape[0]} labels for {count} points"
                )
            parts.append(labels)
        if not parts:
            return np.zeros(0, dtype=np.uint32)
        return np.concatenate(parts)


def transform_points(points: np.ndarray, pose: RigidPose) -> np.ndarray:
    """Apply p' = R p + t to the xyz columns; intensity (if present) unchanged."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (3, 4):
        raise ValueError("points must be (N, 3) or (N, 4)")
    out = pts.copy()
    out[:, :3] = pose.apply(pts[:, :3])
    return out


def build_trio(scans, poses) -> Trio:
    """Merge scans (oldest to newest) into the newest scan's frame.

    Older scans are re-expressed via T_newest^-1 @ T_older; the newest
    scan's points are passed through bit-identically.
    """
    scans = list(scans)
    poses = list(poses)
    if len(scans) != len(poses):
        raise ValueError("one pose per scan required")
    if not scans:
        raise SequenceError("empty trio")
    indices = [s.scan_index for s in scans]
    for a, b in zip(indices, indices[1:]):
        if b != a + 1:
            raise SequenceError(f"scan indices {indices} are not consecutive")
    ref_pose_inv = poses[-1].inverse()
    parts = []
    prov = []
    for scan, pose in zip(scans, poses):
        pts = scan.points.astype(np.float64)
        if scan is not scans[-1]:
            rel = ref_pose_inv.compose(pose)
            pts = transform_points(pts, rel)
        parts.append(pts)
        prov.append(
            np.stack(
                [
                    np.full(len(scan), scan.scan_index, dtype=np.int64),
                    np.arange(len(scan), dtype=np.int64),
                ],
                axis=1,
            )
        )
    points = np.concatenate(parts) if parts else np.zeros((0, 4))
    provenance = np.concatenate(prov) if prov else np.zeros((0, 2), dtype=np.int64)
    return Trio(
        reference_index=indices[-1],
        points=points,
        provenance=provenance,
        member_indices=tuple(indices),
        member_counts=tuple(len(s) for s in scans),
    )


def split_by_provenance(trio: Trio, values: np.ndarray) -> dict[int, np.ndarray]:
    """Split a per-merged-point array back into per-scan arrays in source order."""
    values = np.asarray(values)
    if values.shape[0] != len(trio):
        raise ValueError("one value per merged point required")
    return {idx: values[sl] for idx, sl in trio.member_slices().items()}
