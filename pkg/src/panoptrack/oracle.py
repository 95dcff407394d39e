"""Segmentation-network stand-in.

Produces the same artifacts the omitted network would feed the fusion
stage: per-pixel semantic logits and scored instance mask predictions.
Outputs come either from prediction files on disk or from ground truth
corrupted with calibrated, seeded noise.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    DataError,
    FormatError,
    Taxonomy,
    instance_of,
    semantic_of,
)

LOGIT_HI = 10.0  # one-hot scale for noise-free logits and mask interiors


@dataclass(frozen=True)
class InstancePrediction:
    """One predicted object: mask logits over the image, class, confidence."""

    mask_logits: np.ndarray
    semantic_class: int
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise DataError(f"instance score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class NoiseConfig:
    """Corruption rates for the ground-truth oracle; all-zero means noise-free."""

    class_confusion_rate: float = 0.0
    boundary_jitter_px: int = 0
    instance_split_prob: float = 0.0
    instance_merge_prob: float = 0.0
    drop_prob: float = 0.0
    score_floor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("class_confusion_rate", "instance_split_prob",
                     "instance_merge_prob", "drop_prob", "score_floor"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.boundary_jitter_px < 0:
            raise ValueError("boundary_jitter_px must be >= 0")


def _segment_rng(seed: int, tag: int, packed: int) -> np.random.Generator:
    """Independent substream per (segment, purpose): order-insensitive noise."""
    return np.random.default_rng([seed, tag, packed])


def _confuse_class(cls: int, taxonomy: Taxonomy, rng: np.random.Generator) -> int:
    pool = taxonomy.thing_classes() if taxonomy.is_thing[cls] else taxonomy.stuff_classes()
    pool = [c for c in pool if c != cls and c != taxonomy.void_class]
    if not pool:
        return cls
    return pool[rng.integers(len(pool))]


def _split_mask(mask: np.ndarray):
    """Cut a mask through its centroid, perpendicular to its principal axis."""
    ys, xs = np.nonzero(mask)
    if ys.size < 2:
        return None
    pts = np.stack([ys - ys.mean(), xs - xs.mean()], axis=1).astype(np.float64)
    cov = pts.T @ pts
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, -1]  # principal direction
    proj = pts @ axis
    a = mask.copy()
    b = mask.copy()
    a[ys[proj > 0], xs[proj > 0]] = False
    b[ys[proj <= 0], xs[proj <= 0]] = False
    if not a.any() or not b.any():
        return None
    return a, b


def _jitter_mask(mask: np.ndarray, amount: int, grow: bool) -> np.ndarray:
    if amount <= 0:
        return mask
    if grow:
        return ndimage.binary_dilation(mask, iterations=amount)
    eroded = ndimage.binary_erosion(mask, iterations=amount)
    return eroded if eroded.any() else mask


def oracle_outputs(gt_pixel_labels: np.ndarray, taxonomy: Taxonomy,
                   noise: NoiseConfig = NoiseConfig()):
    """Semantic logits and instance predictions from a ground-truth grid.

    Noise-free output is exact: one-hot logits scaled by 10 and one
    score-1.0 instance per ground-truth thing segment. Each corruption is
    applied per segment from its own seeded substream, so results do not
    depend on segment enumeration order.
    """
    grid = np.asarray(gt_pixel_labels, dtype=np.uint32)
    H, W = grid.shape
    C = taxonomy.class_count
    sem = semantic_of(grid)
    inst = instance_of(grid)
    if sem.size and sem.max() >= C:
        raise DataError("grid contains classes beyond the taxonomy")

    is_thing = np.array(taxonomy.is_thing, dtype=bool)
    thing_mask = is_thing[sem] & (inst > 0)

    # semantic class map after per-segment confusion
    class_map = sem.copy()
    segments = np.unique(grid)
    seg_class = {}
    for packed in segments.tolist():
        cls = packed & 0xFFFF
        out_cls = cls
        if noise.class_confusion_rate > 0 and cls != taxonomy.void_class:
            rng = _segment_rng(noise.seed, 1, packed)
            if rng.random() < noise.class_confusion_rate:
                out_cls = _confuse_class(cls, taxonomy, rng)
        seg_class[packed] = out_cls
        if out_cls != cls:
            class_map[grid == np.uint32(packed)] = out_cls

    logits = np.zeros((H, W, C), dtype=np.float64)
    rr, cc = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    logits[rr, cc, class_map] = LOGIT_HI

    # instance predictions from thing segments
    masks = []  # (sort_key, mask, class)
    for packed in segments.tolist():
        cls = packed & 0xFFFF
        iid = packed >> 16
        if iid == 0 or not (0 <= cls < C) or not taxonomy.is_thing[cls]:
            continue
        mask = grid == np.uint32(packed)
        masks.append([packed, mask, seg_class[packed]])

    # pairwise merges: a flagged segment absorbs its nearest same-class peer
    if noise.instance_merge_prob > 0 and len(masks) >= 2:
        centroids = {}
        for key, mask, cls in masks:
            ys, xs = np.nonzero(mask)
            centroids[key] = (ys.mean(), xs.mean())
        consumed = set()
        merged = []
        for key, mask, cls in masks:
            if key in consumed:
                continue
            rng = _segment_rng(noise.seed, 2, key)
            if rng.random() < noise.instance_merge_prob:
                peers = [(k2, m2) for k2, m2, c2 in masks
                         if c2 == cls and k2 != key and k2 not in consumed]
                if peers:
                    cy, cx = centroids[key]
                    k2, m2 = min(
                        peers,
                        key=lambda p: ((centroids[p[0]][0] - cy) ** 2
                                       + (centroids[p[0]][1] - cx) ** 2, p[0]),
                    )
                    mask = mask | m2
                    consumed.add(k2)
            merged.append([key, mask, cls])
        masks = [m for m in merged if m[0] not in consumed]

    expanded = []
    for key, mask, cls in masks:
        rng = _segment_rng(noise.seed, 3, key)
        if noise.instance_split_prob > 0 and rng.random() < noise.instance_split_prob:
            halves = _split_mask(mask)
            if halves is not None:
                expanded.append([key * 2, halves[0], cls])
                expanded.append([key * 2 + 1, halves[1], cls])
                continue
        expanded.append([key * 2, mask, cls])
    masks = expanded

    predictions = []
    for key, mask, cls in masks:
        rng = _segment_rng(noise.seed, 4, key)
        if noise.boundary_jitter_px > 0:
            amount = int(rng.integers(0, noise.boundary_jitter_px + 1))
            mask = _jitter_mask(mask, amount, grow=bool(rng.integers(2)))
        if noise.drop_prob > 0 and rng.random() < noise.drop_prob:
            continue
        score = 1.0 if noise.score_floor >= 1.0 else float(
            rng.uniform(noise.score_floor, 1.0))
        mask_logits = np.where(mask, LOGIT_HI, -LOGIT_HI)
        predictions.append(InstancePrediction(mask_logits, int(cls), score))
    return logits, predictions


# ---------------------------------------------------------------------------
# prediction files


def prediction_paths(seq_dir, index: int):
    stem = os.path.join(seq_dir, "pred", f"{index:06d}")
    return stem + ".logits", stem + ".inst"


def save_predictions(seq_dir, index: int, logits: np.ndarray, instances) -> None:
    os.makedirs(os.path.join(seq_dir, "pred"), exist_ok=True)
    lpath, ipath = prediction_paths(seq_dir, index)
    # logits stored C-major: C planes of H x W
    np.ascontiguousarray(np.moveaxis(logits, 2, 0), dtype="<f4").tofile(lpath)
    with open(ipath, "wb") as f:
        f.write(struct.pack("<I", len(instances)))
        for p in instances:
            f.write(struct.pack("<Hf", p.semantic_class, p.score))
            np.ascontiguousarray(p.mask_logits, dtype="<f4").tofile(f)


def load_predictions(seq_dir, index: int, height: int, width: int,
                     taxonomy: Taxonomy):
    """Read a (logits, instances) pair written in the on-disk layout."""
    lpath, ipath = prediction_paths(seq_dir, index)
    for p in (lpath, ipath):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    C = taxonomy.class_count
    raw = np.fromfile(lpath, dtype="<f4")
    if raw.size != C * height * width:
        raise FormatError(
            f"{lpath}: {raw.size} values, expected {C}x{height}x{width}")
    logits = np.moveaxis(raw.reshape(C, height, width), 0, 2).astype(np.float64)
    if not np.isfinite(logits).all():
        raise DataError(f"{lpath}: non-finite logits")

    instances = []
    with open(ipath, "rb") as f:
        head = f.read(4)
        if len(head) != 4:
            raise FormatError(f"{ipath}: truncated header")
        (count,) = struct.unpack("<I", head)
        for i in range(count):
            meta = f.read(6)
            if len(meta) != 6:
                raise FormatError(f"{ipath}: truncated instance {i}")
            cls, score = struct.unpack("<Hf", meta)
            mask = np.fromfile(f, dtype="<f4", count=height * width)
            if mask.size != height * width:
                raise FormatError(f"{ipath}: truncated mask for instance {i}")
            if not (0 <= cls < C) or not taxonomy.is_thing[cls]:
                raise DataError(f"{ipath}: instance {i} class {cls} is not a thing class")
            instances.append(InstancePrediction(
                mask.reshape(height, width).astype(np.float64), int(cls), float(score)))
    return logits, instances
