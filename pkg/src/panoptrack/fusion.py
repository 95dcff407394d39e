"""Parameter-free panoptic fusion of semantic logits and instance masks.

Instances are filtered by score, ranked, and given exclusive pixel claims;
surviving instances then compete per pixel against the stuff semantic
channels using the fused logit

    FL = (sigmoid(MLA) + sigmoid(MLB)) * (MLA + MLB)

where MLA is the instance mask logit and MLB the semantic logit of the
instance's class. Every pixel receives exactly one label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConsistencyError, Taxonomy, pack_arrays


@dataclass(frozen=True)
class FusionConfig:
    score_thresh: float = 0.5
    overlap_thresh: float = 0.5
    min_stuff_area: int = 0

    def __post_init__(self):
        if not (0.0 <= self.score_thresh <= 1.0):
            raise ValueError("score_thresh outside [0, 1]")
        if not (0.0 <= self.overlap_thresh <= 1.0):
            raise ValueError("overlap_thresh outside [0, 1]")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fuse(logits: np.ndarray, instances, taxonomy: Taxonomy,
         config: FusionConfig = FusionConfig()) -> np.ndarray:
    """Fuse one trio's head outputs into a packed panoptic label grid.

    Thing instance ids are fresh ranks 1..n per call; global identity is
    assigned later by the tracker.
    """
    logits = np.asarray(logits, dtype=np.float64)
    H, W, C = logits.shape
    if C != taxonomy.class_count:
        raise ConsistencyError("logit channels do not match the taxonomy")
    for p in instances:
        if p.mask_logits.shape != (H, W):
            raise ConsistencyError("instance mask shape does not match logits")

    kept = [(i, p) for i, p in enumerate(instances) if p.score >= config.score_thresh]
    # descending score, ties by original index
    kept.sort(key=lambda ip: (-ip[1].score, ip[0]))

    # exclusive pixel claims: each contested pixel goes to the best rank
    claim = np.full((H, W), -1, dtype=np.int64)
    survivors = []
    for rank, (orig, pred) in enumerate(kept):
        mask = pred.mask_logits > 0
        area = int(mask.sum())
        if area == 0:
            continue
        free = mask & (claim < 0)
        if free.sum() / area < config.overlap_thresh:
            continue
        claim[free] = len(survivors)
        survivors.append((pred, free))

    stuff = taxonomy.stuff_classes()
    if not stuff:
        raise ConsistencyError("taxonomy has no stuff classes")
    stuff_logits = logits[:, :, stuff]  # (H, W, S)
    stuff_ids = np.array(stuff, dtype=np.int64)

    best_stuff = np.argmax(stuff_logits, axis=2)
    best_stuff_val = np.take_along_axis(stuff_logits, best_stuff[:, :, None], axis=2)[:, :, 0]
    # runner-up stuff choice, used by the small-segment filter
    if len(stuff) > 1:
        masked = stuff_logits.copy()
        np.put_along_axis(masked, best_stuff[:, :, None], -np.inf, axis=2)
        second_stuff = np.argmax(masked, axis=2)
    else:
        second_stuff = best_stuff

    out_class = stuff_ids[best_stuff]
    out_inst = np.zeros((H, W), dtype=np.int64)

    for sid, (pred, claimed) in enumerate(survivors):
        mla = pred.mask_logits[claimed]
        mlb = logits[:, :, pred.semantic_class][claimed]
        fl = (_sigmoid(mla) + _sigmoid(mlb)) * (mla + mlb)
        win = fl > best_stuff_val[claimed]
        rows, cols = np.nonzero(claimed)
        rows, cols = rows[win], cols[win]
        out_class[rows, cols] = pred.semantic_class
        out_inst[rows, cols] = sid + 1

    if config.min_stuff_area > 0:
        for cls in stuff:
            seg = (out_class == cls) & (out_inst == 0)
            area = int(seg.sum())
            if 0 < area < config.min_stuff_area:
                out_class[seg] = stuff_ids[second_stuff[seg]]

    # compact instance ids so the grid carries exactly 1..m in rank order
    present = np.unique(out_inst[out_inst > 0])
    if present.size:
        remap = np.zeros(int(present.max()) + 1, dtype=np.int64)
        remap[present] = np.arange(1, present.size + 1)
        out_inst = remap[out_inst]

    return pack_arrays(out_class, out_inst)
