"""Local-to-global track stitching over consecutive scan trios.

A trio's fused prediction carries instance ids that are consistent only
within its three scans. Consecutive trios share two scans: because the
shared scans are literally the same point clouds, a local instance is
matched to a previous global track by counting points (by scan and point
index) that carry the local id now and a global id of the same class in
the ledger memory. Unmatched instances receive fresh global ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Taxonomy, instance_of, pack_arrays, semantic_of
from .fusion import FusionConfig, fuse
from .geometry import SequenceError, Trio, build_trio, split_by_provenance
from .projection import (
    KnnConfig,
    ProjectionConfig,
    knn_unproject,
    project,
    project_labels,
)


@dataclass(frozen=True)
class LocalTrioResult:
    """Per-scan packed labels for one trio; instance ids are trio-local."""

    reference_index: int
    member_indices: tuple
    labels: dict[int, np.ndarray]  # scan index -> packed labels in point order


@dataclass
class TrackLedger:
    """Serial association state carried from one trio to the next.

    memory maps each overlap scan index to (global_id, semantic_class)
    arrays over that scan's points; global_id 0 means "no track".
    """

    next_global_id: int = 1
    memory: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def segregate(trio: Trio, fused: np.ndarray, image, knn: KnnConfig) -> LocalTrioResult:
    """Re-project the fused grid to all trio points and split per source scan."""
    point_labels = knn_unproject(image, fused, trio, knn)
    return LocalTrioResult(
        reference_index=trio.reference_index,
        member_indices=trio.member_indices,
        labels=split_by_provenance(trio, point_labels),
    )


def _instance_table(result: LocalTrioResult, taxonomy: Taxonomy):
    """Trio-local thing instances: id -> (class, canonical first-point key).

    The canonical key is the first position at which the instance appears
    in oldest-to-newest scan order, which makes downstream orderings
    invariant to how local ids were numbered.
    """
    is_thing = np.array(taxonomy.is_thing, dtype=bool)
    table = {}
    offset = 0
    for scan_idx in result.member_indices:
        labels = result.labels[scan_idx]
        sem = semantic_of(labels)
        inst = instance_of(labels)
        mask = is_thing[sem] & (inst > 0)
        for pos in np.nonzero(mask)[0]:
            lid = int(inst[pos])
            if lid not in table:
                table[lid] = (int(sem[pos]), offset + int(pos))
        offset += labels.shape[0]
    return table


def associate(ledger: TrackLedger, current: LocalTrioResult, taxonomy: Taxonomy,
              min_overlap: int = 1):
    """Map the trio's local instance ids to globally consistent track ids.

    Votes count overlap-scan points carrying local id l now and global id g
    (same class) in the ledger; candidate pairs are matched greedily one to
    one in descending-vote order. Fresh ids are issued to unmatched
    instances in canonical first-point order, which keeps the result
    invariant under any renaming of the local ids.
    """
    if ledger.memory:
        expected = set(current.member_indices[:-1])
        if set(ledger.memory) != expected:
            raise SequenceError(
                f"ledger memory {sorted(ledger.memory)} does not match the "
                f"trio's overlap scans {sorted(expected)}"
            )

    table = _instance_table(current, taxonomy)
    is_thing = np.array(taxonomy.is_thing, dtype=bool)

    votes: dict[tuple[int, int], int] = {}
    for scan_idx, (mem_gid, mem_cls) in ledger.memory.items():
        labels = current.labels.get(scan_idx)
        if labels is None:
            continue
        sem = semantic_of(labels)
        inst = instance_of(labels)
        mask = is_thing[sem] & (inst > 0) & (mem_gid > 0) & (mem_cls == sem)
        if not mask.any():
            continue
        pairs = inst[mask] * (2**32) + mem_gid[mask]
        uniq, counts = np.unique(pairs, return_counts=True)
        for code, n in zip(uniq.tolist(), counts.tolist()):
            key = (code // 2**32, code % 2**32)
            votes[key] = votes.get(key, 0) + n

    candidates = [(l, g, n) for (l, g), n in votes.items() if n >= min_overlap]
    # descending votes; ties by smaller global id, then canonical local key
    candidates.sort(key=lambda t: (-t[2], t[1], table[t[0]][1]))
    mapping: dict[int, int] = {}
    used_globals: set[int] = set()
    for lid, gid, _ in candidates:
        if lid in mapping or gid in used_globals:
            continue
        mapping[lid] = gid
        used_globals.add(gid)

    fresh = sorted((key, lid) for lid, (_, key) in table.items() if lid not in mapping)
    for _, lid in fresh:
        mapping[lid] = ledger.next_global_id
        ledger.next_global_id += 1

    out: dict[int, np.ndarray] = {}
    for scan_idx in current.member_indices:
        labels = current.labels[scan_idx]
        sem = semantic_of(labels)
        inst = instance_of(labels)
        gids = np.zeros_like(inst)
        mask = is_thing[sem] & (inst > 0)
        if mask.any():
            lut = np.zeros(int(inst[mask].max()) + 1, dtype=np.int64)
            for lid, gid in mapping.items():
                if lid < lut.shape[0]:
                    lut[lid] = gid
            gids[mask] = lut[inst[mask]]
        out[scan_idx] = pack_arrays(sem, gids)

    ledger.memory = {}
    for scan_idx in current.member_indices[-2:]:
        labels = out[scan_idx]
        sem = semantic_of(labels)
        inst = instance_of(labels)
        ledger.memory[scan_idx] = (inst, sem)
    return out, ledger


# ---------------------------------------------------------------------------
# sequence driver


@dataclass(frozen=True)
class PipelineConfig:
    projection: ProjectionConfig = ProjectionConfig()
    knn: KnnConfig = KnnConfig()
    fusion: FusionConfig = FusionConfig()
    min_overlap: int = 1
    bypass_projection: bool = False


def relabel_to_local(trio: Trio, point_labels: np.ndarray,
                     taxonomy: Taxonomy) -> np.ndarray:
    """Renumber thing instance ids to trio-local 1..n by first appearance."""
    sem = semantic_of(point_labels)
    inst = instance_of(point_labels)
    is_thing = np.array(taxonomy.is_thing, dtype=bool)
    mask = is_thing[sem] & (inst > 0)
    local = np.zeros_like(inst)
    if mask.any():
        ids = inst[mask]
        _, first_pos, inverse = np.unique(ids, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first_pos, kind="stable"), kind="stable")
        local[mask] = order[inverse] + 1
    return pack_arrays(sem, local)


def run_sequence(scans, poses, taxonomy: Taxonomy, segmenter,
                 config: PipelineConfig = PipelineConfig(),
                 local_permuter=None) -> dict[int, np.ndarray]:
    """Process a whole sequence trio by trio into global panoptic labels.

    segmenter(trio, image) -> (semantic logits, instance predictions); in
    bypass mode it is instead called as segmenter(trio, None) and must
    return per-point packed labels for the merged cloud.

    Each scan is emitted from the trio in which it is newest; the first
    trio additionally emits the two leading scans. `local_permuter`, when
    given, rewrites each LocalTrioResult before association (test hook for
    the id-repair property).
    """
    scans = list(scans)
    poses = list(poses)
    if len(scans) < 3:
        raise SequenceError(f"need at least 3 scans, got {len(scans)}")
    if len(scans) != len(poses):
        raise SequenceError("one pose per scan required")

    ledger = TrackLedger()
    emitted: dict[int, np.ndarray] = {}
    for k in range(2, len(scans)):
        trio = build_trio(scans[k - 2:k + 1], poses[k - 2:k + 1])
        if config.bypass_projection:
            point_labels = segmenter(trio, None)
            local = LocalTrioResult(
                reference_index=trio.reference_index,
                member_indices=trio.member_indices,
                labels=split_by_provenance(
                    trio, relabel_to_local(trio, point_labels, taxonomy)),
            )
        else:
            image = project(trio, config.projection)
            logits, instances = segmenter(trio, image)
            fused = fuse(logits, instances, taxonomy, config.fusion)
            local = segregate(trio, fused, image, config.knn)
        if local_permuter is not None:
            local = local_permuter(local)
        global_labels, ledger = associate(ledger, local, taxonomy, config.min_overlap)
        if k == 2:
            emitted[scans[0].scan_index] = global_labels[scans[0].scan_index]
            emitted[scans[1].scan_index] = global_labels[scans[1].scan_index]
        emitted[scans[k].scan_index] = global_labels[scans[k].scan_index]
    return emitted
