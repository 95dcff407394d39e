"""Panoptic tracking evaluation: PQ/SQ/RQ, PTQ/sPTQ, LSTQ, TQ, and PAT.

All metrics consume aligned per-frame streams of packed point labels.
Ground-truth void points are removed before any counting, and the void
class never contributes segments on either side. Segment matching uses
strict IoU > 0.5, which makes matches unique without an assignment solver.

Conventions fixed here (the cited benchmark lineage leaves them open):

* classes absent from both prediction and ground truth are excluded from
  class means;
* empty-track denominators use max(n, 1);
* TQ and S_assoc are vacuously 1 when the ground truth has no tracks;
* PAT(0, 0) = 0;
* a tube whose instance id spans several classes reports, per frame, the
  matched pred id of its smallest matched class.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConsistencyError,
    Taxonomy,
    instance_of,
    list_frames,
    load_labels,
    semantic_of,
)

IOU_MATCH_THRESH = 0.5


@dataclass
class FrameMatches:
    """One frame's segment matching, already void-filtered."""

    # class -> list of (iou, pred_instance, gt_instance)
    tp: dict[int, list] = field(default_factory=dict)
    fp: dict[int, int] = field(default_factory=dict)
    fn: dict[int, int] = field(default_factory=dict)


@dataclass
class SegmentMatchTable:
    """Sequence accumulation of per-frame matches, in temporal order."""

    frames: list[FrameMatches] = field(default_factory=list)

    def classes(self):
        seen = set()
        for fm in self.frames:
            seen.update(fm.tp)
            seen.update(fm.fp)
            seen.update(fm.fn)
        return sorted(seen)


@dataclass
class MetricReport:
    pq: float
    sq: float
    rq: float
    ptq: float
    sptq: float
    lstq: float
    s_assoc: float
    s_cls: float
    tq: float
    pat: float
    ids_count: int
    per_class: dict[int, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pq": self.pq, "sq": self.sq, "rq": self.rq,
            "ptq": self.ptq, "sptq": self.sptq,
            "lstq": self.lstq, "s_assoc": self.s_assoc, "s_cls": self.s_cls,
            "tq": self.tq, "pat": self.pat, "ids_count": self.ids_count,
            "per_class": {str(c): v for c, v in self.per_class.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _void_filter(pred: np.ndarray, gt: np.ndarray, taxonomy: Taxonomy):
    pred = np.asarray(pred, dtype=np.uint32)
    gt = np.asarray(gt, dtype=np.uint32)
    if pred.shape != gt.shape:
        raise ConsistencyError(
            f"prediction has {pred.shape[0]} points, ground truth {gt.shape[0]}")
    if taxonomy.void_class is not None:
        keep = semantic_of(gt) != taxonomy.void_class
        pred, gt = pred[keep], gt[keep]
    return pred, gt


def _segment_counts(packed: np.ndarray, taxonomy: Taxonomy) -> dict[int, int]:
    """Counts per packed segment value, void-class segments dropped."""
    uniq, counts = np.unique(packed, return_counts=True)
    out = {}
    for val, n in zip(uniq.tolist(), counts.tolist()):
        if taxonomy.void_class is not None and (val & 0xFFFF) == taxonomy.void_class:
            continue
        out[val] = n
    return out


def match_frame(pred: np.ndarray, gt: np.ndarray, taxonomy: Taxonomy) -> FrameMatches:
    """Match same-class segments between one frame's labelings at IoU > 0.5."""
    pred, gt = _void_filter(pred, gt, taxonomy)
    pred_seg = _segment_counts(pred, taxonomy)
    gt_seg = _segment_counts(gt, taxonomy)

    inter: dict[tuple[int, int], int] = {}
    if pred.size:
        combo = pred.astype(np.uint64) << np.uint64(32) | gt.astype(np.uint64)
        uniq, counts = np.unique(combo, return_counts=True)
        for val, n in zip(uniq.tolist(), counts.tolist()):
            inter[(val >> 32, val & 0xFFFFFFFF)] = n

    fm = FrameMatches()
    matched_pred, matched_gt = set(), set()
    for (p, g), n in inter.items():
        if p not in pred_seg or g not in gt_seg:
            continue
        if (p & 0xFFFF) != (g & 0xFFFF):
            continue
        iou = n / (pred_seg[p] + gt_seg[g] - n)
        if iou > IOU_MATCH_THRESH:
            cls = g & 0xFFFF
            fm.tp.setdefault(cls, []).append((iou, p >> 16, g >> 16))
            matched_pred.add(p)
            matched_gt.add(g)
    for p in pred_seg:
        if p not in matched_pred:
            cls = p & 0xFFFF
            fm.fp[cls] = fm.fp.get(cls, 0) + 1
    for g in gt_seg:
        if g not in matched_gt:
            cls = g & 0xFFFF
            fm.fn[cls] = fm.fn.get(cls, 0) + 1
    return fm


def build_table(frames, taxonomy: Taxonomy) -> SegmentMatchTable:
    table = SegmentMatchTable()
    for pred, gt in frames:
        table.frames.append(match_frame(pred, gt, taxonomy))
    return table


def _class_totals(table: SegmentMatchTable):
    """Per class: (sum IoU, |TP|, |FP|, |FN|) over the whole sequence."""
    totals = {}
    for fm in table.frames:
        for cls, tps in fm.tp.items():
            t = totals.setdefault(cls, [0.0, 0, 0, 0])
            t[0] += sum(iou for iou, _, _ in tps)
            t[1] += len(tps)
        for cls, n in fm.fp.items():
            totals.setdefault(cls, [0.0, 0, 0, 0])[2] += n
        for cls, n in fm.fn.items():
            totals.setdefault(cls, [0.0, 0, 0, 0])[3] += n
    return totals


def pq_sq_rq(table: SegmentMatchTable):
    """Per-class and mean PQ, SQ, RQ."""
    totals = _class_totals(table)
    per_class = {}
    for cls, (iou_sum, tp, fp, fn) in totals.items():
        denom = tp + 0.5 * fp + 0.5 * fn
        pq = iou_sum / denom if denom > 0 else 0.0
        sq = iou_sum / tp if tp > 0 else 0.0
        rq = tp / denom if denom > 0 else 0.0
        per_class[cls] = {"pq": pq, "sq": sq, "rq": rq,
                          "tp": tp, "fp": fp, "fn": fn}
    if per_class:
        means = {k: float(np.mean([v[k] for v in per_class.values()]))
                 for k in ("pq", "sq", "rq")}
    else:
        means = {"pq": 0.0, "sq": 0.0, "rq": 0.0}
    return per_class, means


def _switches(table: SegmentMatchTable, taxonomy: Taxonomy):
    """ID switches: (frame, class, gt_instance, iou_at_switch) events.

    A switch is charged at frame f when a ground-truth thing track matched
    at f was matched to a different pred id at its latest earlier matched
    frame.
    """
    last_pred: dict[tuple[int, int], int] = {}
    events = []
    for f, fm in enumerate(table.frames):
        for cls, tps in fm.tp.items():
            if not taxonomy.is_thing[cls]:
                continue
            for iou, pred_inst, gt_inst in tps:
                if gt_inst == 0:
                    continue
                key = (cls, gt_inst)
                prev = last_pred.get(key)
                if prev is not None and prev != pred_inst:
                    events.append((f, cls, gt_inst, iou))
                last_pred[key] = pred_inst
    return events


def ptq_sptq(table: SegmentMatchTable, taxonomy: Taxonomy):
    """PQ variants charging (hard / IoU-weighted) track id switches."""
    totals = _class_totals(table)
    events = _switches(table, taxonomy)
    ids_n = {}
    ids_iou = {}
    for _, cls, _, iou in events:
        ids_n[cls] = ids_n.get(cls, 0) + 1
        ids_iou[cls] = ids_iou.get(cls, 0.0) + iou
    per_class = {}
    for cls, (iou_sum, tp, fp, fn) in totals.items():
        denom = tp + 0.5 * fp + 0.5 * fn
        ptq = max(iou_sum - ids_n.get(cls, 0), 0.0) / denom if denom > 0 else 0.0
        sptq = max(iou_sum - ids_iou.get(cls, 0.0), 0.0) / denom if denom > 0 else 0.0
        per_class[cls] = {"ptq": ptq, "sptq": sptq, "ids": ids_n.get(cls, 0)}
    if per_class:
        means = {k: float(np.mean([v[k] for v in per_class.values()]))
                 for k in ("ptq", "sptq")}
    else:
        means = {"ptq": 0.0, "sptq": 0.0}
    return per_class, means, len(events)


def _tubes(frames, taxonomy: Taxonomy):
    """(gt tubes, pred tubes, gt tube frame sets) over the void-filtered stream.

    A tube holds (frame, point) pairs of all thing points carrying one
    instance id, class-agnostic.
    """
    is_thing = np.array(taxonomy.is_thing, dtype=bool)
    gt_tubes: dict[int, set] = {}
    pred_tubes: dict[int, set] = {}
    for f, (pred, gt) in enumerate(frames):
        pred, gt = _void_filter(pred, gt, taxonomy)
        for packed, tubes in ((pred, pred_tubes), (gt, gt_tubes)):
            sem = semantic_of(packed)
            inst = instance_of(packed)
            mask = is_thing[sem] & (inst > 0)
            for pos in np.nonzero(mask)[0]:
                tubes.setdefault(int(inst[pos]), set()).add((f, int(pos)))
    return gt_tubes, pred_tubes


def lstq(frames, taxonomy: Taxonomy):
    """LSTQ = sqrt(S_assoc * S_cls) with its two components."""
    # semantic IoU per class over the whole sequence
    inter: dict[int, int] = {}
    p_count: dict[int, int] = {}
    g_count: dict[int, int] = {}
    for pred, gt in frames:
        pred, gt = _void_filter(pred, gt, taxonomy)
        psem = semantic_of(pred)
        gsem = semantic_of(gt)
        for cls in range(taxonomy.class_count):
            if cls == taxonomy.void_class:
                continue
            pc = int((psem == cls).sum())
            gc = int((gsem == cls).sum())
            ic = int(((psem == cls) & (gsem == cls)).sum())
            p_count[cls] = p_count.get(cls, 0) + pc
            g_count[cls] = g_count.get(cls, 0) + gc
            inter[cls] = inter.get(cls, 0) + ic
    ious = []
    for cls in inter:
        union = p_count[cls] + g_count[cls] - inter[cls]
        if union > 0:
            ious.append(inter[cls] / union)
    s_cls = float(np.mean(ious)) if ious else 0.0

    gt_tubes, pred_tubes = _tubes(frames, taxonomy)
    if gt_tubes:
        total = 0.0
        for g in gt_tubes.values():
            acc = 0.0
            for p in pred_tubes.values():
                ov = len(p & g)
                if ov:
                    acc += ov * (ov / len(p | g))
            total += acc / len(g)
        s_assoc = total / len(gt_tubes)
    else:
        s_assoc = 1.0
    return float(np.sqrt(s_assoc * s_cls)), s_assoc, s_cls


def tq_pat(table: SegmentMatchTable, frames, taxonomy: Taxonomy, pq: float):
    """Per-track quality TQ and its harmonic mean with PQ (PAT)."""
    gt_tubes, pred_tubes = _tubes(frames, taxonomy)
    if not gt_tubes:
        tq = 1.0
    else:
        # matched pred id per (tube id, frame): smallest matched class wins
        matched: dict[tuple[int, int], tuple[int, int]] = {}
        for f, fm in enumerate(table.frames):
            for cls, tps in fm.tp.items():
                if not taxonomy.is_thing[cls]:
                    continue
                for _, pred_inst, gt_inst in tps:
                    if gt_inst == 0:
                        continue
                    key = (gt_inst, f)
                    if key not in matched or cls < matched[key][0]:
                        matched[key] = (cls, pred_inst)
        tqs = []
        for gid, g in gt_tubes.items():
            aq = 0.0
            for p in pred_tubes.values():
                ov = len(p & g)
                if ov:
                    aq += ov * (ov / len(p | g))
            aq /= len(g)
            g_frames = sorted({f for f, _ in g})
            pred_ids = [matched[(gid, f)][1] for f in g_frames if (gid, f) in matched]
            ids = sum(1 for a, b in zip(pred_ids, pred_ids[1:]) if a != b)
            f_factor = 1.0 - ids / max(len(g_frames) - 1, 1)
            tqs.append(float(np.sqrt(aq * f_factor)))
        tq = float(np.mean(tqs))
    pat = 0.0 if (pq + tq) == 0 else 2.0 * pq * tq / (pq + tq)
    return tq, pat


def evaluate_stream(frames, taxonomy: Taxonomy) -> MetricReport:
    """All metrics over an aligned (pred, gt) per-frame label stream."""
    frames = [(np.asarray(p, dtype=np.uint32), np.asarray(g, dtype=np.uint32))
              for p, g in frames]
    table = build_table(frames, taxonomy)
    per_class_pq, pq_means = pq_sq_rq(table)
    per_class_ptq, ptq_means, ids_count = ptq_sptq(table, taxonomy)
    lstq_v, s_assoc, s_cls = lstq(frames, taxonomy)
    tq, pat = tq_pat(table, frames, taxonomy, pq_means["pq"])

    per_class = {}
    for cls in set(per_class_pq) | set(per_class_ptq):
        entry = dict(per_class_pq.get(cls, {}))
        entry.update(per_class_ptq.get(cls, {}))
        per_class[cls] = entry
    return MetricReport(
        pq=pq_means["pq"], sq=pq_means["sq"], rq=pq_means["rq"],
        ptq=ptq_means["ptq"], sptq=ptq_means["sptq"],
        lstq=lstq_v, s_assoc=s_assoc, s_cls=s_cls,
        tq=tq, pat=pat, ids_count=ids_count, per_class=per_class,
    )


def evaluate_sequence(pred_dir, gt_dir, taxonomy: Taxonomy) -> MetricReport:
    """Evaluate matching NNNNNN.label file sets from two directories."""
    pred_frames = list_frames(pred_dir, "label")
    gt_frames = list_frames(gt_dir, "label")
    if not gt_frames:
        raise FileNotFoundError(f"no label files in {gt_dir}")
    missing = sorted(set(gt_frames) - set(pred_frames))
    if missing:
        raise FileNotFoundError(
            f"{pred_dir}: missing predictions for frames {missing}")
    frames = []
    for idx in gt_frames:
        gt = load_labels(os.path.join(gt_dir, f"{idx:06d}.label"))
        pred = load_labels(os.path.join(pred_dir, f"{idx:06d}.label"), gt.shape[0])
        frames.append((pred, gt))
    return evaluate_stream(frames, taxonomy)
