"""Command-line entry point: simulate, track, evaluate, render.

Configuration precedence is flag > config file > built-in default. The
config file is flat ``dotted.key = value`` text; unknown keys are
rejected. Exit codes: 0 success, 1 runtime/data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import core
from .core import Taxonomy, atomic_write_bytes, load_labels, load_poses, load_scan, load_taxonomy
from .fusion import FusionConfig
from .geometry import build_trio
from .metrics import evaluate_sequence
from .oracle import NoiseConfig, load_predictions, oracle_outputs
from .projection import KnnConfig, ProjectionConfig, project, project_labels
from .render import render_frame
from .simulator import BeamConfig, WorldConfig, generate_sequence
from .tracker import PipelineConfig, run_sequence

CONFIG_KEYS = {
    "projection.width": int,
    "projection.height": int,
    "projection.fov_up_deg": float,
    "projection.fov_down_deg": float,
    "projection.min_range": float,
    "knn.k": int,
    "knn.window": int,
    "knn.cutoff": float,
    "knn.sigma": float,
    "fusion.score_thresh": float,
    "fusion.overlap_thresh": float,
    "fusion.min_stuff_area": int,
    "tracker.min_overlap": int,
    "noise.class_confusion_rate": float,
    "noise.boundary_jitter_px": int,
    "noise.instance_split_prob": float,
    "noise.instance_merge_prob": float,
    "noise.drop_prob": float,
    "noise.score_floor": float,
    "noise.seed": int,
}


class UsageError(Exception):
    pass


def parse_config_file(path) -> dict:
    """Flat `key = value` file with dotted keys; '#' starts a comment."""
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](raw.strip())
            except ValueError as e:
                raise UsageError(f"{path}:{lineno}: {e}") from e
    return values


def _resolve(args, file_values: dict, key: str, default):
    """flag > config file > default."""
    flag = getattr(args, key.replace(".", "_"), None)
    if flag is not None:
        return flag
    if key in file_values:
        return file_values[key]
    return default


def build_pipeline_config(args, file_values: dict) -> PipelineConfig:
    proj = ProjectionConfig(
        width=_resolve(args, file_values, "projection.width", 4096),
        height=_resolve(args, file_values, "projection.height", 256),
        fov_up=np.deg2rad(_resolve(args, file_values, "projection.fov_up_deg", 10.0)),
        fov_down=np.deg2rad(_resolve(args, file_values, "projection.fov_down_deg", 30.0)),
        min_range=_resolve(args, file_values, "projection.min_range", 0.3),
    )
    knn = KnnConfig(
        k=_resolve(args, file_values, "knn.k", 5),
        window=_resolve(args, file_values, "knn.window", 5),
        range_cutoff=_resolve(args, file_values, "knn.cutoff", 1.0),
        sigma=_resolve(args, file_values, "knn.sigma", 1.0),
    )
    fusion = FusionConfig(
        score_thresh=_resolve(args, file_values, "fusion.score_thresh", 0.5),
        overlap_thresh=_resolve(args, file_values, "fusion.overlap_thresh", 0.5),
        min_stuff_area=_resolve(args, file_values, "fusion.min_stuff_area", 0),
    )
    return PipelineConfig(
        projection=proj,
        knn=knn,
        fusion=fusion,
        min_overlap=_resolve(args, file_values, "tracker.min_overlap", 1),
    )


def build_noise_config(args, file_values: dict) -> NoiseConfig:
    return NoiseConfig(
        class_confusion_rate=_resolve(args, file_values, "noise.class_confusion_rate", 0.0),
        boundary_jitter_px=_resolve(args, file_values, "noise.boundary_jitter_px", 0),
        instance_split_prob=_resolve(args, file_values, "noise.instance_split_prob", 0.0),
        instance_merge_prob=_resolve(args, file_values, "noise.instance_merge_prob", 0.0),
        drop_prob=_resolve(args, file_values, "noise.drop_prob", 0.0),
        score_floor=_resolve(args, file_values, "noise.score_floor", 1.0),
        seed=_resolve(args, file_values, "noise.seed", 0),
    )


def load_sequence(seq_dir):
    """Scans, poses, per-scan gt labels, and taxonomy from a sequence dir."""
    scan_dir = os.path.join(seq_dir, "scans")
    if not os.path.isdir(scan_dir):
        raise FileNotFoundError(f"{seq_dir}: no scans/ directory")
    indices = core.list_frames(scan_dir, "bin")
    scans = [load_scan(core.scan_path(seq_dir, i), scan_index=i, timestamp=float(i))
             for i in indices]
    poses = load_poses(os.path.join(seq_dir, "poses.txt"))
    if len(poses) != len(scans):
        raise core.ConsistencyError(
            f"{seq_dir}: {len(poses)} poses for {len(scans)} scans")
    labels = {}
    label_dir = os.path.join(seq_dir, "labels")
    if os.path.isdir(label_dir):
        for i, scan in zip(indices, scans):
            labels[i] = load_labels(core.label_path(seq_dir, i), len(scan))
    taxonomy = load_taxonomy(os.path.join(seq_dir, "taxonomy.txt"))
    return scans, poses, labels, taxonomy


def make_segmenter(kind: str, seq_dir, gt_labels: dict, taxonomy: Taxonomy,
                   noise: NoiseConfig):
    """Segmenter callable for run_sequence: oracle- or file-backed."""
    if kind == "oracle":
        def segmenter(trio, image):
            merged = trio.gather_point_labels(gt_labels)
            grid = project_labels(image, merged)
            trio_noise = NoiseConfig(
                class_confusion_rate=noise.class_confusion_rate,
                boundary_jitter_px=noise.boundary_jitter_px,
                instance_split_prob=noise.instance_split_prob,
                instance_merge_prob=noise.instance_merge_prob,
                drop_prob=noise.drop_prob,
                score_floor=noise.score_floor,
                seed=noise.seed * 1_000_003 + trio.reference_index,
            )
            return oracle_outputs(grid, taxonomy, trio_noise)
        return segmenter
    if kind == "files":
        pred_dir = os.path.join(seq_dir, "pred")
        if not os.path.isdir(pred_dir):
            raise FileNotFoundError(f"{seq_dir}: no pred/ directory")

        def segmenter(trio, image):
            H, W = image.valid.shape
            return load_predictions(seq_dir, trio.reference_index, H, W, taxonomy)
        return segmenter
    raise UsageError(f"unknown segmenter {kind!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    del file_values  # simulate takes no pipeline keys today
    world_config = WorldConfig(seed=args.seed, duration_frames=args.frames)
    beams = BeamConfig(azimuth_steps=args.azimuth_steps)
    world, counts = generate_sequence(world_config, beams, args.out)
    tracks = sum(1 for o in world.objects if o.track_id)
    if not args.quiet:
        print(f"simulate: frames={args.frames} points={sum(counts)} tracks={tracks}")
    return 0


def cmd_track(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    config = build_pipeline_config(args, file_values)
    noise = build_noise_config(args, file_values)
    scans, poses, gt_labels, taxonomy = load_sequence(args.seq)
    segmenter = make_segmenter(args.segmenter, args.seq, gt_labels, taxonomy, noise)
    emitted = run_sequence(scans, poses, taxonomy, segmenter, config)
    os.makedirs(args.out, exist_ok=True)
    for idx in sorted(emitted):
        data = np.asarray(emitted[idx], dtype="<u4").tobytes()
        atomic_write_bytes(os.path.join(args.out, f"{idx:06d}.label"), data)
    if not args.quiet:
        print(f"track: scans={len(emitted)} out={args.out}")
    return 0


def cmd_evaluate(args) -> int:
    taxonomy = load_taxonomy(args.taxonomy)
    report = evaluate_sequence(args.pred, args.gt, taxonomy)
    if args.report:
        atomic_write_bytes(args.report, report.to_json().encode())
    if not args.quiet:
        header = f"{'PAT':>8} {'PQ':>8} {'TQ':>8} {'PTQ':>8} {'LSTQ':>8}"
        row = (f"{report.pat * 100:8.1f} {report.pq * 100:8.1f} "
               f"{report.tq * 100:8.1f} {report.ptq * 100:8.1f} "
               f"{report.lstq * 100:8.1f}")
        print(header)
        print(row)
    return 0


def cmd_render(args) -> int:
    if args.frame < 0:
        raise UsageError("--frame must be nonnegative")
    file_values = parse_config_file(args.config) if args.config else {}
    config = build_pipeline_config(args, file_values)
    scans, poses, _, _ = load_sequence(args.seq)
    by_index = {s.scan_index: i for i, s in enumerate(scans)}
    if args.frame not in by_index:
        raise FileNotFoundError(f"frame {args.frame} not in sequence {args.seq}")
    i = by_index[args.frame]
    scan = scans[i]
    trio = build_trio([scan], [poses[i]])
    image = project(trio, config.projection)
    labels = load_labels(os.path.join(args.labels, f"{args.frame:06d}.label"), len(scan))
    grid = project_labels(image, labels)
    atomic_write_bytes(args.out, render_frame(image, grid))
    if not args.quiet:
        print(f"render: frame={args.frame} out={args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panoptrack",
        description="LiDAR panoptic tracking pipeline and evaluation suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--azimuth-steps", type=int, default=1024)
    p.add_argument("--config")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracking pipeline over a sequence")
    p.add_argument("--seq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segmenter", choices=["oracle", "files"], default="oracle")
    p.add_argument("--config")
    p.add_argument("--quiet", action="store_true")
    for key, typ in CONFIG_KEYS.items():
        p.add_argument("--" + key.replace(".", "-").replace("_", "-"),
                       dest=key.replace(".", "_"), type=typ, default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--report")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render a frame to a P6 PPM image")
    p.add_argument("--seq", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--quiet", action="store_true")
    for key, typ in CONFIG_KEYS.items():
        if key.startswith("projection."):
            p.add_argument("--" + key.replace(".", "-").replace("_", "-"),
                           dest=key.replace(".", "_"), type=typ, default=None)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
