"""LiDAR panoptic tracking: accumulation, projection, fusion, tracking, metrics."""

from .core import (
    PanopticLabel,
    RigidPose,
    Scan,
    Taxonomy,
    load_labels,
    load_poses,
    load_scan,
    load_taxonomy,
    pack_label,
    unpack_label,
)
from .fusion import FusionConfig, fuse
from .geometry import Trio, build_trio, transform_points
from .metrics import MetricReport, evaluate_sequence, evaluate_stream
from .oracle import InstancePrediction, NoiseConfig, oracle_outputs
from .projection import KnnConfig, ProjectionConfig, RangeImage, knn_unproject, project
from .simulator import BeamConfig, WorldConfig, build_world, generate_sequence, simulate_scan
from .tracker import PipelineConfig, TrackLedger, associate, run_sequence, segregate

__version__ = "0.1.0"

__all__ = [
    "PanopticLabel", "RigidPose", "Scan", "Taxonomy",
    "load_labels", "load_poses", "load_scan", "load_taxonomy",
    "pack_label", "unpack_label",
    "FusionConfig", "fuse",
    "Trio", "build_trio", "transform_points",
    "MetricReport", "evaluate_sequence", "evaluate_stream",
    "InstancePrediction", "NoiseConfig", "oracle_outputs",
    "KnnConfig", "ProjectionConfig", "RangeImage", "knn_unproject", "project",
    "BeamConfig", "WorldConfig", "build_world", "generate_sequence", "simulate_scan",
    "PipelineConfig", "TrackLedger", "associate", "run_sequence", "segregate",
]
