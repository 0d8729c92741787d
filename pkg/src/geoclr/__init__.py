"""Geospatial multi-traversal analysis and contrastive sampling toolkit.

Submodules:
    ingest              pose-log parsing and the Dataset model
    geometry            oriented footprints, convex clipping, IoU
    spatial             static R-tree over AABBs
    traversal_classify  single/multi-traversal classification
    pose_graph          IoU-bounded spatial pose graph
    split_gen           SSL / validation / nested supervised splits
    correspondence      BEV grids and anchor/positive/negative sampling
    contrastive         projection head, contrastive loss, gradients
    synth               synthetic scenes with known ground truth
    cli                 command-line interface
"""

__version__ = "0.1.0"

from .geometry import FootprintConfig, FootprintRect, footprint, footprint_iou
from .ingest import Dataset, Pose, Traversal, parse_pose_file, partition_by_area
from .pose_graph import PoseGraph, adjacents, build_pose_graph
from .split_gen import SplitManifest, generate_splits, verify_manifest
from .traversal_classify import LogIntersectionGraph, TraversalClass, build_log_graph, classify

__all__ = [
    "__version__",
    "Dataset",
    "FootprintConfig",
    "FootprintRect",
    "LogIntersectionGraph",
    "Pose",
    "PoseGraph",
    "SplitManifest",
    "Traversal",
    "TraversalClass",
    "adjacents",
    "build_log_graph",
    "build_pose_graph",
    "classify",
    "footprint",
    "footprint_iou",
    "generate_splits",
    "parse_pose_file",
    "partition_by_area",
    "verify_manifest",
]
