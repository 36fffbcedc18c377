"""Bi-level routing attention, detection scoring and classroom behavior fusion."""
from .boxes import Box, Detection, iou, nms
from .bra import (
    BiLevelRoutingAttention,
    BRAConfig,
    BRAParams,
    ConfigError,
    FlopReport,
    RoutingTrace,
    bra_forward,
    dense_attention_forward,
    flops,
    load_params,
    patchify,
    route,
    save_params,
    unpatchify,
)
from .dataset import (
    AnnotationRecord,
    DatasetStats,
    ParseError,
    ValidationError,
    boxes_from,
    dataset_stats,
    parse_annotations,
)
from .evaluation import (
    ConfusionCounts,
    GroundTruth,
    PRCurve,
    average_precision,
    match,
    mean_average_precision,
    precision_recall,
)
from .fusion import (
    ActionEvent,
    BehaviorRecord,
    FusionConfig,
    HandRaiseEvent,
    TrackEvent,
    assign,
    fuse,
    keyframe_of,
)

__version__ = "0.1.0"

__all__ = [
    "ActionEvent",
    "AnnotationRecord",
    "assign",
    "average_precision",
    "BehaviorRecord",
    "BiLevelRoutingAttention",
    "Box",
    "boxes_from",
    "bra_forward",
    "BRAConfig",
    "BRAParams",
    "ConfigError",
    "ConfusionCounts",
    "dataset_stats",
    "DatasetStats",
    "dense_attention_forward",
    "Detection",
    "FlopReport",
    "flops",
    "fuse",
    "FusionConfig",
    "GroundTruth",
    "HandRaiseEvent",
    "iou",
    "keyframe_of",
    "load_params",
    "match",
    "mean_average_precision",
    "nms",
    "parse_annotations",
    "ParseError",
    "patchify",
    "PRCurve",
    "precision_recall",
    "route",
    "RoutingTrace",
    "save_params",
    "TrackEvent",
    "unpatchify",
    "ValidationError",
]
