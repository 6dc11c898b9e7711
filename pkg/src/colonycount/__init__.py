"""Detector-agnostic toolkit for counting birds in aerial survey imagery.

Tiles very-high-resolution images for detector consumption, prepares
balanced training data, merges per-tile detections back into image and
world space without double-counting, and evaluates detectors with
interpolated-AP and confusion-matrix reports.
"""

from .augment import (
    AugmentationOp,
    NonSquareRotation,
    OversamplePolicy,
    augment_tile,
    build_augmented_set,
    select_minority_tiles,
)
from .dataset import (
    Annotation,
    BadRatios,
    DatasetSplit,
    OutOfBounds,
    ParseError,
    SurveyImage,
    class_histogram,
    load_annotations,
    split_dataset,
)
from .errors import InputError, PipelineError
from .evaluate import (
    ConfusionMatrix,
    EvalReport,
    NoGroundTruth,
    PRCurve,
    confusion_matrix,
    evaluate,
    interpolated_ap,
    match_detections,
    pr_curve,
)
from .geometry import (
    AffineTransform,
    BoundingBox,
    NonInvertibleTransform,
    apply_transform,
    compose,
    intersect,
    invert,
    iou,
)
from .merge import (
    CountReport,
    Detection,
    MissingGeoreference,
    MixedFrames,
    UnknownTile,
    back_project,
    count,
    merge_mission,
    nms,
    read_detections_jsonl,
    read_world_file,
    write_detections_jsonl,
    write_world_file,
)
from .oracle import OracleConfig, oracle_detect
from .render import RenderStyle, render_overlay
from .taxonomy import ClassTaxonomy, UnknownClass, default_taxonomy, load_taxonomy
from .tiling import (
    DecodeError,
    DimensionMismatch,
    ImageSmallerThanTile,
    TilePlan,
    TileRecord,
    clip_annotations,
    extract_tiles,
    plan_tile_records,
    plan_tiles,
    read_manifest,
    write_manifest,
)

__version__ = "0.1.0"
