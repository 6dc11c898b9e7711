"""Pipeline configuration: one JSON file, flag overrides, one master seed.

Precedence is flags > config file > defaults. Every random choice in the
pipeline flows from the single top-level seed through stable per-component
sub-seeds, so a committed config file reproduces a survey run exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .augment import ALL_KINDS, AugmentationOp, OversamplePolicy
from .errors import InputError
from .tiling import TilePlan

DEFAULT_SEED = 0


def derive_seed(master_seed: int, component: str) -> int:
    """Stable sub-seed for a named pipeline component."""
    digest = hashlib.sha256(f"{master_seed}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class PipelineConfig:
    """Validated bundle of every knob the CLI commands share."""

    seed: int = DEFAULT_SEED
    images: str | None = None
    annotations: str | None = None
    taxonomy: str | None = None
    out: str = "out"

    tile_width: int = 640
    tile_height: int = 640
    stride_x: int = 400
    stride_y: int = 400
    retention_threshold: float = 0.8

    dominance_threshold: float = 0.8
    augment_ops: tuple[str, ...] = ALL_KINDS

    nms_iou: float = 0.5
    mission_nms_iou: float = 0.5
    score_floor: float = 0.5
    class_aware_nms: bool = True

    eval_iou_thresholds: tuple[float, ...] = (0.5, 0.75)
    eval_score_floor: float = 0.5

    split_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    split_by_image: bool = False

    oracle_jitter: float = 0.0
    oracle_drop_rate: float = 0.0
    oracle_spurious_rate: float = 0.0
    oracle_misclass_rate: float = 0.0

    def tile_plan(self) -> TilePlan:
        return TilePlan(
            tile_width=self.tile_width,
            tile_height=self.tile_height,
            stride_x=self.stride_x,
            stride_y=self.stride_y,
            retention_threshold=self.retention_threshold,
        )

    def oversample_policy(self) -> OversamplePolicy:
        return OversamplePolicy(
            dominance_threshold=self.dominance_threshold,
            ops=tuple(AugmentationOp(kind) for kind in self.augment_ops),
            seed=derive_seed(self.seed, "augment"),
        )

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


_FLAT_KEYS = {f.name for f in PipelineConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]

_SECTION_KEYS = {
    "paths": {"images", "annotations", "taxonomy", "out"},
    "tile": {
        "tile_width",
        "tile_height",
        "stride_x",
        "stride_y",
        "retention_threshold",
    },
    "augment": {"dominance_threshold", "augment_ops"},
    "merge": {"nms_iou", "mission_nms_iou", "score_floor", "class_aware_nms"},
    "evaluate": {"eval_iou_thresholds", "eval_score_floor"},
    "split": {"split_ratios", "split_by_image"},
    "oracle": {
        "oracle_jitter",
        "oracle_drop_rate",
        "oracle_spurious_rate",
        "oracle_misclass_rate",
    },
}


def _flatten(data: dict[str, Any], source: str) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTION_KEYS and isinstance(value, dict):
            allowed = _SECTION_KEYS[key]
            for sub_key, sub_value in value.items():
                if sub_key not in allowed:
                    raise InputError(
                        f"{source}: unknown key {key}.{sub_key!r} in config"
                    )
                flat[sub_key] = sub_value
        elif key in _FLAT_KEYS:
            flat[key] = value
        else:
            raise InputError(f"{source}: unknown key {key!r} in config")
    return flat


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> PipelineConfig:
    """Build a PipelineConfig from defaults, a JSON file, then overrides."""
    merged: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"config {path} must be a JSON object")
        merged.update(_flatten(data, str(path)))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})

    for key in ("augment_ops", "eval_iou_thresholds", "split_ratios"):
        if key in merged and isinstance(merged[key], list):
            merged[key] = tuple(merged[key])
    try:
        return PipelineConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc
