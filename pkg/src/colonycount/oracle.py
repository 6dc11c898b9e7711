"""Deterministic perturbation oracle: a stand-in detector for pipeline tests.

Takes tiled ground truth and emits detections after seeded perturbations:
box jitter, dropped boxes, spurious boxes, and label swaps. With every rate
and the jitter at zero it reproduces the ground truth exactly, each box at
score 1.0, which makes end-to-end count and metric checks exact. Randomness
is derived per tile from (seed, tile_id), so output does not depend on the
order tiles are visited.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import BoundingBox
from .merge import Detection, FRAME_TILE
from .tiling import TileRecord

_MIN_SIDE = 1e-3  # jittered boxes keep at least this extent


@dataclass(frozen=True)
class OracleConfig:
    """Noise knobs. All rates are probabilities in [0, 1]; jitter is the
    maximum per-coordinate perturbation in pixels."""

    jitter: float = 0.0
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    misclass_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        for name in ("drop_rate", "spurious_rate", "misclass_rate"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @property
    def is_noiseless(self) -> bool:
        return (
            self.jitter == 0
            and self.drop_rate == 0
            and self.spurious_rate == 0
            and self.misclass_rate == 0
        )


def _tile_rng(seed: int, tile_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"oracle:{seed}:{tile_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _jittered(
    box: BoundingBox, jitter: float, width: int, height: int, rng: np.random.Generator
) -> BoundingBox:
    dx0, dy0, dx1, dy1 = rng.uniform(-jitter, jitter, size=4)
    x0, x1 = sorted((box.x_min + dx0, box.x_max + dx1))
    y0, y1 = sorted((box.y_min + dy0, box.y_max + dy1))
    # clamp into the tile while keeping a valid extent
    x0 = min(max(x0, 0.0), width - _MIN_SIDE)
    y0 = min(max(y0, 0.0), height - _MIN_SIDE)
    x1 = min(max(x1, x0 + _MIN_SIDE), float(width))
    y1 = min(max(y1, y0 + _MIN_SIDE), float(height))
    return BoundingBox(x0, y0, x1, y1)


def _spurious_box(width: int, height: int, rng: np.random.Generator) -> BoundingBox:
    w = rng.uniform(4.0, max(8.0, width / 8))
    h = rng.uniform(4.0, max(8.0, height / 8))
    x0 = rng.uniform(0.0, width - w)
    y0 = rng.uniform(0.0, height - h)
    return BoundingBox(x0, y0, x0 + w, y0 + h)


def oracle_detect(
    tiles: Iterable[TileRecord],
    cfg: OracleConfig,
    classes: Sequence[str] | None = None,
) -> list[Detection]:
    """Emit tile-frame detections derived from each tile's ground truth.

    `classes` is the label pool for swaps and spurious boxes; by default it
    is the sorted set of classes present in the ground truth.
    """
    tiles = list(tiles)
    if classes is None:
        pool = sorted({a.class_name for t in tiles for a in t.annotations})
    else:
        pool = list(classes)

    detections: list[Detection] = []
    for record in sorted(tiles, key=lambda r: r.tile_id):
        rng = _tile_rng(cfg.seed, record.tile_id)
        for ann in record.annotations:
            if cfg.drop_rate > 0 and rng.random() < cfg.drop_rate:
                continue
            box = ann.box
            if cfg.jitter > 0:
                box = _jittered(
                    box, cfg.jitter, record.tile_width, record.tile_height, rng
                )
            class_name = ann.class_name
            if cfg.misclass_rate > 0 and rng.random() < cfg.misclass_rate:
                others = [c for c in pool if c != class_name]
                if others:
                    class_name = others[int(rng.integers(len(others)))]
            score = 1.0 if cfg.is_noiseless else float(rng.uniform(0.5, 1.0))
            detections.append(
                Detection(
                    class_name=class_name,
                    box=box,
                    score=score,
                    provenance=record.tile_id,
                    frame=FRAME_TILE,
                )
            )
        if cfg.spurious_rate > 0 and rng.random() < cfg.spurious_rate and pool:
            detections.append(
                Detection(
                    class_name=pool[int(rng.integers(len(pool)))],
                    box=_spurious_box(record.tile_width, record.tile_height, rng),
                    score=float(rng.uniform(0.05, 0.95)),
                    provenance=record.tile_id,
                    frame=FRAME_TILE,
                )
            )
    return detections
