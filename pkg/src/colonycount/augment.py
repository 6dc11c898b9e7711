"""Minority-class oversampling via exact geometric and mild photometric
augmentation.

A tile qualifies for oversampling when more than `dominance_threshold` of
its annotations belong to minority classes. Each qualifying tile gains one
augmented copy per configured op. Mirrors and 90-degree rotation move
pixels and boxes by exact isometries (no resampling error on square
tiles); brightness/contrast leaves boxes untouched. Photometric randomness
is seeded per (policy seed, tile id, op) so regeneration is reproducible
regardless of iteration order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import Annotation
from .errors import InputError, PipelineError
from .geometry import AffineTransform, apply_transform, compose, invert
from .taxonomy import ClassTaxonomy
from .tiling import AugProvenance, TileRecord

GEOMETRIC_KINDS = ("horizontal_mirror", "vertical_mirror", "rotate_90")
PHOTOMETRIC_KINDS = ("brightness_contrast",)
ALL_KINDS = GEOMETRIC_KINDS + PHOTOMETRIC_KINDS

BRIGHTNESS_RANGE = (-0.2, 0.2)
CONTRAST_RANGE = (0.8, 1.2)


class NonSquareRotation(InputError):
    """rotate_90 requested on a non-square tile."""


@dataclass(frozen=True)
class AugmentationOp:
    """One augmentation to apply per qualifying tile.

    For brightness_contrast, `brightness_delta` (in [-0.2, 0.2], fraction
    of full scale) and `contrast_factor` (in [0.8, 1.2]) may be pinned
    here; left as None they are sampled per tile from the seeded RNG.
    """

    kind: str
    brightness_delta: float | None = None
    contrast_factor: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown augmentation kind: {self.kind!r}")
        if self.kind in GEOMETRIC_KINDS and (
            self.brightness_delta is not None or self.contrast_factor is not None
        ):
            raise ValueError(f"{self.kind} takes no photometric parameters")


def default_ops() -> tuple[AugmentationOp, ...]:
    return tuple(AugmentationOp(kind) for kind in ALL_KINDS)


@dataclass(frozen=True)
class OversamplePolicy:
    """Which tiles to oversample and how."""

    dominance_threshold: float = 0.8
    ops: tuple[AugmentationOp, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.dominance_threshold <= 1):
            raise ValueError(
                f"dominance_threshold {self.dominance_threshold} not in (0, 1]"
            )
        kinds = [op.kind for op in self.ops]
        if len(set(kinds)) != len(kinds):
            raise ValueError("duplicate op kinds in policy (tile ids would collide)")

    @staticmethod
    def with_default_ops(
        dominance_threshold: float = 0.8, seed: int = 0
    ) -> "OversamplePolicy":
        return OversamplePolicy(
            dominance_threshold=dominance_threshold, ops=default_ops(), seed=seed
        )


def select_minority_tiles(
    tiles: Iterable[TileRecord], taxonomy: ClassTaxonomy, policy: OversamplePolicy
) -> list[str]:
    """Tile ids whose minority-annotation share strictly exceeds the
    dominance threshold. Tiles with zero annotations never qualify."""
    selected = []
    for record in tiles:
        total = len(record.annotations)
        if total == 0:
            continue
        minority = sum(
            1 for a in record.annotations if taxonomy.is_minority(a.class_name)
        )
        if minority / total > policy.dominance_threshold:
            selected.append(record.tile_id)
    return sorted(selected)


def op_geometry(kind: str, width: int, height: int) -> AffineTransform:
    """Exact box isometry for a geometric op on a width x height tile."""
    if kind == "horizontal_mirror":
        return AffineTransform(-1.0, 0.0, float(width), 0.0, 1.0, 0.0)
    if kind == "vertical_mirror":
        return AffineTransform(1.0, 0.0, 0.0, 0.0, -1.0, float(height))
    if kind == "rotate_90":
        if width != height:
            raise NonSquareRotation(f"rotate_90 on {width}x{height} tile")
        # counterclockwise: (x, y) -> (y, width - x)
        return AffineTransform(0.0, 1.0, 0.0, -1.0, 0.0, float(width))
    if kind in PHOTOMETRIC_KINDS:
        return AffineTransform.identity()
    raise ValueError(f"unknown augmentation kind: {kind!r}")


def _apply_pixels(
    pixels: np.ndarray, kind: str, delta: float, factor: float
) -> np.ndarray:
    if kind == "horizontal_mirror":
        return np.flip(pixels, axis=1).copy()
    if kind == "vertical_mirror":
        return np.flip(pixels, axis=0).copy()
    if kind == "rotate_90":
        if pixels.shape[0] != pixels.shape[1]:
            raise NonSquareRotation(
                f"rotate_90 on {pixels.shape[1]}x{pixels.shape[0]} tile"
            )
        return np.rot90(pixels, k=1).copy()
    if kind == "brightness_contrast":
        shifted = pixels.astype(np.float64) * factor + delta * 255.0
        return np.clip(np.rint(shifted), 0, 255).astype(pixels.dtype)
    raise ValueError(f"unknown augmentation kind: {kind!r}")


def augment_tile(
    pixels: np.ndarray,
    annotations: Sequence[Annotation],
    op: AugmentationOp,
    tile_width: int,
    tile_height: int,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[Annotation], AugmentationOp]:
    """Apply one op to a tile image and its annotations.

    Returns the new pixels, the transformed annotations (same count, same
    labels), and the op with any sampled photometric parameters pinned so
    the manifest can record them.
    """
    delta, factor = 0.0, 1.0
    if op.kind == "brightness_contrast":
        delta, factor = op.brightness_delta, op.contrast_factor
        if delta is None or factor is None:
            if rng is None:
                raise PipelineError(
                    "brightness_contrast without pinned parameters needs an RNG"
                )
            if delta is None:
                delta = float(rng.uniform(*BRIGHTNESS_RANGE))
            if factor is None:
                factor = float(rng.uniform(*CONTRAST_RANGE))
        op = replace(op, brightness_delta=delta, contrast_factor=factor)

    new_pixels = _apply_pixels(pixels, op.kind, delta, factor)
    transform = op_geometry(op.kind, tile_width, tile_height)
    new_annotations = [
        replace(a, box=apply_transform(transform, a.box)) for a in annotations
    ]
    return new_pixels, new_annotations, op


def tile_rng(seed: int, tile_id: str, op_kind: str) -> np.random.Generator:
    """Seeded RNG derived stably from (policy seed, tile id, op kind)."""
    digest = hashlib.sha256(f"{seed}:{tile_id}:{op_kind}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def build_augmented_set(
    train_tiles: Sequence[TileRecord],
    taxonomy: ClassTaxonomy,
    policy: OversamplePolicy,
    load_tile: Callable[[str], np.ndarray],
    save_tile: Callable[[str, np.ndarray], None] | None = None,
) -> list[TileRecord]:
    """Originals plus one augmented copy per op for every qualifying tile.

    Must be fed training-split tiles only; validation and test tiles never
    pass through here. Augmented records get id `{tile_id}~{op}` and a
    `to_source` composed with the inverse op isometry, so detections on an
    augmented tile still back-project to the right source pixels.
    Deterministic for a fixed policy seed, regardless of input order.
    """
    qualifying = set(select_minority_tiles(train_tiles, taxonomy, policy))
    out = list(train_tiles)
    for record in sorted(train_tiles, key=lambda r: r.tile_id):
        if record.tile_id not in qualifying:
            continue
        pixels = load_tile(record.tile_id)
        for op in policy.ops:
            rng = tile_rng(policy.seed, record.tile_id, op.kind)
            new_pixels, new_annotations, pinned = augment_tile(
                pixels,
                record.annotations,
                op,
                record.tile_width,
                record.tile_height,
                rng=rng,
            )
            aug_id = f"{record.tile_id}~{op.kind}"
            geometry = op_geometry(op.kind, record.tile_width, record.tile_height)
            aug_record = TileRecord(
                tile_id=aug_id,
                image_id=record.image_id,
                offset=record.offset,
                to_source=compose(record.to_source, invert(geometry)),
                annotations=tuple(
                    replace(a, image_id=aug_id) for a in new_annotations
                ),
                tile_width=record.tile_width,
                tile_height=record.tile_height,
                provenance=AugProvenance(
                    source_tile=record.tile_id,
                    op=op.kind,
                    brightness_delta=pinned.brightness_delta,
                    contrast_factor=pinned.contrast_factor,
                ),
            )
            out.append(aug_record)
            if save_tile is not None:
                save_tile(aug_id, new_pixels)
    return out
