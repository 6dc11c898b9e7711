"""Sliding-window tiling of giga-resolution survey images.

Crops are exact pixel copies (no resampling) on a stride grid; the final
window in each axis is clamped inward so every tile lies fully inside the
source image and the union of windows covers every pixel. Annotations are
clipped into tiles under a strict area-retention rule: a box survives only
if more than `retention_threshold` of its area falls inside the window.

The tiles manifest written here is the contract consumed by the augmentor,
the detector bridge, and the merge/count stage.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .dataset import Annotation, SurveyImage
from .errors import InputError
from .geometry import AffineTransform, BoundingBox, intersect

MANIFEST_FORMAT = "colonycount-tiles/1"


class ImageSmallerThanTile(InputError):
    """Source image is smaller than one tile in some dimension."""


class DecodeError(InputError):
    """Raster file could not be decoded."""


class DimensionMismatch(InputError):
    """Pixel array dimensions disagree with the image metadata."""


@dataclass(frozen=True)
class TilePlan:
    """Sliding-window geometry and the annotation retention rule."""

    tile_width: int = 640
    tile_height: int = 640
    stride_x: int = 400
    stride_y: int = 400
    retention_threshold: float = 0.8

    def __post_init__(self) -> None:
        if not (0 < self.stride_x <= self.tile_width):
            raise ValueError(f"stride_x {self.stride_x} not in (0, {self.tile_width}]")
        if not (0 < self.stride_y <= self.tile_height):
            raise ValueError(f"stride_y {self.stride_y} not in (0, {self.tile_height}]")
        if not (0 < self.retention_threshold <= 1):
            raise ValueError(f"retention_threshold {self.retention_threshold} not in (0, 1]")


@dataclass(frozen=True)
class AugProvenance:
    """Where an augmented tile came from: source tile id, op kind, and the
    sampled photometric parameters when applicable."""

    source_tile: str
    op: str
    brightness_delta: Optional[float] = None
    contrast_factor: Optional[float] = None


@dataclass(frozen=True)
class TileRecord:
    """One placed crop window plus the annotations clipped into it.

    `to_source` maps tile coordinates back to source-image coordinates:
    a plain translation for tiles cut by the tiler, a composed isometry
    for augmented copies.
    """

    tile_id: str
    image_id: str
    offset: tuple[int, int]
    to_source: AffineTransform
    annotations: tuple[Annotation, ...]
    tile_width: int
    tile_height: int
    provenance: Optional[AugProvenance] = None

    @property
    def is_background(self) -> bool:
        """True for tiles with zero retained annotations (skipped by the
        oversampler, kept for training)."""
        return not self.annotations

    @property
    def window(self) -> BoundingBox:
        x, y = self.offset
        return BoundingBox(
            float(x), float(y), float(x + self.tile_width), float(y + self.tile_height)
        )


def _axis_offsets(dim: int, tile: int, stride: int) -> list[int]:
    # Grid at stride spacing; the last offset is clamped to dim - tile so the
    # final tile abuts the edge instead of being padded.
    last = dim - tile
    offsets = list(range(0, last + 1, stride))
    if offsets[-1] != last:
        offsets.append(last)
    return offsets


def plan_tiles(image: SurveyImage, plan: TilePlan) -> list[tuple[int, int]]:
    """Tile origin offsets for an image, row-major.

    Offsets are unique, the union of windows covers every pixel, and edge
    windows are shifted inward, never padded. Raises ImageSmallerThanTile
    when the image cannot hold a single window.
    """
    if image.width < plan.tile_width or image.height < plan.tile_height:
        raise ImageSmallerThanTile(
            f"image {image.image_id!r} is {image.width}x{image.height}, "
            f"smaller than tile {plan.tile_width}x{plan.tile_height}"
        )
    xs = _axis_offsets(image.width, plan.tile_width, plan.stride_x)
    ys = _axis_offsets(image.height, plan.tile_height, plan.stride_y)
    return [(x, y) for y in ys for x in xs]


def clip_annotations(
    window: BoundingBox,
    annotations: Iterable[Annotation],
    retention_threshold: float,
    tile_id: str | None = None,
) -> list[Annotation]:
    """Clip source-frame annotations into a tile window.

    A box is kept iff area(box intersect window) / area(box) is strictly
    greater than the retention threshold; kept boxes are intersected with
    the window and translated to tile coordinates. Class labels are
    unchanged. The returned annotations carry `tile_id` as their image_id
    when given.
    """
    kept: list[Annotation] = []
    for ann in annotations:
        overlap = intersect(ann.box, window)
        if overlap is None:
            continue
        if overlap.area / ann.box.area > retention_threshold:
            clipped = overlap.translate(-window.x_min, -window.y_min)
            kept.append(
                Annotation(
                    image_id=tile_id if tile_id is not None else ann.image_id,
                    class_name=ann.class_name,
                    box=clipped,
                )
            )
    return kept


def tile_id_for(image_id: str, x: int, y: int) -> str:
    return f"{image_id}_{x}_{y}"


def extract_tiles(
    image: SurveyImage,
    pixels: np.ndarray,
    plan: TilePlan,
    annotations: Sequence[Annotation] = (),
) -> list[tuple[np.ndarray, TileRecord]]:
    """Cut a decoded raster into planned tiles with clipped annotations.

    Each tile is an exact pixel copy of its window. Raises
    DimensionMismatch when the array shape disagrees with the image
    metadata.
    """
    if pixels.shape[0] != image.height or pixels.shape[1] != image.width:
        raise DimensionMismatch(
            f"pixels are {pixels.shape[1]}x{pixels.shape[0]}, "
            f"metadata says {image.width}x{image.height}"
        )
    out: list[tuple[np.ndarray, TileRecord]] = []
    for x, y in plan_tiles(image, plan):
        record = plan_tile_record(image, plan, x, y, annotations)
        tile_px = pixels[y : y + plan.tile_height, x : x + plan.tile_width].copy()
        out.append((tile_px, record))
    return out


def plan_tile_record(
    image: SurveyImage,
    plan: TilePlan,
    x: int,
    y: int,
    annotations: Sequence[Annotation] = (),
) -> TileRecord:
    """TileRecord for one window, without touching pixels."""
    tid = tile_id_for(image.image_id, x, y)
    window = BoundingBox(
        float(x), float(y), float(x + plan.tile_width), float(y + plan.tile_height)
    )
    return TileRecord(
        tile_id=tid,
        image_id=image.image_id,
        offset=(x, y),
        to_source=AffineTransform.translation(x, y),
        annotations=tuple(
            clip_annotations(window, annotations, plan.retention_threshold, tile_id=tid)
        ),
        tile_width=plan.tile_width,
        tile_height=plan.tile_height,
    )


def plan_tile_records(
    image: SurveyImage, plan: TilePlan, annotations: Sequence[Annotation] = ()
) -> list[TileRecord]:
    """All TileRecords for an image, pixel-free (for record-only pipelines)."""
    return [
        plan_tile_record(image, plan, x, y, annotations)
        for x, y in plan_tiles(image, plan)
    ]


def load_raster(path: str | Path) -> np.ndarray:
    """Decode PNG/JPEG/TIFF into a uint8 array, (H, W) or (H, W, C)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"image file not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode == "P":
                img = img.convert("RGB")
            return np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode raster {path}: {exc}") from exc


def save_raster(pixels: np.ndarray, path: str | Path) -> None:
    """Write a lossless PNG; lossy formats would perturb detector inputs."""
    Image.fromarray(pixels).save(Path(path), format="PNG")


def write_tiles(
    image: SurveyImage,
    pixels: np.ndarray,
    plan: TilePlan,
    out_dir: str | Path,
    annotations: Sequence[Annotation] = (),
) -> list[TileRecord]:
    """Extract tiles and write each as `{tile_id}.png` under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for tile_px, record in extract_tiles(image, pixels, plan, annotations):
        save_raster(tile_px, out_dir / f"{record.tile_id}.png")
        records.append(record)
    return records


def _annotation_payload(ann: Annotation) -> dict:
    return {
        "class": ann.class_name,
        "x_min": ann.box.x_min,
        "y_min": ann.box.y_min,
        "x_max": ann.box.x_max,
        "y_max": ann.box.y_max,
    }


def _record_payload(record: TileRecord) -> dict:
    payload = {
        "tile_id": record.tile_id,
        "image_id": record.image_id,
        "offset": [record.offset[0], record.offset[1]],
        "to_source": list(record.to_source.coefficients()),
        "annotations": [_annotation_payload(a) for a in record.annotations],
    }
    if record.provenance is not None:
        prov = {"source_tile": record.provenance.source_tile, "op": record.provenance.op}
        if record.provenance.brightness_delta is not None:
            prov["brightness_delta"] = record.provenance.brightness_delta
        if record.provenance.contrast_factor is not None:
            prov["contrast_factor"] = record.provenance.contrast_factor
        payload["provenance"] = prov
    return payload


def _portable_path(image_path: Optional[Path], manifest_path: Path) -> Optional[str]:
    # stored relative to the manifest so identical runs in different roots
    # produce byte-identical manifests
    if image_path is None:
        return None
    try:
        return os.path.relpath(image_path, manifest_path.parent)
    except ValueError:
        return str(image_path)


def write_manifest(
    records: Sequence[TileRecord],
    path: str | Path,
    plan: TilePlan,
    images: Sequence[SurveyImage] = (),
) -> None:
    """Write the tiles manifest (JSON, sorted and stable for byte-identical
    reruns). Records are ordered by tile_id."""
    path = Path(path)
    if records:
        widths = {r.tile_width for r in records} | {plan.tile_width}
        heights = {r.tile_height for r in records} | {plan.tile_height}
        if len(widths) != 1 or len(heights) != 1:
            raise ValueError("records disagree with plan tile dimensions")
    payload = {
        "format": MANIFEST_FORMAT,
        "tile_width": plan.tile_width,
        "tile_height": plan.tile_height,
        "stride_x": plan.stride_x,
        "stride_y": plan.stride_y,
        "retention_threshold": plan.retention_threshold,
        "images": [
            {"image_id": im.image_id, "width": im.width, "height": im.height,
             "path": _portable_path(im.path, path)}
            for im in sorted(images, key=lambda im: im.image_id)
        ],
        "tiles": [
            _record_payload(r) for r in sorted(records, key=lambda r: r.tile_id)
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True)
class Manifest:
    plan: TilePlan
    records: tuple[TileRecord, ...]
    images: tuple[SurveyImage, ...] = ()

    def by_tile_id(self) -> dict[str, TileRecord]:
        return {r.tile_id: r for r in self.records}


def read_manifest(path: str | Path) -> Manifest:
    """Parse a tiles manifest back into records."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed manifest {path}: {exc}") from exc
    if data.get("format") != MANIFEST_FORMAT:
        raise InputError(
            f"unsupported manifest format {data.get('format')!r} in {path}"
        )
    plan = TilePlan(
        tile_width=data["tile_width"],
        tile_height=data["tile_height"],
        stride_x=data["stride_x"],
        stride_y=data["stride_y"],
        retention_threshold=data["retention_threshold"],
    )
    records = []
    for entry in data["tiles"]:
        prov = None
        if "provenance" in entry:
            p = entry["provenance"]
            prov = AugProvenance(
                source_tile=p["source_tile"],
                op=p["op"],
                brightness_delta=p.get("brightness_delta"),
                contrast_factor=p.get("contrast_factor"),
            )
        records.append(
            TileRecord(
                tile_id=entry["tile_id"],
                image_id=entry["image_id"],
                offset=(entry["offset"][0], entry["offset"][1]),
                to_source=AffineTransform(*entry["to_source"]),
                annotations=tuple(
                    Annotation(
                        image_id=entry["tile_id"],
                        class_name=a["class"],
                        box=BoundingBox(a["x_min"], a["y_min"], a["x_max"], a["y_max"]),
                    )
                    for a in entry["annotations"]
                ),
                tile_width=plan.tile_width,
                tile_height=plan.tile_height,
                provenance=prov,
            )
        )
    images = tuple(
        SurveyImage(
            image_id=im["image_id"],
            width=im["width"],
            height=im["height"],
            path=(path.parent / im["path"]).resolve() if im.get("path") else None,
        )
        for im in data.get("images", ())
    )
    return Manifest(plan=plan, records=tuple(records), images=images)
