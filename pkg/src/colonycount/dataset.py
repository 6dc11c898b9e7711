"""Annotation ingestion, dataset splitting, and class histograms.

Annotation files are CSV with a header row and one box per line:

    image_id,class_name,x_min,y_min,x_max,y_max

Class names are raw survey labels; they are folded through the taxonomy on
load. Rows with unknown class names or out-of-bounds boxes are quarantined
into a rejects report rather than silently dropped, because "Other" is a
real class, not an error sink.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError
from .geometry import AffineTransform, BoundingBox
from .taxonomy import ClassTaxonomy


class ParseError(InputError):
    """A structurally malformed annotation row (fails fast: corrupt file)."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class OutOfBounds(InputError):
    """An annotation box exceeds its source image dimensions."""

    def __init__(self, box: BoundingBox, image_id: str):
        super().__init__(f"box {box.as_tuple()} exceeds bounds of image {image_id!r}")
        self.box = box
        self.image_id = image_id


class BadRatios(InputError):
    """Split ratios must be positive and sum to 1."""


@dataclass(frozen=True)
class Annotation:
    """A class-labeled box. image_id names whatever raster the box lives in
    (a source survey image, or a tile once clipped)."""

    image_id: str
    class_name: str
    box: BoundingBox


@dataclass(frozen=True)
class SurveyImage:
    """Source raster metadata, optionally georeferenced (image -> world)."""

    image_id: str
    width: int
    height: int
    path: Optional[Path] = None
    georeference: Optional[AffineTransform] = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"bad image dimensions: {self.width}x{self.height}")

    @property
    def bounds(self) -> BoundingBox:
        return BoundingBox(0.0, 0.0, float(self.width), float(self.height))


@dataclass(frozen=True)
class RejectedRow:
    line_number: int
    reason: str
    detail: str


@dataclass(frozen=True)
class LoadResult:
    """Annotations grouped by image plus the quarantined rows."""

    by_image: dict[str, list[Annotation]]
    rejects: list[RejectedRow]

    @property
    def annotations(self) -> list[Annotation]:
        out: list[Annotation] = []
        for image_id in sorted(self.by_image):
            out.extend(self.by_image[image_id])
        return out


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test partition of tile identifiers."""

    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]
    seed: int

    def __post_init__(self) -> None:
        if (
            self.train & self.validation
            or self.train & self.test
            or self.validation & self.test
        ):
            raise ValueError("split sets overlap")

    @property
    def all_ids(self) -> frozenset[str]:
        return self.train | self.validation | self.test


_CSV_HEADER = ("image_id", "class_name", "x_min", "y_min", "x_max", "y_max")


def load_annotations(
    annotation_file: str | Path,
    taxonomy: ClassTaxonomy,
    image_dims: Mapping[str, tuple[int, int]] | None = None,
) -> LoadResult:
    """Read an annotation CSV, folding raw labels through the taxonomy.

    Structurally malformed rows (wrong column count, non-numeric or
    degenerate coordinates) raise ParseError with the offending line
    number. Rows with unmapped class names are collected as rejects with
    reason "unknown_class"; when `image_dims` is given (image_id ->
    (width, height)), rows whose box pokes outside its image are rejected
    with reason "out_of_bounds".
    """
    path = Path(annotation_file)
    if not path.exists():
        raise InputError(f"annotation file not found: {path}")

    by_image: dict[str, list[Annotation]] = {}
    rejects: list[RejectedRow] = []
    fold = taxonomy.fold_map

    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for line_number, row in enumerate(reader, start=1):
            if line_number == 1:
                if [c.strip() for c in row] != list(_CSV_HEADER):
                    raise ParseError(
                        line_number,
                        f"expected header {','.join(_CSV_HEADER)}, got {row}",
                    )
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise ParseError(line_number, f"expected 6 columns, got {len(row)}")
            image_id, raw_class = row[0].strip(), row[1].strip()
            try:
                coords = [float(c) for c in row[2:6]]
            except ValueError as exc:
                raise ParseError(line_number, f"non-numeric coordinate: {exc}") from exc
            try:
                box = BoundingBox(*coords)
            except ValueError as exc:
                raise ParseError(line_number, str(exc)) from exc

            if raw_class not in fold:
                rejects.append(RejectedRow(line_number, "unknown_class", raw_class))
                continue
            if image_dims is not None and image_id in image_dims:
                width, height = image_dims[image_id]
                if box.x_min < 0 or box.y_min < 0 or box.x_max > width or box.y_max > height:
                    rejects.append(
                        RejectedRow(
                            line_number,
                            "out_of_bounds",
                            f"{image_id}: {box.as_tuple()} vs {width}x{height}",
                        )
                    )
                    continue
            by_image.setdefault(image_id, []).append(
                Annotation(image_id=image_id, class_name=fold[raw_class], box=box)
            )
    return LoadResult(by_image=by_image, rejects=rejects)


def write_annotations_csv(annotations: Iterable[Annotation], path: str | Path) -> None:
    """Write annotations in the same CSV schema the loader reads."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_HEADER)
        for ann in annotations:
            writer.writerow(
                [
                    ann.image_id,
                    ann.class_name,
                    repr(ann.box.x_min),
                    repr(ann.box.y_min),
                    repr(ann.box.x_max),
                    repr(ann.box.y_max),
                ]
            )


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    # largest-remainder apportionment: every bucket lands within one tile
    # of its exact share; ties go to the earlier bucket (train first)
    quotas = [r * n for r in ratios]
    base = [math.floor(q + 1e-9) for q in quotas]
    remainder = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


def split_dataset(
    tile_ids: Sequence[str],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> DatasetSplit:
    """Randomly partition tile ids into train/validation/test.

    Deterministic for a fixed seed and independent of input order (ids are
    sorted before the seeded shuffle). Bucket sizes come from
    largest-remainder apportionment, so each stays within one tile of its
    exact share; on a tie the earlier bucket wins, which sends a lone tile
    to training.
    """
    if any(r <= 0 for r in ratios):
        raise BadRatios(f"ratios must be positive: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must sum to 1: {ratios} (sum {sum(ratios)})")
    ids = sorted(tile_ids)
    if len(set(ids)) != len(ids):
        raise InputError("duplicate tile ids in split input")

    rng = random.Random(seed)
    rng.shuffle(ids)

    n_train, n_val, _ = _apportion(len(ids), ratios)
    return DatasetSplit(
        train=frozenset(ids[:n_train]),
        validation=frozenset(ids[n_train : n_train + n_val]),
        test=frozenset(ids[n_train + n_val :]),
        seed=seed,
    )


def split_by_source_image(
    tile_ids_by_image: Mapping[str, Sequence[str]],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> DatasetSplit:
    """Leakage-safe variant: split at source-image level, tiles follow
    their image. Default pipelines split at tile level instead."""
    image_split = split_dataset(sorted(tile_ids_by_image), ratios, seed)

    def gather(image_ids: frozenset[str]) -> frozenset[str]:
        out: set[str] = set()
        for image_id in image_ids:
            out.update(tile_ids_by_image[image_id])
        return frozenset(out)

    return DatasetSplit(
        train=gather(image_split.train),
        validation=gather(image_split.validation),
        test=gather(image_split.test),
        seed=seed,
    )


def class_histogram(
    annotations: Iterable[Annotation], taxonomy: ClassTaxonomy | None = None
) -> dict[str, int]:
    """Per-class annotation counts.

    With a taxonomy, every trained class appears (zero-filled) and unknown
    class names raise; without one, only observed classes appear.
    """
    counts: dict[str, int] = (
        {name: 0 for name in taxonomy.trained_classes} if taxonomy else {}
    )
    for ann in annotations:
        if taxonomy is not None and ann.class_name not in counts:
            raise InputError(f"annotation class not in taxonomy: {ann.class_name!r}")
        counts[ann.class_name] = counts.get(ann.class_name, 0) + 1
    return counts
