"""Back-projection, cross-tile de-duplication, and per-species counting.

Detections made on overlapping tiles are mapped back into source-image
coordinates through each tile's `to_source` transform, then de-duplicated
with greedy non-maximum suppression so one bird seen by several tiles is
counted once. Georeferenced images can be merged further into a single
mission-level count in world coordinates.

Wire format (the detector-bridge contract): JSON lines, one detection per
line, tile-frame coordinates:

    {"tile_id": str, "class": str, "x_min": f, "y_min": f,
     "x_max": f, "y_max": f, "score": f}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError, PipelineError
from .geometry import AffineTransform, BoundingBox, apply_transform, iou
from .tiling import TileRecord

FRAME_TILE = "tile"
FRAME_IMAGE = "image"
FRAME_WORLD = "world"
_FRAMES = (FRAME_TILE, FRAME_IMAGE, FRAME_WORLD)


class UnknownTile(InputError):
    """A detection references a tile_id absent from the manifest."""

    def __init__(self, tile_id: str):
        super().__init__(f"detection references unknown tile: {tile_id!r}")
        self.tile_id = tile_id


class MixedFrames(PipelineError):
    """Detections from different coordinate frames were mixed."""


class MissingGeoreference(InputError):
    """Mission merge needs an image -> world transform for every image."""

    def __init__(self, image_id: str):
        super().__init__(f"no georeference for image {image_id!r}")
        self.image_id = image_id


@dataclass(frozen=True)
class Detection:
    """A class-labeled, scored box in an explicitly tagged frame.

    `provenance` names the raster the coordinates live in: a tile_id in
    the tile frame, an image_id in image or world frames.
    """

    class_name: str
    box: BoundingBox
    score: float
    provenance: str
    frame: str = FRAME_TILE

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.frame not in _FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")


@dataclass(frozen=True)
class CountReport:
    """Per-class counts for one image or one mission."""

    scope: str
    counts: dict[str, int]
    score_floor: float
    nms_threshold: Optional[float] = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _sort_key(det: Detection):
    # Descending score; ties broken by provenance id then coordinates then
    # class, so repeated runs keep and suppress identical detections.
    return (
        -det.score,
        det.provenance,
        det.box.x_min,
        det.box.y_min,
        det.box.x_max,
        det.box.y_max,
        det.class_name,
    )


def _single_frame(detections: Sequence[Detection]) -> str | None:
    frames = {d.frame for d in detections}
    if len(frames) > 1:
        raise MixedFrames(f"detections span frames {sorted(frames)}")
    return frames.pop() if frames else None


def back_project(
    detections: Iterable[Detection], tile_records: Mapping[str, TileRecord]
) -> list[Detection]:
    """Map tile-frame detections into source-image coordinates.

    Scores and classes are unchanged; provenance becomes the source
    image_id. Raises UnknownTile when a detection's tile is not in the
    manifest.
    """
    out = []
    for det in detections:
        if det.frame != FRAME_TILE:
            raise MixedFrames(f"back_project expects tile-frame input, got {det.frame!r}")
        record = tile_records.get(det.provenance)
        if record is None:
            raise UnknownTile(det.provenance)
        out.append(
            replace(
                det,
                box=apply_transform(record.to_source, det.box),
                provenance=record.image_id,
                frame=FRAME_IMAGE,
            )
        )
    return out


def nms(
    detections: Sequence[Detection],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited in descending score order (deterministic
    tie-breaking); each kept detection suppresses every remaining one
    (of the same class when class_aware) whose IoU with it is strictly
    greater than the threshold, so a pair at exactly the threshold
    survives. Output is score-ordered and idempotent under re-application.
    """
    _single_frame(detections)
    ordered = sorted(detections, key=_sort_key)
    kept: list[Detection] = []
    for candidate in ordered:
        suppressed = False
        for keeper in kept:
            if class_aware and keeper.class_name != candidate.class_name:
                continue
            if iou(keeper.box, candidate.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(candidate)
    return kept


def count(
    detections: Sequence[Detection],
    score_floor: float = 0.5,
    scope: str = "",
    classes: Sequence[str] | None = None,
    nms_threshold: float | None = None,
) -> CountReport:
    """Per-class counts of detections scoring at or above the floor.

    Feed this de-duplicated (post-NMS) detections. `classes` zero-fills
    the report so absent species still show a 0.
    """
    counts: dict[str, int] = {c: 0 for c in classes} if classes else {}
    for det in detections:
        if det.score >= score_floor:
            counts[det.class_name] = counts.get(det.class_name, 0) + 1
    return CountReport(
        scope=scope, counts=counts, score_floor=score_floor, nms_threshold=nms_threshold
    )


def merge_mission(
    detections_by_image: Mapping[str, Sequence[Detection]],
    georeferences: Mapping[str, AffineTransform],
    iou_threshold: float = 0.5,
    score_floor: float = 0.5,
    class_aware: bool = True,
    classes: Sequence[str] | None = None,
    scope: str = "mission",
) -> tuple[list[Detection], CountReport]:
    """Merge per-image detections into one de-duplicated mission count.

    Every image needs an invertible image -> world affine; detections are
    mapped to the world frame, de-duplicated with NMS there (birds caught
    in two overlapping flight images collapse to one), and counted.
    """
    world: list[Detection] = []
    for image_id in sorted(detections_by_image):
        transform = georeferences.get(image_id)
        if transform is None:
            raise MissingGeoreference(image_id)
        for det in detections_by_image[image_id]:
            if det.frame != FRAME_IMAGE:
                raise MixedFrames(
                    f"mission merge expects image-frame input, got {det.frame!r}"
                )
            world.append(
                replace(det, box=apply_transform(transform, det.box), frame=FRAME_WORLD)
            )
    merged = nms(world, iou_threshold=iou_threshold, class_aware=class_aware)
    report = count(
        merged,
        score_floor=score_floor,
        scope=scope,
        classes=classes,
        nms_threshold=iou_threshold,
    )
    return merged, report


# --- wire format -----------------------------------------------------------

_WIRE_KEYS = ("tile_id", "class", "x_min", "y_min", "x_max", "y_max", "score")


def detection_to_wire(det: Detection) -> str:
    """One wire-format JSON line for a tile-frame detection."""
    return json.dumps(
        {
            "tile_id": det.provenance,
            "class": det.class_name,
            "x_min": det.box.x_min,
            "y_min": det.box.y_min,
            "x_max": det.box.x_max,
            "y_max": det.box.y_max,
            "score": det.score,
        }
    )


def write_detections_jsonl(detections: Iterable[Detection], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for det in detections:
            handle.write(detection_to_wire(det) + "\n")


@dataclass(frozen=True)
class WireReject:
    line_number: int
    reason: str


def parse_wire_line(line: str) -> Detection:
    """Parse one wire-format line; raises ValueError with a reason."""
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    missing = [k for k in _WIRE_KEYS if k not in obj]
    if missing:
        raise ValueError(f"missing keys: {missing}")
    box = BoundingBox(
        float(obj["x_min"]), float(obj["y_min"]), float(obj["x_max"]), float(obj["y_max"])
    )
    return Detection(
        class_name=str(obj["class"]),
        box=box,
        score=float(obj["score"]),
        provenance=str(obj["tile_id"]),
        frame=FRAME_TILE,
    )


def read_detections_jsonl(
    path: str | Path, strict: bool = False
) -> tuple[list[Detection], list[WireReject]]:
    """Read a detections JSONL file.

    Malformed lines are returned as rejects with their line numbers; with
    strict=True the first malformed line raises instead.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"detections file not found: {path}")
    detections: list[Detection] = []
    rejects: list[WireReject] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                detections.append(parse_wire_line(line))
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                if strict:
                    raise InputError(f"line {line_number}: {exc}") from exc
                rejects.append(WireReject(line_number, str(exc)))
    return detections, rejects


def write_frame_detections_jsonl(
    detections: Iterable[Detection], path: str | Path
) -> None:
    """JSONL for image- or world-frame detections (keyed by image_id)."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for det in detections:
            handle.write(
                json.dumps(
                    {
                        "image_id": det.provenance,
                        "class": det.class_name,
                        "x_min": det.box.x_min,
                        "y_min": det.box.y_min,
                        "x_max": det.box.x_max,
                        "y_max": det.box.y_max,
                        "score": det.score,
                        "frame": det.frame,
                    }
                )
                + "\n"
            )


def read_frame_detections_jsonl(path: str | Path) -> list[Detection]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"detections file not found: {path}")
    out: list[Detection] = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(
                    Detection(
                        class_name=str(obj["class"]),
                        box=BoundingBox(
                            float(obj["x_min"]),
                            float(obj["y_min"]),
                            float(obj["x_max"]),
                            float(obj["y_max"]),
                        ),
                        score=float(obj["score"]),
                        provenance=str(obj["image_id"]),
                        frame=str(obj.get("frame", FRAME_IMAGE)),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise InputError(f"line {line_number}: {exc}") from exc
    return out


# --- georeference sidecars (world-file layout) ------------------------------

def read_world_file(path: str | Path) -> AffineTransform:
    """Parse a 6-line plain-text world file into an affine transform.

    Line order is x-scale, y-skew, x-skew, y-scale, x-offset, y-offset;
    the transform maps continuous pixel coordinates to world coordinates.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"world file not found: {path}")
    values = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        raw = raw.strip()
        if raw:
            try:
                values.append(float(raw))
            except ValueError as exc:
                raise InputError(f"bad world file line in {path}: {raw!r}") from exc
    if len(values) != 6:
        raise InputError(f"world file {path} has {len(values)} values, expected 6")
    x_scale, y_skew, x_skew, y_scale, x_off, y_off = values
    transform = AffineTransform(
        a=x_scale, b=x_skew, c=x_off, d=y_skew, e=y_scale, f=y_off
    )
    if transform.determinant == 0.0:
        raise InputError(f"world file {path} describes a non-invertible transform")
    return transform


def write_world_file(transform: AffineTransform, path: str | Path) -> None:
    lines = [
        transform.a,
        transform.d,
        transform.b,
        transform.e,
        transform.c,
        transform.f,
    ]
    Path(path).write_text(
        "\n".join(repr(v) for v in lines) + "\n", encoding="utf-8"
    )


# --- report emission ---------------------------------------------------------

def count_report_csv(report: CountReport) -> str:
    """CSV body `scope,class,count`, classes sorted."""
    lines = ["scope,class,count"]
    for class_name in sorted(report.counts):
        lines.append(f"{report.scope},{class_name},{report.counts[class_name]}")
    return "\n".join(lines) + "\n"


def count_report_json(report: CountReport) -> str:
    payload = {
        "scope": report.scope,
        "counts": {k: report.counts[k] for k in sorted(report.counts)},
        "total": report.total,
        "parameters": {
            "score_floor": report.score_floor,
            "nms_threshold": report.nms_threshold,
        },
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"
