"""Axis-aligned box algebra and 2D affine coordinate transforms.

Coordinates are continuous pixel values: origin at the top-left corner,
x growing rightward, y growing downward. Boxes are treated as closed-open
rectangles, so two boxes that merely share an edge have an empty
intersection and an IoU of exactly 0. All values are stored as doubles so
chained transforms (tile offset, then world georeference) lose no
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import PipelineError


class NonInvertibleTransform(PipelineError):
    """The affine transform has zero determinant and cannot be inverted."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle with strictly positive area.

    Degenerate (zero-width or zero-height) boxes are rejected at
    construction: they indicate corrupt annotations and must surface
    early rather than flow through as silently-zero areas.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                "degenerate box: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(
            self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy
        )

    def contains(self, other: "BoundingBox") -> bool:
        """True when `other` lies entirely inside this box (edges allowed)."""
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class AffineTransform:
    """Planar affine map (x, y) -> (a*x + b*y + c, d*x + e*y + f).

    Carries both tile-offset translations and optional image-to-world
    georeferences. Instances are plain coefficient holders; invertibility
    is checked by the operations that need it.
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(1.0, 0.0, float(dx), 0.0, 1.0, float(dy))

    @property
    def determinant(self) -> float:
        return self.a * self.e - self.b * self.d

    def apply_point(self, x: float, y: float) -> tuple[float, float]:
        return (
            self.a * x + self.b * y + self.c,
            self.d * x + self.e * y + self.f,
        )

    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)


def intersect(a: BoundingBox, b: BoundingBox) -> Optional[BoundingBox]:
    """Overlap rectangle of two boxes, or None when interiors are disjoint.

    Touching edges count as disjoint.
    """
    x_min = max(a.x_min, b.x_min)
    y_min = max(a.y_min, b.y_min)
    x_max = min(a.x_max, b.x_max)
    y_max = min(a.y_max, b.y_max)
    if x_min < x_max and y_min < y_max:
        return BoundingBox(x_min, y_min, x_max, y_max)
    return None


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes, in [0, 1].

    Exactly 0 for disjoint interiors, exactly 1 for identical boxes,
    and symmetric in its arguments.
    """
    overlap = intersect(a, b)
    if overlap is None:
        return 0.0
    inter_area = overlap.area
    union_area = a.area + b.area - inter_area
    return inter_area / union_area


def apply_transform(t: AffineTransform, box: BoundingBox) -> BoundingBox:
    """Image of a box under an affine map, renormalized to min/max order.

    All four corners are mapped and the axis-aligned hull of the images is
    returned, which keeps 90-degree rotations and mirrorings exact.

    Raises NonInvertibleTransform when the determinant is 0.
    """
    if t.determinant == 0.0:
        raise NonInvertibleTransform(f"determinant is 0: {t.coefficients()}")
    corners = (
        t.apply_point(box.x_min, box.y_min),
        t.apply_point(box.x_max, box.y_min),
        t.apply_point(box.x_min, box.y_max),
        t.apply_point(box.x_max, box.y_max),
    )
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    return BoundingBox(min(xs), min(ys), max(xs), max(ys))


def invert(t: AffineTransform) -> AffineTransform:
    """Inverse affine map; round-trips boxes to within 1e-9 per coordinate.

    Raises NonInvertibleTransform when the determinant is 0.
    """
    det = t.determinant
    if det == 0.0:
        raise NonInvertibleTransform(f"determinant is 0: {t.coefficients()}")
    return AffineTransform(
        a=t.e / det,
        b=-t.b / det,
        c=(t.b * t.f - t.c * t.e) / det,
        d=-t.d / det,
        e=t.a / det,
        f=(t.c * t.d - t.a * t.f) / det,
    )


def compose(outer: AffineTransform, inner: AffineTransform) -> AffineTransform:
    """Transform equivalent to applying `inner` first, then `outer`."""
    return AffineTransform(
        a=outer.a * inner.a + outer.b * inner.d,
        b=outer.a * inner.b + outer.b * inner.e,
        c=outer.a * inner.c + outer.b * inner.f + outer.c,
        d=outer.d * inner.a + outer.e * inner.d,
        e=outer.d * inner.b + outer.e * inner.e,
        f=outer.d * inner.c + outer.e * inner.f + outer.f,
    )
