"""Overlay rendering: draw detections onto source imagery for human review."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .merge import Detection, _sort_key

# High-contrast palette; assignment is by sorted class name so a given
# class keeps its color within one rendering call.
PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
    (255, 215, 180),
    (0, 0, 128),
    (128, 128, 128),
    (255, 255, 255),
    (0, 0, 0),
    (160, 60, 60),
    (60, 60, 160),
)


@dataclass(frozen=True)
class RenderStyle:
    line_width: int = 3
    show_scores: bool = True
    color_map: Mapping[str, tuple[int, int, int]] | None = None


def class_colors(class_names: Sequence[str]) -> dict[str, tuple[int, int, int]]:
    """Stable distinct colors for a set of class names."""
    return {
        name: PALETTE[i % len(PALETTE)]
        for i, name in enumerate(sorted(set(class_names)))
    }


def render_overlay(
    pixels: np.ndarray,
    detections: Sequence[Detection],
    style: RenderStyle = RenderStyle(),
) -> np.ndarray:
    """Draw box outlines and score labels over a copy of the image.

    Pixels outside outlines and labels are untouched; with no detections
    the output is pixel-identical to the input. Deterministic for fixed
    inputs (detections are drawn in score order, colors keyed by class).
    """
    img = Image.fromarray(pixels)
    if img.mode != "RGB":
        img = img.convert("RGB")
    if not detections:
        return np.asarray(img).copy()

    colors = style.color_map or class_colors([d.class_name for d in detections])
    draw = ImageDraw.Draw(img)
    for det in sorted(detections, key=_sort_key):
        color = colors[det.class_name]
        draw.rectangle(
            [det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max],
            outline=color,
            width=style.line_width,
        )
        if style.show_scores:
            label = f"{det.class_name} {det.score:.2f}"
            text_y = max(det.box.y_min - 12, 0)
            draw.text((det.box.x_min + 2, text_y), label, fill=color)
    return np.asarray(img).copy()
