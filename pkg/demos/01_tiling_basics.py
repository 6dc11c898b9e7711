"""Tiling a full-resolution survey frame into detector-sized crops.

Shows the sliding-window grid, the inward clamping of edge tiles, and the
strict 80% annotation retention rule.
"""

from colonycount import BoundingBox, SurveyImage, TilePlan, clip_annotations, plan_tiles
from colonycount.dataset import Annotation

# A full camera frame and the default plan: 640x640 tiles, 400 px stride.
image = SurveyImage("frame", width=8192, height=5460)
plan = TilePlan()

offsets = plan_tiles(image, plan)
xs = sorted({x for x, _ in offsets})
ys = sorted({y for _, y in offsets})
print(f"{len(offsets)} tiles: {len(xs)} columns x {len(ys)} rows")
print("first x offsets:", xs[:4], "... last two:", xs[-2:])
# the last offset is 7552, not 7600: the window is clamped so it stays
# inside the frame and the edge column still gets full-size tiles
print("last tile right edge:", xs[-1] + plan.tile_width, "== frame width", image.width)

# Clipping: a bird straddling a tile boundary survives only if more than
# 80% of its area falls inside the window.
window = BoundingBox(0, 0, 640, 640)
birds = [
    Annotation("frame", "Laughing Gull Adult", BoundingBox(100, 100, 140, 140)),  # interior
    Annotation("frame", "Laughing Gull Adult", BoundingBox(608, 100, 648, 140)),  # 80% inside
    Annotation("frame", "Laughing Gull Adult", BoundingBox(604, 100, 644, 140)),  # 90% inside
]
kept = clip_annotations(window, birds, plan.retention_threshold, tile_id="frame_0_0")
print(f"\n{len(birds)} birds near the boundary, {len(kept)} kept after clipping:")
for ann in kept:
    print("  kept at", ann.box.as_tuple(), "(tile coordinates)")
# the 80% bird is gone (the rule is strictly 'more than'), the 90% bird is
# clipped to the window and translated into tile coordinates
