"""Merging overlapping flight images into one mission-level count.

Two survey frames photograph the same shoreline with 50% overlap. Each
frame counts its own birds correctly, but the shared strip would be
counted twice without a world-frame merge.
"""

from colonycount import AffineTransform, BoundingBox, Detection, count, merge_mission

# World layout: image A covers world x of 0..1000, image B covers 500..1500
# (both at 1 world unit per pixel for simplicity).
georefs = {
    "A": AffineTransform.translation(0, 0),
    "B": AffineTransform.translation(500, 0),
}


def det(image_id, x0, y0, side=30, score=0.9, name="Laughing Gull Adult"):
    return Detection(
        class_name=name,
        box=BoundingBox(x0, y0, x0 + side, y0 + side),
        score=score,
        provenance=image_id,
        frame="image",
    )


# three birds total: one only in A, one only in B, one in the overlap zone
# (world x ~700), seen by both cameras
detections = {
    "A": [det("A", 100, 40), det("A", 700, 40, score=0.95)],
    "B": [det("B", 200, 40, score=0.88), det("B", 900, 40)],
}

per_image_total = sum(len(v) for v in detections.values())
print(f"{per_image_total} image-level detections across two frames")

merged, report = merge_mission(detections, georefs, iou_threshold=0.5)
print(f"{len(merged)} detections after the world-frame merge")
print(f"mission count: {report.total} birds (the overlap bird counted once)")
for det_kept in merged:
    print("  kept:", det_kept.box.as_tuple(), f"score {det_kept.score}")

assert report.total == 3
naive = sum(count(v, score_floor=0.5).total for v in detections.values())
print(f"\nnaive per-image sum would say {naive}; the mission merge says {report.total}")
