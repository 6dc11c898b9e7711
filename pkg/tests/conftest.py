import numpy as np
import pytest

from colonycount import (
    Annotation,
    BoundingBox,
    Detection,
    TilePlan,
    default_taxonomy,
)


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture
def default_plan():
    return TilePlan()


def make_annotation(image_id, class_name, x0, y0, x1, y1):
    return Annotation(
        image_id=image_id, class_name=class_name, box=BoundingBox(x0, y0, x1, y1)
    )


def make_detection(provenance, class_name, x0, y0, x1, y1, score, frame="tile"):
    return Detection(
        class_name=class_name,
        box=BoundingBox(x0, y0, x1, y1),
        score=score,
        provenance=provenance,
        frame=frame,
    )


def checkerboard(width, height, block=64, rng=None):
    """Non-uniform uint8 raster so pixel-identity checks have signal."""
    ys, xs = np.mgrid[0:height, 0:width]
    base = (((xs // block) + (ys // block)) % 2 * 120 + 40).astype(np.uint8)
    if rng is not None:
        base = (base + rng.integers(0, 40, size=base.shape, dtype=np.uint8)).astype(
            np.uint8
        )
    return base


def build_survey(
    root,
    rng,
    n_images=2,
    width=1280,
    height=960,
    birds_per_image=12,
    class_names=None,
    max_side=100,
):
    """Synthetic survey on disk: PNG images + annotation CSV.

    Returns (images_dir, csv_path, ground_truth_by_image). Birds are
    non-overlapping boxes, so zero-noise counts must match exactly.
    """
    from colonycount.dataset import write_annotations_csv
    from colonycount.tiling import save_raster

    if class_names is None:
        class_names = (
            "Laughing Gull Adult",
            "Brown Pelican Adult",
            "Mixed Tern Adult",
            "Other",
        )
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    annotations = []
    gt_by_image = {}
    for i in range(n_images):
        image_id = f"survey{i}"
        pixels = checkerboard(width, height, block=64, rng=rng)
        boxes = scatter_boxes(rng, width, height, birds_per_image, max_side=max_side)
        anns = []
        for j, box in enumerate(boxes):
            name = class_names[j % len(class_names)]
            anns.append(Annotation(image_id=image_id, class_name=name, box=box))
            # paint the bird so overlays have something to show
            x0, y0 = int(box.x_min), int(box.y_min)
            x1, y1 = int(box.x_max), int(box.y_max)
            pixels[y0:y1, x0:x1] = 235
        save_raster(pixels, images_dir / f"{image_id}.png")
        annotations.extend(anns)
        gt_by_image[image_id] = anns
    csv_path = root / "annotations.csv"
    write_annotations_csv(annotations, csv_path)
    return images_dir, csv_path, gt_by_image


def scatter_boxes(
    rng,
    image_width,
    image_height,
    n,
    max_side=240,
    min_side=8,
    margin=4,
):
    """Non-overlapping boxes on a jittered grid covering the image.

    Uses an exact cell partition so no two boxes can intersect; raises if
    the grid cannot host n boxes of the requested size.
    """
    cell_w = max_side + 2 * margin
    cell_h = max_side + 2 * margin
    cols = image_width // cell_w
    rows = image_height // cell_h
    if cols * rows < n:
        raise ValueError(f"grid {cols}x{rows} cannot host {n} boxes")
    cells = [(c, r) for r in range(rows) for c in range(cols)]
    picked = [cells[i] for i in rng.choice(len(cells), size=n, replace=False)]
    boxes = []
    for c, r in picked:
        w = int(rng.integers(min_side, max_side + 1))
        h = int(rng.integers(min_side, max_side + 1))
        x0 = c * cell_w + margin + int(rng.integers(0, max_side - w + 1))
        y0 = r * cell_h + margin + int(rng.integers(0, max_side - h + 1))
        boxes.append(BoundingBox(float(x0), float(y0), float(x0 + w), float(y0 + h)))
    return boxes
