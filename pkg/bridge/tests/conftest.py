import json

import numpy as np
import pytest
from PIL import Image

TILE = 64


def write_tile(path, size=TILE, bright_box=None):
    pixels = np.full((size, size), 90, dtype=np.uint8)
    if bright_box is not None:
        x0, y0, x1, y1 = bright_box
        pixels[y0:y1, x0:x1] = 240
    Image.fromarray(pixels).save(path, format="PNG")


@pytest.fixture
def manifest_fixture(tmp_path):
    """Hand-written manifest per the tiles-manifest contract, plus PNGs."""
    tiles_dir = tmp_path / "tiles"
    tiles_dir.mkdir()
    tile_ids = ["img_0_0", "img_40_0", "img_0_40"]
    for i, tile_id in enumerate(tile_ids):
        write_tile(tiles_dir / f"{tile_id}.png", bright_box=(10 + i, 12, 30 + i, 32))
    manifest = {
        "format": "colonycount-tiles/1",
        "tile_width": TILE,
        "tile_height": TILE,
        "stride_x": 40,
        "stride_y": 40,
        "retention_threshold": 0.8,
        "images": [{"image_id": "img", "width": 104, "height": 104, "path": None}],
        "tiles": [
            {
                "tile_id": tile_id,
                "image_id": "img",
                "offset": [int(tile_id.split("_")[1]), int(tile_id.split("_")[2])],
                "to_source": [
                    1.0,
                    0.0,
                    float(tile_id.split("_")[1]),
                    0.0,
                    1.0,
                    float(tile_id.split("_")[2]),
                ],
                "annotations": [
                    {
                        "class": "Laughing Gull Adult",
                        "x_min": 10.0 + i,
                        "y_min": 12.0,
                        "x_max": 30.0 + i,
                        "y_max": 32.0,
                    }
                ],
            }
            for i, tile_id in enumerate(tile_ids)
        ],
    }
    manifest_path = tmp_path / "tiles_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return {"manifest": manifest_path, "tiles": tiles_dir, "tile_ids": tile_ids, "root": tmp_path}
