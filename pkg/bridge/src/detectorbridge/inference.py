"""Run a detector over a tiles manifest and emit wire-format detections.

The tiles manifest is the JSON contract produced by the tiling pipeline
(format tag "colonycount-tiles/1"); the output is JSON lines, one
detection per line:

    {"tile_id": str, "class": str, "x_min": f, "y_min": f,
     "x_max": f, "y_max": f, "score": f}

tile_ids are copied verbatim from the manifest and every emitted class is
a trained-class name from the configured label map. No score filtering
beyond the configured emission floor and no NMS happen here.
"""

from __future__ import annotations

import json
from pathlib import Path
import numpy as np
from PIL import Image

from .config import BridgeConfig, BridgeError
from .models import load_model

MANIFEST_FORMAT = "colonycount-tiles/1"


def read_tile_ids(manifest_path: str | Path) -> list[str]:
    """Tile ids from a manifest, sorted for deterministic processing."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise BridgeError(f"manifest not found: {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BridgeError(f"malformed manifest {manifest_path}: {exc}") from exc
    if data.get("format") != MANIFEST_FORMAT:
        raise BridgeError(f"unsupported manifest format: {data.get('format')!r}")
    return sorted(entry["tile_id"] for entry in data.get("tiles", []))


def _load_tile(tiles_dir: Path, tile_id: str) -> np.ndarray:
    path = tiles_dir / f"{tile_id}.png"
    if not path.exists():
        raise BridgeError(f"tile raster missing: {path}")
    with Image.open(path) as img:
        return np.asarray(img)


def _wire_line(tile_id: str, class_name: str, det) -> str:
    return json.dumps(
        {
            "tile_id": tile_id,
            "class": class_name,
            "x_min": det.x_min,
            "y_min": det.y_min,
            "x_max": det.x_max,
            "y_max": det.y_max,
            "score": det.score,
        }
    )


def run_inference(
    manifest_path: str | Path,
    tiles_dir: str | Path,
    cfg: BridgeConfig,
    out_path: str | Path,
) -> int:
    """Detect over every manifest tile, write JSONL, return detection count."""
    tiles_dir = Path(tiles_dir)
    tile_ids = read_tile_ids(manifest_path)
    model = load_model(cfg)

    written = 0
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as handle:
        for start in range(0, len(tile_ids), cfg.batch_size):
            batch_ids = tile_ids[start : start + cfg.batch_size]
            batch = [_load_tile(tiles_dir, tile_id) for tile_id in batch_ids]
            for tile_id, dets in zip(batch_ids, model.detect(batch, batch_ids)):
                for det in dets:
                    if det.score < cfg.score_floor:
                        continue
                    handle.write(_wire_line(tile_id, cfg.map_label(det.label), det) + "\n")
                    written += 1
    return written
