"""Documented training defaults for the two reference detectors.

These values are recorded so a survey team can reproduce the detector
training setup elsewhere; the bridge itself never trains anything.
"""

from __future__ import annotations

import json
from pathlib import Path

TRAINING_RECIPE = {
    "optimizer": {
        "type": "sgd_with_momentum",
        "momentum": 0.9,
        "batch_size": 8,
        "total_steps": 1400,
        "weight_decay": 0.0001,
    },
    "models": {
        "faster_rcnn": {
            "backbone": "resnet50_fpn",
            "initialization": "coco_pretrained",
            "initial_learning_rate": 0.01,
            "lr_decay_factor": 0.01,
            "lr_decay_at_step": 900,
            "anchors": "framework default",
            "input_normalization": "framework default",
        },
        "retinanet": {
            "backbone": "resnet50_fpn",
            "initialization": "coco_pretrained",
            "initial_learning_rate": 0.001,
            "lr_decay_factor": 0.001,
            "lr_decay_at_step": 900,
            "anchors": "framework default",
            "input_normalization": "framework default",
        },
    },
    "notes": [
        "Learning-rate decay multiplies the current rate by the decay factor once, at the stated step.",
        "No score filtering or NMS at inference time: downstream merging and evaluation need the raw ranked list.",
    ],
}


def emit_training_recipe(out_path: str | Path) -> dict:
    """Write the recipe JSON and return the payload."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(TRAINING_RECIPE, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return TRAINING_RECIPE
