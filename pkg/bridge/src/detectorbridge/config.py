"""Bridge configuration: which model to run and how its labels map to
trained class names."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class BridgeError(Exception):
    pass


class ModelLoadError(BridgeError):
    """The requested detector cannot be constructed."""


class UnmappedLabel(BridgeError):
    """The detector produced a label with no class-map entry."""

    def __init__(self, name: str):
        super().__init__(f"model label {name!r} has no class-map entry")
        self.name = name


@dataclass(frozen=True)
class BridgeConfig:
    """Model selection plus the label -> trained-class mapping.

    The bridge never filters by score (default floor 0.0) and never runs
    NMS: the downstream pipeline needs the raw ranked list.
    """

    model: str = "stub:fixed"
    weights: str | None = None
    score_floor: float = 0.0
    batch_size: int = 8
    device: str = "cpu"
    class_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not (0.0 <= self.score_floor <= 1.0):
            raise ValueError(f"score_floor outside [0, 1]: {self.score_floor}")

    def map_label(self, label: str) -> str:
        if label not in self.class_map:
            raise UnmappedLabel(label)
        return self.class_map[label]

    def validate_against(self, label_set: tuple[str, ...]) -> None:
        """The class map must be total on the detector's label set."""
        missing = [name for name in label_set if name not in self.class_map]
        if missing:
            raise UnmappedLabel(missing[0])


def load_bridge_config(path: str | Path) -> BridgeConfig:
    path = Path(path)
    if not path.exists():
        raise BridgeError(f"bridge config not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BridgeError(f"malformed bridge config {path}: {exc}") from exc
    try:
        return BridgeConfig(
            model=data.get("model", "stub:fixed"),
            weights=data.get("weights"),
            score_floor=data.get("score_floor", 0.0),
            batch_size=data.get("batch_size", 8),
            device=data.get("device", "cpu"),
            class_map=dict(data.get("class_map", {})),
        )
    except (TypeError, ValueError) as exc:
        raise BridgeError(f"invalid bridge config {path}: {exc}") from exc
