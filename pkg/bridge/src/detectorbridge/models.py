"""Detector construction: deterministic stubs plus real-framework loaders.

Identifiers:
    stub:fixed           two deterministic boxes per tile, no pixel logic
    stub:bright          thresholds bright blobs (bounding boxes of rows/cols)
    torchvision:<name>   torchvision detection model (requires torch)

Only this module is allowed to touch model tooling; the rest of the bridge
is framework-free.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .config import BridgeConfig, ModelLoadError


@dataclass(frozen=True)
class RawDetection:
    """Model-native output: label string, tile-frame box, confidence."""

    label: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float


class Detector(Protocol):
    labels: tuple[str, ...]

    def detect(self, batch: Sequence[np.ndarray], tile_ids: Sequence[str]) -> list[list[RawDetection]]:
        ...


class FixedStub:
    """Emits two boxes per tile with scores derived from the tile id.

    Deterministic and pixel-independent; meant for wiring and conformance
    tests, not for actual detection quality.
    """

    labels = ("0", "1", "2")

    def detect(self, batch, tile_ids):
        out = []
        for pixels, tile_id in zip(batch, tile_ids):
            height, width = pixels.shape[:2]
            digest = hashlib.sha256(tile_id.encode("utf-8")).digest()
            score_a = 0.30 + 0.69 * digest[0] / 255.0
            score_b = 0.05 + 0.50 * digest[1] / 255.0
            side = max(8.0, min(width, height) / 8.0)
            out.append(
                [
                    RawDetection(
                        label=self.labels[digest[2] % 3],
                        x_min=width * 0.10,
                        y_min=height * 0.10,
                        x_max=width * 0.10 + side,
                        y_max=height * 0.10 + side,
                        score=round(score_a, 6),
                    ),
                    RawDetection(
                        label=self.labels[digest[3] % 3],
                        x_min=width * 0.55,
                        y_min=height * 0.55,
                        x_max=width * 0.55 + side,
                        y_max=height * 0.55 + side,
                        score=round(score_b, 6),
                    ),
                ]
            )
        return out


class BrightBlobStub:
    """One box around the brightest connected span, if any pixel > 200.

    A crude pixel-reading detector so end-to-end demos show real geometry.
    """

    labels = ("0",)

    def detect(self, batch, tile_ids):
        out = []
        for pixels, _ in zip(batch, tile_ids):
            gray = pixels if pixels.ndim == 2 else pixels.mean(axis=-1)
            mask = gray > 200
            if not mask.any():
                out.append([])
                continue
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            out.append(
                [
                    RawDetection(
                        label="0",
                        x_min=float(cols[0]),
                        y_min=float(rows[0]),
                        x_max=float(cols[-1] + 1),
                        y_max=float(rows[-1] + 1),
                        score=0.9,
                    )
                ]
            )
        return out


class TorchvisionDetector:
    """Adapter for torchvision detection models; labels are class indices."""

    def __init__(self, name: str, weights_path: str | None, device: str):
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise ModelLoadError(f"torchvision backend unavailable: {exc}") from exc
        try:
            factory = getattr(torchvision.models.detection, name)
        except AttributeError as exc:
            raise ModelLoadError(f"unknown torchvision model {name!r}") from exc
        self._torch = torch
        self._model = factory(weights=None, weights_backbone=None)
        if weights_path:
            state = torch.load(weights_path, map_location=device)
            self._model.load_state_dict(state)
        self._model.to(device).eval()
        self._device = device
        n_classes = getattr(self._model, "num_classes", 91)
        self.labels = tuple(str(i) for i in range(n_classes))

    def detect(self, batch, tile_ids):
        torch = self._torch
        tensors = [
            torch.from_numpy(
                np.ascontiguousarray(
                    (p if p.ndim == 3 else np.stack([p] * 3, axis=-1)).transpose(2, 0, 1)
                )
            ).float()
            / 255.0
            for p in batch
        ]
        with torch.no_grad():
            results = self._model([t.to(self._device) for t in tensors])
        out = []
        for result in results:
            dets = []
            for box, label, score in zip(
                result["boxes"].cpu().numpy(),
                result["labels"].cpu().numpy(),
                result["scores"].cpu().numpy(),
            ):
                dets.append(
                    RawDetection(
                        label=str(int(label)),
                        x_min=float(box[0]),
                        y_min=float(box[1]),
                        x_max=float(box[2]),
                        y_max=float(box[3]),
                        score=float(score),
                    )
                )
            out.append(dets)
        return out


def load_model(cfg: BridgeConfig) -> Detector:
    """Build the detector named by cfg.model; validate the class map."""
    identifier = cfg.model
    if identifier == "stub:fixed":
        model: Detector = FixedStub()
    elif identifier == "stub:bright":
        model = BrightBlobStub()
    elif identifier.startswith("torchvision:"):
        model = TorchvisionDetector(
            identifier.split(":", 1)[1], cfg.weights, cfg.device
        )
    else:
        raise ModelLoadError(f"unknown model identifier {identifier!r}")
    cfg.validate_against(model.labels)
    return model
