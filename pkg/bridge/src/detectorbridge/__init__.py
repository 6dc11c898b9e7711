"""Thin adapter between CNN object detectors and the counting pipeline."""

from .config import BridgeConfig, BridgeError, ModelLoadError, UnmappedLabel, load_bridge_config
from .inference import read_tile_ids, run_inference
from .models import load_model
from .recipe import TRAINING_RECIPE, emit_training_recipe

__version__ = "0.1.0"
