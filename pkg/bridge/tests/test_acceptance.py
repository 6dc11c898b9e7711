"""Acceptance: bridge output round-trips through the counting pipeline's
external interfaces, and the recipe carries the documented values verbatim.

The counting pipeline is exercised strictly as a subprocess (its CLI is the
external interface); nothing from it is imported here.
"""

import json
import subprocess
import sys

from detectorbridge.cli import main as bridge_main
from detectorbridge.recipe import emit_training_recipe


def run_primary(*argv):
    return subprocess.run(
        [sys.executable, "-m", "colonycount", *map(str, argv)],
        capture_output=True,
        text=True,
    )


def report(criterion):
    print(f"[PASS] {criterion}")


class TestBridgeAcceptance:
    def test_wire_conformance_and_merge_count_round_trip(self, manifest_fixture):
        root = manifest_fixture["root"]
        detections = root / "detections.jsonl"
        code = bridge_main(
            [
                "run",
                "--manifest", str(manifest_fixture["manifest"]),
                "--tiles", str(manifest_fixture["tiles"]),
                "--out", str(detections),
            ]
        )
        assert code == 0
        n_lines = len(detections.read_text().splitlines())
        assert n_lines > 0

        # strict wire-format consumer: nonzero exit on any rejected line
        merge = run_primary(
            "merge-count",
            "--detections", detections,
            "--manifest", manifest_fixture["manifest"],
            "--out", root / "out",
        )
        assert merge.returncode == 0, merge.stderr
        counts = (root / "out" / "merged" / "counts.csv").read_text()
        assert counts.startswith("scope,class,count")

        # lenient consumer reports rejects in a sidecar; none may appear
        evaluate = run_primary(
            "evaluate",
            "--detections", detections,
            "--manifest", manifest_fixture["manifest"],
            "--out", root / "out",
        )
        assert evaluate.returncode == 0, evaluate.stderr
        assert not (root / "out" / "eval" / "rejects.csv").exists()
        report(
            f"Bridge conformance: {n_lines} wire lines, zero rejects,"
            " merge-count and evaluate round trips clean"
        )

    def test_detect_model_subcommand_drives_bridge(self, manifest_fixture):
        root = manifest_fixture["root"]
        out = root / "via_primary.jsonl"
        completed = run_primary(
            "detect-model",
            "--manifest", manifest_fixture["manifest"],
            "--tiles-dir", manifest_fixture["tiles"],
            "--detections-out", out,
            "--out", root / "out",
        )
        assert completed.returncode == 0, completed.stderr
        assert out.exists() and out.read_text().strip()
        report("Primary detect-model subcommand drives the bridge subprocess")

    def test_recipe_contains_documented_values_verbatim(self, tmp_path):
        path = tmp_path / "recipe.json"
        emit_training_recipe(path)
        data = json.loads(path.read_text())
        optimizer = data["optimizer"]
        assert optimizer["momentum"] == 0.9
        assert optimizer["batch_size"] == 8
        assert optimizer["total_steps"] == 1400
        assert optimizer["weight_decay"] == 1e-4
        faster = data["models"]["faster_rcnn"]
        assert faster["initial_learning_rate"] == 0.01
        assert faster["lr_decay_factor"] == 0.01
        assert faster["lr_decay_at_step"] == 900
        retina = data["models"]["retinanet"]
        assert retina["initial_learning_rate"] == 0.001
        assert retina["lr_decay_factor"] == 0.001
        assert retina["lr_decay_at_step"] == 900
        report("Training recipe carries documented hyperparameters verbatim")
