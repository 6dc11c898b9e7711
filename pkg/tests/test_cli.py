import json
from collections import Counter

import numpy as np
import pytest

from colonycount.cli import main
from colonycount.tiling import read_manifest

from conftest import build_survey


@pytest.fixture
def survey(tmp_path):
    rng = np.random.default_rng(2024)
    images_dir, csv_path, gt = build_survey(tmp_path, rng)
    out = tmp_path / "out"
    return {"images": images_dir, "csv": csv_path, "gt": gt, "out": out}


def run(*argv):
    return main([str(a) for a in argv])


def run_pipeline(survey, seed=11):
    assert run(
        "tile",
        "--images", survey["images"],
        "--annotations", survey["csv"],
        "--out", survey["out"],
        "--seed", seed,
    ) == 0
    assert run("split", "--out", survey["out"], "--seed", seed) == 0
    assert run("augment", "--out", survey["out"], "--seed", seed) == 0
    assert run("detect-oracle", "--out", survey["out"], "--seed", seed) == 0
    assert run("merge-count", "--out", survey["out"], "--seed", seed) == 0
    assert run("evaluate", "--out", survey["out"], "--seed", seed) == 0


class TestTileCommand:
    def test_manifest_has_expected_grid(self, survey):
        assert run(
            "tile",
            "--images", survey["images"],
            "--annotations", survey["csv"],
            "--out", survey["out"],
        ) == 0
        manifest = read_manifest(survey["out"] / "tiles_manifest.json")
        # 1280x960 with 640/400: x offsets {0, 400, 640}, y offsets {0, 320}
        per_image = 3 * 2
        assert len(manifest.records) == per_image * 2
        assert (survey["out"] / "tiles").exists()
        names = {p.name for p in (survey["out"] / "tiles").iterdir()}
        assert names == {f"{r.tile_id}.png" for r in manifest.records}

    def test_missing_images_path_exits_one(self, survey, capsys):
        code = run("tile", "--images", "/no/such/dir", "--out", survey["out"])
        assert code == 1
        assert "/no/such/dir" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, survey):
        args = (
            "tile",
            "--images", survey["images"],
            "--annotations", survey["csv"],
            "--out", survey["out"],
        )
        assert run(*args) == 0
        first = (survey["out"] / "tiles_manifest.json").read_bytes()
        assert run(*args) == 0
        assert (survey["out"] / "tiles_manifest.json").read_bytes() == first


class TestSplitCommand:
    def test_split_file_partitions_manifest(self, survey):
        run("tile", "--images", survey["images"], "--annotations", survey["csv"], "--out", survey["out"])
        assert run("split", "--out", survey["out"], "--seed", 5) == 0
        data = json.loads((survey["out"] / "split.json").read_text())
        manifest = read_manifest(survey["out"] / "tiles_manifest.json")
        all_ids = sorted(data["train"] + data["validation"] + data["test"])
        assert all_ids == sorted(r.tile_id for r in manifest.records)

    def test_split_by_image_keeps_sources_whole(self, survey):
        run("tile", "--images", survey["images"], "--annotations", survey["csv"], "--out", survey["out"])
        assert run("split", "--out", survey["out"], "--by-image") == 0
        data = json.loads((survey["out"] / "split.json").read_text())
        for bucket in ("train", "validation", "test"):
            sources = {t.rsplit("_", 2)[0] for t in data[bucket]}
            for other in ("train", "validation", "test"):
                if other != bucket:
                    other_sources = {t.rsplit("_", 2)[0] for t in data[other]}
                    assert not sources & other_sources


class TestOracleMergeEvaluate:
    def test_zero_noise_counts_match_ground_truth(self, survey):
        run_pipeline(survey)
        counts_csv = (survey["out"] / "merged" / "counts.csv").read_text().splitlines()
        assert counts_csv[0] == "scope,class,count"
        got = Counter()
        for line in counts_csv[1:]:
            scope, class_name, n = line.split(",")
            got[(scope, class_name)] += int(n)
        for image_id, anns in survey["gt"].items():
            want = Counter(a.class_name for a in anns)
            for class_name, n in want.items():
                assert got[(image_id, class_name)] == n

    def test_zero_noise_map_is_one(self, survey):
        run_pipeline(survey)
        ap_csv = (survey["out"] / "eval" / "ap.csv").read_text().splitlines()
        map_row = [l for l in ap_csv if l.startswith("mAP,")][0]
        values = [float(v) for v in map_row.split(",")[1:]]
        assert values == [1.0, 1.0]

    def test_augmented_manifest_written(self, survey):
        run_pipeline(survey)
        aug = read_manifest(survey["out"] / "augmented" / "manifest.json")
        originals = [r for r in aug.records if r.provenance is None]
        data = json.loads((survey["out"] / "split.json").read_text())
        assert {r.tile_id for r in originals} == set(data["train"])

    def test_malformed_detection_line_exits_one_with_line_number(self, survey, capsys):
        run_pipeline(survey)
        det_path = survey["out"] / "detections.jsonl"
        lines = det_path.read_text().splitlines()
        lines.insert(2, "{broken json")
        det_path.write_text("\n".join(lines) + "\n")
        code = run("merge-count", "--out", survey["out"])
        assert code == 1
        assert "line 3" in capsys.readouterr().err

    def test_unknown_class_listed_in_rejects_not_crash(self, survey, capsys):
        run_pipeline(survey)
        det_path = survey["out"] / "detections.jsonl"
        bogus = json.dumps(
            {
                "tile_id": "survey0_0_0",
                "class": "Pterodactyl",
                "x_min": 1.0,
                "y_min": 1.0,
                "x_max": 9.0,
                "y_max": 9.0,
                "score": 0.9,
            }
        )
        det_path.write_text(det_path.read_text() + bogus + "\n")
        assert run("evaluate", "--out", survey["out"]) == 0
        rejects = (survey["out"] / "eval" / "rejects.csv").read_text()
        assert "Pterodactyl" in rejects
        assert "unknown_class" in rejects

    def test_empty_detections_give_zero_report(self, survey):
        run("tile", "--images", survey["images"], "--annotations", survey["csv"], "--out", survey["out"])
        (survey["out"] / "detections.jsonl").write_text("")
        assert run("merge-count", "--out", survey["out"]) == 0
        counts = (survey["out"] / "merged" / "counts.csv").read_text().splitlines()
        assert counts[0] == "scope,class,count"
        assert len(counts) == 1 + 2 * 16  # both images, all classes, zero-filled
        assert all(line.endswith(",0") for line in counts[1:])

    def test_unknown_tile_in_merge_exits_one(self, survey, capsys):
        run_pipeline(survey)
        det_path = survey["out"] / "detections.jsonl"
        bogus = json.dumps(
            {
                "tile_id": "ghost_0_0",
                "class": "Other",
                "x_min": 1.0,
                "y_min": 1.0,
                "x_max": 9.0,
                "y_max": 9.0,
                "score": 0.9,
            }
        )
        det_path.write_text(det_path.read_text() + bogus + "\n")
        assert run("merge-count", "--out", survey["out"]) == 1
        assert "ghost_0_0" in capsys.readouterr().err


class TestRenderCommand:
    def test_overlay_written(self, survey):
        run_pipeline(survey)
        image = survey["images"] / "survey0.png"
        assert run(
            "render",
            "--image", image,
            "--detections", survey["out"] / "merged" / "image_detections.jsonl",
            "--out", survey["out"],
        ) == 0
        out_png = survey["out"] / "overlays" / "survey0.png"
        assert out_png.exists()

    def test_render_zero_detections_identical(self, survey, tmp_path):
        run("tile", "--images", survey["images"], "--out", survey["out"])
        empty = tmp_path / "none.jsonl"
        empty.write_text("")
        image = survey["images"] / "survey0.png"
        assert run(
            "render", "--image", image, "--detections", empty, "--out", survey["out"]
        ) == 0
        from colonycount.tiling import load_raster

        original = load_raster(image)
        rendered = load_raster(survey["out"] / "overlays" / "survey0.png")
        if original.ndim == 2:
            original = np.stack([original] * 3, axis=-1)
        assert np.array_equal(rendered, original)


class TestMissionMerge:
    def test_world_merge_dedups_across_images(self, survey, tmp_path):
        run_pipeline(survey)
        georef_dir = tmp_path / "georefs"
        georef_dir.mkdir()
        # identical world placement: every bird in survey0 also "appears"
        # in survey1's frame only if boxes coincide; here images are
        # disjoint in world space, so totals add up
        from colonycount import AffineTransform, write_world_file

        write_world_file(AffineTransform.translation(0, 0), georef_dir / "survey0.wld")
        write_world_file(
            AffineTransform.translation(50000, 0), georef_dir / "survey1.wld"
        )
        assert run(
            "merge-count", "--out", survey["out"], "--georefs", georef_dir
        ) == 0
        reports = json.loads((survey["out"] / "merged" / "counts.json").read_text())
        by_scope = {r["scope"]: r for r in reports}
        assert "mission" in by_scope
        total_birds = sum(len(a) for a in survey["gt"].values())
        mission_total = sum(by_scope["mission"]["counts"].values())
        assert mission_total == total_birds

    def test_missing_world_file_exits_one(self, survey, tmp_path, capsys):
        run_pipeline(survey)
        empty_dir = tmp_path / "georefs"
        empty_dir.mkdir()
        assert run("merge-count", "--out", survey["out"], "--georefs", empty_dir) == 1
        assert "georeference" in capsys.readouterr().err.lower()


class TestConfigFile:
    def test_config_file_with_flag_override(self, survey, tmp_path):
        config = {
            "paths": {
                "images": str(survey["images"]),
                "annotations": str(survey["csv"]),
                "out": str(survey["out"]),
            },
            "seed": 3,
            "tile": {"tile_width": 320, "tile_height": 320, "stride_x": 200, "stride_y": 200},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert run("tile", "--config", config_path) == 0
        manifest = read_manifest(survey["out"] / "tiles_manifest.json")
        assert manifest.plan.tile_width == 320
        # flag overrides the file
        assert run("tile", "--config", config_path, "--tile-width", 640, "--tile-height", 640) == 0
        manifest = read_manifest(survey["out"] / "tiles_manifest.json")
        assert manifest.plan.tile_width == 640

    def test_unknown_config_key_rejected(self, survey, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"tile_sise": 640}))
        assert run("tile", "--config", config_path, "--images", survey["images"]) == 1
        assert "tile_sise" in capsys.readouterr().err

    def test_commands_compose_from_one_config(self, survey, tmp_path):
        # the whole pipeline runs with nothing but --config
        config = {
            "paths": {
                "images": str(survey["images"]),
                "annotations": str(survey["csv"]),
                "out": str(survey["out"]),
            },
            "seed": 42,
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        for command in ("tile", "split", "augment", "detect-oracle", "merge-count", "evaluate"):
            assert run(command, "--config", config_path) == 0, command
        assert (survey["out"] / "eval" / "report.json").exists()
        assert (survey["out"] / "merged" / "counts.csv").exists()


class TestDetectModelCommand:
    def test_unlaunchable_bridge_exits_one(self, survey, capsys):
        run("tile", "--images", survey["images"], "--out", survey["out"])
        code = run(
            "detect-model",
            "--out", survey["out"],
            "--bridge-cmd", "/no/such/bridge-binary",
        )
        assert code == 1
        assert "bridge" in capsys.readouterr().err.lower()
