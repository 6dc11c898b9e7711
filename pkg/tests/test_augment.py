import numpy as np
import pytest

from colonycount import (
    AffineTransform,
    AugmentationOp,
    BoundingBox,
    NonSquareRotation,
    OversamplePolicy,
    apply_transform,
    augment_tile,
    build_augmented_set,
    class_histogram,
    select_minority_tiles,
)
from colonycount.augment import default_ops, op_geometry
from colonycount.tiling import TileRecord

from conftest import checkerboard, make_annotation


def make_record(tile_id, class_names, size=640):
    anns = tuple(
        make_annotation(tile_id, name, 20 * i + 5, 10, 20 * i + 15, 30)
        for i, name in enumerate(class_names)
    )
    return TileRecord(
        tile_id=tile_id,
        image_id="img",
        offset=(0, 0),
        to_source=AffineTransform.translation(0, 0),
        annotations=anns,
        tile_width=size,
        tile_height=size,
    )


class TestSelectMinorityTiles:
    def test_pure_minority_tile_qualifies(self, taxonomy):
        record = make_record("t1", ["Brown Pelican Adult"] * 5)
        policy = OversamplePolicy.with_default_ops()
        assert select_minority_tiles([record], taxonomy, policy) == ["t1"]

    def test_exactly_eighty_percent_does_not_qualify(self, taxonomy):
        record = make_record(
            "t1", ["Brown Pelican Adult"] * 4 + ["Laughing Gull Adult"]
        )
        policy = OversamplePolicy.with_default_ops()
        assert select_minority_tiles([record], taxonomy, policy) == []

    def test_above_eighty_percent_qualifies(self, taxonomy):
        record = make_record(
            "t1", ["Brown Pelican Adult"] * 5 + ["Laughing Gull Adult"]
        )
        policy = OversamplePolicy.with_default_ops()
        assert select_minority_tiles([record], taxonomy, policy) == ["t1"]

    def test_empty_tile_never_qualifies(self, taxonomy):
        record = make_record("t1", [])
        policy = OversamplePolicy.with_default_ops()
        assert select_minority_tiles([record], taxonomy, policy) == []


class TestAugmentTile:
    def test_horizontal_mirror_box_arithmetic(self):
        transform = op_geometry("horizontal_mirror", 640, 640)
        got = apply_transform(transform, BoundingBox(10, 20, 30, 40))
        assert got == BoundingBox(610, 20, 630, 40)

    def test_identity_brightness_contrast_pixel_identical(self):
        pixels = checkerboard(64, 64, block=8)
        op = AugmentationOp("brightness_contrast", brightness_delta=0.0, contrast_factor=1.0)
        out, anns, _ = augment_tile(pixels, [], op, 64, 64)
        assert np.array_equal(out, pixels)

    def test_brightness_shift_clamps(self):
        pixels = np.full((8, 8), 250, dtype=np.uint8)
        op = AugmentationOp("brightness_contrast", brightness_delta=0.2, contrast_factor=1.0)
        out, _, _ = augment_tile(pixels, [], op, 8, 8)
        assert (out == 255).all()

    def test_rotation_group_closure(self):
        pixels = checkerboard(64, 64, block=8)
        anns = [make_annotation("t", "Other", 5, 10, 20, 30)]
        op = AugmentationOp("rotate_90")
        cur_px, cur_anns = pixels, anns
        for _ in range(4):
            cur_px, cur_anns, _ = augment_tile(cur_px, cur_anns, op, 64, 64)
        assert np.array_equal(cur_px, pixels)
        assert cur_anns[0].box == anns[0].box

    def test_mirrors_are_involutions(self):
        pixels = checkerboard(64, 64, block=8)
        anns = [make_annotation("t", "Other", 5, 10, 20, 30)]
        for kind in ("horizontal_mirror", "vertical_mirror"):
            op = AugmentationOp(kind)
            once_px, once_anns, _ = augment_tile(pixels, anns, op, 64, 64)
            twice_px, twice_anns, _ = augment_tile(once_px, once_anns, op, 64, 64)
            assert np.array_equal(twice_px, pixels)
            assert twice_anns[0].box == anns[0].box

    def test_rotation_moves_pixels_with_boxes(self):
        # the marked patch must stay inside the transformed box
        pixels = np.zeros((64, 64), dtype=np.uint8)
        pixels[10:30, 5:20] = 255
        anns = [make_annotation("t", "Other", 5, 10, 20, 30)]
        op = AugmentationOp("rotate_90")
        out_px, out_anns, _ = augment_tile(pixels, anns, op, 64, 64)
        box = out_anns[0].box
        rows, cols = np.nonzero(out_px == 255)
        assert (cols >= box.x_min).all() and (cols < box.x_max).all()
        assert (rows >= box.y_min).all() and (rows < box.y_max).all()

    def test_rotate_non_square_rejected(self):
        pixels = np.zeros((32, 64), dtype=np.uint8)
        with pytest.raises(NonSquareRotation):
            augment_tile(pixels, [], AugmentationOp("rotate_90"), 64, 32)

    def test_annotation_count_and_labels_preserved(self, taxonomy):
        pixels = checkerboard(64, 64, block=8)
        anns = [
            make_annotation("t", "Mixed Egret", 5, 10, 20, 30),
            make_annotation("t", "Other", 30, 30, 50, 60),
        ]
        for op in default_ops():
            rng = np.random.default_rng(1)
            _, out_anns, _ = augment_tile(pixels, anns, op, 64, 64, rng=rng)
            assert class_histogram(out_anns) == class_histogram(anns)


class TestBuildAugmentedSet:
    def _tiles_and_loader(self, taxonomy, n_minority=1, n_majority=1):
        records = []
        images = {}
        for i in range(n_minority):
            record = make_record(f"min{i}", ["Brown Pelican Adult"] * 3, size=64)
            records.append(record)
            images[record.tile_id] = checkerboard(64, 64, block=8)
        for i in range(n_majority):
            record = make_record(f"maj{i}", ["Laughing Gull Adult"] * 3, size=64)
            records.append(record)
            images[record.tile_id] = checkerboard(64, 64, block=4)
        return records, images.__getitem__

    def test_no_qualifying_tiles_passthrough(self, taxonomy):
        records, loader = self._tiles_and_loader(taxonomy, n_minority=0, n_majority=3)
        policy = OversamplePolicy.with_default_ops(seed=5)
        out = build_augmented_set(records, taxonomy, policy, loader)
        assert out == records

    def test_one_qualifier_four_ops_adds_four(self, taxonomy):
        records, loader = self._tiles_and_loader(taxonomy)
        policy = OversamplePolicy.with_default_ops(seed=5)
        out = build_augmented_set(records, taxonomy, policy, loader)
        assert len(out) == len(records) + 4
        new = [r for r in out if r.provenance is not None]
        assert {r.tile_id for r in new} == {
            "min0~horizontal_mirror",
            "min0~vertical_mirror",
            "min0~rotate_90",
            "min0~brightness_contrast",
        }
        for record in new:
            assert record.provenance.source_tile == "min0"

    def test_deterministic_and_order_independent(self, taxonomy):
        records, loader = self._tiles_and_loader(taxonomy, n_minority=3)
        policy = OversamplePolicy.with_default_ops(seed=11)
        out_a = build_augmented_set(records, taxonomy, policy, loader)
        out_b = build_augmented_set(list(reversed(records)), taxonomy, policy, loader)
        key = lambda r: r.tile_id
        assert sorted(out_a, key=key) == sorted(out_b, key=key)

    def test_histograms_preserved_per_copy(self, taxonomy):
        records, loader = self._tiles_and_loader(taxonomy)
        policy = OversamplePolicy.with_default_ops(seed=5)
        out = build_augmented_set(records, taxonomy, policy, loader)
        source = next(r for r in out if r.tile_id == "min0")
        for record in out:
            if record.provenance is not None:
                assert class_histogram(record.annotations) == class_histogram(
                    source.annotations
                )

    def test_augmented_to_source_back_projects_exactly(self, taxonomy):
        # a detection on the mirrored tile maps back onto the source bird
        records, loader = self._tiles_and_loader(taxonomy)
        policy = OversamplePolicy.with_default_ops(seed=5)
        out = build_augmented_set(records, taxonomy, policy, loader)
        source = next(r for r in out if r.tile_id == "min0")
        for record in out:
            if record.provenance is None:
                continue
            for aug_ann, src_ann in zip(record.annotations, source.annotations):
                back = apply_transform(record.to_source, aug_ann.box)
                src = apply_transform(source.to_source, src_ann.box)
                assert all(
                    abs(a - b) < 1e-9 for a, b in zip(back.as_tuple(), src.as_tuple())
                )

    def test_saved_tiles_match_ops(self, taxonomy, tmp_path):
        records, loader = self._tiles_and_loader(taxonomy)
        policy = OversamplePolicy.with_default_ops(seed=5)
        saved = {}
        build_augmented_set(
            records, taxonomy, policy, loader, save_tile=saved.__setitem__
        )
        assert set(saved) == {
            "min0~horizontal_mirror",
            "min0~vertical_mirror",
            "min0~rotate_90",
            "min0~brightness_contrast",
        }
        source = loader("min0")
        assert np.array_equal(saved["min0~horizontal_mirror"], np.flip(source, axis=1))
        assert np.array_equal(saved["min0~rotate_90"], np.rot90(source))
