"""Detector evaluation: interpolated AP, PR curves, and confusion matrices.

Matching follows the one-to-one greedy protocol: detections are visited in
descending score order and each takes the not-yet-matched ground-truth box
with the highest IoU at or above the threshold (same class required for AP,
any class for the confusion matrix, which scores classification of birds
the detector already localized). AP integrates the running-maximum
interpolated precision over the 101-point recall grid 0.00, 0.01, ..., 1.00
with constant step 0.01.

Score ties are broken by provenance id then coordinates so evaluation is
deterministic; equal-IoU candidates resolve to the earliest ground-truth
row.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Annotation
from .errors import PipelineError
from .merge import Detection, _single_frame, _sort_key
from .geometry import iou

RECALL_GRID = tuple(k / 100 for k in range(101))
GRID_STEP = 0.01


class NoGroundTruth(PipelineError):
    """PR curve requested for a class with zero ground-truth instances."""

    def __init__(self, class_name: str):
        super().__init__(f"no ground truth for class {class_name!r}")
        self.class_name = class_name


@dataclass(frozen=True)
class MatchResult:
    """Outcome of greedy detection-to-ground-truth matching."""

    matches: tuple[tuple[Detection, Annotation], ...]
    false_positives: tuple[Detection, ...]
    false_negatives: tuple[Annotation, ...]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.false_positives)

    @property
    def fn(self) -> int:
        return len(self.false_negatives)


def match_detections(
    detections: Sequence[Detection],
    ground_truth: Sequence[Annotation],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> MatchResult:
    """Greedy one-to-one matching within each raster.

    A detection can only match ground truth whose image_id equals its
    provenance, so boxes from different tiles or images never pair up.
    """
    _single_frame(detections)
    ordered = sorted(detections, key=_sort_key)
    matched_gt: set[int] = set()
    matches: list[tuple[Detection, Annotation]] = []
    false_positives: list[Detection] = []

    gt_by_scope: dict[str, list[int]] = {}
    for idx, gt in enumerate(ground_truth):
        gt_by_scope.setdefault(gt.image_id, []).append(idx)

    for det in ordered:
        best_idx = -1
        best_iou = 0.0
        for idx in gt_by_scope.get(det.provenance, ()):
            if idx in matched_gt:
                continue
            gt = ground_truth[idx]
            if class_aware and gt.class_name != det.class_name:
                continue
            overlap = iou(det.box, gt.box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_idx = idx
                best_iou = overlap
        if best_idx >= 0:
            matched_gt.add(best_idx)
            matches.append((det, ground_truth[best_idx]))
        else:
            false_positives.append(det)

    false_negatives = tuple(
        gt for idx, gt in enumerate(ground_truth) if idx not in matched_gt
    )
    return MatchResult(
        matches=tuple(matches),
        false_positives=tuple(false_positives),
        false_negatives=false_negatives,
    )


@dataclass(frozen=True)
class PRCurve:
    """Score-ranked precision/recall points for one class at one IoU
    threshold. Recall is non-decreasing along the list."""

    class_name: str
    iou_threshold: float
    points: tuple[tuple[float, float], ...]  # (recall, precision) per rank

    def __post_init__(self) -> None:
        last = -1.0
        for recall, precision in self.points:
            if not (0.0 <= recall <= 1.0 and 0.0 <= precision <= 1.0):
                raise ValueError(f"PR point outside [0,1]: {(recall, precision)}")
            if recall < last:
                raise ValueError("recall must be non-decreasing")
            last = recall


def pr_curve(
    detections: Sequence[Detection],
    ground_truth: Sequence[Annotation],
    class_name: str,
    iou_threshold: float = 0.5,
) -> PRCurve:
    """Sweep the score-ranked detections of one class, accumulating TP/FP.

    Raises NoGroundTruth when the class has no ground-truth instances
    (such classes are excluded from mAP and reported separately).
    """
    class_gt = [g for g in ground_truth if g.class_name == class_name]
    if not class_gt:
        raise NoGroundTruth(class_name)
    class_dets = [d for d in detections if d.class_name == class_name]
    _single_frame(class_dets)
    ordered = sorted(class_dets, key=_sort_key)

    gt_by_scope: dict[str, list[int]] = {}
    for idx, gt in enumerate(class_gt):
        gt_by_scope.setdefault(gt.image_id, []).append(idx)

    matched: set[int] = set()
    points: list[tuple[float, float]] = []
    tp = 0
    fp = 0
    total_gt = len(class_gt)
    for det in ordered:
        best_idx = -1
        best_iou = 0.0
        for idx in gt_by_scope.get(det.provenance, ()):
            if idx in matched:
                continue
            overlap = iou(det.box, class_gt[idx].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_idx = idx
                best_iou = overlap
        if best_idx >= 0:
            matched.add(best_idx)
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))

    return PRCurve(
        class_name=class_name, iou_threshold=iou_threshold, points=tuple(points)
    )


def interpolated_precision(curve_points: Sequence[tuple[float, float]], recall: float) -> float:
    """Max precision over curve points with recall >= the cutoff, else 0."""
    best = 0.0
    for r, p in curve_points:
        if r >= recall and p > best:
            best = p
    return best


def interpolated_ap(curve: PRCurve) -> float:
    """Area under the interpolated PR curve on the 101-point recall grid.

    The interpolated precision at each grid recall is the maximum raw
    precision at any recall at or beyond it; grid cells have constant
    width 0.01 and the right endpoint's precision weights each cell.
    """
    points = sorted(curve.points)
    recalls = [r for r, _ in points]
    # suffix running max of precision; same values as a direct scan
    suffix_max: list[float] = [0.0] * (len(points) + 1)
    for i in range(len(points) - 1, -1, -1):
        p = points[i][1]
        suffix_max[i] = p if p > suffix_max[i + 1] else suffix_max[i + 1]

    interp: list[float] = []
    for r in RECALL_GRID[1:]:
        pos = bisect.bisect_left(recalls, r)
        interp.append(suffix_max[pos])
    assert all(a >= b for a, b in zip(interp, interp[1:])), "p_interp must be non-increasing"
    return GRID_STEP * sum(interp)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are ground-truth classes; columns are predicted classes plus a
    final missed-detection column. Each row sums to that class's
    ground-truth total."""

    classes: tuple[str, ...]
    matrix: np.ndarray  # shape (n, n + 1), ints; last column = missed

    def cell(self, gt_class: str, pred_class: str) -> int:
        return int(
            self.matrix[self.classes.index(gt_class), self.classes.index(pred_class)]
        )

    def missed(self, gt_class: str) -> int:
        return int(self.matrix[self.classes.index(gt_class), -1])

    def row_sum(self, gt_class: str) -> int:
        return int(self.matrix[self.classes.index(gt_class)].sum())

    def is_diagonal(self) -> bool:
        off = self.matrix.copy()
        np.fill_diagonal(off[:, : len(self.classes)], 0)
        return int(off.sum()) == 0

    def to_csv(self) -> str:
        header = "gt_class," + ",".join(self.classes) + ",missed"
        lines = [header]
        for i, name in enumerate(self.classes):
            row = ",".join(str(int(v)) for v in self.matrix[i])
            lines.append(f"{name},{row}")
        return "\n".join(lines) + "\n"


def confusion_matrix(
    detections: Sequence[Detection],
    ground_truth: Sequence[Annotation],
    score_floor: float = 0.5,
    iou_threshold: float = 0.5,
    classes: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Class-agnostic localization first, classification tally second.

    Only detections scoring strictly above the floor participate. Each
    matched (ground truth, detection) pair increments the (gt class,
    predicted class) cell; ground truth left unmatched lands in the missed
    column, so row sums equal per-class ground-truth totals. Unmatched
    detections (pure localization false positives) do not appear.
    """
    confident = [d for d in detections if d.score > score_floor]
    result = match_detections(
        confident, ground_truth, iou_threshold=iou_threshold, class_aware=False
    )

    if classes is None:
        names = sorted(
            {g.class_name for g in ground_truth}
            | {d.class_name for d in confident}
        )
    else:
        names = list(classes)
        extra = sorted(
            ({g.class_name for g in ground_truth} | {d.class_name for d in confident})
            - set(names)
        )
        names.extend(extra)
    index = {name: i for i, name in enumerate(names)}

    n = len(names)
    matrix = np.zeros((n, n + 1), dtype=np.int64)
    for det, gt in result.matches:
        matrix[index[gt.class_name], index[det.class_name]] += 1
    for gt in result.false_negatives:
        matrix[index[gt.class_name], n] += 1
    return ConfusionMatrix(classes=tuple(names), matrix=matrix)


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalReport:
    """Full evaluation bundle: AP per class per IoU threshold, mAP,
    PR curves, confusion matrix, and TP/FP/FN tallies."""

    thresholds: tuple[float, ...]
    ap: dict[float, dict[str, float]]  # threshold -> class -> AP
    mean_ap: dict[float, float]
    curves: dict[tuple[float, str], PRCurve]
    confusion: ConfusionMatrix
    counts: dict[tuple[float, str], ClassCounts]
    classes_without_gt: tuple[str, ...]

    def ap_table_csv(self) -> str:
        lines = ["class," + ",".join(f"ap@{t:g}" for t in self.thresholds)]
        classes = sorted(self.ap[self.thresholds[0]]) if self.thresholds else []
        for name in classes:
            row = ",".join(repr(self.ap[t][name]) for t in self.thresholds)
            lines.append(f"{name},{row}")
        lines.append(
            "mAP," + ",".join(repr(self.mean_ap[t]) for t in self.thresholds)
        )
        return "\n".join(lines) + "\n"

    def pr_curves_csv(self) -> str:
        lines = ["class,iou_threshold,rank,recall,precision"]
        for (threshold, name) in sorted(self.curves, key=lambda k: (k[0], k[1])):
            curve = self.curves[(threshold, name)]
            for rank, (recall, precision) in enumerate(curve.points, start=1):
                lines.append(
                    f"{name},{threshold:g},{rank},{repr(recall)},{repr(precision)}"
                )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "thresholds": list(self.thresholds),
            "ap": {
                f"{t:g}": {k: self.ap[t][k] for k in sorted(self.ap[t])}
                for t in self.thresholds
            },
            "mAP": {f"{t:g}": self.mean_ap[t] for t in self.thresholds},
            "counts": {
                f"{t:g}": {
                    name: {"tp": c.tp, "fp": c.fp, "fn": c.fn}
                    for (tt, name), c in sorted(self.counts.items())
                    if tt == t
                }
                for t in self.thresholds
            },
            "classes_without_ground_truth": list(self.classes_without_gt),
            "confusion": {
                "classes": list(self.confusion.classes),
                "rows": self.confusion.matrix.tolist(),
            },
        }
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = []
        for t in self.thresholds:
            lines.append(f"IoU threshold {t:g}: mAP {self.mean_ap[t]:.4f}")
            for name in sorted(self.ap[t]):
                c = self.counts[(t, name)]
                lines.append(
                    f"  {name}: AP {self.ap[t][name]:.4f}"
                    f" (tp {c.tp}, fp {c.fp}, fn {c.fn})"
                )
        if self.classes_without_gt:
            lines.append(
                "classes without ground truth (excluded from mAP): "
                + ", ".join(self.classes_without_gt)
            )
        return "\n".join(lines) + "\n"


def evaluate(
    detections: Sequence[Detection],
    ground_truth: Sequence[Annotation],
    thresholds: Sequence[float] = (0.5, 0.75),
    classes: Sequence[str] | None = None,
    confusion_score_floor: float = 0.5,
    confusion_iou: float = 0.5,
) -> EvalReport:
    """Evaluate detections against ground truth at each IoU threshold.

    mAP at a threshold is the unweighted mean of per-class AP over the
    classes that have at least one ground-truth instance; classes without
    ground truth are listed but excluded.
    """
    gt_classes = {g.class_name for g in ground_truth}
    candidate_classes = (
        list(classes)
        if classes is not None
        else sorted(gt_classes | {d.class_name for d in detections})
    )
    eligible = [c for c in candidate_classes if c in gt_classes]
    without_gt = tuple(c for c in candidate_classes if c not in gt_classes)

    ap: dict[float, dict[str, float]] = {}
    mean_ap: dict[float, float] = {}
    curves: dict[tuple[float, str], PRCurve] = {}
    counts: dict[tuple[float, str], ClassCounts] = {}
    for threshold in thresholds:
        per_class: dict[str, float] = {}
        for name in eligible:
            curve = pr_curve(detections, ground_truth, name, threshold)
            curves[(threshold, name)] = curve
            per_class[name] = interpolated_ap(curve)
            tally = match_detections(
                [d for d in detections if d.class_name == name],
                [g for g in ground_truth if g.class_name == name],
                iou_threshold=threshold,
            )
            counts[(threshold, name)] = ClassCounts(
                tp=tally.tp, fp=tally.fp, fn=tally.fn
            )
        ap[threshold] = per_class
        mean_ap[threshold] = (
            sum(per_class.values()) / len(per_class) if per_class else 0.0
        )

    confusion = confusion_matrix(
        detections,
        ground_truth,
        score_floor=confusion_score_floor,
        iou_threshold=confusion_iou,
        classes=candidate_classes,
    )
    return EvalReport(
        thresholds=tuple(thresholds),
        ap=ap,
        mean_ap=mean_ap,
        curves=curves,
        confusion=confusion,
        counts=counts,
        classes_without_gt=without_gt,
    )
