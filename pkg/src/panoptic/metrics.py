"""Evaluation suite: panoptic quality, mean IoU and mask average precision.

Per-image statistics live in small accumulator objects whose ``merge`` is
associative and commutative, so multi-image evaluation gives the same result
for any reduction order or worker count.

Matching rules follow the standard protocols: PQ matches segments of equal
class with IoU strictly above 0.5 (the IoU union excludes a prediction's
overlap with ground-truth void, and predictions mostly covered by void are
ignored); AP uses greedy score-ordered matching per IoU threshold with an
all-point interpolated precision-recall curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from panoptic.core import (
    DatasetSpec,
    PanopticError,
    require_raster2d,
    require_same_shape,
)

AP_THRESHOLDS = tuple(np.arange(50, 100, 5) / 100.0)

# Pixel pair keys combine two uint32 maps into one int64; 2**32 keeps the
# components exactly recoverable.
_PAIR_OFFSET = np.int64(2 ** 32)


@dataclass(frozen=True)
class PqClassStats:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass(frozen=True)
class PqReport:
    """Per-class and aggregate panoptic quality.

    Aggregates are unweighted means over classes with tp + fp + fn > 0;
    ``pq_things``/``pq_stuff`` restrict that mean to thing/stuff classes.
    """

    per_class: dict[int, PqClassStats]
    pq_all: float
    pq_things: float
    pq_stuff: float


@dataclass(frozen=True)
class IouReport:
    confusion: np.ndarray
    per_class_iou: dict[int, float]
    miou: float


@dataclass(frozen=True)
class ApReport:
    per_threshold: dict[float, float]
    mean_ap: float


@dataclass
class PqAccumulator:
    """Mergeable per-class TP/FP/FN and matched-IoU sums."""

    num_classes: int
    iou_sum: np.ndarray = field(init=False)
    tp: np.ndarray = field(init=False)
    fp: np.ndarray = field(init=False)
    fn: np.ndarray = field(init=False)

    def __post_init__(self):
        self.iou_sum = np.zeros(self.num_classes, dtype=np.float64)
        self.tp = np.zeros(self.num_classes, dtype=np.int64)
        self.fp = np.zeros(self.num_classes, dtype=np.int64)
        self.fn = np.zeros(self.num_classes, dtype=np.int64)

    def add_image(self, pred: np.ndarray, gt: np.ndarray, spec: DatasetSpec) -> None:
        _accumulate_pq(self, pred, gt, spec)

    def merge(self, other: "PqAccumulator") -> "PqAccumulator":
        if other.num_classes != self.num_classes:
            raise PanopticError("cannot merge accumulators of different class counts")
        self.iou_sum += other.iou_sum
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def report(self, spec: DatasetSpec) -> PqReport:
        per_class = {}
        pq_values = {}
        for class_id in range(self.num_classes):
            tp = int(self.tp[class_id])
            fp = int(self.fp[class_id])
            fn = int(self.fn[class_id])
            if tp + fp + fn == 0:
                continue
            iou_sum = float(self.iou_sum[class_id])
            sq = iou_sum / tp if tp else 0.0
            denom = tp + 0.5 * fp + 0.5 * fn
            rq = tp / denom if denom else 0.0
            pq = sq * rq
            per_class[class_id] = PqClassStats(
                pq=pq, sq=sq, rq=rq, tp=tp, fp=fp, fn=fn, iou_sum=iou_sum
            )
            pq_values[class_id] = pq

        def mean_over(class_ids) -> float:
            vals = [pq_values[c] for c in class_ids if c in pq_values]
            return float(np.mean(vals)) if vals else 0.0

        return PqReport(
            per_class=per_class,
            pq_all=mean_over(range(self.num_classes)),
            pq_things=mean_over(sorted(spec.thing_classes)),
            pq_stuff=mean_over(sorted(spec.stuff_classes)),
        )


def _segment_areas(ids: np.ndarray) -> dict[int, int]:
    values, counts = np.unique(ids, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def _accumulate_pq(acc: PqAccumulator, pred: np.ndarray, gt: np.ndarray, spec: DatasetSpec) -> None:
    require_raster2d(pred, "pred")
    require_same_shape(pred, gt, "pred and gt panoptic maps")
    divisor = spec.label_divisor

    gt_areas = _segment_areas(gt)
    pred_areas = _segment_areas(pred)
    pair_keys = gt.astype(np.int64) * _PAIR_OFFSET + pred.astype(np.int64)
    pairs, pair_counts = np.unique(pair_keys, return_counts=True)

    intersections: dict[tuple[int, int], int] = {}
    void_overlap: dict[int, int] = {}
    for key, count in zip(pairs, pair_counts):
        gt_id = int(key // _PAIR_OFFSET)
        pred_id = int(key % _PAIR_OFFSET)
        intersections[(gt_id, pred_id)] = int(count)
        if gt_id // divisor == spec.void_label:
            void_overlap[pred_id] = void_overlap.get(pred_id, 0) + int(count)

    gt_matched = set()
    pred_matched = set()
    for (gt_id, pred_id), inter in sorted(intersections.items()):
        gt_class = gt_id // divisor
        pred_class = pred_id // divisor
        if gt_class != pred_class or gt_class == spec.void_label:
            continue
        union = (
            gt_areas[gt_id]
            + pred_areas[pred_id]
            - inter
            - void_overlap.get(pred_id, 0)
        )
        iou = inter / union
        if iou > 0.5:
            acc.tp[gt_class] += 1
            acc.iou_sum[gt_class] += iou
            gt_matched.add(gt_id)
            pred_matched.add(pred_id)

    for gt_id in gt_areas:
        gt_class = gt_id // divisor
        if gt_class == spec.void_label or gt_id in gt_matched:
            continue
        acc.fn[gt_class] += 1

    for pred_id, area in pred_areas.items():
        pred_class = pred_id // divisor
        if pred_class == spec.void_label or pred_id in pred_matched:
            continue
        # Predictions mostly covering ground-truth void are not penalized.
        if void_overlap.get(pred_id, 0) / area > 0.5:
            continue
        acc.fp[pred_class] += 1


def compute_pq(pred: np.ndarray, gt: np.ndarray, spec: DatasetSpec) -> PqReport:
    """Panoptic quality of one predicted map against ground truth."""
    acc = PqAccumulator(spec.num_classes)
    acc.add_image(pred, gt, spec)
    return acc.report(spec)


@dataclass
class ConfusionAccumulator:
    """C x C confusion counts over non-void ground-truth pixels."""

    num_classes: int
    confusion: np.ndarray = field(init=False)

    def __post_init__(self):
        self.confusion = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)

    def add_image(self, pred: np.ndarray, gt: np.ndarray, spec: DatasetSpec) -> None:
        require_raster2d(pred, "pred")
        require_same_shape(pred, gt, "pred and gt semantic rasters")
        valid = gt != spec.void_label
        gt_v = np.asarray(gt)[valid].astype(np.int64)
        pred_v = np.asarray(pred)[valid].astype(np.int64)
        if gt_v.size and (gt_v.min() < 0 or gt_v.max() >= self.num_classes):
            raise PanopticError("gt semantic labels outside [0, C)")
        if pred_v.size and (pred_v.min() < 0 or pred_v.max() >= self.num_classes):
            raise PanopticError("pred semantic labels outside [0, C)")
        flat = gt_v * self.num_classes + pred_v
        counts = np.bincount(flat, minlength=self.num_classes ** 2)
        self.confusion += counts.reshape(self.num_classes, self.num_classes)

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        if other.num_classes != self.num_classes:
            raise PanopticError("cannot merge accumulators of different class counts")
        self.confusion += other.confusion
        return self

    def report(self) -> IouReport:
        tp = np.diag(self.confusion).astype(np.float64)
        fp = self.confusion.sum(axis=0).astype(np.float64) - tp
        fn = self.confusion.sum(axis=1).astype(np.float64) - tp
        denom = tp + fp + fn
        per_class = {
            c: float(tp[c] / denom[c]) for c in range(self.num_classes) if denom[c] > 0
        }
        miou = float(np.mean(list(per_class.values()))) if per_class else 0.0
        return IouReport(confusion=self.confusion.copy(), per_class_iou=per_class, miou=miou)


def compute_miou(pred: np.ndarray, gt: np.ndarray, spec: DatasetSpec) -> IouReport:
    """Mean IoU of a semantic prediction against ground truth.

    The confusion matrix counts only pixels whose ground truth is not void;
    the mean runs over classes with nonzero union.
    """
    acc = ConfusionAccumulator(spec.num_classes)
    acc.add_image(pred, gt, spec)
    return acc.report()


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two boolean masks (0 when both are empty)."""
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter / union if union else 0.0


@dataclass
class ApAccumulator:
    """Pools scored detections and ground-truth counts across images.

    Matching happens per image at ``add_image``; the precision-recall curve
    and its area are computed once over the pooled detections.  Every list is
    keyed deterministically, so merge order cannot change the result.
    """

    thresholds: tuple[float, ...] = AP_THRESHOLDS
    # per class: list of (score, image_index, pred_index, matched-per-threshold)
    detections: dict[int, list] = field(default_factory=dict)
    gt_counts: dict[int, int] = field(default_factory=dict)
    _next_image: int = 0

    def add_image(self, predictions, gt_instances) -> None:
        """Records one image.

        Args:
            predictions: iterable of (class_id, bool mask, score).
            gt_instances: iterable of (class_id, bool mask).
        """
        image_index = self._next_image
        self._next_image += 1
        preds = [(int(c), np.asarray(m, dtype=bool), float(s)) for c, m, s in predictions]
        gts = [(int(c), np.asarray(m, dtype=bool)) for c, m in gt_instances]
        for class_id, _ in gts:
            self.gt_counts[class_id] = self.gt_counts.get(class_id, 0) + 1

        by_class: dict[int, list[int]] = {}
        for i, (class_id, _, _) in enumerate(preds):
            by_class.setdefault(class_id, []).append(i)

        for class_id, pred_idx in by_class.items():
            gt_idx = [i for i, (c, _) in enumerate(gts) if c == class_id]
            # Greedy matching in descending score order, stable on input order.
            order = sorted(pred_idx, key=lambda i: (-preds[i][2], i))
            iou_table = {
                (i, j): mask_iou(preds[i][1], gts[j][1]) for i in order for j in gt_idx
            }
            matched_flags = []
            for threshold in self.thresholds:
                taken = set()
                flags = {}
                for i in order:
                    best_j = -1
                    best_iou = 0.0
                    for j in gt_idx:
                        if j in taken:
                            continue
                        iou = iou_table[(i, j)]
                        if iou >= threshold and iou > best_iou:
                            best_iou = iou
                            best_j = j
                    if best_j >= 0:
                        taken.add(best_j)
                        flags[i] = True
                    else:
                        flags[i] = False
                matched_flags.append(flags)
            rows = self.detections.setdefault(class_id, [])
            for i in order:
                rows.append(
                    (
                        preds[i][2],
                        image_index,
                        i,
                        tuple(matched_flags[t][i] for t in range(len(self.thresholds))),
                    )
                )

    def merge(self, other: "ApAccumulator") -> "ApAccumulator":
        if other.thresholds != self.thresholds:
            raise PanopticError("cannot merge AP accumulators with different thresholds")
        shift = self._next_image
        for class_id, rows in other.detections.items():
            ours = self.detections.setdefault(class_id, [])
            ours.extend((s, img + shift, i, f) for s, img, i, f in rows)
        for class_id, count in other.gt_counts.items():
            self.gt_counts[class_id] = self.gt_counts.get(class_id, 0) + count
        self._next_image += other._next_image
        return self

    def report(self) -> ApReport:
        per_threshold = {}
        classes = sorted(c for c, n in self.gt_counts.items() if n > 0)
        for t, threshold in enumerate(self.thresholds):
            if not classes:
                per_threshold[float(threshold)] = 0.0
                continue
            ap_values = []
            for class_id in classes:
                rows = sorted(
                    self.detections.get(class_id, []),
                    key=lambda row: (-row[0], row[1], row[2]),
                )
                flags = np.array([row[3][t] for row in rows], dtype=bool)
                ap_values.append(
                    average_precision(flags, self.gt_counts[class_id])
                )
            per_threshold[float(threshold)] = float(np.mean(ap_values))
        mean_ap = float(np.mean(list(per_threshold.values()))) if per_threshold else 0.0
        return ApReport(per_threshold=per_threshold, mean_ap=mean_ap)


def average_precision(matched: np.ndarray, num_gt: int) -> float:
    """Area under the all-point interpolated precision-recall curve.

    Args:
        matched: per-detection TP flags, already sorted by descending score.
        num_gt: number of ground-truth instances of this class.

    Returns:
        AP in [0, 1]; 0 when there are no detections or no ground truth.
    """
    if num_gt == 0 or matched.size == 0:
        return 0.0
    tp_cum = np.cumsum(matched)
    fp_cum = np.cumsum(~matched)
    recall = tp_cum / num_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # Monotone non-increasing precision envelope.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * envelope))


def compute_mask_ap(pred_instances, gt_instances, thresholds=AP_THRESHOLDS) -> ApReport:
    """Single-image COCO-style mask AP.

    Args:
        pred_instances: list of (class_id, bool mask, score).
        gt_instances: list of (class_id, bool mask).
        thresholds: IoU thresholds to average over.

    Returns:
        ApReport with per-threshold APs (mean over classes that have at
        least one ground-truth instance) and their mean.
    """
    acc = ApAccumulator(thresholds=tuple(thresholds))
    acc.add_image(pred_instances, gt_instances)
    return acc.report()


def instance_masks_from_panoptic(
    panoptic: np.ndarray, spec: DatasetSpec, center_scores: dict[int, float] | None = None
) -> list[tuple[int, np.ndarray, float]]:
    """Extracts (class, mask, score) triples for every thing segment.

    ``center_scores`` optionally maps a segment's panoptic id to a detection
    score; segments without an entry default to score 1.0.
    """
    require_raster2d(panoptic, "panoptic")
    out = []
    for panoptic_id in np.unique(panoptic):
        class_id = int(panoptic_id) // spec.label_divisor
        if class_id == spec.void_label or class_id not in spec.thing_classes:
            continue
        mask = panoptic == panoptic_id
        score = 1.0
        if center_scores is not None:
            score = float(center_scores.get(int(panoptic_id), 1.0))
        out.append((class_id, mask, score))
    return out
