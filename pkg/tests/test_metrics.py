import dataclasses

import numpy as np
import pytest

from panoptic.core import DatasetSpec, cityscapes_like_spec, encode_panoptic_id
from panoptic.metrics import (
    AP_THRESHOLDS,
    ApAccumulator,
    PqAccumulator,
    average_precision,
    compute_mask_ap,
    compute_miou,
    compute_pq,
    instance_masks_from_panoptic,
    mask_iou,
)

from oracles import oracle_pq, random_panoptic

SPEC = cityscapes_like_spec()

# Small 3-class inventory for the exhaustive matching sweeps.
SPEC3 = DatasetSpec(
    num_classes=3,
    thing_classes=frozenset({1, 2}),
    stuff_classes=frozenset({0}),
    void_label=255,
    label_divisor=100,
)


class TestMiou:
    def test_identity(self):
        rng = np.random.default_rng(0)
        semantic = rng.integers(0, SPEC.num_classes, size=(16, 16)).astype(np.int32)
        report = compute_miou(semantic, semantic, SPEC)
        assert report.miou == 1.0

    def test_total_inversion(self):
        gt = np.zeros((4, 4), dtype=np.int32)
        gt[:2] = 1
        pred = 1 - gt
        spec = DatasetSpec(num_classes=2, thing_classes=frozenset(), stuff_classes={0, 1})
        report = compute_miou(pred, gt, spec)
        assert report.miou == 0.0
        assert report.per_class_iou == {0: 0.0, 1: 0.0}

    def test_half_right_class_set_oracle(self):
        # Class 1 occupies 8 gt pixels; prediction hits 4 of them and claims
        # 2 extra -> IoU = 4 / (8 + 6 - 4) = 0.4, verified by pixel counting.
        gt = np.zeros((4, 4), dtype=np.int32)
        gt[0:2, :] = 1
        pred = np.zeros((4, 4), dtype=np.int32)
        pred[0, :] = 1
        pred[2, 0:2] = 1
        inter = int(((gt == 1) & (pred == 1)).sum())
        union = int(((gt == 1) | (pred == 1)).sum())
        report = compute_miou(pred, gt, SPEC)
        assert report.per_class_iou[1] == pytest.approx(inter / union, rel=1e-12)

    def test_void_pixels_excluded(self):
        gt = np.zeros((2, 2), dtype=np.int32)
        gt[0, 0] = SPEC.void_label
        pred = np.zeros((2, 2), dtype=np.int32)
        pred[0, 0] = 5  # disagreement only under void
        report = compute_miou(pred, gt, SPEC)
        assert report.miou == 1.0
        assert report.confusion.sum() == 3

    def test_confusion_shape(self):
        report = compute_miou(
            np.zeros((2, 2), np.int32), np.zeros((2, 2), np.int32), SPEC
        )
        assert report.confusion.shape == (SPEC.num_classes, SPEC.num_classes)


class TestPq:
    def test_identity_up_to_instance_permutation(self):
        rng = np.random.default_rng(1)
        gt = random_panoptic(rng, SPEC3)
        pred = gt.copy()
        # Swap instance numbering within class 1.
        ones = [int(p) for p in np.unique(gt) if int(p) // 100 == 1]
        if len(ones) >= 2:
            a, b = ones[0], ones[1]
            pred[gt == a] = b
            pred[gt == b] = a
        report = compute_pq(pred, gt, SPEC3)
        assert report.pq_all == pytest.approx(1.0, abs=1e-15)
        for stats in report.per_class.values():
            assert stats.fp == 0 and stats.fn == 0
            assert stats.sq == pytest.approx(1.0, abs=1e-15)

    def test_iou_exactly_half_is_not_a_match(self):
        # gt segment cols 0..2, prediction cols 1..3: inter 2, union 4.
        gt = np.zeros((1, 8), dtype=np.uint32)
        pred = np.zeros((1, 8), dtype=np.uint32)
        thing = encode_panoptic_id(1, 1, SPEC3)
        gt[0, 0:3] = thing
        pred[0, 1:4] = thing
        report = compute_pq(pred, gt, SPEC3)
        stats = report.per_class[1]
        assert (stats.tp, stats.fp, stats.fn) == (0, 1, 1)
        assert stats.pq == 0.0

    def test_prediction_mostly_void_is_ignored(self):
        gt = np.full((4, 4), SPEC3.void_id, dtype=np.uint32)
        gt[3, :] = 0  # small stuff strip so the image is not all void
        pred = np.zeros((4, 4), dtype=np.uint32)
        pred[0:3, :] = encode_panoptic_id(1, 1, SPEC3)  # 12 px, all on void
        report = compute_pq(pred, gt, SPEC3)
        assert 1 not in report.per_class  # neither TP nor FP

    def test_swap_symmetry_on_void_free_maps(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = random_panoptic(rng, SPEC3, void_patch=False)
            b = random_panoptic(rng, SPEC3, void_patch=False)
            forward = compute_pq(a, b, SPEC3)
            backward = compute_pq(b, a, SPEC3)
            classes = set(forward.per_class) | set(backward.per_class)
            for class_id in classes:
                f = forward.per_class.get(class_id)
                r = backward.per_class.get(class_id)
                assert f is not None and r is not None
                assert f.tp == r.tp
                assert f.fp == r.fn
                assert f.fn == r.fp

    @pytest.mark.parametrize("seed", range(25))
    def test_random_segmentations_match_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(2000 + seed)
        gt = random_panoptic(rng, SPEC3)
        pred = random_panoptic(rng, SPEC3)
        report = compute_pq(pred, gt, SPEC3)
        oracle = oracle_pq(pred, gt, SPEC3)
        assert set(report.per_class) == set(oracle)
        for class_id, (pq, tp, fp, fn) in oracle.items():
            stats = report.per_class[class_id]
            assert (stats.tp, stats.fp, stats.fn) == (tp, fp, fn)
            assert stats.pq == pytest.approx(pq, abs=1e-12)

    def test_pq_equals_sq_times_rq(self):
        rng = np.random.default_rng(77)
        gt = random_panoptic(rng, SPEC3)
        pred = random_panoptic(rng, SPEC3)
        report = compute_pq(pred, gt, SPEC3)
        for stats in report.per_class.values():
            assert stats.pq == pytest.approx(stats.sq * stats.rq, abs=1e-12)

    def test_monotone_degradation_under_mask_shrinking(self):
        for seed in (3, 7, 11):
            rng = np.random.default_rng(seed)
            gt = np.zeros((16, 16), dtype=np.uint32)
            thing = encode_panoptic_id(1, 1, SPEC3)
            gt[4:12, 4:12] = thing
            pred = gt.copy()
            previous = compute_pq(pred, gt, SPEC3).pq_all
            rows = list(range(4, 12))
            rng.shuffle(rows)
            for row in rows[:6]:
                pred[row, 4:12] = 0  # shrink the TP mask, pixels fall to stuff
                current = compute_pq(pred, gt, SPEC3).pq_all
                assert current <= previous + 1e-12
                previous = current

    def test_aggregates_split_things_and_stuff(self):
        gt = np.zeros((8, 8), dtype=np.uint32)
        gt[0:4] = encode_panoptic_id(1, 1, SPEC3)
        pred = gt.copy()
        report = compute_pq(pred, gt, SPEC3)
        assert report.pq_things == 1.0
        assert report.pq_stuff == 1.0
        assert report.pq_all == 1.0

    def test_bounded_in_unit_interval(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            gt = random_panoptic(rng, SPEC3)
            pred = random_panoptic(rng, SPEC3)
            report = compute_pq(pred, gt, SPEC3)
            assert 0.0 <= report.pq_all <= 1.0


def box_mask(h, w, r0, r1, c0, c1):
    mask = np.zeros((h, w), dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


def riemann_ap(matched, num_gt, grid=200_001):
    """Brute-force PR-curve area: max precision at recall >= r, integrated on
    a dense recall grid."""
    if num_gt == 0 or len(matched) == 0:
        return 0.0
    tp = np.cumsum(matched)
    fp = np.cumsum(~np.asarray(matched))
    recalls = tp / num_gt
    precisions = tp / (tp + fp)
    rs = np.linspace(0.0, 1.0, grid)[1:]  # integrate over (0, 1]
    values = np.zeros_like(rs)
    for i, r in enumerate(rs):
        candidates = precisions[recalls >= r]
        values[i] = candidates.max() if candidates.size else 0.0
    return float(values.mean())


class TestMaskAp:
    def test_perfect_detector(self):
        h = w = 12
        gts = [(11, box_mask(h, w, 0, 3, 0, 3)), (12, box_mask(h, w, 6, 9, 6, 9))]
        preds = [(c, m, s) for (c, m), s in zip(gts, (0.3, 0.9))]
        report = compute_mask_ap(preds, gts)
        assert report.mean_ap == 1.0
        assert all(v == 1.0 for v in report.per_threshold.values())

    def test_no_predictions(self):
        gts = [(11, box_mask(8, 8, 0, 4, 0, 4))]
        report = compute_mask_ap([], gts)
        assert report.mean_ap == 0.0

    def test_hand_enumerated_three_prediction_case(self):
        h, w = 12, 16
        gt1 = box_mask(h, w, 0, 2, 0, 5)  # 10 px
        gt2 = box_mask(h, w, 4, 5, 0, 8)  # 8 px
        pred1 = gt1.copy()  # exact match, score .9
        pred2 = box_mask(h, w, 5, 6, 0, 8) | box_mask(h, w, 4, 5, 0, 6)
        pred2 &= ~box_mask(h, w, 5, 6, 0, 6)  # 6 px inside gt2 + 2 outside
        pred3 = box_mask(h, w, 9, 10, 0, 4)  # pure false positive, score .7
        assert mask_iou(pred2, gt2) == pytest.approx(0.6)
        preds = [(11, pred1, 0.9), (11, pred2, 0.8), (11, pred3, 0.7)]
        gts = [(11, gt1), (11, gt2)]
        report = compute_mask_ap(preds, gts)
        # At threshold .5: TP, TP, FP -> PR points (1, .5), (1, 1), (2/3, 1).
        assert report.per_threshold[0.5] == pytest.approx(1.0, abs=1e-12)
        # Above .6 the second prediction unmatches: TP, FP, FP.
        assert report.per_threshold[0.65] == pytest.approx(0.5, abs=1e-12)
        expected_mean = (3 * 1.0 + 7 * 0.5) / 10
        assert report.mean_ap == pytest.approx(expected_mean, abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_ap_matches_riemann_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 12))
        num_gt = int(rng.integers(1, 8))
        # A real matching never produces more TPs than ground-truth instances.
        flags = []
        tp_budget = num_gt
        for _ in range(n):
            hit = bool(rng.random() < 0.5) and tp_budget > 0
            tp_budget -= int(hit)
            flags.append(hit)
        matched = np.array(flags, dtype=bool)
        exact = average_precision(matched, num_gt)
        approx = riemann_ap(matched, num_gt)
        assert exact == pytest.approx(approx, abs=1e-3)

    def test_class_without_gt_excluded(self):
        gts = [(11, box_mask(8, 8, 0, 4, 0, 4))]
        preds = [
            (11, box_mask(8, 8, 0, 4, 0, 4), 0.9),
            (12, box_mask(8, 8, 4, 8, 4, 8), 0.8),  # no gt of class 12
        ]
        report = compute_mask_ap(preds, gts)
        assert report.mean_ap == 1.0

    def test_accumulator_merge_matches_single_pass(self):
        rng = np.random.default_rng(9)
        images = []
        for _ in range(4):
            gts = [(11, box_mask(16, 16, 0, 8, 0, 8)), (12, box_mask(16, 16, 8, 16, 8, 16))]
            preds = [
                (11, box_mask(16, 16, 0, 8, 0, int(rng.integers(5, 9))), float(rng.random())),
                (12, box_mask(16, 16, 8, 16, 8, 16), float(rng.random())),
            ]
            images.append((preds, gts))
        single = ApAccumulator()
        for preds, gts in images:
            single.add_image(preds, gts)
        left = ApAccumulator()
        right = ApAccumulator()
        for preds, gts in images[:2]:
            left.add_image(preds, gts)
        for preds, gts in images[2:]:
            right.add_image(preds, gts)
        merged = left.merge(right)
        assert merged.report().per_threshold == single.report().per_threshold


class TestInstanceMasks:
    def test_two_segments(self):
        pan = np.zeros((8, 8), dtype=np.uint32)
        pan[0:4] = encode_panoptic_id(11, 1, SPEC)
        pan[4:8, 0:4] = encode_panoptic_id(12, 1, SPEC)
        masks = instance_masks_from_panoptic(pan, SPEC)
        assert len(masks) == 2
        assert not (masks[0][1] & masks[1][1]).any()

    def test_stuff_only_map(self):
        pan = np.zeros((8, 8), dtype=np.uint32)
        assert instance_masks_from_panoptic(pan, SPEC) == []

    def test_masks_partition_thing_pixels(self):
        rng = np.random.default_rng(4)
        pan = random_panoptic(rng, SPEC3)
        masks = instance_masks_from_panoptic(pan, SPEC3)
        classes = pan // SPEC3.label_divisor
        thing_pixels = int(np.isin(classes, sorted(SPEC3.thing_classes)).sum())
        assert sum(int(m.sum()) for _, m, _ in masks) == thing_pixels
        if masks:
            combined = np.zeros_like(masks[0][1])
            for _, m, _ in masks:
                assert not (combined & m).any()
                combined |= m
            assert int(combined.sum()) == thing_pixels

    def test_scores_from_mapping(self):
        pan = np.zeros((4, 4), dtype=np.uint32)
        pid = encode_panoptic_id(11, 1, SPEC)
        pan[0:2] = pid
        masks = instance_masks_from_panoptic(pan, SPEC, center_scores={pid: 0.75})
        assert masks[0][2] == 0.75
        masks_default = instance_masks_from_panoptic(pan, SPEC)
        assert masks_default[0][2] == 1.0


class TestRelabelInvariance:
    def test_pq_and_ap_invariant_under_instance_relabeling(self):
        rng = np.random.default_rng(6)
        gt = random_panoptic(rng, SPEC3, void_patch=False)
        pred = random_panoptic(rng, SPEC3, void_patch=False)
        base_pq = compute_pq(pred, gt, SPEC3)

        relabeled = pred.copy()
        for pid in np.unique(pred):
            class_id, instance = divmod(int(pid), SPEC3.label_divisor)
            if instance and class_id in SPEC3.thing_classes:
                relabeled[pred == pid] = encode_panoptic_id(class_id, instance + 40, SPEC3)
        new_pq = compute_pq(relabeled, gt, SPEC3)
        assert new_pq.pq_all == pytest.approx(base_pq.pq_all, abs=1e-15)
        for class_id, stats in base_pq.per_class.items():
            other = new_pq.per_class[class_id]
            assert (stats.tp, stats.fp, stats.fn) == (other.tp, other.fp, other.fn)

        masks_a = instance_masks_from_panoptic(pred, SPEC3)
        masks_b = instance_masks_from_panoptic(relabeled, SPEC3)
        gt_masks = [(c, m) for c, m, _ in instance_masks_from_panoptic(gt, SPEC3)]
        ap_a = compute_mask_ap(masks_a, gt_masks)
        ap_b = compute_mask_ap(masks_b, gt_masks)
        assert ap_a.per_threshold == ap_b.per_threshold
