import dataclasses
import math

import numpy as np
from django.test import SimpleTestCase

from detections.boxes import BBox, iou
from detections.exceptions import MetricInvariantError, SchemaMismatchError
from detections.groups import DatasetHeader, GroupDetection, GroupLabel
from detections.tests.utils import detections_for, flat_detection, random_box, random_labels, separated_labels
from evaluation.metrics import (
    ClassMetrics,
    EvalResult,
    average_precision,
    check_range_invariants,
    evaluate,
    evaluate_flat,
    label_detections,
    label_groups,
    log_average_miss_rate,
    metric_summary,
)

GT = BBox(0, 0, 10, 10)


def reference_labels(dets, gts, thr):
    """Scalar greedy labeling used as an oracle."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][0], i))
    claimed = set()
    verdicts = [False] * len(dets)
    for i in order:
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if j in claimed:
                continue
            value = iou(dets[i][1], gt)
            if value > best_iou:
                best, best_iou = j, value
        if best is not None and best_iou > thr:
            claimed.add(best)
            verdicts[i] = True
    return verdicts


def reference_group_labels(dets, gts, thr):
    """Scalar group-level greedy labeling for a single image and class."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    claimed = set()
    matched = [None] * len(dets)
    for i in order:
        best, best_iou = None, thr
        for j, gt in enumerate(gts):
            if j in claimed:
                continue
            extras_ok = all(
                want is None or (got is not None and iou(got, want) > thr)
                for got, want in zip(dets[i].extras, gt.extras)
            )
            value = iou(dets[i].base, gt.base)
            if extras_ok and value > best_iou:
                best, best_iou = j, value
        if best is not None:
            claimed.add(best)
            matched[i] = gts[best].group_id
    return matched


class LabelDetectionsTests(SimpleTestCase):
    def test_single_match(self):
        verdicts = label_detections([(0.9, BBox(0, 0, 10, 6))], [GT], 0.5)
        self.assertTrue(verdicts[0].is_tp)
        self.assertEqual(verdicts[0].matched_gt, 0)

    def test_ground_truth_is_claimed_once(self):
        verdicts = label_detections([(0.8, GT), (0.9, BBox(0, 0, 10, 9))], [GT], 0.5)
        self.assertEqual([v.is_tp for v in verdicts], [False, True])

    def test_iou_equal_to_threshold_is_a_miss(self):
        verdicts = label_detections([(0.9, BBox(0, 0, 10, 5))], [GT], 0.5)
        self.assertFalse(verdicts[0].is_tp)

    def test_no_ground_truth(self):
        self.assertEqual([v.is_tp for v in label_detections([(0.5, GT)], [], 0.5)], [False])
        self.assertEqual(label_detections([], [GT], 0.5), [])

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(31)
        for _ in range(300):
            gts = [random_box(rng) for _ in range(int(rng.integers(0, 8)))]
            dets = [(float(round(rng.uniform(), 1)), random_box(rng)) for _ in range(int(rng.integers(0, 10)))]
            thr = float(rng.uniform(0.05, 0.7))
            self.assertEqual([v.is_tp for v in label_detections(dets, gts, thr)], reference_labels(dets, gts, thr))


class LabelGroupsTests(SimpleTestCase):
    def label(self, extra=GT):
        return GroupLabel(0, 'g', 0, GT, (extra,))

    def test_perfect_group(self):
        verdicts = label_groups([GroupDetection(0, 0, 0.9, GT, (GT,))], [self.label()])
        self.assertTrue(verdicts[0].is_tp)
        self.assertEqual(verdicts[0].matched_gt, 'g')

    def test_missed_extra_fails_the_group(self):
        det = GroupDetection(0, 0, 0.9, BBox(0, 0, 10, 9), (BBox(0, 0, 10, 4),))
        self.assertFalse(label_groups([det], [self.label()])[0].is_tp)

    def test_absent_extra_is_not_tested(self):
        det = GroupDetection(0, 0, 0.9, BBox(0, 0, 10, 7), (BBox(50, 50, 5, 5),))
        self.assertTrue(label_groups([det], [self.label(None)])[0].is_tp)

    def test_extra_credited_to_another_group(self):
        gts = [
            GroupLabel(0, 'a', 0, BBox(0, 0, 10, 10), (BBox(0, 0, 10, 10),)),
            GroupLabel(0, 'b', 0, BBox(100, 0, 10, 10), (BBox(100, 0, 10, 10),)),
        ]
        swapped = GroupDetection(0, 0, 0.9, BBox(0, 0, 10, 10), (BBox(100, 0, 10, 10),))
        self.assertFalse(label_groups([swapped], gts)[0].is_tp)

    def test_failed_group_leaves_the_ground_truth_unclaimed(self):
        stray_extra = GroupDetection(0, 0, 0.9, GT, (BBox(50, 50, 5, 5),))
        shifted_base = GroupDetection(0, 0, 0.8, BBox(0, 0, 10, 8), (GT,))
        verdicts = label_groups([stray_extra, shifted_base], [self.label()])
        self.assertEqual([(v.is_tp, v.matched_gt) for v in verdicts], [(False, None), (True, 'g')])

    def test_extra_on_a_neighbour_does_not_block_its_owner(self):
        gts = [
            GroupLabel(0, 'a', 0, BBox(0, 0, 10, 10), (BBox(0, 0, 10, 10),)),
            GroupLabel(0, 'b', 0, BBox(100, 0, 10, 10), (BBox(100, 0, 10, 10),)),
        ]
        crossed = GroupDetection(0, 0, 0.9, BBox(100, 0, 10, 10), (BBox(0, 0, 10, 10),))
        exact = GroupDetection(0, 0, 0.8, BBox(0, 0, 10, 10), (BBox(0, 0, 10, 10),))
        verdicts = label_groups([crossed, exact], gts)
        self.assertEqual([(v.is_tp, v.matched_gt) for v in verdicts], [(False, None), (True, 'a')])

    def test_best_base_overlap_among_feasible_groups(self):
        extra = BBox(0, 20, 10, 10)
        gts = [
            GroupLabel(0, 'near', 0, BBox(0, 0, 10, 10), (extra,)),
            GroupLabel(0, 'far', 0, BBox(2, 0, 10, 10), (extra,)),
        ]
        # Base IoU 0.905 with 'near' and 0.739 with 'far'.
        dets = [
            GroupDetection(0, 0, 0.9, BBox(0.5, 0, 10, 10), (extra,)),
            GroupDetection(0, 0, 0.8, BBox(0.5, 0, 10, 10), (extra,)),
        ]
        self.assertEqual([v.matched_gt for v in label_groups(dets, gts)], ['near', 'far'])

    def test_infeasible_group_is_skipped_for_a_weaker_base_overlap(self):
        gts = [
            GroupLabel(0, 'near', 0, BBox(0, 0, 10, 10), (BBox(0, 80, 10, 10),)),
            GroupLabel(0, 'far', 0, BBox(2, 0, 10, 10), (BBox(0, 20, 10, 10),)),
        ]
        det = GroupDetection(0, 0, 0.9, BBox(0.5, 0, 10, 10), (BBox(0, 20, 10, 10),))
        self.assertEqual(label_groups([det], gts)[0].matched_gt, 'far')

    def test_matches_scalar_group_reference(self):
        rng = np.random.default_rng(47)
        for trial in range(300):
            labels = random_labels(rng, images=1, per_image=int(rng.integers(1, 7)),
                                   arity=int(rng.integers(0, 3)), missing=0.2)
            dets = detections_for(labels, rng, noise=float(rng.uniform(0.05, 0.4)), fp_per_image=2)
            if trial % 3 == 0:
                dets = [dataclasses.replace(d, score=round(d.score, 1)) for d in dets]
            thr = float(rng.uniform(0.3, 0.7))
            self.assertEqual(
                [v.matched_gt for v in label_groups(dets, labels, thr)],
                reference_group_labels(dets, labels, thr),
                f"trial {trial}",
            )

    def test_arity_mismatch(self):
        with self.assertRaises(SchemaMismatchError):
            label_groups([GroupDetection(0, 0, 0.9, GT)], [self.label()])


class AveragePrecisionTests(SimpleTestCase):
    def test_single_true_positive(self):
        self.assertEqual(average_precision([(0.9, True)], 1)[0], 1.0)

    def test_trailing_false_positive_costs_nothing(self):
        ap, curve = average_precision([(0.9, True), (0.8, False)], 1)
        self.assertEqual(ap, 1.0)
        self.assertEqual(curve, [(1.0, 1.0), (1.0, 0.5)])

    def test_no_detections(self):
        self.assertEqual(average_precision([], 3), (0.0, []))

    def test_no_ground_truth_is_undefined(self):
        self.assertEqual(average_precision([(0.5, False)], 0), (None, []))

    def test_hand_computed_cases(self):
        cases = [
            ([False, True], 1, 0.5),
            ([True, False, True], 2, 0.5 + 0.5 * 2 / 3),
            ([True, True], 4, 0.5),
            ([False, False, True, True], 2, 0.5),
            ([True, False, False, True, False, True], 3, (1 + 0.5 + 0.5) / 3),
            ([False] * 5, 2, 0.0),
        ]
        for hits, num_gt, expected in cases:
            with self.subTest(hits=hits):
                scored = [(1.0 - 0.01 * i, hit) for i, hit in enumerate(hits)]
                self.assertAlmostEqual(average_precision(scored, num_gt)[0], expected, places=12)


class MissRateTests(SimpleTestCase):
    def test_no_detections(self):
        self.assertEqual(log_average_miss_rate([], 4, 10)[0], 1.0)

    def test_perfect_detector_reaches_the_floor(self):
        mr, _ = log_average_miss_rate([(0.9, True), (0.8, True)], 2, 5)
        self.assertAlmostEqual(mr, 1e-10, delta=1e-20)

    def test_undefined_without_ground_truth_or_images(self):
        self.assertIsNone(log_average_miss_rate([(0.5, True)], 0, 3)[0])
        self.assertIsNone(log_average_miss_rate([(0.5, True)], 3, 0)[0])

    def test_ten_image_hand_computation(self):
        # 5 ground truths on 10 images; FPPI reaches 0.1 after the third detection.
        hits = [True, True, False, False, True, False, True] + [False] * 7
        scored = [(1.0 - 0.01 * i, hit) for i, hit in enumerate(hits)]
        mr, curve = log_average_miss_rate(scored, 5, 10)
        # Miss rate 0.6 at the six references up to 0.178, 0.2 from 0.316 on.
        expected = math.exp((6 * math.log(0.6) + 3 * math.log(0.2)) / 9)
        self.assertAlmostEqual(mr, expected, places=12)
        self.assertEqual(len(curve), len(hits))
        self.assertAlmostEqual(curve[-1][0], 1.0)

    def test_false_positives_only_raise_the_miss_rate(self):
        base = [(0.9, True), (0.8, False), (0.7, True)]
        worse = [(0.95, False)] + base
        self.assertGreaterEqual(log_average_miss_rate(worse, 3, 2)[0], log_average_miss_rate(base, 3, 2)[0])


FLOOR = math.log(1e-10)

# (ranked hits, ground truths, images, AP, MR), worked out by hand.
MICRO_DATASETS = [
    ('T', 1, 1, 1.0, 1e-10),
    ('F', 1, 1, 0.0, 1.0),
    ('FT', 1, 1, 0.5, math.exp(FLOOR / 9)),
    ('TF', 2, 1, 0.5, 0.5),
    ('TFT', 2, 2, 5 / 6, math.exp((7 * math.log(0.5) + 2 * FLOOR) / 9)),
    ('TTFF', 3, 2, 2 / 3, 1 / 3),
    ('FFTT', 2, 3, 0.5, math.exp(FLOOR / 9)),
    ('TFTFT', 4, 4, 17 / 30, math.exp((6 * math.log(0.75) + math.log(0.5) + 2 * math.log(0.25)) / 9)),
    ('TTTTT', 5, 5, 1.0, 1e-10),
    ('FTTTT', 5, 5, 0.64, 0.2 ** (1 / 3)),
    ('TFFFFFT', 2, 5, 9 / 14, math.exp((8 * math.log(0.5) + FLOOR) / 9)),
    ('TFTFTF', 3, 6, 34 / 45, math.exp((5 * math.log(2 / 3) + 2 * math.log(1 / 3) + 2 * FLOOR) / 9)),
    ('FTFTFTFT', 4, 8, 0.5, math.exp((math.log(0.75) + math.log(0.5) + 2 * FLOOR) / 9)),
    ('TTFTFFFTFF', 6, 10, 13 / 24, math.exp((4 * math.log(2 / 3) + 3 * math.log(0.5) + 2 * math.log(1 / 3)) / 9)),
    ('FFFFFFFFFF', 3, 10, 0.0, 1.0),
    ('TTT', 6, 7, 0.5, 0.5),
    ('FTTF', 2, 7, 2 / 3, math.exp(4 * FLOOR / 9)),
    ('TFFT', 2, 9, 0.75, math.exp((6 * math.log(0.5) + 3 * FLOOR) / 9)),
    ('TFTTFT', 5, 3, 19 / 30, math.exp((7 * math.log(0.8) + math.log(0.4) + math.log(0.2)) / 9)),
    ('TTFFTT', 4, 1, 5 / 6, 0.5),
]


def micro_dataset(hits, num_gt, num_images):
    """One isolated group per ground truth; hits become exact detections, misses land far away."""
    gts = [GroupLabel(i % num_images, f'g{i}', 0, BBox(100 * i, 0, 10, 10), (BBox(100 * i, 0, 10, 10),))
           for i in range(num_gt)]
    dets, tps, fps = [], 0, 0
    for rank, hit in enumerate(hits):
        score = 1.0 - 0.05 * rank
        if hit == 'T':
            target = gts[tps]
            dets.append(GroupDetection(target.image_id, 0, score, target.base, target.extras))
            tps += 1
        else:
            box = BBox(100 * fps, 500, 10, 10)
            dets.append(GroupDetection(fps % num_images, 0, score, box, (box,)))
            fps += 1
    header = DatasetHeader(('person',), ('extra',), image_sizes={i: (1000, 1000) for i in range(num_images)})
    return dets, gts, header


class MicroDatasetTests(SimpleTestCase):
    def test_hand_computed_ap_and_mr(self):
        for hits, num_gt, num_images, ap, mr in MICRO_DATASETS:
            with self.subTest(hits=hits, num_gt=num_gt, num_images=num_images):
                dets, gts, header = micro_dataset(hits, num_gt, num_images)
                result = evaluate(dets, gts, header=header)
                self.assertEqual(result.num_images, num_images)
                for metrics in (result.per_class['person'], result.per_class['extra'], result.match):
                    self.assertAlmostEqual(metrics.ap, ap, delta=1e-9)
                    self.assertAlmostEqual(metrics.mr, mr, delta=1e-9)


def perfect_dataset(arity=1):
    gts = [GroupLabel(i, f'g{i}', 0, BBox(10 * i, 0, 8, 8), tuple(BBox(10 * i, 0, 8, 4) for _ in range(arity)))
           for i in range(4)]
    dets = [GroupDetection(g.image_id, 0, 0.5 + 0.1 * i, g.base, g.extras) for i, g in enumerate(gts)]
    return dets, gts


class EvaluateTests(SimpleTestCase):
    def test_perfect_detections(self):
        dets, gts = perfect_dataset()
        result = evaluate(dets, gts)
        self.assertEqual(result.per_class['class0'].ap, 1.0)
        self.assertEqual(result.per_class['extra0'].ap, 1.0)
        self.assertEqual(result.match.ap, 1.0)
        self.assertEqual(result.num_images, 4)
        self.assertEqual(result.upper_bound_ratio, 1.0)

    def test_missed_extras_zero_the_match_metrics(self):
        dets, gts = perfect_dataset()
        dets = [GroupDetection(d.image_id, 0, d.score, d.base, (BBox(500, 500, 5, 5),)) for d in dets]
        result = evaluate(dets, gts)
        self.assertEqual(result.per_class['class0'].ap, 1.0)
        self.assertEqual(result.per_class['extra0'].ap, 0.0)
        self.assertEqual(result.match.ap, 0.0)
        self.assertEqual(result.match.mr, 1.0)

    def test_header_names_the_classes(self):
        dets, gts = perfect_dataset()
        result = evaluate(dets, gts, header=DatasetHeader(('player',), ('stick',)))
        self.assertEqual(list(result.per_class), ['player', 'stick'])

    def test_ignored_ground_truth_is_left_out(self):
        dets, gts = perfect_dataset()
        gts.append(GroupLabel(9, 'crowd', 0, BBox(0, 0, 5, 5), (BBox(0, 0, 5, 5),), ignore=True))
        result = evaluate(dets, gts)
        self.assertEqual(result.per_class['class0'].num_gt, 4)
        self.assertEqual(result.match.ap, 1.0)

    def test_images_without_ground_truth_only_add_false_positives(self):
        dets, gts = perfect_dataset()
        dets.append(GroupDetection('empty', 0, 0.99, BBox(0, 0, 5, 5), (BBox(0, 0, 5, 5),)))
        result = evaluate(dets, gts)
        self.assertEqual(result.num_images, 5)
        self.assertEqual(result.per_class['class0'].num_gt, 4)
        self.assertLess(result.per_class['class0'].ap, 1.0)

    def test_empty_detections(self):
        _, gts = perfect_dataset()
        result = evaluate([], gts)
        self.assertEqual(result.match.ap, 0.0)
        self.assertEqual(result.match.mr, 1.0)

    def test_range_invariants_on_random_datasets(self):
        rng = np.random.default_rng(37)
        for trial in range(500):
            arity = int(rng.integers(1, 3))
            labels = separated_labels(rng, images=int(rng.integers(1, 4)), per_image=int(rng.integers(1, 6)), arity=arity)
            dets = detections_for(labels, rng, noise=float(rng.uniform(0.02, 0.3)))
            if trial % 4 == 0:
                dets = [dataclasses.replace(d, score=round(d.score, 1)) for d in dets]
            result = evaluate(dets, labels)
            for metrics in result.per_class.values():
                self.assertLessEqual(result.match.ap, metrics.ap + 1e-9, f"trial {trial}")
                self.assertGreaterEqual(result.match.mr, metrics.mr - 1e-9, f"trial {trial}")

    def test_ambiguous_overlaps_let_the_match_beat_a_class(self):
        # The first detection's base overlaps both ground-truth bases above 0.5;
        # its extra sits on the second group's extra.
        gts = [
            GroupLabel(0, 'g1', 0, BBox(0, 0, 10, 10), (BBox(0, 50, 10, 10),)),
            GroupLabel(0, 'g2', 0, BBox(2, 0, 10, 10), (BBox(50, 50, 10, 10),)),
        ]
        dets = [
            GroupDetection(0, 0, 0.9, BBox(0.5, 0, 10, 10), (BBox(50, 50, 10, 10),)),
            GroupDetection(0, 0, 0.8, BBox(-2, 0, 10, 10), (BBox(0, 50, 10, 10),)),
        ]
        result = evaluate(dets, gts)
        self.assertEqual([v.matched_gt for v in label_groups(dets, gts)], ['g2', 'g1'])
        self.assertEqual(result.per_class['class0'].ap, 0.5)
        self.assertEqual(result.per_class['extra0'].ap, 1.0)
        self.assertEqual(result.match.ap, 1.0)
        with self.assertRaises(MetricInvariantError):
            check_range_invariants(result)

    def test_extra_false_positive_never_raises_ap(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            labels = random_labels(rng, images=2, per_image=4, arity=1)
            dets = detections_for(labels, rng)
            stray = GroupDetection(0, 0, float(rng.uniform()), BBox(1000, 1000, 5, 5), (BBox(1000, 1000, 5, 5),))
            before, after = evaluate(dets, labels), evaluate(dets + [stray], labels)
            self.assertLessEqual(after.per_class['class0'].ap, before.per_class['class0'].ap)
            self.assertLessEqual(after.match.ap, before.match.ap)

    def test_independent_of_input_order_and_threads(self):
        rng = np.random.default_rng(43)
        labels = random_labels(rng, images=6, per_image=5, arity=2, missing=0.2)
        dets = detections_for(labels, rng)
        expected = evaluate(dets, labels).as_dict(include_curves=True)
        shuffled = [dets[i] for i in rng.permutation(len(dets))]
        self.assertEqual(evaluate(shuffled, labels).as_dict(include_curves=True), expected)
        self.assertEqual(evaluate(dets, labels, threads=4).as_dict(include_curves=True), expected)

    def test_curve_rows(self):
        dets, gts = perfect_dataset()
        rows = evaluate(dets, gts).curve_rows()
        self.assertEqual({row[0] for row in rows}, {'pr', 'fppi'})
        self.assertIn('match', {row[1] for row in rows})


class EvaluateFlatTests(SimpleTestCase):
    def test_per_role_metrics_without_match(self):
        _, gts = perfect_dataset()
        dets = [flat_detection(g.image_id, 0, 0.9, g.base) for g in gts]
        dets += [flat_detection(g.image_id, 1, 0.8, g.extras[0]) for g in gts[:2]]
        result = evaluate_flat(dets, gts)
        self.assertIsNone(result.match)
        self.assertEqual(result.per_class['class0'].ap, 1.0)
        self.assertEqual(result.per_class['extra0'].ap, 0.5)
        self.assertIsNone(result.as_dict()['match'])

    def test_role_beyond_arity(self):
        _, gts = perfect_dataset()
        with self.assertRaises(SchemaMismatchError):
            evaluate_flat([flat_detection(0, 2, 0.5, GT)], gts)


class InvariantCheckTests(SimpleTestCase):
    def result(self, match_ap, match_mr):
        per_class = {'base': ClassMetrics('base', 1, 1, 0.5, 0.5)}
        return EvalResult(per_class, ClassMetrics('match', 1, 1, match_ap, match_mr), 1, 0.5)

    def test_match_above_class_ap(self):
        with self.assertRaises(MetricInvariantError):
            check_range_invariants(self.result(0.6, 0.7))

    def test_match_below_class_mr(self):
        with self.assertRaises(MetricInvariantError):
            check_range_invariants(self.result(0.4, 0.3))

    def test_consistent_result(self):
        check_range_invariants(self.result(0.4, 0.7))


class MetricSummaryTests(SimpleTestCase):
    def test_undefined_values_become_nan(self):
        dets, gts = perfect_dataset()
        gts = [GroupLabel(g.image_id, g.group_id, 0, g.base, (None,)) for g in gts]
        summary = metric_summary(evaluate(dets, gts))
        self.assertEqual(summary['ap_base'], 1.0)
        self.assertTrue(math.isnan(summary['ap_extra']))
        self.assertEqual(summary['ap_match'], 1.0)
