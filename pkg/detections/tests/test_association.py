import functools
import itertools

import numpy as np
from django.test import SimpleTestCase

from detections.association import associate_groups, hungarian_assign, pair_by_iou
from detections.boxes import BBox, iou

from .utils import flat_detection, jittered, random_box


@functools.cache
def _injections(size, count):
    """Every ordered choice of `count` distinct indices out of `size`, one per row."""
    return np.array(list(itertools.permutations(range(size), count)), dtype=np.intp).reshape(-1, count)


def oracle(cost, forbid):
    """Exhaustive search: most allowed pairs first, then the lowest allowed cost."""
    cost, forbid = np.asarray(cost), np.asarray(forbid)
    if cost.shape[0] > cost.shape[1]:
        cost, forbid = cost.T, forbid.T
    rows, cols = cost.shape
    picks = _injections(cols, rows)
    allowed = ~forbid[np.arange(rows), picks]
    counts = allowed.sum(axis=1)
    totals = np.where(allowed, cost[np.arange(rows), picks], 0.0).sum(axis=1)
    most = counts.max()
    return -int(most), float(totals[counts == most].min())


class HungarianAssignTests(SimpleTestCase):
    def test_prefers_the_global_optimum_over_greedy_pairing(self):
        overlaps = np.array([[0.9, 0.8], [0.85, 0.1]])
        result = hungarian_assign(1.0 - overlaps)
        self.assertEqual(sorted(result.pairs), [(0, 1), (1, 0)])
        self.assertAlmostEqual(result.total_cost, 0.35)

    def test_rectangular_leaves_rows_unmatched(self):
        result = hungarian_assign([[1.0], [0.0], [2.0]])
        self.assertEqual(result.pairs, [(1, 0)])
        self.assertEqual(result.unmatched_base, [0, 2])
        self.assertEqual(result.unmatched_extra, [])

    def test_forbidden_entries_are_never_selected(self):
        cost = np.array([[0.0, 5.0], [0.0, 9.0]])
        forbid = np.array([[False, True], [False, True]])
        result = hungarian_assign(cost, forbid)
        self.assertEqual(len(result.pairs), 1)
        self.assertEqual(result.unmatched_extra, [1])

    def test_all_forbidden(self):
        result = hungarian_assign(np.ones((2, 2)), np.ones((2, 2), dtype=bool))
        self.assertEqual(result.pairs, [])
        self.assertEqual(result.unmatched_base, [0, 1])

    def test_empty_sides(self):
        result = hungarian_assign(np.zeros((0, 3)))
        self.assertEqual(result.unmatched_extra, [0, 1, 2])

    def test_shape_errors(self):
        with self.assertRaises(ValueError):
            hungarian_assign([1.0, 2.0])
        with self.assertRaises(ValueError):
            hungarian_assign(np.zeros((2, 2)), np.zeros((3, 2), dtype=bool))

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(3)
        for trial in range(500):
            rows, cols = (8, 8) if trial % 10 == 0 else (int(v) for v in rng.integers(1, 9, 2))
            # Integer costs keep every sum exact.
            cost = rng.integers(0, 20, (rows, cols)).astype(float)
            forbid = rng.uniform(size=(rows, cols)) < (0.3 if trial % 2 else 0.0)
            result = hungarian_assign(cost, forbid)
            self.assertTrue(all(not forbid[r, c] for r, c in result.pairs))
            self.assertEqual(len({r for r, _ in result.pairs}), len(result.pairs))
            self.assertEqual(len({c for _, c in result.pairs}), len(result.pairs))
            self.assertEqual((-len(result.pairs), result.total_cost), oracle(cost, forbid), f"trial {trial}")


class PairByIouTests(SimpleTestCase):
    def test_pairs_by_overlap_and_keeps_base_scores(self):
        base = [(0.9, BBox(0, 0, 10, 10)), (0.4, BBox(100, 100, 10, 10))]
        extra = [(0.2, BBox(101, 101, 8, 8)), (0.8, BBox(1, 1, 8, 8))]
        groups = pair_by_iou(base, extra, image_id='img', class_id=1)
        self.assertEqual([g.score for g in groups], [0.9, 0.4])
        self.assertEqual([g.extras[0] for g in groups], [extra[1][1], extra[0][1]])
        self.assertTrue(all(g.image_id == 'img' and g.class_id == 1 for g in groups))

    def test_unpaired_base_gets_a_missing_extra(self):
        groups = pair_by_iou([(0.5, BBox(0, 0, 10, 10))], [(0.5, BBox(50, 50, 10, 10))])
        self.assertEqual(groups[0].extras, (None,))

    def test_floor_out_of_range(self):
        for floor in (-0.1, 1.0):
            with self.subTest(floor=floor), self.assertRaises(ValueError):
                pair_by_iou([], [], iou_floor=floor)

    def test_pairs_clear_the_floor_and_ignore_input_order(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            base = [(float(rng.uniform()), random_box(rng)) for _ in range(int(rng.integers(1, 8)))]
            extra = [(0.5, jittered(box, rng, 0.3)) for _, box in base[:int(rng.integers(0, len(base) + 1))]]
            extra += [(0.5, random_box(rng)) for _ in range(int(rng.integers(0, 3)))]
            floor = float(rng.uniform(0.0, 0.5))
            groups = pair_by_iou(base, extra, iou_floor=floor)
            for group in groups:
                if group.extras[0] is not None:
                    self.assertGreater(iou(group.base, group.extras[0]), floor)
            shuffled = [extra[i] for i in rng.permutation(len(extra))]
            self.assertEqual(pair_by_iou(base, shuffled, iou_floor=floor), groups)


class AssociateGroupsTests(SimpleTestCase):
    def test_groups_per_image_and_class(self):
        dets = [
            flat_detection(0, 0, 0.9, BBox(0, 0, 10, 10)),
            flat_detection(0, 1, 0.6, BBox(1, 1, 8, 8)),
            flat_detection(0, 2, 0.6, BBox(0, 0, 12, 12)),
            flat_detection(1, 0, 0.7, BBox(0, 0, 10, 10)),
            flat_detection(2, 1, 0.7, BBox(0, 0, 10, 10)),
        ]
        groups = associate_groups(dets, arity=2)
        self.assertEqual([(g.image_id, g.score) for g in groups], [(0, 0.9), (1, 0.7)])
        self.assertEqual(groups[0].extras, (BBox(1, 1, 8, 8), BBox(0, 0, 12, 12)))
        self.assertEqual(groups[1].extras, (None, None))

    def test_role_beyond_arity(self):
        with self.assertRaises(ValueError):
            associate_groups([flat_detection(0, 2, 0.5, BBox(0, 0, 1, 1))], arity=1)


class SmallAssignmentExampleTests(SimpleTestCase):
    def test_two_by_two(self):
        result = hungarian_assign([[1, 2], [2, 1]])
        self.assertEqual(result.pairs, [(0, 0), (1, 1)])
        self.assertEqual(result.total_cost, 2.0)

    def test_zero_diagonal_gives_identity(self):
        rng = np.random.default_rng(23)
        cost = rng.uniform(0.1, 1.0, (6, 6))
        np.fill_diagonal(cost, 0.0)
        result = hungarian_assign(cost)
        self.assertEqual(result.pairs, [(i, i) for i in range(6)])
        self.assertEqual(result.total_cost, 0.0)

    def test_seven_by_seven_against_all_permutations(self):
        rng = np.random.default_rng(29)
        perms = np.array(list(itertools.permutations(range(7))))
        for _ in range(20):
            cost = rng.integers(0, 100, (7, 7)).astype(float)
            best = cost[np.arange(7), perms].sum(axis=1).min()
            self.assertEqual(hungarian_assign(cost).total_cost, best)

    def test_crossing_overlaps_pair_along_the_diagonal(self):
        overlaps = np.array([[0.9, 0.4], [0.3, 0.85]])
        self.assertEqual(hungarian_assign(1.0 - overlaps).pairs, [(0, 0), (1, 1)])

    def test_single_feasible_pair(self):
        groups = pair_by_iou([(0.9, BBox(0, 0, 10, 10))], [(0.5, BBox(0, 0, 10, 8))])
        self.assertEqual(groups[0].extras, (BBox(0, 0, 10, 8),))
