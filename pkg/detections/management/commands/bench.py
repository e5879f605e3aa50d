import time

import numpy as np

from detections.boxes import BBox
from detections.conf import toolkit
from detections.groups import GroupDetection
from detections.management.base import DetmatchCommand, positive_int
from detections.suppression import GROUP_MODES, SuppressionParams, group_suppress


def synthetic_groups(count, arity, rng, extent=1000.0):
    """Random groups crowded into one image so suppression has work to do."""
    groups = []
    for _ in range(count):
        x, y = rng.uniform(0.0, extent * 0.9, 2)
        w, h = rng.uniform(20.0, extent * 0.1, 2)
        extras = []
        for _ in range(arity):
            dx, dy = rng.normal(0.0, 0.1, 2) * (w, h)
            extras.append(BBox(float(x + dx), float(y + dy), float(w * rng.uniform(0.5, 1.5)), float(h * rng.uniform(0.5, 1.5))))
        groups.append(GroupDetection(0, 0, float(rng.uniform()), BBox(float(x), float(y), float(w), float(h)), tuple(extras)))
    return groups


class Command(DetmatchCommand):
    help = "Time each group NMS mode on synthetic loads and print groups per second."

    def add_arguments(self, parser):
        parser.add_argument('--sizes', default='100,500,2000', help='Comma-separated group counts.')
        parser.add_argument('--extras', type=int, default=1)
        parser.add_argument('--repeats', type=positive_int, default=3)

    def run(self, *args, **options):
        try:
            sizes = [positive_int(s) for s in options['sizes'].split(',')]
        except ValueError:
            self.usage_error(f"--sizes must list positive integers, got {options['sizes']!r}")
        if options['extras'] < 0:
            self.usage_error("--extras must be >= 0")

        rng = np.random.default_rng(options['seed'])
        threshold = toolkit('NMS_IOU_THRESHOLD')
        self.stdout.write(f"{'mode':<10} {'groups':>7} {'kept':>7} {'groups/s':>12}")
        for size in sizes:
            groups = synthetic_groups(size, options['extras'], rng)
            for mode in GROUP_MODES:
                params = SuppressionParams(threshold, mode)
                best = float('inf')
                for _ in range(options['repeats']):
                    start = time.perf_counter()
                    kept = group_suppress(groups, params)
                    best = min(best, time.perf_counter() - start)
                rate = size / best if best > 0 else float('inf')
                self.stdout.write(f"{mode.value:<10} {size:>7} {len(kept):>7} {rate:>12.0f}")
