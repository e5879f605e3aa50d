import json
import math

import numpy as np

from detections.conf import loss_defaults
from detections.losses import LOSSES, finite_difference_check, require_smooth, sample_points
from detections.management.base import DetmatchCommand

GRADIENT_TOLERANCE = 1e-4


class Command(DetmatchCommand):
    help = "Check analytic loss gradients against central finite differences."

    def add_arguments(self, parser):
        parser.add_argument('action', choices=['check-gradients'])
        parser.add_argument('--loss', choices=sorted(LOSSES), required=True)
        parser.add_argument('--point', help='JSON object with the point to check, e.g. {"pred": [...], "gt": [...]}.')
        parser.add_argument('--random', type=int, default=0, metavar='N',
                            help='Check N random points drawn with --seed instead of --point.')
        parser.add_argument('--epsilon', type=float, default=1e-5)
        parser.add_argument('--require-smooth', action='store_true',
                            help='Fail with a data error when a point sits on a kink of the loss.')
        parser.add_argument('--output', help='Where to write the JSON report (stdout when omitted).')

    def run(self, *args, **options):
        if options['epsilon'] <= 0:
            self.usage_error("--epsilon must be positive")
        if bool(options['point']) == bool(options['random']):
            self.usage_error("give exactly one of --point or --random N")

        if options['point']:
            try:
                point = json.loads(options['point'])
            except ValueError as exc:
                self.usage_error(f"--point is not valid JSON: {exc}")
            if not isinstance(point, dict):
                self.usage_error("--point must be a JSON object")
            try:
                report = finite_difference_check(options['loss'], {**loss_defaults(), **point}, options['epsilon'])
            except (KeyError, TypeError, ValueError) as exc:
                self.usage_error(f"malformed {options['loss']} point: {exc}")
            if options['require_smooth']:
                require_smooth(report)
            self.emit_json(report.as_dict(), options['output'])
            return

        if options['random'] < 0:
            self.usage_error("--random must be positive")
        rng = np.random.default_rng(options['seed'])
        reports = [
            finite_difference_check(options['loss'], {**loss_defaults(), **point}, options['epsilon'])
            for point in sample_points(options['loss'], options['random'], rng)
        ]
        if options['require_smooth']:
            for report in reports:
                require_smooth(report)
        smooth = [r for r in reports if not r.at_kink]
        failures = [r for r in smooth if not r.passes(GRADIENT_TOLERANCE)]
        worst = max((r.max_relative_error for r in smooth), default=None)
        self.emit_json({
            'loss': options['loss'],
            'epsilon': options['epsilon'],
            'points': len(reports),
            'kink_points': len(reports) - len(smooth),
            'failures': len(failures),
            'tolerance': GRADIENT_TOLERANCE,
            'max_relative_error': worst if worst is not None and math.isfinite(worst) else None,
        }, options['output'])
