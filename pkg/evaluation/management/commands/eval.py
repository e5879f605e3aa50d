import csv

from detections.conf import toolkit
from detections.exceptions import SchemaMismatchError
from detections.formats import GROUPED, load_detections, load_groups
from detections.management.base import DetmatchCommand
from evaluation.metrics import evaluate, evaluate_flat

CURVE_COLUMNS = ['kind', 'class_or_match', 'x', 'y']


class Command(DetmatchCommand):
    help = "Compute per-class AP/MR and group-matching AP/MR of detections against ground-truth groups."

    def add_arguments(self, parser):
        parser.add_argument('--gt', required=True, help='Ground-truth groups document.')
        parser.add_argument('--dets', required=True, help='Detections document, grouped or flat.')
        parser.add_argument('--thr', type=float, default=None, help='IoU threshold for a true positive.')
        parser.add_argument('--report', help='Where to write the JSON report (stdout when omitted).')
        parser.add_argument('--curves', help='Optional CSV of precision/recall and FPPI/miss-rate curves.')

    def run(self, *args, **options):
        thr = options['thr'] if options['thr'] is not None else toolkit('EVAL_IOU_THRESHOLD')
        if not 0.0 < thr < 1.0:
            self.usage_error(f"--thr must lie strictly inside (0, 1), got {thr}")

        header, gts = load_groups(options['gt'], strict=options['strict'])
        detections = load_detections(options['dets'], strict=options['strict'])
        if detections.header.arity != header.arity:
            raise SchemaMismatchError(
                f"ground truth declares {header.arity} extra classes, detections {detections.header.arity}"
            )
        if detections.kind == GROUPED:
            result = evaluate(detections.grouped, gts, thr, header=header, threads=options['threads'])
        else:
            result = evaluate_flat(detections.flat, gts, thr, header=header, threads=options['threads'])

        self.emit_json(result.as_dict(), options['report'])
        if options['curves']:
            with open(options['curves'], 'w', newline='', encoding='utf-8') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                writer.writerow(CURVE_COLUMNS)
                for kind, name, x, y in result.curve_rows():
                    writer.writerow([kind, name, repr(float(x)), repr(float(y))])
