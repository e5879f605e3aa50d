import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from detections.boxes import BBox
from detections.formats import FLAT, GROUPED, load_detections, load_groups, save_detections, write_document
from detections.groups import DatasetHeader, GroupDetection
from detections.management.base import DATA_ERROR, USAGE_ERROR

from .test_coco import coco_document, person
from .test_suppression import crowded_pair
from .utils import flat_detection

HEADER = DatasetHeader(('person',), ('torso',))


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def assertExitCode(self, code, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception


class NmsCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.grouped = self.tmp / 'grouped.json'
        save_detections(self.grouped, HEADER, crowded_pair())

    def test_set_mode_keeps_both_groups(self):
        output = self.tmp / 'kept.json'
        self.call('nms', input=str(self.grouped), output=str(output), mode='set', iou=0.5)
        self.assertEqual(len(load_detections(output).grouped), 2)

    def test_joint_mode_to_stdout(self):
        document = json.loads(self.call('nms', input=str(self.grouped), mode='joint'))
        self.assertEqual(document['kind'], GROUPED)
        self.assertEqual([d['score'] for d in document['detections']], [0.9])

    def test_per_class_mode(self):
        flat = self.tmp / 'flat.json'
        box = BBox(0, 0, 10, 10)
        save_detections(flat, HEADER, [flat_detection(0, 0, 0.9, box), flat_detection(0, 0, 0.3, box),
                                       flat_detection(0, 1, 0.5, box)], kind=FLAT)
        document = json.loads(self.call('nms', input=str(flat), mode='per-class'))
        self.assertEqual([(d['role'], d['score']) for d in document['detections']], [(0, 0.9), (1, 0.5)])

    def test_per_class_mode_refuses_grouped_input(self):
        self.assertExitCode(DATA_ERROR, 'nms', input=str(self.grouped), mode='per-class')

    def test_threshold_out_of_range(self):
        self.assertExitCode(USAGE_ERROR, 'nms', input=str(self.grouped), iou=1.5)

    def test_missing_input_argument(self):
        self.assertExitCode(USAGE_ERROR, 'nms')

    def test_unknown_mode(self):
        self.assertExitCode(USAGE_ERROR, 'nms', input=str(self.grouped), mode='soft')

    def test_missing_file(self):
        self.assertExitCode(DATA_ERROR, 'nms', input=str(self.tmp / 'absent.json'))

    def test_strict_rejects_unknown_fields(self):
        loose = self.tmp / 'loose.json'
        document = json.loads(self.grouped.read_text())
        document['detections'][0]['note'] = 'x'
        write_document(loose, document)
        self.assertExitCode(DATA_ERROR, 'nms', '--strict', input=str(loose))
        kept = json.loads(self.call('nms', '--lenient', input=str(loose)))
        self.assertEqual(len(kept['detections']), 2)


class MatchCommandTests(CommandTestCase):
    def test_pairs_base_and_extra_files(self):
        base, extra, output = self.tmp / 'base.json', self.tmp / 'extra.json', self.tmp / 'groups.json'
        save_detections(base, HEADER, [flat_detection(0, 0, 0.8, BBox(0, 0, 40, 80)),
                                       flat_detection(0, 0, 0.6, BBox(200, 0, 40, 80))], kind=FLAT)
        save_detections(extra, HEADER, [flat_detection(0, 1, 0.7, BBox(205, 10, 30, 40)),
                                        flat_detection(0, 1, 0.5, BBox(5, 10, 30, 40))], kind=FLAT)
        self.call('match', base=str(base), extra=str(extra), output=str(output))
        groups = load_detections(output).grouped
        self.assertEqual([(g.score, g.extras[0]) for g in groups],
                         [(0.8, BBox(5, 10, 30, 40)), (0.6, BBox(205, 10, 30, 40))])

    def test_grouped_input_is_refused(self):
        grouped = self.tmp / 'grouped.json'
        save_detections(grouped, HEADER, [GroupDetection(0, 0, 0.5, BBox(0, 0, 1, 1), (None,))])
        self.assertExitCode(DATA_ERROR, 'match', base=str(grouped), extra=str(grouped))

    def test_arity_mismatch(self):
        base, extra = self.tmp / 'base.json', self.tmp / 'extra.json'
        save_detections(base, HEADER, [], kind=FLAT)
        save_detections(extra, DatasetHeader(('person',), ('torso', 'head')), [], kind=FLAT)
        error = self.assertExitCode(DATA_ERROR, 'match', base=str(base), extra=str(extra))
        self.assertIn('extra classes', str(error))

    def test_floor_out_of_range(self):
        self.assertExitCode(USAGE_ERROR, 'match', base='a.json', extra='b.json', iou_floor=1.0)


class ConvertCommandTests(CommandTestCase):
    def test_writes_groups_and_reports_counts(self):
        source, target = self.tmp / 'coco.json', self.tmp / 'groups.json'
        no_torso = [0] * 51
        no_torso[3 * 5: 3 * 5 + 3] = [10, 10, 2]
        write_document(source, coco_document(person(1), person(2, kps=no_torso), person(3, image_id=2)))
        out = self.call('convert', str(source), str(target))
        self.assertEqual(out.strip(), "3 persons on 2 images, 1 without a torso box")
        self.assertEqual(len(load_groups(target)[1]), 3)

    def test_negative_margin(self):
        self.assertExitCode(USAGE_ERROR, 'convert', 'in.json', 'out.json', margin=-1.0)

    def test_not_coco(self):
        source = self.tmp / 'empty.json'
        write_document(source, {})
        self.assertExitCode(DATA_ERROR, 'convert', str(source), str(self.tmp / 'out.json'))


class LossCommandTests(CommandTestCase):
    def test_single_point_report(self):
        point = json.dumps({'pred': [3, 4, 10, 12], 'gt': [0, 0, 10, 10]})
        report = json.loads(self.call('loss', 'check-gradients', loss='diou', point=point))
        self.assertFalse(report['kink'])
        self.assertLess(report['max_relative_error'], 1e-4)

    def test_random_points_summary(self):
        summary = json.loads(self.call('loss', 'check-gradients', loss='focal', random=50, seed=3))
        self.assertEqual(summary['points'], 50)
        self.assertEqual(summary['failures'], 0)

    def test_kink_point_is_flagged(self):
        point = json.dumps({'extra': [10, 12, 20, 20], 'base': [10, 10, 20, 20]})
        report = json.loads(self.call('loss', 'check-gradients', loss='constraint', point=point))
        self.assertTrue(report['kink'])

    def test_require_smooth_rejects_a_kink_point(self):
        point = json.dumps({'extra': [10, 12, 20, 20], 'base': [10, 10, 20, 20]})
        error = self.assertExitCode(DATA_ERROR, 'loss', 'check-gradients', loss='constraint', point=point,
                                    require_smooth=True)
        self.assertIn('x=base.x', str(error))

    def test_require_smooth_accepts_smooth_points(self):
        point = json.dumps({'extra': [12.5, 9, 20, 20], 'base': [10, 10, 20, 20]})
        report = json.loads(self.call('loss', 'check-gradients', loss='constraint', point=point, require_smooth=True))
        self.assertFalse(report['kink'])
        summary = json.loads(self.call('loss', 'check-gradients', loss='focal', random=20, require_smooth=True))
        self.assertEqual(summary['kink_points'], 0)

    def test_point_and_random_are_exclusive(self):
        self.assertExitCode(USAGE_ERROR, 'loss', 'check-gradients', loss='diou')
        self.assertExitCode(USAGE_ERROR, 'loss', 'check-gradients', loss='diou', point='{}', random=3)

    def test_malformed_point(self):
        self.assertExitCode(USAGE_ERROR, 'loss', 'check-gradients', loss='diou', point='[1, 2]')
        self.assertExitCode(USAGE_ERROR, 'loss', 'check-gradients', loss='diou', point='{"pred": [1, 2, 3, 4]}')
        self.assertExitCode(USAGE_ERROR, 'loss', 'check-gradients', loss='diou', point='not json')


class BenchCommandTests(CommandTestCase):
    def test_prints_a_row_per_mode_and_size(self):
        out = self.call('bench', sizes='10,20', repeats=1)
        lines = out.strip().splitlines()
        self.assertEqual(len(lines), 1 + 2 * 3)
        self.assertTrue(lines[1].startswith('base_only'))

    def test_bad_sizes(self):
        self.assertExitCode(USAGE_ERROR, 'bench', sizes='10,x')
