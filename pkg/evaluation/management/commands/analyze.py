import csv

from detections.conf import toolkit
from detections.formats import load_groups
from detections.management.base import DetmatchCommand
from evaluation.analysis import ASSIGNMENT_MODES, REGULAR, StrideSpec, assign_to_strides, overlap_histogram


def image_size(text):
    width, _, height = text.lower().partition('x')
    return float(width), float(height)


class Command(DetmatchCommand):
    help = "Analyze ground-truth groups: base/extra overlap histogram or proposal counts per stride."

    def add_arguments(self, parser):
        parser.add_argument('analysis', choices=['overlap', 'strides'])
        parser.add_argument('--gt', required=True, help='Ground-truth groups document.')
        parser.add_argument('--out', help='Where to write the CSV report (stdout when omitted).')
        parser.add_argument('--bins', type=int, default=None, help='Histogram bins over [0, 1].')
        parser.add_argument('--mode', choices=ASSIGNMENT_MODES, default=REGULAR)
        parser.add_argument('--image-size', type=image_size, default=(1280.0, 720.0),
                            help='WIDTHxHEIGHT for images the header does not size.')

    def run(self, *args, **options):
        header, gts = load_groups(options['gt'], strict=options['strict'])
        if options['analysis'] == 'overlap':
            bins = options['bins'] if options['bins'] is not None else toolkit('HISTOGRAM_BINS')
            if bins < 1:
                self.usage_error("--bins must be positive")
            histogram = overlap_histogram(gts, bins)
            rows, columns = histogram.rows(), ['bin_lo', 'bin_hi', 'density']
            summary = f"mean base/extra IoU {histogram.mean:.4f} over {histogram.pairs} pairs"
        else:
            try:
                spec = StrideSpec.from_strides(toolkit('STRIDES'), toolkit('CENTER_RADIUS'))
            except ValueError as exc:
                self.usage_error(f"invalid stride settings: {exc}")
            report = assign_to_strides(gts, options['image_size'], spec, options['mode'], header.image_sizes)
            rows, columns = report.rows(header.role_names), ['stride', 'role', 'boxes', 'proposals_per_image']
            summary = f"same-stride fraction {report.same_stride_fraction} over {report.groups_with_extras} groups"

        if options['out']:
            with open(options['out'], 'w', newline='', encoding='utf-8') as handle:
                self._write(handle, columns, rows)
            self.stdout.write(summary)
        else:
            self._write(self.stdout, columns, rows)
            self.stderr.write(summary)

    @staticmethod
    def _write(handle, columns, rows):
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
