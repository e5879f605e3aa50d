from detections.coco import TorsoOptions, convert_coco_torso
from detections.conf import toolkit
from detections.management.base import DetmatchCommand


class Command(DetmatchCommand):
    help = "Convert COCO person keypoint annotations into a person + torso groups document."

    def add_arguments(self, parser):
        parser.add_argument('input', help='COCO person keypoints annotation file.')
        parser.add_argument('output', help='Groups document to write.')
        parser.add_argument('--margin', type=float, default=None,
                            help='Padding added to each side of the keypoint hull, as a fraction of its size.')
        parser.add_argument('--min-visibility', type=int, choices=[1, 2], default=1,
                            help='1 counts labeled keypoints, 2 only visible ones.')
        parser.add_argument('--complete-only', action='store_true',
                            help='Keep only images in which every kept person has a torso box.')

    def run(self, *args, **options):
        margin = options['margin'] if options['margin'] is not None else toolkit('TORSO_MARGIN')
        try:
            torso = TorsoOptions(
                margin=margin,
                min_visibility=options['min_visibility'],
                complete_only=options['complete_only'],
            )
        except ValueError as exc:
            self.usage_error(str(exc))
        header, groups = convert_coco_torso(options['input'], options['output'], torso)
        missing = sum(1 for g in groups if g.extras[0] is None)
        self.stdout.write(
            f"{len(groups)} persons on {len(header.image_sizes)} images, {missing} without a torso box"
        )
