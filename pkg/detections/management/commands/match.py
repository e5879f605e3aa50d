import logging

from detections.association import associate_groups
from detections.conf import toolkit
from detections.exceptions import DatasetFormatError, SchemaMismatchError
from detections.formats import FLAT, GROUPED, detections_document, load_detections, save_detections
from detections.groups import BASE_ROLE
from detections.management.base import DetmatchCommand

logger = logging.getLogger(__name__)


class Command(DetmatchCommand):
    help = "Pair flat base and extra detections into groups by Hungarian assignment on IoU."

    def add_arguments(self, parser):
        parser.add_argument('--base', required=True, help='Flat detections document with the base boxes.')
        parser.add_argument('--extra', required=True, help='Flat detections document with the extra boxes.')
        parser.add_argument('--iou-floor', type=float, default=None,
                            help='Pairs at or below this IoU are never formed.')
        parser.add_argument('--output', help='Where to write the groups (stdout when omitted).')

    def run(self, *args, **options):
        iou_floor = options['iou_floor'] if options['iou_floor'] is not None else toolkit('MATCH_IOU_FLOOR')
        if not 0.0 <= iou_floor < 1.0:
            self.usage_error(f"--iou-floor must lie in [0, 1), got {iou_floor}")

        base = load_detections(options['base'], strict=options['strict'])
        extra = load_detections(options['extra'], strict=options['strict'])
        for name, document in (('base', base), ('extra', extra)):
            if document.kind != FLAT:
                raise DatasetFormatError("expected a flat detections document", location=f"{options[name]}: kind")
        if base.header.arity != extra.header.arity:
            raise SchemaMismatchError(
                f"base file declares {base.header.arity} extra classes, extra file {extra.header.arity}"
            )

        arity = base.header.arity
        detections = [d for d in base.flat if d.role == BASE_ROLE] + [d for d in extra.flat if d.role != BASE_ROLE]
        try:
            groups = associate_groups(detections, arity, iou_floor)
        except ValueError as exc:
            raise SchemaMismatchError(str(exc)) from exc
        logger.info(f"paired {len(detections)} detections into {len(groups)} groups")

        if options['output']:
            save_detections(options['output'], base.header, groups, GROUPED)
        else:
            self.emit_json(detections_document(base.header, groups, GROUPED))
