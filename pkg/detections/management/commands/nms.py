import logging

from detections.conf import toolkit
from detections.exceptions import DatasetFormatError
from detections.formats import FLAT, GROUPED, detections_document, load_detections, save_detections
from detections.management.base import DetmatchCommand
from detections.suppression import SuppressionMode, SuppressionParams, flat_nms_indices, suppress_by_image

logger = logging.getLogger(__name__)

MODES = ['per-class', 'base', 'joint', 'set']


class Command(DetmatchCommand):
    help = "Run per-class NMS on flat detections or group NMS (base, joint, set) on grouped detections."

    def add_arguments(self, parser):
        parser.add_argument('--mode', choices=MODES, default='set')
        parser.add_argument('--iou', type=float, default=None, help='Suppression IoU threshold.')
        parser.add_argument('--input', required=True, help='Detections document.')
        parser.add_argument('--output', help='Where to write kept detections (stdout when omitted).')

    def run(self, *args, **options):
        iou_threshold = options['iou'] if options['iou'] is not None else toolkit('NMS_IOU_THRESHOLD')
        try:
            params = SuppressionParams(iou_threshold, options['mode'])
        except ValueError as exc:
            self.usage_error(str(exc))

        detections = load_detections(options['input'], strict=options['strict'])
        if params.mode is SuppressionMode.PER_CLASS:
            if detections.kind != FLAT:
                raise DatasetFormatError("per-class mode needs a flat detections document", location="kind")
            kept = [detections.flat[i] for i in flat_nms_indices(detections.flat, params.iou_threshold)]
        else:
            if detections.kind != GROUPED:
                raise DatasetFormatError(f"{params.mode.value} mode needs a grouped detections document", location="kind")
            kept = suppress_by_image(detections.grouped, params)
        logger.info(f"{params.mode.value} NMS kept {len(kept)} of {len(detections.records)} detections")

        if options['output']:
            save_detections(options['output'], detections.header, kept, detections.kind)
        else:
            self.emit_json(detections_document(detections.header, kept, detections.kind))
