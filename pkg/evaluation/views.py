import logging

from rest_framework import permissions, serializers, status
from rest_framework.response import Response
from rest_framework.views import APIView

from detections.conf import toolkit
from detections.exceptions import DetmatchError, MetricInvariantError
from detections.formats import DETECTIONS_FORMAT, FLAT, GROUPED, GROUPS_FORMAT, parse_detections, parse_groups
from detections.serializers import StrictFloatField

from .metrics import evaluate, evaluate_flat

logger = logging.getLogger(__name__)


class EvaluateRequestSerializer(serializers.Serializer):
    header = serializers.DictField()
    gts = serializers.ListField(child=serializers.DictField(), allow_empty=True)
    dets = serializers.ListField(child=serializers.DictField(), allow_empty=True)
    kind = serializers.ChoiceField(choices=[GROUPED, FLAT], default=GROUPED)
    thr = StrictFloatField(required=False)
    curves = serializers.BooleanField(default=False)

    def validate_thr(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("thr must lie strictly inside (0, 1).")
        return value


class EvaluateView(APIView):
    """
    Score detections against ground-truth groups sharing one header.

    Grouped detections get per-class and match metrics; flat detections
    per-class metrics only.
    """
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = EvaluateRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        data = serializer.validated_data
        thr = data.get('thr', toolkit('EVAL_IOU_THRESHOLD'))
        try:
            header, gts = parse_groups({'format': GROUPS_FORMAT, 'header': data['header'], 'groups': data['gts']})
            detections = parse_detections({
                'format': DETECTIONS_FORMAT, 'header': data['header'], 'kind': data['kind'], 'detections': data['dets'],
            })
            if detections.kind == GROUPED:
                result = evaluate(detections.grouped, gts, thr, header=header)
            else:
                result = evaluate_flat(detections.flat, gts, thr, header=header)
        except MetricInvariantError as exc:
            logger.error(f"metric invariant violated: {exc}")
            return Response({'detail': str(exc)}, status=status.HTTP_500_INTERNAL_SERVER_ERROR)
        except DetmatchError as exc:
            return Response({'detail': str(exc)}, status=status.HTTP_400_BAD_REQUEST)
        return Response(result.as_dict(include_curves=data['curves']))
