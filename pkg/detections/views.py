import logging

from rest_framework import permissions, serializers, status
from rest_framework.response import Response
from rest_framework.views import APIView

from .association import pair_by_iou
from .conf import loss_defaults, toolkit
from .exceptions import SchemaMismatchError
from .groups import common_arity
from .losses import LOSSES, finite_difference_check
from .serializers import (
    BoxField,
    FlatDetectionSerializer,
    GroupDetectionSerializer,
    IdentifierField,
    StrictFloatField,
)
from .suppression import (
    SuppressionMode,
    SuppressionParams,
    flat_nms_indices,
    suppress_by_image,
)

logger = logging.getLogger(__name__)

MODE_CHOICES = [m.value for m in SuppressionMode] + ['per-class', 'base', 'base-only']


class NmsRequestSerializer(serializers.Serializer):
    mode = serializers.ChoiceField(choices=MODE_CHOICES, default=SuppressionMode.SET.value)
    iou_threshold = StrictFloatField(required=False)
    groups = GroupDetectionSerializer(many=True, required=False)
    detections = FlatDetectionSerializer(many=True, required=False)

    def validate(self, attrs):
        threshold = attrs.get('iou_threshold', toolkit('NMS_IOU_THRESHOLD'))
        try:
            attrs['params'] = SuppressionParams(threshold, attrs['mode'])
        except ValueError as exc:
            raise serializers.ValidationError({'iou_threshold': [str(exc)]})
        key = 'detections' if attrs['params'].mode is SuppressionMode.PER_CLASS else 'groups'
        if key not in attrs:
            raise serializers.ValidationError({key: [f"Required for mode {attrs['params'].mode.value}."]})
        if key == 'groups':
            attrs['groups'] = [GroupDetectionSerializer().create(dict(g)) for g in attrs['groups']]
            try:
                common_arity(attrs['groups'])
            except SchemaMismatchError as exc:
                raise serializers.ValidationError({'groups': [str(exc)]})
        else:
            attrs['detections'] = [FlatDetectionSerializer().create(dict(d)) for d in attrs['detections']]
        return attrs


class NmsView(APIView):
    """Suppress duplicate groups, or per-class detections, image by image."""
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = NmsRequestSerializer(data=request.data, context={'strict': True})
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        params = serializer.validated_data['params']
        if params.mode is SuppressionMode.PER_CLASS:
            dets = serializer.validated_data['detections']
            kept = [dets[i] for i in flat_nms_indices(dets, params.iou_threshold)]
            records = FlatDetectionSerializer(kept, many=True).data
            total = len(dets)
        else:
            groups = serializer.validated_data['groups']
            kept = suppress_by_image(groups, params)
            records = GroupDetectionSerializer(kept, many=True).data
            total = len(groups)
        logger.debug(f"{params.mode.value} NMS over the API kept {len(kept)} of {total}")
        return Response({'mode': params.mode.value, 'iou_threshold': params.iou_threshold,
                         'kept': records, 'suppressed': total - len(kept)})


class ScoredBoxSerializer(serializers.Serializer):
    score = StrictFloatField(min_value=0.0, max_value=1.0)
    box = BoxField()


class MatchRequestSerializer(serializers.Serializer):
    iou_floor = StrictFloatField(required=False, min_value=0.0)
    image_id = IdentifierField(required=False)
    class_id = serializers.IntegerField(min_value=0, default=0)
    base = ScoredBoxSerializer(many=True)
    extra = ScoredBoxSerializer(many=True)

    def validate_iou_floor(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("iou_floor must lie in [0, 1).")
        return value


class MatchView(APIView):
    """Pair independently detected base and extra boxes of one image by Hungarian assignment."""
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = MatchRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        data = serializer.validated_data
        groups = pair_by_iou(
            [(d['score'], d['box']) for d in data['base']],
            [(d['score'], d['box']) for d in data['extra']],
            iou_floor=data.get('iou_floor', toolkit('MATCH_IOU_FLOOR')),
            image_id=data.get('image_id', 0),
            class_id=data['class_id'],
        )
        return Response({'groups': GroupDetectionSerializer(groups, many=True).data})


class GradientCheckSerializer(serializers.Serializer):
    loss = serializers.ChoiceField(choices=sorted(LOSSES))
    point = serializers.DictField()
    epsilon = StrictFloatField(min_value=0.0, default=1e-5)

    def validate_epsilon(self, value):
        if value <= 0:
            raise serializers.ValidationError("epsilon must be positive.")
        return value


class CheckGradientsView(APIView):
    """Finite-difference check of a loss's analytic gradient at one point."""
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = GradientCheckSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        data = serializer.validated_data
        try:
            report = finite_difference_check(data['loss'], {**loss_defaults(), **data['point']}, data['epsilon'])
        except (KeyError, TypeError, ValueError) as exc:
            return Response({'point': [f"Malformed {data['loss']} point: {exc}"]}, status=status.HTTP_400_BAD_REQUEST)
        return Response(report.as_dict())
