import logging
import math

from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from detections.conf import toolkit
from detections.exceptions import DetmatchError

from .experiments import BASELINE, MP, METRICS
from .models import ExperimentRun
from .pagination import ExperimentPagination
from .permissions import IsStaffOrReadOnly
from .serializers import ExperimentRunSerializer

logger = logging.getLogger(__name__)


def _finite(value):
    return None if value is None or math.isnan(value) else value


class ExperimentRunViewSet(viewsets.ModelViewSet):
    """
    Recorded simulator experiments.
    GET methods (list, retrieve, summary) are publicly accessible.
    Creating a run executes it synchronously; creating and deleting need a staff user.
    """
    queryset = ExperimentRun.objects.prefetch_related('results')
    serializer_class = ExperimentRunSerializer
    pagination_class = ExperimentPagination
    permission_classes = [IsStaffOrReadOnly]
    http_method_names = ['get', 'post', 'delete', 'head', 'options']

    def create(self, request, *args, **kwargs):
        serializer = self.get_serializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        run = serializer.save()
        try:
            run.execute(threads=toolkit('DEFAULT_THREADS'))
        except DetmatchError as exc:
            return Response({'detail': str(exc), 'id': run.pk}, status=status.HTTP_400_BAD_REQUEST)
        logger.info(f"experiment run {run.pk} finished with {run.results.count()} results")
        return Response(self.get_serializer(run).data, status=status.HTTP_201_CREATED)

    @action(detail=True, methods=['get'])
    def summary(self, request, pk=None):
        run = self.get_object()
        table = run.table()
        aggregate = {
            pipeline: {
                metric: {'mean': _finite(mean), 'stdev': _finite(stdev)}
                for metric, (mean, stdev) in metrics.items()
            }
            for pipeline, metrics in table.aggregate().items()
        }
        data = {'id': run.pk, 'status': run.status, 'seeds': len(run.seeds), 'pipelines': aggregate}
        if not run.ablation and table.rows:
            gaps = table.gaps(MP, BASELINE)
            data['ap_match_gap'] = {
                'mean': _finite(sum(gaps) / len(gaps)) if gaps else None,
                'sign_test_p': table.sign_test(MP, BASELINE),
            }
        data['metrics'] = list(METRICS)
        return Response(data)
