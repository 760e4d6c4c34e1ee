import json
import logging
from typing import Any, Dict

from django.core.cache import cache
from django.db.models import Count
from drf_spectacular.types import OpenApiTypes
from drf_spectacular.utils import OpenApiExample, OpenApiParameter, extend_schema
from rest_framework import generics, status
from rest_framework.decorators import api_view, permission_classes
from rest_framework.permissions import AllowAny
from rest_framework.response import Response
from rest_framework.throttling import ScopedRateThrottle
from rest_framework.views import APIView

from laboratory.enum import Command, RunStatus
from laboratory.exceptions import LaboratoryError
from laboratory.experiments import execute
from laboratory.models import ExperimentRun
from laboratory import reports
from .filters import ExperimentRunFilter
from .serializers import (
    CheckFrameConfigSerializer, CriterionConfigSerializer, ExperimentRunListSerializer,
    ExperimentRunSerializer, ReportEnvelopeSerializer, RunSummarySerializer,
)

logger = logging.getLogger(__name__)

SUMMARY_CACHE_KEY = 'laboratory_run_summary'
SUMMARY_CACHE_SECONDS = 300


@extend_schema(
    description="List archived experiment runs. Supports pagination, search by command/version, and filtering by command, status and creation time.",
    responses={
        200: ExperimentRunListSerializer(many=True),
        429: OpenApiTypes.OBJECT
    },
    parameters=[
        OpenApiParameter(
            name='ordering',
            type=OpenApiTypes.STR,
            location=OpenApiParameter.QUERY,
            description="Order results by: command, status, created. Use '-' prefix for descending order",
            examples=[
                OpenApiExample("Newest first", value="-created"),
                OpenApiExample("By command", value="command")
            ]
        )
    ]
)
class ExperimentRunListView(generics.ListAPIView):
    """
    List archived runs with filtering and search.
    """
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunListSerializer
    filterset_class = ExperimentRunFilter
    search_fields = ['command', 'version']
    ordering_fields = ['command', 'status', 'created']
    ordering = ['-created']
    throttle_classes = [ScopedRateThrottle]
    throttle_scope = "lab"


@extend_schema(
    description="Retrieve one archived run with its resolved config and full report.",
    responses={
        200: ExperimentRunSerializer,
        404: OpenApiTypes.OBJECT,
        429: OpenApiTypes.OBJECT
    },
    parameters=[
        OpenApiParameter(
            name='id',
            type=OpenApiTypes.UUID,
            location=OpenApiParameter.PATH,
            description="UUID of the run",
            required=True
        )
    ]
)
class ExperimentRunDetailView(generics.RetrieveAPIView):
    """
    Retrieve a specific archived run.
    """
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    lookup_field = 'id'
    throttle_classes = [ScopedRateThrottle]
    throttle_scope = "lab"


@extend_schema(
    description="Counts of archived runs per command and per status. Cached for five minutes.",
    responses={200: RunSummarySerializer}
)
@api_view(['GET'])
@permission_classes([AllowAny])
def run_summary(request) -> Response:
    """Run counts per command and status."""
    cached_data = cache.get(SUMMARY_CACHE_KEY)
    if cached_data:
        return Response(cached_data, status=status.HTTP_200_OK)

    by_command = dict(
        ExperimentRun.objects.values('command').annotate(count=Count('id')).values_list('command', 'count')
    )
    by_status = dict(
        ExperimentRun.objects.values('status').annotate(count=Count('id')).values_list('status', 'count')
    )
    for choice, _ in Command.choices:
        by_command.setdefault(choice, 0)
    for choice, _ in RunStatus.choices:
        by_status.setdefault(choice, 0)

    serializer = RunSummarySerializer({
        'total': sum(by_command.values()),
        'by_command': by_command,
        'by_status': by_status,
    })
    cache.set(SUMMARY_CACHE_KEY, serializer.data, SUMMARY_CACHE_SECONDS)
    return Response(serializer.data, status=status.HTTP_200_OK)


def _run_posted(request, command: str, serializer_class) -> Response:
    payload: Dict[str, Any] = dict(request.data)
    archive = bool(payload.pop('archive', False))
    serializer = serializer_class(data=payload)
    serializer.is_valid(raise_exception=True)
    cfg = serializer.validated_data
    try:
        document, _ = execute(command, cfg)
    except LaboratoryError as exc:
        if exc.exit_code == 2:
            return Response(reports.to_jsonable(reports.error_body(exc)), status=status.HTTP_400_BAD_REQUEST)
        document = reports.envelope(Command(command).value, cfg, reports.error_body(exc), exc.exit_code)

    # round trip through the canonical dump so the response matches the CLI report byte for byte
    document = json.loads(reports.dumps(document))
    if archive:
        run = ExperimentRun.archive(document)
        cache.delete(SUMMARY_CACHE_KEY)
        logger.info(f"Archived {command} run {run.id}")
    return Response(ReportEnvelopeSerializer(document).data, status=status.HTTP_200_OK)


@extend_schema(
    description="Run the frame checks (homogeneity, divergence, Hoermander rank, NTD) on a posted config. Set 'archive' to store the run.",
    request=CheckFrameConfigSerializer,
    responses={
        200: ReportEnvelopeSerializer,
        400: OpenApiTypes.OBJECT,
        429: OpenApiTypes.OBJECT
    },
    examples=[
        OpenApiExample(
            "Grushin preset",
            value={"preset": "grushin", "points": 20, "seed": 7},
            request_only=True
        )
    ]
)
class CheckFrameRunView(APIView):
    """
    Run check-frame synchronously.
    """
    permission_classes = [AllowAny]
    throttle_classes = [ScopedRateThrottle]
    throttle_scope = "lab"

    def post(self, request) -> Response:
        return _run_posted(request, Command.CHECK_FRAME, CheckFrameConfigSerializer)


@extend_schema(
    description="Run the full Liouville criterion on a posted config. Set 'archive' to store the run.",
    request=CriterionConfigSerializer,
    responses={
        200: ReportEnvelopeSerializer,
        400: OpenApiTypes.OBJECT,
        429: OpenApiTypes.OBJECT
    },
    examples=[
        OpenApiExample(
            "H^1 with drift",
            value={
                "preset": "heisenberg:1",
                "potential": {"family": "drift-example", "alpha": 1.5},
                "drift": {"kind": "radial-cutoff", "beta": 1},
                "rho0": 2, "kappa": 10, "lambda": 1
            },
            request_only=True
        )
    ]
)
class CriterionRunView(APIView):
    """
    Run the criterion synchronously.
    """
    permission_classes = [AllowAny]
    throttle_classes = [ScopedRateThrottle]
    throttle_scope = "lab"

    def post(self, request) -> Response:
        return _run_posted(request, Command.CRITERION, CriterionConfigSerializer)
