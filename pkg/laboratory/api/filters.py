import django_filters
from django.db import models

from laboratory.enum import Command, RunStatus
from laboratory.models import ExperimentRun


class ExperimentRunFilter(django_filters.FilterSet):
    """Filtering for archived runs."""

    command = django_filters.ChoiceFilter(choices=Command.choices)
    status = django_filters.ChoiceFilter(choices=RunStatus.choices)
    version = django_filters.CharFilter(lookup_expr='icontains')
    search = django_filters.CharFilter(method='filter_search')
    created_after = django_filters.DateTimeFilter(
        field_name='created',
        lookup_expr='gte'
    )
    created_before = django_filters.DateTimeFilter(
        field_name='created',
        lookup_expr='lte'
    )

    class Meta:
        model = ExperimentRun
        fields = ['command', 'status', 'seed']

    def filter_search(self, queryset, name, value):
        """Search across command and version."""
        return queryset.filter(
            models.Q(command__icontains=value) |
            models.Q(version__icontains=value)
        )
