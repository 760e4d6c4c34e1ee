from django.urls import path

from laboratory.api.api import (
    CheckFrameRunView,
    CriterionRunView,
    ExperimentRunDetailView,
    ExperimentRunListView,
    run_summary,
)

app_name = 'laboratory'

urlpatterns = [
    # Archived runs
    path('runs/', ExperimentRunListView.as_view(), name='run-list'),
    path('runs/summary/', run_summary, name='run-summary'),
    path('runs/<uuid:id>/', ExperimentRunDetailView.as_view(), name='run-detail'),

    # Synchronous experiments
    path('check-frame/', CheckFrameRunView.as_view(), name='check-frame'),
    path('criterion/', CriterionRunView.as_view(), name='criterion'),
]
