# laboratory/tests/test_api.py
import pytest
from django.core.cache import cache
from django.urls import reverse

from laboratory.models import ExperimentRun


@pytest.fixture(autouse=True)
def clear_cache():
    cache.clear()
    yield
    cache.clear()


@pytest.mark.django_db
def test_run_list(api_client, archived_run):
    url = reverse("laboratory:run-list")
    response = api_client.get(url)
    assert response.status_code == 200
    assert response.data["results"][0]["command"] == "check-frame"


@pytest.mark.django_db
def test_run_list_filters(api_client, archived_run):
    url = reverse("laboratory:run-list")
    assert api_client.get(url, {"command": "solve"}).data["count"] == 0
    assert api_client.get(url, {"status": "passed"}).data["count"] == 1
    assert api_client.get(url, {"search": "check"}).data["count"] == 1


@pytest.mark.django_db
def test_run_detail(api_client, archived_run):
    url = reverse("laboratory:run-detail", args=[archived_run.id])
    response = api_client.get(url)
    assert response.status_code == 200
    assert response.data["report"]["report"] == {"passed": True}


@pytest.mark.django_db
def test_run_summary(api_client, archived_run):
    url = reverse("laboratory:run-summary")
    response = api_client.get(url)
    assert response.status_code == 200
    assert response.data["total"] == 1
    assert response.data["by_command"]["check-frame"] == 1
    assert response.data["by_status"]["failed"] == 0


@pytest.mark.django_db
def test_check_frame_run(api_client):
    url = reverse("laboratory:check-frame")
    response = api_client.post(url, {"preset": "grushin", "points": 20, "seed": 7}, format="json")
    assert response.status_code == 200
    assert response.data["exit_code"] == 0
    assert response.data["report"]["passed"] is True
    assert not ExperimentRun.objects.exists()


@pytest.mark.django_db
def test_check_frame_archive_refreshes_summary(api_client):
    summary = reverse("laboratory:run-summary")
    assert api_client.get(summary).data["total"] == 0

    url = reverse("laboratory:check-frame")
    response = api_client.post(url, {"preset": "grushin", "points": 5, "archive": True}, format="json")
    assert response.status_code == 200
    assert ExperimentRun.objects.count() == 1
    assert api_client.get(summary).data["total"] == 1


@pytest.mark.django_db
def test_invalid_config_is_rejected(api_client):
    url = reverse("laboratory:check-frame")
    response = api_client.post(url, {"preset": "grushin", "colour": "blue"}, format="json")
    assert response.status_code == 400
    assert "colour" in response.data


@pytest.mark.django_db
def test_criterion_run(api_client):
    url = reverse("laboratory:criterion")
    payload = {
        "preset": "heisenberg:1",
        "potential": {"family": "drift-example", "alpha": 1.5},
        "drift": {"kind": "radial-cutoff", "beta": 1},
        "rho0": 2, "kappa": 10, "lambda": 1,
    }
    response = api_client.post(url, payload, format="json")
    assert response.status_code == 200
    assert response.data["exit_code"] == 0
    assert response.data["report"]["criterion"]["overall"] == "liouville_holds"


@pytest.mark.django_db
def test_criterion_needs_preset_for_family(api_client):
    url = reverse("laboratory:criterion")
    payload = {
        "frame": {"vector_fields": [["1", "0"], ["0", "x1"]], "weights": [1, 2]},
        "norm": {"expression": "(x1^4 + x2^2)^(1/4)", "weights": [1, 2], "unit_box": [1, 1]},
        "potential": {"family": "plain", "alpha": 1.5},
        "rho0": 1, "kappa": 1,
    }
    response = api_client.post(url, payload, format="json")
    assert response.status_code == 400
    assert response.data["error"] == "PreconditionError"
