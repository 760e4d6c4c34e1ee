# laboratory/tests/conftest.py
import numpy as np
import pytest
from rest_framework.test import APIClient

from laboratory.criterion import CriterionConfig, OperatorSpec
from laboratory.models import ExperimentRun
from laboratory.presets import drift, potential, resolve_preset


@pytest.fixture
def api_client():
    return APIClient()


@pytest.fixture
def heisenberg():
    return resolve_preset('heisenberg:1')


@pytest.fixture
def grushin():
    return resolve_preset('grushin')


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def drift_example_spec(heisenberg):
    """H^1 with Q = (1 + N^4)^(-3/8) + gradient term, radial cutoff drift with beta = 1."""
    Q, q_hat = potential(heisenberg, 'drift-example', 1.5)
    spec = OperatorSpec(heisenberg.frame, drift(heisenberg, 'radial-cutoff', 1.0), Q)
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=q_hat, kappa=10.0, lam=1.0)
    return spec, cfg


@pytest.fixture
def archived_run():
    document = {
        'tool': 'liouville-lab',
        'version': '1.0.0',
        'command': 'check-frame',
        'resolved_config': {'preset': 'grushin', 'seed': 7, 'points': 20},
        'created': '2024-02-29T00:00:00+00:00',
        'exit_code': 0,
        'report': {'passed': True},
    }
    return ExperimentRun.archive(document)
