# laboratory/tests/test_serializers.py
import pytest

from laboratory.api.serializers import (
    BarrierConfigSerializer,
    CheckFrameConfigSerializer,
    CriterionConfigSerializer,
    DichotomyConfigSerializer,
    SolveConfigSerializer,
    SurfaceFactorConfigSerializer,
)
from laboratory.enum import PotentialFamily

GRUSHIN_FRAME = {'vector_fields': [["1", "0"], ["0", "x1"]], 'weights': [1, 2]}
GRUSHIN_NORM = {'expression': "(x1^4 + x2^2)^(1/4)", 'weights': [1, 2], 'unit_box': [1, 1]}


def test_check_frame_defaults(settings):
    settings.LABORATORY = {'SEED': 99, 'THREADS': 3}
    serializer = CheckFrameConfigSerializer(data={'preset': 'grushin'})
    assert serializer.is_valid(), serializer.errors
    data = serializer.validated_data
    assert data['points'] == 50
    assert data['seed'] == 99
    assert data['threads'] == 3


@pytest.mark.parametrize("payload", [
    {},
    {'preset': 'grushin', 'frame': GRUSHIN_FRAME},
    {'preset': 'grushin', 'colour': 'blue'},
    {'frame': {'vector_fields': [["1"]], 'weights': [1, 2]}},
])
def test_check_frame_rejects(payload):
    assert not CheckFrameConfigSerializer(data=payload).is_valid()


def test_literal_frame_needs_norm_for_surface_factor():
    serializer = SurfaceFactorConfigSerializer(data={'frame': GRUSHIN_FRAME, 'radii': [1, 2]})
    assert not serializer.is_valid()
    assert 'norm' in serializer.errors

    serializer = SurfaceFactorConfigSerializer(data={'frame': GRUSHIN_FRAME, 'norm': GRUSHIN_NORM, 'radii': [1, 2]})
    assert serializer.is_valid(), serializer.errors


def test_criterion_maps_lambda_and_fills_sections():
    serializer = CriterionConfigSerializer(data={
        'preset': 'heisenberg:1',
        'potential': {'family': 'drift-example', 'alpha': 1.5},
        'rho0': 2, 'kappa': 10, 'lambda': 0.5,
    })
    assert serializer.is_valid(), serializer.errors
    data = serializer.validated_data
    assert data['lam'] == 0.5
    assert data['drift']['kind'] == 'none'
    assert data['surface']['model'] == 'homogeneous'
    assert data['sampling']['near_samples'] == 2000
    assert data['r_max_octaves'] == 10
    assert data['integral_method'] == 'auto'


def test_literal_potential_needs_profile():
    payload = {'preset': 'grushin', 'potential': {'expression': '1/(1 + x1^4 + x2^2)'}, 'rho0': 1, 'kappa': 1}
    serializer = CriterionConfigSerializer(data=payload)
    assert not serializer.is_valid()
    assert 'q_hat' in serializer.errors
    assert CriterionConfigSerializer(data={**payload, 'q_hat': 't^(-4)/2'}).is_valid()


@pytest.mark.parametrize("section", [
    {'family': 'plain'},
    {'family': 'plain', 'alpha': 1, 'expression': 'x1'},
    {'family': 'cubic', 'alpha': 1},
])
def test_potential_section_rejects(section):
    payload = {'preset': 'grushin', 'potential': section, 'rho0': 1, 'kappa': 1, 'q_hat': 't^(-2)'}
    assert not CriterionConfigSerializer(data=payload).is_valid()


def test_drift_literal_needs_expressions():
    payload = {'preset': 'grushin', 'half_width': 1, 'drift': {'kind': 'literal'}}
    assert not SolveConfigSerializer(data=payload).is_valid()
    payload['drift']['expressions'] = ['x1', '0']
    assert SolveConfigSerializer(data=payload).is_valid()


def test_solve_accepts_numbers_or_expressions():
    serializer = SolveConfigSerializer(data={'preset': 'grushin', 'half_width': 1, 'boundary': 1, 'rhs': 'x1'})
    assert serializer.is_valid(), serializer.errors
    assert serializer.validated_data['boundary'] == 1.0
    assert serializer.validated_data['rhs'] == 'x1'
    assert serializer.validated_data['method'] == 'auto'
    assert not SolveConfigSerializer(data={'preset': 'grushin', 'half_width': 1, 'boundary': True}).is_valid()


def test_dichotomy_defaults_and_preset_only():
    serializer = DichotomyConfigSerializer(data={'preset': 'heisenberg:1', 'alphas': [1.5, 3]})
    assert serializer.is_valid(), serializer.errors
    data = serializer.validated_data
    assert data['family'] == PotentialFamily.GRADIENT
    assert data['ladder'] == [2.0, 4.0, 8.0]
    assert data['barrier']['variant'] == 'radial'
    assert not DichotomyConfigSerializer(data={'frame': GRUSHIN_FRAME, 'alphas': [1]}).is_valid()
    assert not DichotomyConfigSerializer(data={'preset': 'heisenberg:1', 'alphas': []}).is_valid()


def test_barrier_section_rejects_unknown_keys():
    serializer = BarrierConfigSerializer(data={'preset': 'heisenberg:1', 'alpha': 3, 'barrier': {'gamma': 1}})
    assert not serializer.is_valid()


def test_half_widths_must_be_multiples_of_h():
    serializer = DichotomyConfigSerializer(data={'preset': 'heisenberg:1', 'alphas': [2], 'ladder': [1, 1.25],
                                                 'h': 0.5})
    assert not serializer.is_valid()
    assert 'ladder' in serializer.errors
    assert DichotomyConfigSerializer(data={'preset': 'heisenberg:1', 'alphas': [2], 'ladder': [1.5, 3],
                                           'h': 0.5}).is_valid()

    serializer = SolveConfigSerializer(data={'preset': 'grushin', 'half_width': 1.25, 'h': 0.5})
    assert not serializer.is_valid()
    assert 'half_width' in serializer.errors


def test_default_spacing_is_used_for_the_ladder_check(settings):
    settings.LABORATORY = {'GRID_SPACING': 0.5}
    assert not DichotomyConfigSerializer(data={'preset': 'heisenberg:1', 'alphas': [2], 'ladder': [1.25]}).is_valid()
