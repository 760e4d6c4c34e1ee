# laboratory/tests/test_criterion.py
import math

import numpy as np
import pytest

from laboratory.criterion import (
    CriterionConfig,
    InnerIntegral,
    OperatorSpec,
    PowerLawSurface,
    SamplingPlan,
    check_G_far,
    check_G_near,
    check_S,
    classify_integral,
    liouville_check,
    sample_far,
    sample_near,
)
from laboratory.enum import IntegralVerdict, Overall
from laboratory.exceptions import DimensionMismatchError, PreconditionError
from laboratory.expressions import ScalarExpr
from laboratory.presets import drift, potential


def profile(text):
    return ScalarExpr.parse_in(text, ['t'])


def test_operator_spec_dimensions(grushin):
    with pytest.raises(DimensionMismatchError):
        OperatorSpec(grushin.frame, (ScalarExpr.constant(0, 2),), ScalarExpr.constant(1, 2))
    spec = OperatorSpec.without_drift(grushin.frame, ScalarExpr.constant(1, 2))
    assert not spec.has_drift
    assert spec.drift_defect(np.zeros((3, 2))).tolist() == [0.0, 0.0, 0.0]


def test_drift_defect_counts_negative_divergence(grushin):
    # div_X b = X_1(-x1) = -1
    spec = OperatorSpec(grushin.frame, (ScalarExpr.parse("-x1", 2), ScalarExpr.constant(0, 2)),
                        ScalarExpr.constant(1, 2))
    assert spec.drift_defect(np.array([[2.0, 0.0]]))[0] == pytest.approx(5.0)


@pytest.mark.parametrize("kwargs", [
    {'rho0': 0.0},
    {'kappa': -1.0},
    {'lam': 0.0},
    {'q_hat': 't - 100'},
    {'q_hat': '0*t'},
])
def test_criterion_config_validation(heisenberg, kwargs):
    values = {'rho0': 1.0, 'q_hat': 't^(-2)', 'kappa': 1.0, 'lam': 1.0}
    values.update(kwargs)
    values['q_hat'] = profile(values['q_hat'])
    with pytest.raises(PreconditionError):
        CriterionConfig(norm=heisenberg.norm, **values)


def test_check_S(grushin, rng):
    points = rng.uniform(-1, 1, (1000, 2))
    positive = OperatorSpec.without_drift(grushin.frame, ScalarExpr.parse("1 + x1^2", 2))
    assert check_S(positive, points).passed

    signed = check_S(OperatorSpec.without_drift(grushin.frame, ScalarExpr.parse("x1", 2)), points)
    assert not signed.passed
    assert signed.witness[0] < 0

    assert not check_S(OperatorSpec.without_drift(grushin.frame, ScalarExpr.constant(0, 2)), points).passed
    with pytest.raises(PreconditionError):
        check_S(positive, points[:10])


def test_inner_integral_of_inverse_square_profile():
    inner = InnerIntegral(profile('t^(-2)'), 1.0, 4)
    np.testing.assert_allclose(inner(np.array([1.0, 2.0, 8.0])), [0.0, math.log(2.0), math.log(8.0)], atol=1e-8)
    with pytest.raises(PreconditionError):
        inner(np.array([100.0]))


def test_sampling_respects_shells(heisenberg):
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=profile('t^(-2)'), kappa=1.0, lam=1.0,
                          r_max_octaves=3)
    plan = SamplingPlan(near_samples=100, far_samples_per_octave=50, seed=1)
    far = sample_far(heisenberg.norm, cfg, plan)
    near = sample_near(heisenberg.norm, cfg, plan)
    assert far.shape == (150, 3)
    assert np.all((heisenberg.norm(far) > 2.0) & (heisenberg.norm(far) <= 16.0))
    assert np.all(heisenberg.norm(near) <= 2.0)
    np.testing.assert_array_equal(far, sample_far(heisenberg.norm, cfg, plan))


@pytest.mark.parametrize("q_hat, D, verdict", [
    ('t^(-2)', 4, IntegralVerdict.DIVERGENT),
    ('t^(-1.5)', 4, IntegralVerdict.DIVERGENT),
    ('t^(-3)', 4, IntegralVerdict.CONVERGENT),
    ('t^(-3)', 2, IntegralVerdict.DIVERGENT),
])
def test_closed_form_classification(heisenberg, q_hat, D, verdict):
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=1.0, q_hat=profile(q_hat), kappa=1.0, lam=1.0)
    report = classify_integral(PowerLawSurface(1.0, D - 1), cfg)
    assert report.method == 'closed-form'
    assert report.verdict == verdict


@pytest.mark.parametrize("q_hat, verdict", [
    ('t^(-2)', IntegralVerdict.DIVERGENT),
    ('t^(-4)', IntegralVerdict.CONVERGENT),
])
def test_ladder_classification(heisenberg, q_hat, verdict):
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=1.0, q_hat=profile(q_hat), kappa=1.0, lam=1.0)
    report = classify_integral(PowerLawSurface(1.0, 3.0), cfg, method='ladder', octaves=20)
    assert report.method == 'ladder'
    assert report.verdict == verdict


def test_closed_form_needs_power_law(heisenberg):
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=1.0, q_hat=profile('t^(-2)*log(1 + t)'), kappa=1.0, lam=1.0)
    with pytest.raises(PreconditionError):
        classify_integral(PowerLawSurface(1.0, 3.0), cfg, method='closed-form')
    assert classify_integral(PowerLawSurface(1.0, 3.0), cfg, octaves=12).method == 'ladder'


def test_far_check_without_drift(heisenberg):
    Q, q_hat = potential(heisenberg, 'gradient', 1.5)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=q_hat, kappa=1.0, lam=1.0, r_max_octaves=4)
    far = sample_far(heisenberg.norm, cfg, SamplingPlan(far_samples_per_octave=200, seed=3))
    report = check_G_far(spec, cfg, far)
    assert report.passed
    assert report.potential_ok
    assert report.kappa_estimate == 0.0
    assert len(report.octave_kappas) == 4


def test_far_check_reports_potential_witness(heisenberg):
    Q, _ = potential(heisenberg, 'gradient', 3.0)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=profile('t^(-1)'), kappa=1.0, lam=1.0,
                          r_max_octaves=4)
    far = sample_far(heisenberg.norm, cfg, SamplingPlan(far_samples_per_octave=200, seed=3))
    report = check_G_far(spec, cfg, far)
    assert not report.potential_ok
    assert not report.passed
    assert report.potential_witness is not None


def test_near_check_needs_potential_where_drift_lives(grushin):
    cfg = CriterionConfig(norm=grushin.norm, rho0=2.0, q_hat=profile('t^(-2)'), kappa=1.0, lam=1.0)
    one = ScalarExpr.constant(1, 2)
    spec = OperatorSpec(grushin.frame, (one, one), ScalarExpr.parse("x1^2", 2))
    report = check_G_near(spec, cfg, np.array([[0.0, 0.1], [0.5, 0.5]]))
    assert not report.passed
    assert math.isinf(report.kappa_estimate)
    assert report.witness == (0.0, 0.1)

    quiet = check_G_near(OperatorSpec.without_drift(grushin.frame, one), cfg, np.array([[0.5, 0.5]]))
    assert quiet.passed
    assert quiet.kappa_estimate == 1.0


def test_drift_example_satisfies_the_criterion(drift_example_spec):
    spec, cfg = drift_example_spec
    report = liouville_check(spec, cfg, PowerLawSurface(1.0, 3.0), SamplingPlan(seed=20240229))
    assert report.S_ok
    assert report.G_far_ok
    assert report.G_near_ok
    assert report.integral.verdict == IntegralVerdict.DIVERGENT
    assert report.overall == Overall.LIOUVILLE_HOLDS
    assert report.G_far.kappa_estimate <= cfg.kappa


def test_fast_decay_is_inconclusive(heisenberg):
    Q, q_hat = potential(heisenberg, 'plain', 3.0)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=q_hat, kappa=1.0, lam=1.0)
    report = liouville_check(spec, cfg, PowerLawSurface(1.0, 3.0), SamplingPlan(seed=5))
    assert report.integral.verdict == IntegralVerdict.CONVERGENT
    assert report.overall == Overall.INCONCLUSIVE


@pytest.mark.parametrize("alpha", [1, 1.5, 2, 2.5, 3])
@pytest.mark.parametrize("D", [3, 4, 6])
def test_ladder_agrees_with_closed_form(heisenberg, alpha, D):
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=1.0, q_hat=profile(f't^(-{alpha})'), kappa=1.0, lam=1.0)
    surface = PowerLawSurface(1.0, D - 1)
    closed = classify_integral(surface, cfg, method='closed-form')
    ladder = classify_integral(surface, cfg, method='ladder')
    expected = IntegralVerdict.DIVERGENT if alpha <= 2 else IntegralVerdict.CONVERGENT
    assert closed.verdict == expected
    assert ladder.verdict == closed.verdict


def test_drift_decaying_too_slowly_fails_far_check(heisenberg, drift_example_spec):
    Q, q_hat = potential(heisenberg, 'drift-example', 2.0)
    spec = OperatorSpec(heisenberg.frame, drift(heisenberg, 'radial-cutoff', 0.5), Q)
    cfg = CriterionConfig(norm=heisenberg.norm, rho0=2.0, q_hat=q_hat, kappa=10.0, lam=1.0)
    plan = SamplingPlan(seed=20240229)
    report = check_G_far(spec, cfg, sample_far(heisenberg.norm, cfg, plan))
    assert report.potential_ok
    assert not report.passed
    assert report.blow_up
    kappas = np.array(report.octave_kappas)
    assert kappas[-1] > 2.0 * kappas[1]
    assert np.all(np.diff(kappas[4:]) > 0.0)

    tuned_spec, tuned_cfg = drift_example_spec
    tuned = check_G_far(tuned_spec, tuned_cfg, sample_far(heisenberg.norm, tuned_cfg, plan))
    assert tuned.passed
    assert not tuned.blow_up
    assert tuned.kappa_estimate < 5.0
