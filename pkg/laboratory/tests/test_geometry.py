# laboratory/tests/test_geometry.py
import numpy as np
import pytest

from laboratory.exceptions import DimensionMismatchError, FitError, MonteCarloError
from laboratory.expressions import ScalarExpr
from laboratory.fields import DilationWeights
from laboratory.geometry import (
    ExhaustionNorm,
    gradient_norm_squared,
    homogeneous_dimension,
    horizontal_divergence,
    horizontal_gradient,
    horizontal_gradient_exprs,
    kaplan_norm,
    power_law_fit,
    radial_power_sublaplacian,
    sublaplacian_expr,
    surface_factor,
    surface_factor_scan,
    volume_functional,
)
from laboratory.presets import drift, resolve_preset


def test_kaplan_norm_values_and_homogeneity(heisenberg, rng):
    norm = heisenberg.norm
    assert norm([1.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert norm([0.0, 0.0, 0.25]) == pytest.approx(1.0)
    points = rng.uniform(-1, 1, (20, 3))
    np.testing.assert_allclose(norm(norm.weights.dilate(points, 3.0)), 3.0 * norm(points))


def test_scaled_kaplan_norm():
    norm = kaplan_norm(1, 2.0)
    assert norm([1.0, 0.0, 0.0]) == pytest.approx(2.0)
    assert norm.unit_box == (0.5, 0.5, 0.0625)


def test_kaplan_gradient_is_rho_over_norm(heisenberg, rng):
    points = rng.uniform(-2, 2, (30, 3))
    grad2 = gradient_norm_squared(heisenberg.frame, heisenberg.norm.expr).evaluate(points)
    rho2 = points[:, 0] ** 2 + points[:, 1] ** 2
    np.testing.assert_allclose(grad2, rho2 / heisenberg.norm(points) ** 2, rtol=1e-10)
    assert horizontal_gradient(heisenberg.frame, heisenberg.norm.expr, points).shape == (30, 2)


def test_fundamental_solution_is_harmonic(heisenberg, rng):
    D = homogeneous_dimension(heisenberg.norm.weights)
    assert D == 4
    gamma = heisenberg.norm.expr ** (2 - D)
    points = rng.uniform(0.5, 2, (10, 3))
    values = sublaplacian_expr(heisenberg.frame, gamma).evaluate(points)
    np.testing.assert_allclose(values, 0.0, atol=1e-9)


def test_radial_power_closed_form(heisenberg, rng):
    points = rng.uniform(0.5, 2, (10, 3))
    grad2 = gradient_norm_squared(heisenberg.frame, heisenberg.norm.expr)
    closed = radial_power_sublaplacian(heisenberg.norm, grad2, 1.5, 4).evaluate(points)
    symbolic = sublaplacian_expr(heisenberg.frame, heisenberg.norm.expr ** 1.5).evaluate(points)
    np.testing.assert_allclose(closed, symbolic, rtol=1e-8)


def test_horizontal_divergence_of_gradient_is_sublaplacian(grushin, rng):
    u = ScalarExpr.parse("x1^4 + x1*x2^2", 2)
    points = rng.uniform(-1, 1, (5, 2))
    F = horizontal_gradient_exprs(grushin.frame, u)
    np.testing.assert_allclose(
        horizontal_divergence(grushin.frame, F, points),
        sublaplacian_expr(grushin.frame, u).evaluate(points),
    )


def test_norm_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        ExhaustionNorm(expr=ScalarExpr.parse("x1", 1), weights=DilationWeights((1, 2)), unit_box=(1.0, 1.0))


def test_volume_functional_scales_with_homogeneous_dimension(heisenberg):
    small = volume_functional(heisenberg.frame, heisenberg.norm, 1.0, samples=40_000, replicates=4, seed=3)
    large = volume_functional(heisenberg.frame, heisenberg.norm, 2.0, samples=40_000, replicates=4, seed=3)
    assert large.value / small.value == pytest.approx(16.0, rel=0.1)
    assert small.replicates == 4


def test_surface_factor_power_law_on_grushin(grushin):
    estimate = surface_factor_scan(
        grushin.frame, grushin.norm, [1.0, 2.0, 4.0, 8.0],
        samples=40_000, replicates=4, seed=11, delta_ratio=0.05,
    )
    assert estimate.exponent == pytest.approx(2.0, abs=0.25)
    assert len(estimate.values) == 4
    assert all(s > 0 for s in estimate.stderrs)


def test_surface_factor_carnot_prediction(heisenberg):
    estimate = surface_factor_scan(
        heisenberg.frame, heisenberg.norm, [1.0, 2.0],
        samples=40_000, replicates=4, seed=5, delta_ratio=0.05, carnot=True,
    )
    assert estimate.exponent is None
    for value, predicted in zip(estimate.values, estimate.carnot_prediction):
        assert value == pytest.approx(predicted, rel=0.25)


def test_surface_factor_requires_enough_samples(grushin):
    with pytest.raises(MonteCarloError):
        surface_factor(grushin.frame, grushin.norm, 1.0, samples=500, replicates=4)


def test_surface_factor_error_threshold(grushin):
    with pytest.raises(MonteCarloError) as excinfo:
        surface_factor(grushin.frame, grushin.norm, 1.0, delta=0.001, samples=1000, replicates=2,
                       max_relative_error=1e-6)
    assert excinfo.value.estimate >= 0.0


def test_power_law_fit():
    radii = [1.0, 2.0, 4.0, 8.0]
    exponent, log_constant = power_law_fit(radii, [3.0 * r ** 2 for r in radii])
    assert exponent == pytest.approx(2.0)
    assert np.exp(log_constant) == pytest.approx(3.0)
    with pytest.raises(FitError):
        power_law_fit(radii[:3], [1.0, 2.0, 3.0])
    with pytest.raises(FitError):
        power_law_fit(radii, [1.0, 0.0, 1.0, 1.0])
    with pytest.raises(FitError):
        power_law_fit([1.0, 1.1, 1.2, 1.3], [1.0, 1.0, 1.0, 1.0])


@pytest.mark.parametrize("m", [1, 2])
@pytest.mark.parametrize("beta", [0.5, 1.0])
def test_radial_drift_divergence_beyond_the_cutoff(m, beta, rng):
    preset = resolve_preset(f'heisenberg:{m}')
    b = drift(preset, 'radial-cutoff', beta)
    points = rng.uniform(-3, 3, (400, preset.frame.n))
    N = preset.norm(points)
    points, N = points[N > 2.05], N[N > 2.05]
    assert points.shape[0] >= 50

    grad2 = gradient_norm_squared(preset.frame, preset.norm.expr).evaluate(points)
    expected = (2 * m + 1 - beta) * N ** (-beta - 1) * grad2
    np.testing.assert_allclose(horizontal_divergence(preset.frame, b, points), expected, rtol=1e-8)
