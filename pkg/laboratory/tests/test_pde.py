# laboratory/tests/test_pde.py
import io
import math

import numpy as np
import pytest

from laboratory import pde
from laboratory.criterion import OperatorSpec
from laboratory.enum import BarrierVariant
from laboratory.exceptions import AssemblyError, PreconditionError
from laboratory.expressions import ScalarExpr
from laboratory.geometry import sublaplacian_expr
from laboratory.presets import potential, resolve_preset


def grushin_operator(grushin, j=1.0, h=0.125, Q="0"):
    spec = OperatorSpec.without_drift(grushin.frame, ScalarExpr.parse(Q, 2))
    return pde.assemble(spec, pde.BoxDomain.centered(j, 2, h))


def test_box_domain_layout():
    dom = pde.BoxDomain.centered(1.0, 2, 0.5)
    assert dom.shape == (5, 5)
    assert dom.interior.size == 9
    assert dom.boundary.size == 16
    assert dom.node_index([0.0, 0.0]) == 12
    np.testing.assert_allclose(dom.nodes[12], [0.0, 0.0])
    with pytest.raises(PreconditionError):
        dom.node_index([0.1, 0.0])
    with pytest.raises(PreconditionError):
        pde.BoxDomain.centered(1.0, 2, 0.3)
    with pytest.raises(AssemblyError):
        pde.BoxDomain(lo=(0.0,), hi=(1.0,), cells=(1,))


def test_grid_field_restrict_and_csv():
    dom = pde.BoxDomain.centered(1.0, 2, 0.5)
    u = pde.GridField(dom, dom.nodes[:, 0] + 10 * dom.nodes[:, 1])
    sub = pde.BoxDomain.centered(0.5, 2, 0.5)
    restricted = u.restrict(sub)
    np.testing.assert_allclose(restricted.values, sub.nodes[:, 0] + 10 * sub.nodes[:, 1])
    assert u.at([0.5, -0.5]) == pytest.approx(-4.5)

    handle = io.StringIO()
    u.write_csv(handle)
    lines = handle.getvalue().splitlines()
    assert lines[0] == 'x1,x2,u'
    assert len(lines) == dom.size + 1


def test_assembled_operator_is_an_m_matrix(grushin):
    op = grushin_operator(grushin, Q="1 + x1^2")
    assert op.structure().is_m_matrix
    assert op.metadata['step'] == pytest.approx(math.sqrt(0.125))
    assert pde.constant_solution_residual(op) < 1e-10


def test_flipped_operator_is_detected(grushin):
    op = pde.flip_offdiagonal(grushin_operator(grushin, h=0.25))
    structure = op.structure()
    assert not structure.offdiagonal_nonpositive
    assert not structure.is_m_matrix
    assert structure.violating_rows >= 1


def test_negative_potential_is_rejected(grushin):
    with pytest.raises(PreconditionError):
        grushin_operator(grushin, Q="-1")


def test_constant_data_gives_constant_solution(grushin):
    u = pde.solve_dirichlet(grushin_operator(grushin), boundary=1.0)
    np.testing.assert_allclose(u.values, 1.0, atol=1e-9)
    assert u.metadata['method'] == 'direct'


@pytest.mark.parametrize("method", ["direct", "sweep", "bicgstab"])
def test_manufactured_solution_converges(grushin, method):
    exact = ScalarExpr.parse("x1^2 + x2^2", 2)
    rhs = ScalarExpr.parse("2 + 2*x1^2", 2)
    h = 0.125
    op = grushin_operator(grushin, h=h)
    u = pde.solve_dirichlet(op, boundary=exact, rhs=rhs, method=method, tolerance=1e-10)
    assert np.max(np.abs(u.values - exact.evaluate(op.domain.nodes))) <= h
    assert u.metadata['residual'] <= 1e-8


def test_manufactured_solution_observed_order(grushin):
    # steps of (i + 1/2) h put the x1 stencil mid-cell, so the interpolation error does not vanish
    exact = ScalarExpr.parse("x1^2", 2)
    rhs = ScalarExpr.parse("2", 2)
    spec = OperatorSpec.without_drift(grushin.frame, ScalarExpr.constant(0, 2))
    errors = []
    for h in (0.125, 0.0625):
        step = h * (math.floor(1.0 / math.sqrt(h)) + 0.5)
        op = pde.assemble(spec, pde.BoxDomain.centered(1.0, 2, h), step=step)
        u = pde.solve_dirichlet(op, boundary=exact, rhs=rhs, tolerance=1e-10)
        errors.append(float(np.max(np.abs(u.values - exact.evaluate(op.domain.nodes)))))
        assert errors[-1] <= h
    assert errors[1] > 0.0
    assert math.log2(errors[0] / errors[1]) >= 0.9


def test_maximum_and_comparison_principles(grushin):
    op = grushin_operator(grushin, h=0.25, Q="x1^2")
    wmp = pde.wmp_test(op, trials=3, seed=1)
    assert wmp.passed
    assert wmp.max_value <= 0.0
    assert pde.comparison_test(op, trials=3, seed=2).passed


def test_discrete_integration_by_parts_is_first_order(grushin):
    coarse = pde.discrete_ibp_test(grushin.frame, pde.BoxDomain.centered(1.0, 2, 0.125), trials=4, seed=3)
    fine = pde.discrete_ibp_test(grushin.frame, pde.BoxDomain.centered(1.0, 2, 0.0625), trials=4, seed=3)
    assert fine.max_defect < coarse.max_defect
    assert coarse.max_defect / fine.max_defect >= 1.5


def test_invading_run_is_bounded_and_monotone(heisenberg):
    Q, _ = potential(heisenberg, 'gradient', 1.5)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    run = pde.invading_run(spec, [4.0, 1.0, 2.0], gamma=1.0, h=0.5)
    assert run.ladder == (1.0, 2.0, 4.0)
    assert run.bounds_ok
    assert run.monotone
    assert run.centers_decreasing
    assert all(0.0 <= c <= 1.0 for c in run.centers)
    assert 0.0 <= run.limit_estimate <= run.centers[-1]
    assert run.diagnostics[0].monotonicity_defect is None
    assert run.diagnostics[-1].ring_profile[0][0] == 0.0


def test_invading_run_needs_positive_gamma(heisenberg):
    spec = OperatorSpec.without_drift(heisenberg.frame, ScalarExpr.constant(1, 3))
    with pytest.raises(PreconditionError):
        pde.invading_run(spec, [1.0], gamma=0.0, h=0.5)


def test_half_width_must_put_the_origin_on_a_node(heisenberg):
    # 2j/h is an integer here but j/h is not
    with pytest.raises(PreconditionError):
        pde.BoxDomain.centered(1.25, 3, 0.5)
    assert pde.BoxDomain.centered(1.5, 3, 0.5).shape == (7, 7, 7)
    assert pde.is_node_multiple(0.3, 0.1)
    assert not pde.is_node_multiple(1.25, 0.5)

    spec = OperatorSpec.without_drift(heisenberg.frame, ScalarExpr.constant(1, 3))
    with pytest.raises(PreconditionError, match="1.25"):
        pde.invading_run(spec, [1.0, 1.25], gamma=1.0, h=0.5)


def test_barrier_windows():
    assert pde.barrier_window(BarrierVariant.CYLINDRICAL, 1, 3.0) == 0.0
    assert pde.barrier_window(BarrierVariant.CYLINDRICAL, 3, 3.0) == 1.0
    assert pde.barrier_window(BarrierVariant.RADIAL, 1, 3.0) == 1.0
    assert pde.barrier_window(BarrierVariant.RADIAL, 1, 5.0) == 2.0
    with pytest.raises(PreconditionError):
        pde.validate_barrier(pde.BarrierSpec('radial', 1.0, 1.5, 2.0), 1, 3.0)


@pytest.mark.parametrize("variant", ["radial", "cylindrical"])
def test_barrier_closed_form_matches_symbolic(variant, rng):
    preset = resolve_preset('heisenberg:2')
    barrier = pde.BarrierSpec(variant, 1.5, 0.5, 2.0)
    points = pde.barrier_samples(barrier, preset.norm, 16.0, 20, seed=4)
    closed = pde.barrier_sublaplacian(barrier, preset.frame, preset.norm, 2, points)
    symbolic = sublaplacian_expr(preset.frame, pde.barrier_expression(barrier, preset.norm)).evaluate(points)
    np.testing.assert_allclose(closed, symbolic, rtol=1e-8, atol=1e-12)


def test_radial_barrier_amplitude(heisenberg):
    Q, _ = potential(heisenberg, 'gradient', 3.0)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    barrier = pde.BarrierSpec('radial', 1.0, 0.5, 2.0)
    samples = pde.barrier_samples(barrier, heisenberg.norm, 64.0, 500, seed=9)
    assert np.all(heisenberg.norm(samples) >= 2.0)

    report = pde.barrier_check(barrier, spec, heisenberg.norm, samples, 1, 3.0)
    assert 0.0 < report.A_min < math.inf
    scaled = pde.BarrierSpec('radial', 1.1 * report.A_min, 0.5, 2.0)
    assert pde.barrier_check(scaled, spec, heisenberg.norm, samples, 1, 3.0).passed
    weak = pde.BarrierSpec('radial', 0.5 * report.A_min, 0.5, 2.0)
    assert not pde.barrier_check(weak, spec, heisenberg.norm, samples, 1, 3.0).passed


def test_lower_bound_certificate_status(heisenberg):
    Q, _ = potential(heisenberg, 'gradient', 3.0)
    spec = OperatorSpec.without_drift(heisenberg.frame, Q)
    run = pde.invading_run(spec, [1.0, 2.0], gamma=1.0, h=0.5)

    cylindrical = pde.step2_certificate(run, pde.BarrierSpec('cylindrical', 1.0, 0.5, 2.0), 2.0,
                                        heisenberg.norm, 1, 3.0)
    assert cylindrical.status == 'inapplicable'
    assert not cylindrical.passed

    radial = pde.BarrierSpec('radial', 1.0, 0.5, 2.0)
    skipped = pde.step2_certificate(run, radial, 0.5, heisenberg.norm, 1, 3.0)
    assert skipped.status == 'skipped'

    delta = max(1.0, 1.0 / (2.0 ** -0.5))
    certificate = pde.step2_certificate(run, radial, delta, heisenberg.norm, 1, 3.0)
    assert certificate.status == 'passed'
    assert certificate.passed
    assert certificate.min_w >= -1e-6
