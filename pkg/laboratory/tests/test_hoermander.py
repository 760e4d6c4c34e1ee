# laboratory/tests/test_hoermander.py
import numpy as np
import pytest
import sympy

from laboratory.exceptions import GroupLawError
from laboratory.fields import DilationWeights, Polynomial, PolyVectorField
from laboratory.hoermander import (
    Frame,
    GroupLaw,
    check_hoermander,
    check_ntd,
    generate_brackets,
    horizontal_frame,
    is_carnot,
    jacobian_basis,
    principal_matrix,
    principal_symbol,
    rank_at,
    structure_report,
)
from laboratory.presets import heisenberg_frame, heisenberg_group_law, heisenberg_weights


def test_heisenberg_frame_from_group_law():
    frame = heisenberg_frame(1)
    assert frame.fields[0] == PolyVectorField.parse(["1", "0", "x2/2"])
    assert frame.fields[1] == PolyVectorField.parse(["0", "1", "-x1/2"])


def test_bracket_generation_drops_duplicates():
    basis = generate_brackets(heisenberg_frame(1), 3)
    assert basis.words() == [(0,), (1,), (0, 1)]


def test_heisenberg_is_step_two(rng):
    report = check_hoermander(heisenberg_frame(2), rng.uniform(-1, 1, (20, 5)))
    assert report.satisfied
    assert report.step == 2
    assert report.points_checked == 21


def test_grushin_is_step_two_including_the_degenerate_line(grushin, rng):
    points = np.vstack([[0.0, 0.5], rng.uniform(-1, 1, (10, 2))])
    report = check_hoermander(grushin.frame, points, threads=2)
    assert report.satisfied
    assert report.step == 2


def test_rank_deficient_frame_fails():
    frame = Frame(fields=(PolyVectorField.coordinate(0, 2),), weights=DilationWeights((1, 1)))
    report = check_hoermander(frame, np.ones((3, 2)))
    assert not report.satisfied
    assert report.step is None
    assert all(rank == 1 for _, rank in report.rank_failures)


def test_rank_at():
    assert rank_at([], np.zeros(2)) == 0
    fields = [PolyVectorField.coordinate(0, 2), PolyVectorField.parse(["0", "x1"])]
    assert rank_at(fields, [0.0, 0.0]) == 1
    assert rank_at(fields, [1.0, 0.0]) == 2


def test_ntd(grushin):
    assert check_ntd(grushin.frame, np.zeros((1, 2)))
    degenerate = Frame(fields=(PolyVectorField.parse(["x1", "x2"]),), weights=DilationWeights((1, 1)))
    assert not check_ntd(degenerate, np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_structure_report():
    assert structure_report(heisenberg_frame(1)).satisfied
    euler = Frame(fields=(PolyVectorField.parse(["x1", "0"]),), weights=DilationWeights((1, 1)))
    report = structure_report(euler)
    assert report.fields[0].degree == 0
    assert report.fields[0].divergence == "1"
    assert not report.satisfied


def test_principal_matrix(heisenberg):
    result = principal_matrix(heisenberg.frame, [2.0, 0.0, 0.0])
    assert result.S.shape == (3, 2)
    np.testing.assert_allclose(result.A, result.S @ result.S.T)
    x1, x2 = sympy.symbols('x1 x2', real=True)
    assert sympy.simplify(principal_symbol(heisenberg.frame)[2, 2] - (x1 ** 2 + x2 ** 2) / 4) == 0


def test_group_law_neutral_element():
    law = heisenberg_group_law(1)
    law.verify_neutral()
    np.testing.assert_allclose(law.multiply([1, 0, 0], [0, 1, 0]), [1.0, 1.0, -0.5])

    shifted = GroupLaw(n=1, product=(Polynomial.parse("x1 + x2 + 1", 2),))
    with pytest.raises(GroupLawError):
        shifted.verify_neutral()


def test_left_translation_jacobian_matches_frame(rng):
    law = heisenberg_group_law(1)
    frame = heisenberg_frame(1)
    x = rng.uniform(-1, 1, 3)
    J = law.left_translation_jacobian(x, np.zeros(3))
    np.testing.assert_allclose(J[:, 0], frame.fields[0].evaluate(x))
    np.testing.assert_allclose(J[:, 1], frame.fields[1].evaluate(x))


def test_carnot_detection(rng):
    law = heisenberg_group_law(1)
    assert is_carnot(law, heisenberg_weights(1), rng.uniform(-1, 1, (5, 3)))
    frame = horizontal_frame(law, heisenberg_weights(1))
    assert frame.m == 2


@pytest.mark.parametrize("m", [1, 2])
def test_jacobian_basis_is_left_invariant(m, rng):
    law = heisenberg_group_law(m)
    basis = jacobian_basis(law)
    for _ in range(10):
        a, x = rng.uniform(-2, 2, (2, law.n))
        translation = law.left_translation_jacobian(a, x)
        image = law.multiply(a, x)
        for field in basis:
            np.testing.assert_allclose(translation @ field.evaluate(x), field.evaluate(image), atol=1e-12)


@pytest.mark.parametrize("name", ["grushin", "heisenberg"])
def test_rank_condition_at_fifty_points(name, request, rng):
    preset = request.getfixturevalue(name)
    report = check_hoermander(preset.frame, rng.uniform(-1, 1, (50, preset.frame.n)))
    assert report.satisfied
    assert report.step == 2
    assert report.points_checked == 51
