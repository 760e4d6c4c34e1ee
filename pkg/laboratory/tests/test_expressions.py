# laboratory/tests/test_expressions.py
import math

import numpy as np
import pytest

from laboratory.exceptions import DimensionMismatchError, ExpressionDomainError, ExpressionParseError
from laboratory.expressions import ScalarExpr


def test_parse_and_evaluate_rows():
    q = ScalarExpr.parse("x1^2 + 2*x2", 2)
    values = q.evaluate(np.array([[1.0, 1.0], [2.0, -1.0]]))
    assert values.tolist() == [3.0, 2.0]
    assert q.evaluate([3.0, 0.0]) == 9.0


@pytest.mark.parametrize("text", ["x1 + y", "x3", "import os", "", "x1 +* 2"])
def test_parse_rejects_bad_literals(text):
    with pytest.raises(ExpressionParseError):
        ScalarExpr.parse(text, 2)


def test_non_finite_value_reports_point():
    q = ScalarExpr.parse("1/x1", 1)
    with pytest.raises(ExpressionDomainError) as excinfo:
        q.evaluate(np.array([[1.0], [0.0]]))
    assert excinfo.value.point == [0.0]
    assert math.isinf(q.evaluate(np.array([[0.0]]), strict=False)[0])


def test_dimension_mismatch():
    q = ScalarExpr.parse("x1", 2)
    with pytest.raises(DimensionMismatchError):
        q.evaluate(np.zeros((3, 3)))


def test_power_law_detection():
    assert ScalarExpr.parse_in("2*t^(-3)", ["t"]).power_law() == (2.0, -3.0)
    assert ScalarExpr.parse_in("t^(-2)*log(1 + t)", ["t"]).power_law() is None


def test_zero_detection_and_arithmetic():
    x = ScalarExpr.parse("x1", 1)
    assert (x - x).is_zero()
    assert not (x * x).is_zero()
    assert (x * 2 + 1).diff(0) == ScalarExpr.constant(2, 1)
