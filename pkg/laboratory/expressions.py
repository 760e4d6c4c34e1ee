"""Scalar expressions over x1..xn evaluated through sympy and numpy.

A ``ScalarExpr`` carries Q, the exhaustion norm, q_hat and drift components.
Differentiation is symbolic; evaluation is compiled once with
``sympy.lambdify(..., "numpy")`` and vectorised over rows of points.
"""
import logging
import re
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    rationalize,
    standard_transformations,
)
from sympy.utilities.lambdify import lambdify

from laboratory.exceptions import DimensionMismatchError, ExpressionDomainError, ExpressionParseError

logger = logging.getLogger(__name__)

_TRANSFORMATIONS = standard_transformations + (convert_xor, rationalize)
_ALLOWED_TEXT = re.compile(r'^[\sA-Za-z0-9_+\-*/^().,]*$')
_FUNCTIONS = {
    'sqrt': sympy.sqrt,
    'exp': sympy.exp,
    'log': sympy.log,
    'abs': sympy.Abs,
}


def coordinate_symbols(n: int) -> Tuple[sympy.Symbol, ...]:
    """The real symbols x1..xn shared by every expression of dimension n."""
    return tuple(sympy.Symbol(f'x{i + 1}', real=True) for i in range(n))


def parse_scalar(text: str, variables: Sequence[sympy.Symbol]) -> sympy.Expr:
    if not isinstance(text, str) or not text.strip():
        raise ExpressionParseError("Expression must be a non-empty string.")
    if not _ALLOWED_TEXT.match(text):
        raise ExpressionParseError(f"Illegal character in expression {text!r}.")

    local_dict = {str(v): v for v in variables}
    local_dict.update(_FUNCTIONS)
    names = set(re.findall(r'[A-Za-z_][A-Za-z0-9_]*', text))
    unknown = names - set(local_dict)
    if unknown:
        raise ExpressionParseError(f"Unknown name(s) {sorted(unknown)} in {text!r}.")

    try:
        expr = parse_expr(text, local_dict=local_dict, transformations=_TRANSFORMATIONS, evaluate=True)
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as exc:
        raise ExpressionParseError(f"Could not parse {text!r}: {exc}") from exc
    if not isinstance(expr, sympy.Expr):
        raise ExpressionParseError(f"{text!r} is not a scalar expression.")
    return expr


class ScalarExpr:
    """Immutable scalar expression of the variables ``variables``."""

    def __init__(self, expr: Union[sympy.Expr, int, float], variables: Sequence[sympy.Symbol]):
        self.variables: Tuple[sympy.Symbol, ...] = tuple(variables)
        self.expr: sympy.Expr = sympy.sympify(expr)
        stray = self.expr.free_symbols - set(self.variables)
        if stray:
            raise DimensionMismatchError(
                f"Expression {self.expr} uses {sorted(map(str, stray))} outside of {self.variables}."
            )

    @classmethod
    def parse(cls, text: str, n: int) -> "ScalarExpr":
        variables = coordinate_symbols(n)
        return cls(parse_scalar(text, variables), variables)

    @classmethod
    def parse_in(cls, text: str, names: Iterable[str]) -> "ScalarExpr":
        """Parse over named variables, e.g. ``t`` for a profile q_hat(t)."""
        variables = tuple(sympy.Symbol(name, positive=True) for name in names)
        return cls(parse_scalar(text, variables), variables)

    @classmethod
    def constant(cls, value, n: int) -> "ScalarExpr":
        return cls(sympy.nsimplify(value, rational=True), coordinate_symbols(n))

    @property
    def n(self) -> int:
        return len(self.variables)

    def __repr__(self) -> str:
        return f"ScalarExpr({self})"

    def __str__(self) -> str:
        return str(self.expr).replace('**', '^')

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalarExpr):
            return NotImplemented
        return self.variables == other.variables and sympy.simplify(self.expr - other.expr) == 0

    def __hash__(self) -> int:
        return hash((self.variables, sympy.srepr(self.expr)))

    def _combine(self, other, op) -> "ScalarExpr":
        if isinstance(other, ScalarExpr):
            if other.variables != self.variables:
                raise DimensionMismatchError("Expressions live on different variables.")
            other = other.expr
        return ScalarExpr(op(self.expr, sympy.sympify(other)), self.variables)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b)

    def __pow__(self, exponent):
        return ScalarExpr(self.expr ** sympy.nsimplify(exponent, rational=True), self.variables)

    def __neg__(self):
        return ScalarExpr(-self.expr, self.variables)

    def diff(self, index: int) -> "ScalarExpr":
        return ScalarExpr(sympy.diff(self.expr, self.variables[index]), self.variables)

    def substitute(self, **values) -> "ScalarExpr":
        mapping = {v: sympy.sympify(values[str(v)]) for v in self.variables if str(v) in values}
        return ScalarExpr(self.expr.subs(mapping), self.variables)

    def is_zero(self) -> bool:
        if self.expr.is_zero is True:
            return True
        if self.expr.has(sympy.Piecewise):
            return False
        return sympy.simplify(self.expr) == 0

    @cached_property
    def _compiled(self) -> Callable:
        return lambdify(self.variables, self.expr, modules='numpy')

    def evaluate(self, points, strict: bool = True) -> np.ndarray:
        """Evaluate at a single point (shape ``(n,)``) or at rows of ``(k, n)``.

        Non-finite results raise ``ExpressionDomainError`` carrying the first
        offending point unless ``strict`` is False.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.n:
            raise DimensionMismatchError(f"Expected points of dimension {self.n}, got {pts.shape[1]}.")

        with np.errstate(all='ignore'):
            raw = self._compiled(*pts.T)
        values = np.broadcast_to(np.asarray(raw, dtype=float), (pts.shape[0],)).copy()

        if strict:
            bad = ~np.isfinite(values)
            if bad.any():
                where = pts[np.argmax(bad)]
                raise ExpressionDomainError(f"{self} is not finite at {where.tolist()}.", point=where)
        return values[0] if single else values

    def __call__(self, points, strict: bool = True):
        return self.evaluate(points, strict=strict)

    def power_law(self) -> Optional[Tuple[float, float]]:
        """Return (c, p) when a one-variable expression equals c*t^p with c > 0."""
        if self.n != 1:
            return None
        (t,) = self.variables
        coeff, exponent = sympy.powsimp(self.expr, force=True).as_coeff_exponent(t)
        if coeff.free_symbols or exponent.free_symbols:
            return None
        if not (coeff.is_real and coeff > 0):
            return None
        return float(coeff), float(exponent)
